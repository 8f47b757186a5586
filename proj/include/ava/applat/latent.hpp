// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Latent appearance codes. Two interchangeable modes: free-learnable vectors
// (one parameter vector per condition) and structured codes generated from
// fixed 2D condition coordinates by a small fully-connected network trained
// jointly with the renderer.

#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "ava/diffcore/attention.hpp"
#include "ava/diffcore/tensor.hpp"

namespace ava::applat {

enum class LatentMode { kFree, kStructured };

inline const char* latent_mode_name(LatentMode m) {
    return m == LatentMode::kFree ? "free" : "structured";
}

inline LatentMode latent_mode_from_name(const std::string& s) {
    if (s == "free") return LatentMode::kFree;
    if (s == "structured") return LatentMode::kStructured;
    throw util::InputError("unknown latent mode '" + s + "' (expected free|structured)");
}

// Fixed coordinates on the 2D latent plane. Day/evening/night live on one
// axis with evening midway; rain sits on its own axis.
inline const std::map<std::string, Eigen::Vector2d>& condition_coords() {
    static const std::map<std::string, Eigen::Vector2d> coords = {
        {"day", {-1.0, 0.0}},
        {"evening", {0.0, 0.0}},
        {"rain", {0.0, 1.0}},
        {"night", {1.0, 0.0}},
    };
    return coords;
}

struct Provenance {
    enum class Kind { kFree, kStructured, kInterpolated } kind = Kind::kFree;
    Eigen::Vector2d coord = Eigen::Vector2d::Zero();  // structured
    double alpha = 0.0;                               // interpolated
    std::string source_a, source_b;                   // interpolated
};

template <class Real>
struct AppearanceCodeT {
    diffcore::TensorT<Real> z;  // [1, d]
    Provenance provenance;

    int dim() const { return z.dim(1); }
};

using AppearanceCode = AppearanceCodeT<float>;

// Registry of conditions plus the parameters that produce their codes.
template <class Real>
struct LatentBankT {
    LatentMode mode = LatentMode::kStructured;
    int dim = 136;
    std::vector<std::string> conditions;                     // registration order
    std::map<std::string, Eigen::Vector2d> coords;           // per condition
    diffcore::MlpWeightsT<Real> generator;                   // structured: 2 -> h1 -> h2 -> d
    std::map<std::string, diffcore::TensorT<Real>> free_codes;  // free: d-vector each

    bool has_condition(const std::string& name) const {
        return coords.find(name) != coords.end();
    }
};

using LatentBank = LatentBankT<float>;

template <class Real>
LatentBankT<Real> make_latent_bank(LatentMode mode, int dim, int hidden1, int hidden2,
                                   const std::vector<std::string>& conditions,
                                   util::Rng& rng) {
    LatentBankT<Real> bank;
    bank.mode = mode;
    bank.dim = dim;
    bank.conditions = conditions;
    const auto& fixed = condition_coords();
    for (const auto& name : conditions) {
        auto it = fixed.find(name);
        if (it == fixed.end()) {
            throw util::InputError("condition '" + name + "' has no registered coordinate");
        }
        bank.coords[name] = it->second;
    }
    bank.generator = diffcore::make_mlp_weights<Real>({2, hidden1, hidden2, dim}, rng);
    for (const auto& name : conditions) {
        std::vector<Real> v(static_cast<size_t>(dim));
        for (auto& x : v) x = Real(rng.next_gaussian()) * Real(0.1);
        bank.free_codes[name] = diffcore::TensorT<Real>::param({1, dim}, std::move(v));
    }
    return bank;
}

// Structured code: run the generator network on the condition coordinate.
// Differentiable w.r.t. generator weights.
template <class Real>
AppearanceCodeT<Real> code_structured(const Eigen::Vector2d& coord,
                                      const LatentBankT<Real>& bank) {
    auto input = diffcore::TensorT<Real>::constant({1, 2}, {Real(coord.x()), Real(coord.y())});
    AppearanceCodeT<Real> code;
    code.z = diffcore::mlp_forward(input, bank.generator);
    code.provenance.kind = Provenance::Kind::kStructured;
    code.provenance.coord = coord;
    return code;
}

// Free code: the directly learnable vector registered for the condition.
template <class Real>
AppearanceCodeT<Real> code_free(const std::string& condition, const LatentBankT<Real>& bank) {
    auto it = bank.free_codes.find(condition);
    if (it == bank.free_codes.end()) {
        std::string known;
        for (const auto& c : bank.conditions) known += (known.empty() ? "" : ", ") + c;
        throw util::InputError("unknown condition '" + condition + "' (registered: " + known +
                               ")");
    }
    AppearanceCodeT<Real> code;
    code.z = it->second;
    code.provenance.kind = Provenance::Kind::kFree;
    return code;
}

// Code for a named condition under the bank's active mode.
template <class Real>
AppearanceCodeT<Real> code_for_condition(const std::string& condition,
                                         const LatentBankT<Real>& bank) {
    if (bank.mode == LatentMode::kFree) return code_free(condition, bank);
    auto it = bank.coords.find(condition);
    if (it == bank.coords.end()) {
        throw util::InputError("unknown condition '" + condition + "'");
    }
    return code_structured(it->second, bank);
}

// z_alpha = alpha * a + (1 - alpha) * b. The endpoints return the input code
// object itself so downstream consumers see bit-identical values.
template <class Real>
AppearanceCodeT<Real> interpolate(const AppearanceCodeT<Real>& a, const AppearanceCodeT<Real>& b,
                                  double alpha) {
    if (a.z.shape() != b.z.shape()) {
        throw util::InputError("interpolate needs codes of identical dimension");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw util::InputError("interpolation weight must lie in [0, 1]");
    }
    if (alpha == 1.0) return a;
    if (alpha == 0.0) return b;
    AppearanceCodeT<Real> out;
    out.z = diffcore::add(diffcore::scale(a.z, Real(alpha)),
                          diffcore::scale(b.z, Real(1.0 - alpha)));
    out.provenance.kind = Provenance::Kind::kInterpolated;
    out.provenance.alpha = alpha;
    return out;
}

}  // namespace ava::applat
