// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable bilinear lookup into an H x W x C feature grid. Queries are
// in grid coordinates: integer (u, v) lands exactly on a grid node, and the
// valid domain is [0, W-1] x [0, H-1]. Out-of-domain queries return a zero
// row and a cleared mask bit instead of an error, so callers can feed the
// mask into attention biasing.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ava/diffcore/tensor.hpp"

namespace ava::geomcam {

struct GridQuery {
    double u = 0.0;
    double v = 0.0;
};

// Gathers P bilinear samples from `map` [H, W, C] in one graph node.
// Returns [P, C]; valid[i] reports whether query i was inside the domain.
// Gradients flow to the map values only (query positions are data).
template <class Real>
diffcore::TensorT<Real> bilinear_gather(const diffcore::TensorT<Real>& map,
                                        const std::vector<GridQuery>& queries,
                                        std::vector<uint8_t>& valid) {
    if (map.rank() != 3) {
        throw util::InputError("bilinear_gather expects a [H, W, C] feature grid");
    }
    const int64_t H = map.dim(0), W = map.dim(1), C = map.dim(2);
    const int64_t P = int64_t(queries.size());
    valid.assign(size_t(P), 0);

    struct Tap {
        int64_t idx00, idx01, idx10, idx11;  // flat row offsets into the grid
        Real w00, w01, w10, w11;
    };
    auto taps = std::make_shared<std::vector<Tap>>(size_t(P));

    for (int64_t i = 0; i < P; ++i) {
        const double u = queries[size_t(i)].u;
        const double v = queries[size_t(i)].v;
        Tap& t = (*taps)[size_t(i)];
        if (!(std::isfinite(u) && std::isfinite(v)) || u < 0.0 || v < 0.0 ||
            u > double(W - 1) || v > double(H - 1)) {
            t = {0, 0, 0, 0, Real(0), Real(0), Real(0), Real(0)};
            continue;
        }
        valid[size_t(i)] = 1;
        const double fu = std::floor(u);
        const double fv = std::floor(v);
        int64_t x0 = int64_t(fu), y0 = int64_t(fv);
        const Real ax = Real(u - fu);
        const Real ay = Real(v - fv);
        const int64_t x1 = std::min(x0 + 1, W - 1);
        const int64_t y1 = std::min(y0 + 1, H - 1);
        t.idx00 = (y0 * W + x0) * C;
        t.idx01 = (y0 * W + x1) * C;
        t.idx10 = (y1 * W + x0) * C;
        t.idx11 = (y1 * W + x1) * C;
        t.w00 = (Real(1) - ax) * (Real(1) - ay);
        t.w01 = ax * (Real(1) - ay);
        t.w10 = (Real(1) - ax) * ay;
        t.w11 = ax * ay;
    }

    auto n = diffcore::detail::make_node<Real>({int(P), int(C)}, {map.node()});
    const Real* src = map.data().data();
    Real* dst = n->value.data();
#pragma omp parallel for schedule(static) if (P > 64)
    for (int64_t i = 0; i < P; ++i) {
        const Tap& t = (*taps)[size_t(i)];
        Real* out = dst + i * C;
        if (!valid[size_t(i)]) {
            std::fill(out, out + C, Real(0));
            continue;
        }
        for (int64_t c = 0; c < C; ++c) {
            out[c] = t.w00 * src[t.idx00 + c] + t.w01 * src[t.idx01 + c] +
                     t.w10 * src[t.idx10 + c] + t.w11 * src[t.idx11 + c];
        }
    }

    if (n->requires_grad) {
        auto mask = std::make_shared<std::vector<uint8_t>>(valid);
        n->backprop = [taps, mask, C, P](diffcore::Node<Real>& self) {
            auto& p = *self.parents[0];
            Real* gmap = p.grad.data();
            const Real* g = self.grad.data();
            // Serial scatter: queries may share texels, so the accumulation
            // order is fixed regardless of thread count.
            for (int64_t i = 0; i < P; ++i) {
                if (!(*mask)[size_t(i)]) continue;
                const Tap& t = (*taps)[size_t(i)];
                const Real* grow = g + i * C;
                for (int64_t c = 0; c < C; ++c) {
                    gmap[t.idx00 + c] += t.w00 * grow[c];
                    gmap[t.idx01 + c] += t.w01 * grow[c];
                    gmap[t.idx10 + c] += t.w10 * grow[c];
                    gmap[t.idx11 + c] += t.w11 * grow[c];
                }
            }
        };
    }
    return diffcore::TensorT<Real>(std::move(n));
}

// Single-query convenience wrapper: returns a [1, C] tensor plus validity.
template <class Real>
diffcore::TensorT<Real> bilinear_sample(const diffcore::TensorT<Real>& map, double u, double v,
                                        bool& valid_out) {
    std::vector<uint8_t> valid;
    auto out = bilinear_gather(map, {GridQuery{u, v}}, valid);
    valid_out = valid[0] != 0;
    return out;
}

}  // namespace ava::geomcam
