// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of reverse-mode gradients.
// Intended for double precision, where an eps near 1e-5 gives ~1e-10
// truncation error on smooth functions.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ava/diffcore/tensor.hpp"

namespace ava::diffcore {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    int64_t worst_input = -1;    // index into the inputs vector
    int64_t worst_element = -1;  // flat element index within that input
};

// `make_loss` must build a fresh graph from the current values of `inputs`
// and return a scalar. Gradients are compared element by element against
// central differences; the relative error is normalized by
// max(1, |analytic|, |numeric|) so tiny gradients are compared absolutely.
template <class Real>
GradCheckReport grad_check(std::vector<TensorT<Real>*> inputs,
                           const std::function<TensorT<Real>()>& make_loss,
                           Real eps = Real(1e-4)) {
    for (auto* t : inputs) {
        if (!t->requires_grad()) {
            throw util::InputError("grad_check inputs must require gradients");
        }
        t->zero_grad();
    }
    auto loss = make_loss();
    loss.backward();

    std::vector<std::vector<Real>> analytic;
    analytic.reserve(inputs.size());
    for (auto* t : inputs) {
        analytic.emplace_back(t->grad().begin(), t->grad().end());
    }

    GradCheckReport report;
    for (size_t ti = 0; ti < inputs.size(); ++ti) {
        auto* t = inputs[ti];
        auto vals = t->mutable_data();
        for (int64_t i = 0; i < t->size(); ++i) {
            const Real saved = vals[i];
            vals[i] = saved + eps;
            const Real up = make_loss().item();
            vals[i] = saved - eps;
            const Real down = make_loss().item();
            vals[i] = saved;
            const double fd = (double(up) - double(down)) / (2.0 * double(eps));
            const double an = double(analytic[ti][size_t(i)]);
            const double abs_err = std::abs(fd - an);
            const double rel_err = abs_err / std::max({1.0, std::abs(fd), std::abs(an)});
            if (rel_err > report.max_rel_error) {
                report.max_rel_error = rel_err;
                report.max_abs_error = abs_err;
                report.worst_input = int64_t(ti);
                report.worst_element = i;
            }
        }
    }
    return report;
}

}  // namespace ava::diffcore
