// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification cases shared by the differentiation module
// tests and the acceptance gate: one case per differentiable operation (10
// random instances each, double precision) plus an end-to-end single-ray
// render loss differentiated through the full model.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ava/applat/latent.hpp"
#include "ava/diffcore/attention.hpp"
#include "ava/diffcore/gradcheck.hpp"
#include "ava/diffcore/ops.hpp"
#include "ava/geomcam/camera.hpp"
#include "ava/nvsnet/renderer.hpp"
#include "ava/util/rng.hpp"

namespace gradsuite {

using T = ava::diffcore::Tensor64;
using ava::diffcore::Shape;
using ava::util::Rng;

struct CaseResult {
    std::string name;
    double max_rel_error = 0.0;
};

inline T rand_param(const Shape& shape, Rng& rng, double scale = 1.0) {
    auto t = T::randn(shape, rng, scale);
    t.set_requires_grad(true);
    return t;
}

// Random weights for a weighted-sum loss; drawn once per instance so every
// rebuilt graph sees identical coefficients.
inline T rand_weights(const Shape& shape, Rng& rng) { return T::randn(shape, rng); }

// Values kept away from zero so kinked activations see no crossing within
// the finite-difference step.
inline T nudged_param(const Shape& shape, Rng& rng) {
    int64_t n = 1;
    for (int e : shape) n *= e;
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) {
        double g = rng.next_gaussian();
        if (std::abs(g) < 1e-3) g += (g < 0.0 ? -1e-3 : 1e-3);
        x = g;
    }
    auto t = T::param(shape, std::move(v));
    return t;
}

using OpCase = std::function<double(Rng&)>;

// One named finite-difference case per operation. Each closure builds fresh
// random inputs, differentiates a scalar loss, and returns the worst
// relative error reported by the checker.
inline std::vector<std::pair<std::string, OpCase>> op_grad_cases() {
    using namespace ava::diffcore;
    std::vector<std::pair<std::string, OpCase>> cases;
    auto weighted = [](const T& out, const T& w) { return sum_all(mul(out, w)); };

    cases.emplace_back("add_broadcast", [weighted](Rng& rng) {
        auto a = rand_param({2, 3, 4}, rng);
        auto b = rand_param({4}, rng);
        auto w = rand_weights({2, 3, 4}, rng);
        return grad_check<double>({&a, &b}, [&] { return weighted(add(a, b), w); })
            .max_rel_error;
    });
    cases.emplace_back("sub", [weighted](Rng& rng) {
        auto a = rand_param({3, 4}, rng);
        auto b = rand_param({3, 4}, rng);
        auto w = rand_weights({3, 4}, rng);
        return grad_check<double>({&a, &b}, [&] { return weighted(sub(a, b), w); })
            .max_rel_error;
    });
    cases.emplace_back("mul_broadcast", [weighted](Rng& rng) {
        auto a = rand_param({2, 3, 4}, rng);
        auto b = rand_param({3, 1}, rng);
        auto w = rand_weights({2, 3, 4}, rng);
        return grad_check<double>({&a, &b}, [&] { return weighted(mul(a, b), w); })
            .max_rel_error;
    });
    cases.emplace_back("scale_add_scalar", [weighted](Rng& rng) {
        auto a = rand_param({5, 2}, rng);
        auto w = rand_weights({5, 2}, rng);
        return grad_check<double>(
                   {&a}, [&] { return weighted(add_scalar(scale(a, 1.75), 0.3), w); })
            .max_rel_error;
    });
    cases.emplace_back("square", [weighted](Rng& rng) {
        auto a = rand_param({4, 3}, rng);
        auto w = rand_weights({4, 3}, rng);
        return grad_check<double>({&a}, [&] { return weighted(square(a), w); }).max_rel_error;
    });
    cases.emplace_back("sigmoid", [weighted](Rng& rng) {
        auto a = rand_param({4, 3}, rng);
        auto w = rand_weights({4, 3}, rng);
        return grad_check<double>({&a}, [&] { return weighted(sigmoid(a), w); }).max_rel_error;
    });
    cases.emplace_back("gelu", [weighted](Rng& rng) {
        auto a = rand_param({4, 3}, rng);
        auto w = rand_weights({4, 3}, rng);
        return grad_check<double>({&a}, [&] { return weighted(gelu(a), w); }).max_rel_error;
    });
    cases.emplace_back("relu", [weighted](Rng& rng) {
        auto a = nudged_param({4, 5}, rng);
        auto w = rand_weights({4, 5}, rng);
        return grad_check<double>({&a}, [&] { return weighted(relu(a), w); }).max_rel_error;
    });
    cases.emplace_back("matmul_rank2", [weighted](Rng& rng) {
        auto a = rand_param({4, 4}, rng);
        auto b = rand_param({4, 4}, rng);
        auto w = rand_weights({4, 4}, rng);
        return grad_check<double>({&a, &b}, [&] { return weighted(matmul(a, b), w); })
            .max_rel_error;
    });
    cases.emplace_back("matmul_batched", [weighted](Rng& rng) {
        auto a = rand_param({3, 2, 4}, rng);
        auto b = rand_param({3, 4, 5}, rng);
        auto w = rand_weights({3, 2, 5}, rng);
        return grad_check<double>({&a, &b}, [&] { return weighted(matmul(a, b), w); })
            .max_rel_error;
    });
    cases.emplace_back("matmul_shared_rhs", [weighted](Rng& rng) {
        auto a = rand_param({3, 2, 4}, rng);
        auto b = rand_param({4, 5}, rng);
        auto w = rand_weights({3, 2, 5}, rng);
        return grad_check<double>({&a, &b}, [&] { return weighted(matmul(a, b), w); })
            .max_rel_error;
    });
    cases.emplace_back("matmul_nt", [weighted](Rng& rng) {
        auto a = rand_param({2, 3, 4}, rng);
        auto b = rand_param({2, 5, 4}, rng);
        auto w = rand_weights({2, 3, 5}, rng);
        return grad_check<double>({&a, &b}, [&] { return weighted(matmul_nt(a, b), w); })
            .max_rel_error;
    });
    cases.emplace_back("softmax_last", [weighted](Rng& rng) {
        auto a = rand_param({2, 3, 5}, rng);
        auto w = rand_weights({2, 3, 5}, rng);
        return grad_check<double>({&a}, [&] { return weighted(softmax_last(a), w); })
            .max_rel_error;
    });
    cases.emplace_back("layer_norm", [weighted](Rng& rng) {
        auto x = rand_param({2, 3, 6}, rng);
        auto g = rand_param({6}, rng);
        auto b = rand_param({6}, rng);
        auto w = rand_weights({2, 3, 6}, rng);
        return grad_check<double>({&x, &g, &b}, [&] { return weighted(layer_norm(x, g, b), w); })
            .max_rel_error;
    });
    cases.emplace_back("sum_all", [](Rng& rng) {
        auto a = rand_param({3, 4}, rng);
        return grad_check<double>({&a}, [&] { return sum_all(square(a)); }).max_rel_error;
    });
    cases.emplace_back("mean_all", [](Rng& rng) {
        auto a = rand_param({3, 4}, rng);
        return grad_check<double>({&a}, [&] { return mean_all(square(a)); }).max_rel_error;
    });
    cases.emplace_back("mean_axis1", [weighted](Rng& rng) {
        auto a = rand_param({3, 4, 5}, rng);
        auto w = rand_weights({3, 5}, rng);
        return grad_check<double>({&a}, [&] { return weighted(mean_axis1(a), w); })
            .max_rel_error;
    });
    cases.emplace_back("mse", [](Rng& rng) {
        auto a = rand_param({4, 3}, rng);
        auto b = rand_param({4, 3}, rng);
        return grad_check<double>({&a, &b}, [&] { return mse(a, b); }).max_rel_error;
    });
    cases.emplace_back("reshape", [weighted](Rng& rng) {
        auto a = rand_param({2, 6}, rng);
        auto w = rand_weights({3, 4}, rng);
        return grad_check<double>({&a}, [&] { return weighted(square(reshape(a, {3, 4})), w); })
            .max_rel_error;
    });
    cases.emplace_back("broadcast_to", [weighted](Rng& rng) {
        auto a = rand_param({1, 4}, rng);
        auto w = rand_weights({3, 4}, rng);
        return grad_check<double>(
                   {&a}, [&] { return weighted(square(broadcast_to(a, {3, 4})), w); })
            .max_rel_error;
    });
    cases.emplace_back("concat_last", [weighted](Rng& rng) {
        auto a = rand_param({2, 3}, rng);
        auto b = rand_param({2, 2}, rng);
        auto w = rand_weights({2, 5}, rng);
        return grad_check<double>(
                   {&a, &b}, [&] { return weighted(square(concat_last<double>({a, b})), w); })
            .max_rel_error;
    });
    cases.emplace_back("slice_last", [weighted](Rng& rng) {
        auto a = rand_param({2, 6}, rng);
        auto w = rand_weights({2, 3}, rng);
        return grad_check<double>({&a}, [&] { return weighted(square(slice_last(a, 2, 3)), w); })
            .max_rel_error;
    });
    cases.emplace_back("stack_transpose", [weighted](Rng& rng) {
        auto a = rand_param({2, 4}, rng);
        auto b = rand_param({2, 4}, rng);
        auto c = rand_param({2, 4}, rng);
        auto w = rand_weights({2, 3, 4}, rng);
        return grad_check<double>({&a, &b, &c},
                                  [&] {
                                      auto stacked = stack_leading<double>({a, b, c});
                                      return weighted(square(transpose01(stacked)), w);
                                  })
            .max_rel_error;
    });
    cases.emplace_back("split_merge_heads", [weighted](Rng& rng) {
        auto a = rand_param({2, 3, 8}, rng);
        auto w = rand_weights({2, 3, 8}, rng);
        return grad_check<double>({&a},
                                  [&] {
                                      auto h = split_heads(a, 2);
                                      return weighted(square(merge_heads(h, 2)), w);
                                  })
            .max_rel_error;
    });
    cases.emplace_back("conv2d_stride1", [weighted](Rng& rng) {
        auto x = rand_param({5, 6, 2}, rng);
        auto w_ = rand_param({3, 3, 2, 3}, rng, 0.5);
        auto b = rand_param({3}, rng, 0.1);
        auto w = rand_weights({5, 6, 3}, rng);
        return grad_check<double>({&x, &w_, &b}, [&] { return weighted(conv2d(x, w_, b, 1), w); })
            .max_rel_error;
    });
    cases.emplace_back("conv2d_stride2", [weighted](Rng& rng) {
        auto x = rand_param({6, 6, 2}, rng);
        auto w_ = rand_param({3, 3, 2, 4}, rng, 0.5);
        auto b = rand_param({4}, rng, 0.1);
        auto w = rand_weights({3, 3, 4}, rng);
        return grad_check<double>({&x, &w_, &b}, [&] { return weighted(conv2d(x, w_, b, 2), w); })
            .max_rel_error;
    });
    cases.emplace_back("conv2d_1x1", [weighted](Rng& rng) {
        auto x = rand_param({4, 4, 3}, rng);
        auto w_ = rand_param({1, 1, 3, 2}, rng, 0.5);
        auto b = rand_param({2}, rng, 0.1);
        auto w = rand_weights({4, 4, 2}, rng);
        return grad_check<double>({&x, &w_, &b}, [&] { return weighted(conv2d(x, w_, b, 1), w); })
            .max_rel_error;
    });
    cases.emplace_back("upsample2x", [weighted](Rng& rng) {
        auto x = rand_param({3, 4, 2}, rng);
        auto w = rand_weights({6, 8, 2}, rng);
        return grad_check<double>({&x}, [&] { return weighted(square(upsample2x(x)), w); })
            .max_rel_error;
    });
    cases.emplace_back("crop_to", [weighted](Rng& rng) {
        auto x = rand_param({5, 6, 2}, rng);
        auto w = rand_weights({4, 4, 2}, rng);
        return grad_check<double>({&x}, [&] { return weighted(square(crop_to(x, 4, 4)), w); })
            .max_rel_error;
    });
    cases.emplace_back("linear", [weighted](Rng& rng) {
        auto x = rand_param({2, 3, 4}, rng);
        auto w_ = rand_param({4, 5}, rng, 0.5);
        auto b = rand_param({5}, rng, 0.1);
        auto w = rand_weights({2, 3, 5}, rng);
        return grad_check<double>({&x, &w_, &b}, [&] { return weighted(linear(x, w_, b), w); })
            .max_rel_error;
    });
    cases.emplace_back("mlp_forward", [weighted](Rng& rng) {
        auto m = make_mlp_weights<double>({4, 6, 3}, rng);
        auto x = rand_param({2, 4}, rng);
        auto w = rand_weights({2, 3}, rng);
        std::vector<T*> inputs = {&x, &m.ws[0], &m.bs[0], &m.ws[1], &m.bs[1]};
        return grad_check<double>(inputs, [&] { return weighted(mlp_forward(x, m), w); })
            .max_rel_error;
    });
    cases.emplace_back("multi_head_attention", [weighted](Rng& rng) {
        auto aw = make_attention_weights<double>(6, 6, 6, 8, 6, 2, rng);
        auto q = rand_param({2, 3, 6}, rng);
        auto k = rand_param({2, 4, 6}, rng);
        auto v = rand_param({2, 4, 6}, rng);
        auto w = rand_weights({2, 3, 6}, rng);
        std::vector<T*> inputs = {&q, &k, &v, &aw.wq, &aw.wk, &aw.wv, &aw.wo, &aw.bo};
        return grad_check<double>(inputs,
                                  [&] {
                                      auto out = multi_head_attention(q, k, v, aw);
                                      return weighted(out.tokens, w);
                                  })
            .max_rel_error;
    });
    cases.emplace_back("attention_masked_hooked", [weighted](Rng& rng) {
        auto aw = make_attention_weights<double>(5, 5, 5, 6, 5, 2, rng);
        auto q = rand_param({1, 2, 5}, rng);
        auto k = rand_param({1, 3, 5}, rng);
        auto v = rand_param({1, 3, 5}, rng);
        auto s = rand_param({1}, rng);  // hook parameter on the value path
        auto bias = T::constant({1, 2, 3}, {0.0, 0.0, -1e9, 0.0, 0.0, 0.0});
        auto w = rand_weights({1, 2, 5}, rng);
        std::vector<T*> inputs = {&q, &k, &v, &s, &aw.wv, &aw.bv};
        return grad_check<double>(
                   inputs,
                   [&] {
                       auto probs = attention_probs(q, k, aw, std::optional<T>(bias));
                       ava::diffcore::ValueHookT<double> hook = [&s](const T& val) {
                           return mul(val, s);
                       };
                       return weighted(attention_apply(probs, v, aw, hook), w);
                   })
            .max_rel_error;
    });
    return cases;
}

// Runs every op case `instances` times; returns the worst error per case.
inline std::vector<CaseResult> run_op_grad_suite(uint64_t seed, int instances = 10) {
    std::vector<CaseResult> results;
    for (auto& [name, fn] : op_grad_cases()) {
        CaseResult r;
        r.name = name;
        for (int i = 0; i < instances; ++i) {
            Rng rng(ava::util::derive_seed(seed, "grad-" + name, uint64_t(i)));
            r.max_rel_error = std::max(r.max_rel_error, fn(rng));
        }
        results.push_back(std::move(r));
    }
    return results;
}

// Minimal look-at builder local to the suite (duplicated from the test
// helpers so this header stays standalone for the acceptance binary).
inline ava::geomcam::Camera testutil_lookat(const ava::geomcam::Vec3& pos,
                                            const ava::geomcam::Vec3& target, double f, int w,
                                            int h) {
    using ava::geomcam::Vec3;
    const Vec3 up(0.0, 1.0, 0.0);
    const Vec3 z = (target - pos).normalized();
    const Vec3 x = z.cross(up).norm() > 1e-6 ? z.cross(up).normalized() : Vec3(0.0, 0.0, 1.0);
    const Vec3 y = z.cross(x);
    ava::geomcam::Mat3 k = ava::geomcam::Mat3::Identity();
    k(0, 0) = f;
    k(1, 1) = f;
    k(0, 2) = 0.5 * w;
    k(1, 2) = 0.5 * h;
    ava::geomcam::Mat4 w2c = ava::geomcam::Mat4::Identity();
    w2c.block<1, 3>(0, 0) = x.transpose();
    w2c.block<1, 3>(1, 0) = y.transpose();
    w2c.block<1, 3>(2, 0) = z.transpose();
    w2c.block<3, 1>(0, 3) = -(w2c.topLeftCorner<3, 3>() * pos);
    return ava::geomcam::Camera(k, w2c, w, h);
}

// End-to-end check: a full single-ray render loss differentiated through
// the encoder, both transformer stages, the appearance path, and the head.
// Representative parameter tensors from every stage are perturbed.
inline CaseResult run_render_composite(uint64_t seed) {
    using namespace ava;
    nvsnet::ModelConfig cfg;
    cfg.token_dim = 8;
    cfg.heads = 2;
    cfg.blocks = 2;
    cfg.samples_per_ray = 4;
    cfg.pe_frequencies = 2;
    cfg.ffn_multiplier = 2;
    cfg.latent_dim = 6;
    cfg.latent_hidden1 = 3;
    cfg.latent_hidden2 = 4;
    cfg.near = 0.5;
    cfg.far = 10.0;

    auto params = nvsnet::make_renderer_params<double>(cfg, util::derive_seed(seed, "model"));

    // Make the appearance path live: the latent block of f_z starts at zero.
    {
        Rng rng(util::derive_seed(seed, "fz"));
        auto w = params.fz_w.mutable_data();
        const int d = cfg.token_dim;
        for (int i = d; i < d + cfg.latent_dim; ++i) {
            for (int j = 0; j < d; ++j) w[size_t(i) * size_t(d) + size_t(j)] =
                0.1 * rng.next_gaussian();
        }
    }

    Rng rng(util::derive_seed(seed, "scene"));
    std::vector<util::Image<float>> images;
    std::vector<geomcam::Camera> cameras;
    for (int v = 0; v < 2; ++v) {
        util::Image<float> img(16, 16);
        for (auto& x : img.rgb) x = float(rng.next_double());
        images.push_back(std::move(img));
        const geomcam::Vec3 pos(0.4 * v - 0.2, 0.1 * v, -2.0);
        cameras.push_back(testutil_lookat(pos, geomcam::Vec3(0, 0, 2), 14.0, 16, 16));
    }
    const auto ray = cameras[0].ray_for_pixel(8.3, 7.6, cfg.near, cfg.far);
    auto target = diffcore::Tensor64::constant({1, 3}, {0.3, 0.6, 0.2});

    std::vector<T*> inputs = {&params.enc.b_head,
                              &params.seed_token,
                              &params.view_blocks[0].attn.bq,
                              &params.ray_blocks[1].attn.bv,
                              &params.render_block.ln_attn_g,
                              &params.fz_b,
                              &params.rgb_head.bs[1],
                              &params.latent.generator.bs[2]};
    auto make_loss = [&]() {
        auto sources = nvsnet::encode_sources(params, images, cameras);
        auto code = applat::code_for_condition("night", params.latent);
        auto result = nvsnet::render_ray(params, ray, sources, code);
        return diffcore::mse(result.rgb, target);
    };
    CaseResult r;
    r.name = "render_ray_loss";
    r.max_rel_error = ava::diffcore::grad_check<double>(inputs, make_loss).max_rel_error;
    return r;
}

}  // namespace gradsuite
