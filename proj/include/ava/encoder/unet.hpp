// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-view convolutional encoder producing image-aligned feature maps.
// Layout: two stride-2 downsampling stages (channels 16 -> 32 -> 64), two
// nearest-neighbour upsampling stages with skip concatenations fused by 1x1
// convolutions (mirrored channels 32 -> 16), and a linear 1x1 head to the
// token width. GELU activations, zero padding, no normalization layers, so
// batch-of-one encoding behaves identically to batched encoding.

#pragma once

#include <vector>

#include "ava/diffcore/ops.hpp"
#include "ava/geomcam/bilinear.hpp"
#include "ava/geomcam/camera.hpp"
#include "ava/util/image.hpp"

namespace ava::encoder {

template <class Real>
struct EncoderParamsT {
    diffcore::TensorT<Real> w_in, b_in;      // 3x3, 3 -> 16, stride 1
    diffcore::TensorT<Real> w_down1, b_down1;  // 3x3, 16 -> 32, stride 2
    diffcore::TensorT<Real> w_down2, b_down2;  // 3x3, 32 -> 64, stride 2
    diffcore::TensorT<Real> w_up1, b_up1;    // 1x1, 64+32 -> 32
    diffcore::TensorT<Real> w_up2, b_up2;    // 1x1, 32+16 -> 16
    diffcore::TensorT<Real> w_head, b_head;  // 1x1, 16 -> d_f, linear

    int feature_dim() const { return w_head.dim(3); }
};

using EncoderParams = EncoderParamsT<float>;

template <class Real>
struct FeatureMapT {
    diffcore::TensorT<Real> grid;  // [H_f, W_f, d_f]
    int stride = 1;                // source pixels per feature cell
};

using FeatureMap = FeatureMapT<float>;

namespace detail {

template <class Real>
diffcore::TensorT<Real> conv_param(int kh, int kw, int cin, int cout, util::Rng& rng) {
    std::vector<Real> w(size_t(kh) * size_t(kw) * size_t(cin) * size_t(cout));
    const Real s = Real(std::sqrt(2.0 / double(kh * kw * cin)));
    for (auto& v : w) v = Real(rng.next_gaussian()) * s;
    return diffcore::TensorT<Real>::param({kh, kw, cin, cout}, std::move(w));
}

template <class Real>
diffcore::TensorT<Real> bias_param(int c) {
    return diffcore::TensorT<Real>::param({c}, std::vector<Real>(size_t(c), Real(0)));
}

}  // namespace detail

template <class Real>
EncoderParamsT<Real> make_encoder_params(int feature_dim, util::Rng& rng) {
    EncoderParamsT<Real> p;
    p.w_in = detail::conv_param<Real>(3, 3, 3, 16, rng);
    p.b_in = detail::bias_param<Real>(16);
    p.w_down1 = detail::conv_param<Real>(3, 3, 16, 32, rng);
    p.b_down1 = detail::bias_param<Real>(32);
    p.w_down2 = detail::conv_param<Real>(3, 3, 32, 64, rng);
    p.b_down2 = detail::bias_param<Real>(64);
    p.w_up1 = detail::conv_param<Real>(1, 1, 96, 32, rng);
    p.b_up1 = detail::bias_param<Real>(32);
    p.w_up2 = detail::conv_param<Real>(1, 1, 48, 16, rng);
    p.b_up2 = detail::bias_param<Real>(16);
    p.w_head = detail::conv_param<Real>(1, 1, 16, feature_dim, rng);
    p.b_head = detail::bias_param<Real>(feature_dim);
    return p;
}

// Image [H, W, 3] in [0, 1] as a gradient-free tensor.
template <class Real>
diffcore::TensorT<Real> image_tensor(const util::Image<float>& img) {
    std::vector<Real> data(img.rgb.begin(), img.rgb.end());
    return diffcore::TensorT<Real>::constant({img.height, img.width, 3}, std::move(data));
}

// Full-resolution feature map for one source image. H and W must be at
// least 16 and divisible by 4 so the two downsampling stages round-trip.
template <class Real>
FeatureMapT<Real> encode_image(const EncoderParamsT<Real>& p,
                               const diffcore::TensorT<Real>& image) {
    using namespace diffcore;
    if (image.rank() != 3 || image.dim(2) != 3) {
        throw util::InputError("encode_image expects an [H, W, 3] tensor");
    }
    const int H = image.dim(0), W = image.dim(1);
    if (H < 16 || W < 16 || H % 4 != 0 || W % 4 != 0) {
        throw util::InputError("encode_image needs H, W >= 16 and divisible by 4");
    }
    auto d0 = gelu(conv2d(image, p.w_in, p.b_in, 1));      // [H, W, 16]
    auto d1 = gelu(conv2d(d0, p.w_down1, p.b_down1, 2));   // [H/2, W/2, 32]
    auto d2 = gelu(conv2d(d1, p.w_down2, p.b_down2, 2));   // [H/4, W/4, 64]
    auto u1 = concat_last<Real>({upsample2x(d2), d1});     // [H/2, W/2, 96]
    u1 = gelu(conv2d(u1, p.w_up1, p.b_up1, 1));            // [H/2, W/2, 32]
    auto u2 = concat_last<Real>({upsample2x(u1), d0});     // [H, W, 48]
    u2 = gelu(conv2d(u2, p.w_up2, p.b_up2, 1));            // [H, W, 16]
    FeatureMapT<Real> out;
    out.grid = conv2d(u2, p.w_head, p.b_head, 1);          // [H, W, d_f]
    out.stride = 1;
    return out;
}

// Pixel-space projection of a world point converted to feature-grid
// coordinates. Grid nodes sit at pixel centers, so a continuous pixel
// coordinate u maps to grid coordinate u / stride - 0.5.
template <class Real>
geomcam::GridQuery grid_query_for_point(const FeatureMapT<Real>& map,
                                        const geomcam::Camera& camera,
                                        const geomcam::Vec3& x, bool& in_front) {
    const auto proj = camera.project(x);
    in_front = proj.depth > 0.0;
    geomcam::GridQuery q;
    q.u = proj.u / double(map.stride) - 0.5;
    q.v = proj.v / double(map.stride) - 0.5;
    if (!in_front) {
        // Forced out of domain so the gather masks it.
        q.u = -1.0;
        q.v = -1.0;
    }
    return q;
}

// Differentiable feature lookup for one world point: project, then bilinear
// sample. Behind-camera or out-of-frame points come back as a zero vector
// with the mask cleared.
template <class Real>
diffcore::TensorT<Real> feature_at(const FeatureMapT<Real>& map, const geomcam::Camera& camera,
                                   const geomcam::Vec3& x, bool& valid_out) {
    bool in_front = false;
    const auto q = grid_query_for_point(map, camera, x, in_front);
    bool in_domain = false;
    auto f = geomcam::bilinear_sample(map.grid, q.u, q.v, in_domain);
    valid_out = in_front && in_domain;
    return f;
}

}  // namespace ava::encoder
