// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tests for the convolutional feature encoder: output geometry, input
// validation, receptive-field locality, translation equivariance at the
// downsampling stride, and camera-aligned feature lookups.

#include <cmath>
#include <cstring>
#include <vector>

#include "ava/encoder/unet.hpp"
#include "ava/geomcam/camera.hpp"
#include "ava/util/image.hpp"
#include "ava/util/rng.hpp"
#include "helpers.hpp"

using namespace ava;
using Tensor = diffcore::Tensor;

namespace {

// Smooth field with period 8 in both axes so windows cut at different offsets
// are exact translates of one another.
util::Image<float> periodic_window(int h, int w, int x0, int y0) {
    util::Image<float> img(w, h);
    constexpr double kTau = 6.283185307179586;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = double(x + x0), gy = double(y + y0);
            for (int c = 0; c < 3; ++c) {
                const double v = 0.5 + 0.2 * std::sin(kTau * gx / 8.0 + c) *
                                           std::cos(kTau * gy / 8.0 + 2 * c) +
                                 0.1 * std::sin(kTau * (gx + gy) / 8.0 + 3 * c);
                img.at(x, y, c) = float(v);
            }
        }
    }
    return img;
}

float grid_value(const encoder::FeatureMap& map, int y, int x, int c) {
    const int W = map.grid.dim(1), C = map.grid.dim(2);
    return map.grid.data()[(size_t(y) * size_t(W) + size_t(x)) * size_t(C) + size_t(c)];
}

}  // namespace

TEST_CASE("encode_image produces a full-resolution deterministic feature grid") {
    util::Rng rng(11);
    auto params = encoder::make_encoder_params<float>(8, rng);
    CHECK(params.feature_dim() == 8);

    const auto img = testutil::noise_image(32, 20, 12);
    const auto t = encoder::image_tensor<float>(img);
    CHECK(t.shape() == diffcore::Shape{20, 32, 3});
    CHECK_FALSE(t.requires_grad());
    CHECK(t.data()[5] == img.rgb[5]);

    const auto fm = encoder::encode_image(params, t);
    CHECK(fm.grid.shape() == diffcore::Shape{20, 32, 8});
    CHECK(fm.stride == 1);

    const auto fm2 = encoder::encode_image(params, t);
    REQUIRE(fm.grid.size() == fm2.grid.size());
    CHECK(std::memcmp(fm.grid.data().data(), fm2.grid.data().data(),
                      size_t(fm.grid.size()) * sizeof(float)) == 0);
}

TEST_CASE("encode_image rejects malformed inputs") {
    util::Rng rng(13);
    auto params = encoder::make_encoder_params<float>(4, rng);

    CHECK_THROWS_AS(encoder::encode_image(params, Tensor::zeros({16, 16})), util::InputError);
    CHECK_THROWS_AS(encoder::encode_image(params, Tensor::zeros({16, 16, 4})), util::InputError);
    CHECK_THROWS_AS(encoder::encode_image(params, Tensor::zeros({12, 16, 3})), util::InputError);
    CHECK_THROWS_AS(encoder::encode_image(params, Tensor::zeros({16, 12, 3})), util::InputError);
    CHECK_THROWS_AS(encoder::encode_image(params, Tensor::zeros({18, 16, 3})), util::InputError);
    CHECK_THROWS_AS(encoder::encode_image(params, Tensor::zeros({16, 22, 3})), util::InputError);
    CHECK_NOTHROW(encoder::encode_image(params, Tensor::zeros({16, 16, 3})));
}

TEST_CASE("a single-pixel change stays inside the receptive field") {
    util::Rng rng(14);
    auto params = encoder::make_encoder_params<float>(6, rng);

    auto img = testutil::noise_image(32, 32, 15);
    const auto base = encoder::encode_image(params, encoder::image_tensor<float>(img));

    img.at(2, 2, 0) += 0.25f;
    img.at(2, 2, 1) -= 0.25f;
    const auto bumped = encoder::encode_image(params, encoder::image_tensor<float>(img));

    // The perturbed pixel itself must feel the change...
    double at_site = 0.0;
    for (int c = 0; c < 6; ++c) {
        at_site += std::abs(double(grid_value(bumped, 2, 2, c)) - double(grid_value(base, 2, 2, c)));
    }
    CHECK(at_site > 0.0);

    // ...while everything at Chebyshev distance > 10 from (2, 2) is untouched
    // bit for bit. The deepest path is two stride-2 convolutions surrounded by
    // 3x3 kernels, bounding the influence radius well below that.
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            if (std::max(std::abs(y - 2), std::abs(x - 2)) <= 10) continue;
            for (int c = 0; c < 6; ++c) {
                REQUIRE(grid_value(base, y, x, c) == grid_value(bumped, y, x, c));
            }
        }
    }

    // Spot-check the pinned far cell.
    for (int c = 0; c < 6; ++c) {
        CHECK(grid_value(base, 20, 20, c) == grid_value(bumped, 20, 20, c));
    }
}

TEST_CASE("shifting the input by the downsample factor shifts the features") {
    util::Rng rng(16);
    auto params = encoder::make_encoder_params<float>(6, rng);

    // Two 48x48 windows onto the same periodic field, 4 pixels apart in x.
    // 4 is a multiple of the total downsampling stride, so interior features
    // must translate along with the content.
    const auto fa = encoder::encode_image(
        params, encoder::image_tensor<float>(periodic_window(48, 48, 0, 0)));
    const auto fb = encoder::encode_image(
        params, encoder::image_tensor<float>(periodic_window(48, 48, 4, 0)));

    double max_diff = 0.0;
    for (int y = 12; y < 36; ++y) {
        for (int x = 12; x < 32; ++x) {
            for (int c = 0; c < 6; ++c) {
                const double d =
                    std::abs(double(grid_value(fb, y, x, c)) - double(grid_value(fa, y, x + 4, c)));
                max_diff = std::max(max_diff, d);
            }
        }
    }
    CHECK(max_diff < 1e-3);
}

TEST_CASE("feature_at recovers grid nodes through pixel-center rays") {
    util::Rng rng(17);
    auto params = encoder::make_encoder_params<float>(5, rng);
    const auto img = testutil::noise_image(16, 16, 18);
    const auto fm = encoder::encode_image(params, encoder::image_tensor<float>(img));

    const auto cam = testutil::axis_camera(40.0, 8.0, 8.0, 16, 16);

    for (const auto [gy, gx] : {std::pair{0, 0}, {3, 7}, {10, 2}, {15, 15}}) {
        const auto ray = cam.ray_for_pixel(gx + 0.5, gy + 0.5, 0.1, 10.0);
        const geomcam::Vec3 x = ray.origin + 3.0 * ray.direction;

        bool in_front = false;
        const auto q = encoder::grid_query_for_point(fm, cam, x, in_front);
        CHECK(in_front);
        CHECK(q.u == doctest::Approx(double(gx)).epsilon(1e-9));
        CHECK(q.v == doctest::Approx(double(gy)).epsilon(1e-9));

        bool valid = false;
        const auto f = encoder::feature_at(fm, cam, x, valid);
        CHECK(valid);
        REQUIRE(f.shape() == diffcore::Shape{1, 5});
        for (int c = 0; c < 5; ++c) {
            CHECK(f.data()[c] == doctest::Approx(double(grid_value(fm, gy, gx, c))).epsilon(1e-5));
        }
    }
}

TEST_CASE("feature_at masks behind-camera and out-of-frame points with zeros") {
    util::Rng rng(19);
    auto params = encoder::make_encoder_params<float>(5, rng);
    const auto img = testutil::noise_image(16, 16, 20);
    const auto fm = encoder::encode_image(params, encoder::image_tensor<float>(img));
    const auto cam = testutil::axis_camera(40.0, 8.0, 8.0, 16, 16);

    bool valid = true;
    const auto behind = encoder::feature_at(fm, cam, geomcam::Vec3(0, 0, -5), valid);
    CHECK_FALSE(valid);
    for (int c = 0; c < 5; ++c) CHECK(behind.data()[c] == 0.0f);

    bool in_front = false;
    const auto q = encoder::grid_query_for_point(fm, cam, geomcam::Vec3(0, 0, -5), in_front);
    CHECK_FALSE(in_front);
    CHECK(q.u == -1.0);
    CHECK(q.v == -1.0);

    // In front of the camera but projecting far outside the 16x16 frame.
    valid = true;
    const auto outside = encoder::feature_at(fm, cam, geomcam::Vec3(50, 0, 2), valid);
    CHECK_FALSE(valid);
    for (int c = 0; c < 5; ++c) CHECK(outside.data()[c] == 0.0f);
}

TEST_CASE("feature_at agrees with a hand-rolled projection and blend") {
    util::Rng rng(21);
    auto params = encoder::make_encoder_params<float>(5, rng);
    const auto img = testutil::noise_image(16, 16, 22);
    const auto fm = encoder::encode_image(params, encoder::image_tensor<float>(img));

    const auto cam = testutil::lookat_camera(geomcam::Vec3(0.3, -0.2, -1.0),
                                             geomcam::Vec3(0.0, 0.0, 3.0), 30.0, 16, 16);

    util::Rng pt_rng(23);
    int valid_count = 0;
    for (int i = 0; i < 100; ++i) {
        const double px = 0.5 + 15.0 * pt_rng.next_double();
        const double py = 0.5 + 15.0 * pt_rng.next_double();
        const double t = 1.0 + 6.0 * pt_rng.next_double();
        const auto ray = cam.ray_for_pixel(px, py, 0.1, 20.0);
        const geomcam::Vec3 x = ray.origin + t * ray.direction;

        bool valid = false;
        const auto f = encoder::feature_at(fm, cam, x, valid);

        const auto proj = cam.project(x);
        const double gu = proj.u - 0.5, gv = proj.v - 0.5;
        const bool inside = proj.depth > 0.0 && gu >= 0.0 && gu <= 15.0 && gv >= 0.0 && gv <= 15.0;
        REQUIRE(valid == inside);
        if (!inside) continue;
        ++valid_count;

        const int u0 = std::min(int(std::floor(gu)), 14);
        const int v0 = std::min(int(std::floor(gv)), 14);
        const double fu = gu - u0, fv = gv - v0;
        for (int c = 0; c < 5; ++c) {
            const double blended =
                (1 - fv) * ((1 - fu) * grid_value(fm, v0, u0, c) +
                            fu * grid_value(fm, v0, u0 + 1, c)) +
                fv * ((1 - fu) * grid_value(fm, v0 + 1, u0, c) +
                      fu * grid_value(fm, v0 + 1, u0 + 1, c));
            REQUIRE(double(f.data()[c]) == doctest::Approx(blended).epsilon(1e-4));
        }
    }
    CHECK(valid_count > 50);  // most sampled points stay in frame
}
