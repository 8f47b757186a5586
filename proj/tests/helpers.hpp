// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the test suites: scratch directories, simple camera
// builders, image generators, and a deliberately small model configuration
// that keeps graph construction fast while exercising every code path.

#pragma once

#include <doctest.h>
#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ava/geomcam/camera.hpp"
#include "ava/nvsnet/params.hpp"
#include "ava/util/image.hpp"
#include "ava/util/rng.hpp"

namespace testutil {

// Self-deleting scratch directory under the system temp root.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<uint64_t> counter{0};
        const auto base = std::filesystem::temp_directory_path();
        path_ = base / ("ava_nvs_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& rel = "") const {
        return rel.empty() ? path_.string() : (path_ / rel).string();
    }

private:
    std::filesystem::path path_;
};

inline std::vector<unsigned char> file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

// Pinhole camera at the world origin looking down +z (identity extrinsics).
inline ava::geomcam::Camera axis_camera(double f, double cx, double cy, int w, int h) {
    ava::geomcam::Mat3 k = ava::geomcam::Mat3::Identity();
    k(0, 0) = f;
    k(1, 1) = f;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return ava::geomcam::Camera(k, ava::geomcam::Mat4::Identity(), w, h);
}

// Camera at `pos` looking toward `target`, up = world +y, square pixels.
inline ava::geomcam::Camera lookat_camera(const ava::geomcam::Vec3& pos,
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

inline ava::util::ImageF noise_image(int w, int h, uint64_t seed) {
    ava::util::Rng rng(seed);
    ava::util::ImageF img(w, h);
    for (auto& v : img.rgb) v = float(rng.next_double());
    return img;
}

inline ava::util::ImageU8 noise_image_u8(int w, int h, uint64_t seed) {
    ava::util::Rng rng(seed);
    ava::util::ImageU8 img(w, h);
    for (auto& v : img.rgb) v = uint8_t(rng.next_below(256));
    return img;
}

// Small renderer: every architectural element present, minimal widths.
inline ava::nvsnet::ModelConfig tiny_model_config() {
    ava::nvsnet::ModelConfig cfg;
    cfg.token_dim = 16;
    cfg.heads = 2;
    cfg.blocks = 2;
    cfg.samples_per_ray = 6;
    cfg.pe_frequencies = 2;
    cfg.ffn_multiplier = 2;
    cfg.latent_dim = 8;
    cfg.latent_hidden1 = 4;
    cfg.latent_hidden2 = 6;
    cfg.near = 0.5;
    cfg.far = 30.0;
    return cfg;
}

}  // namespace testutil
