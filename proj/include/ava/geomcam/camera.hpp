// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole cameras, ray casting, and depth sampling. Continuous pixel
// coordinates place the center of pixel (i, j) at (i + 0.5, j + 0.5).

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ava/util/errors.hpp"
#include "ava/util/rng.hpp"

namespace ava::geomcam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();  // unit length
    double near = 0.0;
    double far = 0.0;

    Vec3 point_at(double t) const { return origin + t * direction; }
};

struct RaySamples {
    std::vector<double> depths;        // strictly increasing, within [near, far]
    std::vector<Vec3> points;          // origin + depth * direction
    Vec3 view_dir = Vec3::UnitZ();     // unit ray direction
};

struct Projection {
    double u = 0.0;      // continuous pixel x
    double v = 0.0;      // continuous pixel y
    double depth = 0.0;  // camera-frame z; <= 0 means behind the camera
};

class Camera {
public:
    // intrinsics: row-major pinhole matrix with zero skew; world_to_cam: rigid
    // transform whose rotation block must be orthonormal within 1e-6.
    Camera(const Mat3& intrinsics, const Mat4& world_to_cam, int width, int height);

    const Mat3& intrinsics() const { return intrinsics_; }
    const Mat4& world_to_cam() const { return world_to_cam_; }
    int width() const { return width_; }
    int height() const { return height_; }

    Vec3 center() const { return center_; }
    Vec3 forward_axis() const;  // camera +z in world space

    // Casts a world ray through continuous pixel (px, py).
    Ray ray_for_pixel(double px, double py, double near, double far) const;

    // Projects a world point to continuous pixel coordinates plus camera
    // depth. A non-positive depth flags a point behind the camera; callers
    // mask rather than receive an error.
    Projection project(const Vec3& x) const;

private:
    Mat3 intrinsics_;
    Mat3 intrinsics_inv_;
    Mat4 world_to_cam_;
    Mat3 rot_;        // world -> camera rotation
    Vec3 trans_;      // world -> camera translation
    Vec3 center_;     // camera position in world space
    int width_ = 0;
    int height_ = 0;
};

// M depths partitioning [near, far] into equal bins: deterministic midpoints
// when stratified is false, one uniform draw per bin otherwise.
RaySamples sample_along_ray(const Ray& ray, int m, bool stratified, uint64_t rng_seed);

}  // namespace ava::geomcam
