// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#include "ava/geomcam/camera.hpp"

#include <cmath>
#include <string>

namespace ava::geomcam {

namespace {

void validate_intrinsics(const Mat3& k) {
    if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0)) {
        throw util::InputError("camera intrinsics need positive focal lengths");
    }
    if (k(0, 1) != 0.0) {
        throw util::InputError("camera intrinsics must have zero skew");
    }
    if (k(1, 0) != 0.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0 || k(2, 2) != 1.0) {
        throw util::InputError("camera intrinsics bottom row must be (0, 0, 1)");
    }
}

void validate_pose(const Mat4& m) {
    if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
        throw util::InputError("world_to_cam bottom row must be (0, 0, 0, 1)");
    }
    const Mat3 r = m.topLeftCorner<3, 3>();
    const Mat3 err = r * r.transpose() - Mat3::Identity();
    if (err.cwiseAbs().maxCoeff() > 1e-6) {
        throw util::InputError("world_to_cam rotation block is not orthonormal (tol 1e-6)");
    }
}

}  // namespace

Camera::Camera(const Mat3& intrinsics, const Mat4& world_to_cam, int width, int height)
    : intrinsics_(intrinsics), world_to_cam_(world_to_cam), width_(width), height_(height) {
    if (width < 8 || height < 8) {
        throw util::InputError("camera extent below minimum of 8 pixels: " +
                               std::to_string(width) + "x" + std::to_string(height));
    }
    validate_intrinsics(intrinsics_);
    validate_pose(world_to_cam_);
    intrinsics_inv_ = intrinsics_.inverse();
    rot_ = world_to_cam_.topLeftCorner<3, 3>();
    trans_ = world_to_cam_.topRightCorner<3, 1>();
    center_ = -rot_.transpose() * trans_;
}

Vec3 Camera::forward_axis() const { return rot_.transpose() * Vec3::UnitZ(); }

Ray Camera::ray_for_pixel(double px, double py, double near, double far) const {
    if (!(px >= 0.0 && px < double(width_) && py >= 0.0 && py < double(height_))) {
        throw util::InputError("pixel (" + std::to_string(px) + ", " + std::to_string(py) +
                               ") outside " + std::to_string(width_) + "x" +
                               std::to_string(height_) + " image");
    }
    if (!(near > 0.0 && near < far)) {
        throw util::InputError("ray bounds need 0 < near < far");
    }
    const Vec3 dir_cam = intrinsics_inv_ * Vec3(px, py, 1.0);
    Ray ray;
    ray.origin = center_;
    ray.direction = (rot_.transpose() * dir_cam).normalized();
    ray.near = near;
    ray.far = far;
    return ray;
}

Projection Camera::project(const Vec3& x) const {
    const Vec3 cam = rot_ * x + trans_;
    Projection p;
    p.depth = cam.z();
    if (cam.z() != 0.0) {
        const Vec3 px = intrinsics_ * (cam / cam.z());
        p.u = px.x();
        p.v = px.y();
    }
    return p;
}

RaySamples sample_along_ray(const Ray& ray, int m, bool stratified, uint64_t rng_seed) {
    if (m < 2) throw util::InputError("sample_along_ray needs M >= 2");
    if (!(ray.near >= 0.0 && ray.near < ray.far)) {
        throw util::InputError("sample_along_ray needs 0 <= near < far");
    }
    RaySamples s;
    s.depths.resize(size_t(m));
    s.points.resize(size_t(m));
    s.view_dir = ray.direction;
    const double bin = (ray.far - ray.near) / double(m);
    util::Rng rng(rng_seed);
    for (int i = 0; i < m; ++i) {
        const double offset = stratified ? rng.next_double() : 0.5;
        s.depths[size_t(i)] = ray.near + (double(i) + offset) * bin;
        s.points[size_t(i)] = ray.point_at(s.depths[size_t(i)]);
    }
    return s;
}

}  // namespace ava::geomcam
