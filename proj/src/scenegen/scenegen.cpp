// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#include "ava/scenegen/scenegen.hpp"

#include <algorithm>
#include <cmath>

#include "ava/util/errors.hpp"
#include "ava/util/rng.hpp"

namespace ava::scenegen {

namespace {

using geomcam::Vec3;

constexpr double kEps = 1e-6;
constexpr double kShadowBias = 1e-4;

// Emission colors for active emissive primitives.
const Vec3 kLampEmission(1.0, 0.93, 0.72);
const Vec3 kWindowEmission(1.0, 0.80, 0.45);
// Point-light tint cast by lamps at night.
const Vec3 kLampLight(1.0, 0.85, 0.6);

struct Hit {
    double t = -1.0;
    int prim = -1;
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::UnitY();
};

bool intersect_sphere(const Primitive& p, const Vec3& o, const Vec3& d, double t_max,
                      double& t_out) {
    const Vec3 oc = o - p.center;
    const double r = p.half.x();
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - r * r;
    const double disc = b * b - c;
    if (disc < 0.0) return false;
    const double s = std::sqrt(disc);
    double t = -b - s;
    if (t < kEps) t = -b + s;
    if (t < kEps || t > t_max) return false;
    t_out = t;
    return true;
}

bool intersect_box(const Primitive& p, const Vec3& o, const Vec3& d, double t_max,
                   double& t_out) {
    double t0 = kEps, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
        const double lo = p.center[a] - p.half[a];
        const double hi = p.center[a] + p.half[a];
        if (std::abs(d[a]) < 1e-12) {
            if (o[a] < lo || o[a] > hi) return false;
            continue;
        }
        const double inv = 1.0 / d[a];
        double ta = (lo - o[a]) * inv;
        double tb = (hi - o[a]) * inv;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    t_out = t0;
    return true;
}

Vec3 box_normal(const Primitive& p, const Vec3& point) {
    // Axis with the largest normalized offset from the center.
    Vec3 rel = point - p.center;
    int axis = 0;
    double best = -1.0;
    for (int a = 0; a < 3; ++a) {
        const double v = std::abs(rel[a]) / p.half[a];
        if (v > best) {
            best = v;
            axis = a;
        }
    }
    Vec3 n = Vec3::Zero();
    n[axis] = rel[axis] >= 0.0 ? 1.0 : -1.0;
    return n;
}

Hit trace(const SceneSpec& spec, const Vec3& o, const Vec3& d, double t_max = 1e30) {
    Hit hit;
    double best = t_max;
    for (size_t i = 0; i < spec.primitives.size(); ++i) {
        const auto& p = spec.primitives[i];
        double t = 0.0;
        const bool ok = p.kind == Primitive::Kind::kSphere ? intersect_sphere(p, o, d, best, t)
                                                           : intersect_box(p, o, d, best, t);
        if (ok && t < best) {
            best = t;
            hit.t = t;
            hit.prim = int(i);
        }
    }
    if (hit.prim >= 0) {
        hit.point = o + hit.t * d;
        const auto& p = spec.primitives[size_t(hit.prim)];
        if (p.kind == Primitive::Kind::kSphere) {
            hit.normal = (hit.point - p.center).normalized();
        } else {
            hit.normal = box_normal(p, hit.point);
        }
    }
    return hit;
}

// True when the segment from `o` toward `d` (unit) of length `dist` is
// blocked. `skip` excludes one primitive (a light source's own body).
bool occluded(const SceneSpec& spec, const Vec3& o, const Vec3& d, double dist, int skip = -1) {
    for (size_t i = 0; i < spec.primitives.size(); ++i) {
        if (int(i) == skip) continue;
        const auto& p = spec.primitives[i];
        double t = 0.0;
        const bool ok = p.kind == Primitive::Kind::kSphere ? intersect_sphere(p, o, d, dist, t)
                                                           : intersect_box(p, o, d, dist, t);
        if (ok) return true;
    }
    return false;
}

bool emissive_active(const Primitive& p, const ConditionParams& cond) {
    switch (p.emissive) {
        case Primitive::Emissive::kLamp: return cond.lamps_on;
        case Primitive::Emissive::kWindow: return cond.windows_on;
        default: return false;
    }
}

Vec3 shade(const SceneSpec& spec, const ConditionParams& cond,
           const std::vector<int>& lamp_ids, const Vec3& origin, const Vec3& dir) {
    const Hit hit = trace(spec, origin, dir);
    Vec3 color;
    if (hit.prim < 0) {
        color = cond.sky;
    } else {
        const auto& prim = spec.primitives[size_t(hit.prim)];
        if (emissive_active(prim, cond)) {
            color = prim.emissive == Primitive::Emissive::kLamp ? kLampEmission : kWindowEmission;
        } else {
            Vec3 light = cond.ambient;
            if (cond.sun_color.maxCoeff() > 0.0) {
                const Vec3 to_sun = -cond.sun_dir;
                const double ndl = hit.normal.dot(to_sun);
                if (ndl > 0.0 &&
                    !occluded(spec, hit.point + kShadowBias * hit.normal, to_sun, 1e30)) {
                    light += cond.sun_color * ndl;
                }
            }
            if (cond.lamps_on) {
                for (int li : lamp_ids) {
                    const auto& lamp = spec.primitives[size_t(li)];
                    const Vec3 delta = lamp.center - hit.point;
                    const double dist = delta.norm();
                    if (dist < kEps) continue;
                    const Vec3 to_lamp = delta / dist;
                    const double ndl = hit.normal.dot(to_lamp);
                    if (ndl <= 0.0) continue;
                    const double atten = 2.5 / (1.0 + 0.35 * dist * dist);
                    if (atten < 1e-3) continue;
                    if (!occluded(spec, hit.point + kShadowBias * hit.normal, to_lamp,
                                  dist - lamp.half.x() - kShadowBias, li)) {
                        light += kLampLight * (ndl * atten);
                    }
                }
            }
            color = prim.albedo.cwiseProduct(light);
        }
    }
    // Photometric grade (rain): desaturate toward luminance, then darken.
    if (cond.desaturation > 0.0) {
        const double lum = 0.299 * color.x() + 0.587 * color.y() + 0.114 * color.z();
        color = (1.0 - cond.desaturation) * color + cond.desaturation * Vec3(lum, lum, lum);
    }
    color *= cond.gain;
    return color.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

std::pair<double, double> region_x_interval(Region r) {
    return r == Region::kTrain ? std::pair<double, double>{-20.0, 80.0}
                               : std::pair<double, double>{180.0, 280.0};
}

const std::vector<ConditionParams>& all_conditions() {
    static const std::vector<ConditionParams> conds = [] {
        std::vector<ConditionParams> v(4);
        v[0].name = "day";
        v[0].sun_dir = Vec3(-0.45, -1.0, -0.3).normalized();
        v[0].sun_color = Vec3(0.75, 0.73, 0.66);
        v[0].ambient = Vec3(0.30, 0.32, 0.36);
        v[0].sky = Vec3(0.62, 0.78, 0.97);

        v[1].name = "evening";
        v[1].sun_dir = Vec3(-0.9, -0.32, -0.28).normalized();
        v[1].sun_color = Vec3(0.78, 0.45, 0.22);
        v[1].ambient = Vec3(0.16, 0.12, 0.12);
        v[1].sky = Vec3(0.86, 0.52, 0.36);
        v[1].windows_on = true;

        v[2].name = "rain";
        v[2].sun_dir = Vec3(-0.45, -1.0, -0.3).normalized();
        v[2].sun_color = Vec3(0.34, 0.36, 0.40);
        v[2].ambient = Vec3(0.30, 0.33, 0.38);
        v[2].sky = Vec3(0.52, 0.57, 0.64);
        v[2].desaturation = 0.55;
        v[2].gain = 0.78;

        v[3].name = "night";
        v[3].sun_color = Vec3::Zero();
        v[3].ambient = Vec3(0.050, 0.065, 0.105);
        v[3].sky = Vec3(0.015, 0.025, 0.06);
        v[3].lamps_on = true;
        v[3].windows_on = true;
        return v;
    }();
    return conds;
}

const ConditionParams& condition_params(const std::string& name) {
    for (const auto& c : all_conditions()) {
        if (c.name == name) return c;
    }
    std::string known;
    for (const auto& c : all_conditions()) known += (known.empty() ? "" : ", ") + c.name;
    throw util::InputError("unknown condition '" + name + "' (registered: " + known + ")");
}

SceneSpec generate_scene(uint64_t seed, Region region) {
    util::Rng rng(util::derive_seed(seed, region_name(region)));
    const double x0 = region == Region::kTrain ? 0.0 : 200.0;

    SceneSpec spec;
    spec.seed = seed;
    spec.region = region;

    auto add_box = [&spec](const Vec3& center, const Vec3& half, const Vec3& albedo,
                           Primitive::Emissive e = Primitive::Emissive::kNone) {
        Primitive p;
        p.kind = Primitive::Kind::kBox;
        p.center = center;
        p.half = half;
        p.albedo = albedo;
        p.emissive = e;
        spec.primitives.push_back(p);
    };
    auto add_sphere = [&spec](const Vec3& center, double radius, const Vec3& albedo,
                              Primitive::Emissive e = Primitive::Emissive::kNone) {
        Primitive p;
        p.kind = Primitive::Kind::kSphere;
        p.center = center;
        p.half = Vec3(radius, radius, radius);
        p.albedo = albedo;
        p.emissive = e;
        spec.primitives.push_back(p);
    };

    // Ground and road strip (road is a hair taller to avoid coplanar faces).
    add_box(Vec3(x0 + 22.0, -0.5, 0.0), Vec3(42.0, 0.5, 28.0),
            Vec3(0.40 + rng.uniform(0.0, 0.08), 0.44 + rng.uniform(0.0, 0.08),
                 0.34 + rng.uniform(0.0, 0.06)));
    add_box(Vec3(x0 + 22.0, -0.498, 0.0), Vec3(42.0, 0.5, 2.4),
            Vec3(0.20, 0.20, 0.23) + Vec3::Ones() * rng.uniform(0.0, 0.04));

    // Buildings with road-facing window panels.
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? -1.0 : 1.0;
        double x = x0 + 2.0 + rng.uniform(0.0, 2.0);
        while (x < x0 + 36.0) {
            const double w = rng.uniform(2.0, 3.2);
            const double h = rng.uniform(2.5, 6.0);
            const double depth = rng.uniform(1.8, 2.8);
            const double cz = sign * (5.6 + rng.uniform(0.0, 2.5));
            const Vec3 albedo(0.45 + rng.uniform(0.0, 0.35), 0.38 + rng.uniform(0.0, 0.30),
                              0.33 + rng.uniform(0.0, 0.28));
            add_box(Vec3(x + w, h, cz), Vec3(w, h, depth), albedo);

            const double face_z = cz - sign * (depth + 0.05);
            const int rows = std::max(1, std::min(3, int(h / 1.9)));
            for (int r = 0; r < rows; ++r) {
                const double wy = 1.2 + 1.7 * r;
                if (wy > 2.0 * h - 0.8) break;
                for (int col = 0; col < 2; ++col) {
                    const double wx = x + w + (col == 0 ? -0.45 * w : 0.45 * w);
                    add_box(Vec3(wx, wy, face_z), Vec3(0.32, 0.42, 0.045),
                            Vec3(0.36, 0.34, 0.30), Primitive::Emissive::kWindow);
                }
            }
            x += 2.0 * w + rng.uniform(1.0, 3.0);
        }
    }

    // Lamp posts along both road edges.
    for (double lx = x0 + 3.0 + rng.uniform(0.0, 1.0); lx < x0 + 34.0;
         lx += 6.5 + rng.uniform(0.0, 1.5)) {
        for (int side = 0; side < 2; ++side) {
            const double sign = side == 0 ? -1.0 : 1.0;
            add_box(Vec3(lx, 1.2, sign * 2.6), Vec3(0.07, 1.2, 0.07), Vec3(0.28, 0.30, 0.33));
            add_sphere(Vec3(lx, 2.62, sign * 2.6), 0.25, Vec3(0.50, 0.48, 0.42),
                       Primitive::Emissive::kLamp);
        }
    }

    // A few bushes near the road.
    const int bushes = 3 + int(rng.next_below(3));
    for (int i = 0; i < bushes; ++i) {
        const double sign = rng.next_below(2) == 0 ? -1.0 : 1.0;
        add_sphere(Vec3(x0 + 4.0 + rng.uniform(0.0, 28.0), 0.42, sign * (3.1 + rng.uniform(0.0, 0.7))),
                   rng.uniform(0.35, 0.6),
                   Vec3(0.16 + rng.uniform(0.0, 0.12), 0.34 + rng.uniform(0.0, 0.22),
                        0.14 + rng.uniform(0.0, 0.10)));
    }

    // Ten poses along the road with small lateral/angular jitter.
    for (int i = 0; i < 10; ++i) {
        PoseSpec pose;
        pose.position = Vec3(x0 + 2.0 + 2.3 * i + rng.uniform(-0.25, 0.25),
                             1.55 + rng.uniform(-0.07, 0.07), rng.uniform(-0.35, 0.35));
        const double yaw = rng.uniform(-0.06, 0.06);
        const double pitch = -0.05 + rng.uniform(-0.02, 0.02);
        pose.forward = Vec3(std::cos(pitch) * std::cos(yaw), std::sin(pitch),
                            std::cos(pitch) * std::sin(yaw))
                           .normalized();
        spec.poses.push_back(pose);
    }
    return spec;
}

geomcam::Camera camera_for_pose(const PoseSpec& pose, int width, int height) {
    const double f = 0.85 * width;
    geomcam::Mat3 k = geomcam::Mat3::Identity();
    k(0, 0) = f;
    k(1, 1) = f;
    k(0, 2) = 0.5 * width;
    k(1, 2) = 0.5 * height;

    const Vec3 up(0.0, 1.0, 0.0);
    const Vec3 z = pose.forward.normalized();
    const Vec3 x = z.cross(up).norm() > 1e-6 ? z.cross(up).normalized()
                                             : Vec3(0.0, 0.0, 1.0);
    const Vec3 y = z.cross(x);  // camera-down, completing a right-handed frame

    geomcam::Mat4 w2c = geomcam::Mat4::Identity();
    w2c.block<1, 3>(0, 0) = x.transpose();
    w2c.block<1, 3>(1, 0) = y.transpose();
    w2c.block<1, 3>(2, 0) = z.transpose();
    w2c.block<3, 1>(0, 3) = -(w2c.topLeftCorner<3, 3>() * pose.position);
    return geomcam::Camera(k, w2c, width, height);
}

util::ImageF render_view(const SceneSpec& spec, const ConditionParams& cond,
                         const geomcam::Camera& camera) {
    std::vector<int> lamp_ids;
    for (size_t i = 0; i < spec.primitives.size(); ++i) {
        if (spec.primitives[i].emissive == Primitive::Emissive::kLamp) lamp_ids.push_back(int(i));
    }
    util::ImageF img(camera.width(), camera.height());
    const Vec3 origin = camera.center();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < camera.height(); ++y) {
        for (int x = 0; x < camera.width(); ++x) {
            const auto ray = camera.ray_for_pixel(x + 0.5, y + 0.5, 0.01, 1000.0);
            const Vec3 c = shade(spec, cond, lamp_ids, origin, ray.direction);
            img.at(x, y, 0) = float(c.x());
            img.at(x, y, 1) = float(c.y());
            img.at(x, y, 2) = float(c.z());
        }
    }
    return img;
}

std::vector<int> render_id_map(const SceneSpec& spec, const geomcam::Camera& camera) {
    std::vector<int> ids(size_t(camera.width()) * size_t(camera.height()), -1);
    const Vec3 origin = camera.center();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < camera.height(); ++y) {
        for (int x = 0; x < camera.width(); ++x) {
            const auto ray = camera.ray_for_pixel(x + 0.5, y + 0.5, 0.01, 1000.0);
            ids[size_t(y) * size_t(camera.width()) + size_t(x)] =
                trace(spec, origin, ray.direction).prim;
        }
    }
    return ids;
}

RenderedScene render_scene(const SceneSpec& spec, const ConditionParams& cond, int width,
                           int height) {
    if (width % 4 != 0 || height % 4 != 0) {
        throw util::InputError("render_scene needs width and height divisible by 4");
    }
    RenderedScene out;
    for (const auto& pose : spec.poses) {
        out.cameras.push_back(camera_for_pose(pose, width, height));
        out.images.push_back(util::to_u8(render_view(spec, cond, out.cameras.back())));
    }
    return out;
}

SceneBundle make_scene_bundle(uint64_t seed, Region region, const std::string& id, int width,
                              int height, const std::vector<std::string>& conditions) {
    SceneBundle bundle;
    bundle.id = id;
    bundle.split = region_name(region);
    bundle.spec = generate_scene(seed, region);
    for (const auto& cname : conditions) {
        auto rendered = render_scene(bundle.spec, condition_params(cname), width, height);
        if (bundle.cameras.empty()) bundle.cameras = rendered.cameras;
        bundle.images[cname] = std::move(rendered.images);
    }
    return bundle;
}

}  // namespace ava::scenegen
