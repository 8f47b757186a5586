// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Procedural street scenes rendered under four appearance conditions.
// Geometry (boxes, spheres) and camera paths are deterministic functions of
// a seed; conditions change only the shading — sun, ambient, sky, emissive
// lamps/windows, and a photometric rain grade — never the geometry, so
// per-pixel hit IDs are identical across conditions by construction.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "ava/geomcam/camera.hpp"
#include "ava/util/image.hpp"

namespace ava::scenegen {

enum class Region { kTrain, kEval };

inline const char* region_name(Region r) { return r == Region::kTrain ? "train" : "eval"; }

// Disjoint x-axis layout intervals; everything in a scene (primitives and
// cameras) lives inside its region's interval.
std::pair<double, double> region_x_interval(Region r);

struct Primitive {
    enum class Kind { kBox, kSphere } kind = Kind::kBox;
    enum class Emissive { kNone, kLamp, kWindow } emissive = Emissive::kNone;
    geomcam::Vec3 center = geomcam::Vec3::Zero();
    geomcam::Vec3 half = geomcam::Vec3::Ones();  // box half extents; x() = sphere radius
    geomcam::Vec3 albedo = geomcam::Vec3::Ones();
};

struct PoseSpec {
    geomcam::Vec3 position = geomcam::Vec3::Zero();
    geomcam::Vec3 forward = geomcam::Vec3::UnitX();  // unit view direction
};

struct SceneSpec {
    uint64_t seed = 0;
    Region region = Region::kTrain;
    std::vector<Primitive> primitives;
    std::vector<PoseSpec> poses;  // 10 along the road
};

struct ConditionParams {
    std::string name;
    geomcam::Vec3 sun_dir = geomcam::Vec3(-0.4, -1.0, -0.25).normalized();
    geomcam::Vec3 sun_color = geomcam::Vec3::Zero();  // zero disables the sun
    geomcam::Vec3 ambient = geomcam::Vec3::Zero();
    geomcam::Vec3 sky = geomcam::Vec3::Zero();
    bool lamps_on = false;
    bool windows_on = false;
    double desaturation = 0.0;  // 0 = untouched, 1 = grayscale
    double gain = 1.0;          // post-shading multiplier (rain darkening)
};

// The four registered conditions, in canonical order day/evening/rain/night.
const std::vector<ConditionParams>& all_conditions();
const ConditionParams& condition_params(const std::string& name);

struct SceneBundle {
    std::string id;
    std::string split;  // "train" | "eval"
    SceneSpec spec;
    std::vector<geomcam::Camera> cameras;
    std::map<std::string, std::vector<util::ImageU8>> images;  // condition -> per-pose
};

// Deterministic layout: ~10 buildings with windows, lamp posts, bushes, a
// ground plane and road strip, plus 10 camera poses along the road.
SceneSpec generate_scene(uint64_t seed, Region region);

// Pinhole camera for one stored pose at the given resolution.
geomcam::Camera camera_for_pose(const PoseSpec& pose, int width, int height);

// Ray-traced shading under one condition (Lambertian + hard sun shadows +
// emissives + night lamp lights + rain grade), in [0,1] floats.
util::ImageF render_view(const SceneSpec& spec, const ConditionParams& cond,
                         const geomcam::Camera& camera);

// Per-pixel index of the nearest hit primitive, -1 for sky.
std::vector<int> render_id_map(const SceneSpec& spec, const geomcam::Camera& camera);

// All poses of one scene under one condition (8-bit quantized) + cameras.
struct RenderedScene {
    std::vector<util::ImageU8> images;
    std::vector<geomcam::Camera> cameras;
};
RenderedScene render_scene(const SceneSpec& spec, const ConditionParams& cond, int width,
                           int height);

// Full bundle: every registered condition rendered for every pose.
SceneBundle make_scene_bundle(uint64_t seed, Region region, const std::string& id, int width,
                              int height, const std::vector<std::string>& conditions);

}  // namespace ava::scenegen
