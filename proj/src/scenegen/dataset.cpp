// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#include "ava/scenegen/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ava/util/errors.hpp"

namespace ava::scenegen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json camera_json(const geomcam::Camera& cam) {
    json j;
    std::vector<double> k(9), w2c(16);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) k[size_t(r * 3 + c)] = cam.intrinsics()(r, c);
    }
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) w2c[size_t(r * 4 + c)] = cam.world_to_cam()(r, c);
    }
    j["intrinsics"] = k;
    j["world_to_cam"] = w2c;
    j["width"] = cam.width();
    j["height"] = cam.height();
    return j;
}

geomcam::Camera camera_from_json(const json& j, const std::string& context) {
    try {
        const auto k_vals = j.at("intrinsics").get<std::vector<double>>();
        const auto m_vals = j.at("world_to_cam").get<std::vector<double>>();
        if (k_vals.size() != 9 || m_vals.size() != 16) {
            throw util::FormatError(context + ": intrinsics/world_to_cam must have 9/16 entries");
        }
        geomcam::Mat3 k;
        geomcam::Mat4 m;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) k(r, c) = k_vals[size_t(r * 3 + c)];
        }
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) m(r, c) = m_vals[size_t(r * 4 + c)];
        }
        return geomcam::Camera(k, m, j.at("width").get<int>(), j.at("height").get<int>());
    } catch (const json::exception& e) {
        throw util::FormatError(context + ": " + e.what());
    }
}

json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw util::IoError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw util::FormatError("'" + path.string() + "': " + e.what());
    }
}

void store_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw util::IoError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw util::IoError("short write to '" + path.string() + "'");
}

}  // namespace

void write_dataset(const std::vector<SceneBundle>& bundles, const std::string& root) {
    if (bundles.empty()) throw util::InputError("write_dataset needs at least one scene");
    const fs::path base(root);
    std::error_code ec;
    fs::create_directories(base, ec);
    if (ec) throw util::IoError("cannot create dataset root '" + root + "': " + ec.message());

    json manifest;
    manifest["views_per_scene"] = int(bundles.front().cameras.size());
    manifest["image"] = {{"width", bundles.front().cameras.front().width()},
                         {"height", bundles.front().cameras.front().height()}};
    json conditions = json::array();
    for (const auto& [cname, imgs] : bundles.front().images) conditions.push_back(cname);
    manifest["conditions"] = conditions;
    json scenes = json::array();

    for (const auto& bundle : bundles) {
        const fs::path scene_dir = base / bundle.id;
        fs::create_directories(scene_dir, ec);
        if (ec) {
            throw util::IoError("cannot create '" + scene_dir.string() + "': " + ec.message());
        }
        json cams;
        cams["views"] = json::array();
        for (const auto& cam : bundle.cameras) cams["views"].push_back(camera_json(cam));
        store_json_file(scene_dir / "cameras.json", cams);

        for (const auto& [cname, images] : bundle.images) {
            const fs::path cond_dir = scene_dir / cname;
            fs::create_directories(cond_dir, ec);
            if (ec) {
                throw util::IoError("cannot create '" + cond_dir.string() + "': " + ec.message());
            }
            for (size_t v = 0; v < images.size(); ++v) {
                util::write_png((cond_dir / (std::to_string(v) + ".png")).string(), images[v]);
            }
        }
        scenes.push_back({{"id", bundle.id},
                          {"split", bundle.split},
                          {"seed", bundle.spec.seed}});
    }
    manifest["scenes"] = scenes;
    store_json_file(base / "manifest.json", manifest);
}

std::vector<SceneBundle> read_dataset(const std::string& root) {
    const fs::path base(root);
    const json manifest = load_json_file(base / "manifest.json");

    std::vector<std::string> conditions;
    int views = 0;
    try {
        conditions = manifest.at("conditions").get<std::vector<std::string>>();
        views = manifest.at("views_per_scene").get<int>();
    } catch (const json::exception& e) {
        throw util::FormatError("manifest.json: " + std::string(e.what()));
    }
    if (conditions.empty() || views < 2) {
        throw util::FormatError("manifest.json: needs >= 1 condition and >= 2 views per scene");
    }

    std::vector<SceneBundle> bundles;
    if (!manifest.contains("scenes") || !manifest["scenes"].is_array()) {
        throw util::FormatError("manifest.json: missing 'scenes' array");
    }
    for (const auto& entry : manifest["scenes"]) {
        SceneBundle bundle;
        try {
            bundle.id = entry.at("id").get<std::string>();
            bundle.split = entry.at("split").get<std::string>();
            bundle.spec = generate_scene(entry.at("seed").get<uint64_t>(),
                                         bundle.split == "eval" ? Region::kEval : Region::kTrain);
        } catch (const json::exception& e) {
            throw util::FormatError("manifest.json scene entry: " + std::string(e.what()));
        }
        const fs::path scene_dir = base / bundle.id;
        const json cams = load_json_file(scene_dir / "cameras.json");
        if (!cams.contains("views") || int(cams["views"].size()) != views) {
            throw util::FormatError((scene_dir / "cameras.json").string() +
                                    ": expected " + std::to_string(views) + " views");
        }
        for (int v = 0; v < views; ++v) {
            bundle.cameras.push_back(camera_from_json(
                cams["views"][size_t(v)],
                (scene_dir / "cameras.json").string() + " view " + std::to_string(v)));
        }
        for (const auto& cname : conditions) {
            const fs::path cond_dir = scene_dir / cname;
            if (!fs::is_directory(cond_dir)) {
                throw util::FormatError("missing condition directory '" + cond_dir.string() +
                                        "'");
            }
            auto& imgs = bundle.images[cname];
            for (int v = 0; v < views; ++v) {
                imgs.push_back(util::read_png((cond_dir / (std::to_string(v) + ".png")).string()));
            }
        }
        bundles.push_back(std::move(bundle));
    }
    if (bundles.empty()) throw util::FormatError("manifest.json lists no scenes");
    return bundles;
}

}  // namespace ava::scenegen
