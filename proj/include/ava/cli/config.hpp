// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one JSON document covering dataset generation, the
// model, training, and evaluation. Every field has a default, unknown keys
// are rejected with their full path, and the effective (post-default)
// document has a stable FNV-1a hash that is stamped into every artifact's
// sidecar so outputs can be traced back to their exact settings.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ava/nvsnet/params.hpp"
#include "ava/trainer/trainer.hpp"

namespace ava::cli {

struct DatasetConfig {
    int train_scenes = 8;
    int eval_scenes = 2;
    int views_per_scene = 10;
    int width = 64;
    int height = 48;
    std::vector<std::string> conditions = {"day", "evening", "rain", "night"};
};

struct TrainSection {
    int64_t iterations = 10000;
    int rays_per_step = 48;
    int source_views = 3;
    double lr = 5e-4;
    double lr_final = 1e-5;
    double weight_rec = 1.0;
    double weight_app = 1.0;
    int64_t checkpoint_every = 2000;
    bool stratified = true;
};

struct EvalSection {
    std::vector<int> pose_indices = {4};
    int batch_size = 1024;  // rays per render flush
    // Condition pairs (source, target) whose pose sequences get temporal
    // consistency numbers; empty keeps evaluation to the PSNR/SSIM matrix.
    std::vector<std::pair<std::string, std::string>> consistency_pairs;
    std::vector<int> consistency_poses = {3, 4, 5};
};

struct RunConfig {
    uint64_t seed = 0;
    std::string data_root;  // empty -> $AVA_NVS_DATA_ROOT -> "data"
    std::string out_dir = "out";
    DatasetConfig dataset;
    nvsnet::ModelConfig model;  // conditions mirror dataset.conditions
    TrainSection train;
    EvalSection eval;

    std::string resolved_data_root() const;
    nlohmann::json to_json() const;
    std::string hash() const;  // FNV-1a of the effective document, hex

    trainer::TrainConfig trainer_config() const;
};

// Applies `doc` over the defaults; unknown keys anywhere raise an
// input-domain error naming the offending path.
RunConfig config_from_json(const nlohmann::json& doc);

// Reads and parses a config file; missing file -> IO error, bad JSON or
// unknown keys -> input-domain error.
RunConfig load_config(const std::string& path);

// Defaults, optionally overlaid with a file, then a seed override.
RunConfig resolve_config(const std::optional<std::string>& path,
                         const std::optional<uint64_t>& seed_override);

}  // namespace ava::cli
