// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// The five commands behind the ava-nvs binary: dataset generation,
// training, single-view rendering, appearance interpolation, and the
// evaluation matrix. Each command is reproducible byte-for-byte from
// (config, seed, checkpoint) and stamps the config hash into a sidecar
// next to everything it writes.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ava/cli/config.hpp"
#include "ava/metrics/metrics.hpp"
#include "ava/nvsnet/renderer.hpp"
#include "ava/scenegen/dataset.hpp"

namespace ava::cli {

// Caps the worker-thread count for everything downstream (no-op without
// a parallel runtime).
void apply_thread_cap(std::optional<int> threads);

// Writes `<artifact>.meta.json` recording the command, config hash and seed.
void write_sidecar(const std::string& artifact_path, const std::string& command,
                   const RunConfig& cfg);

// Renders one held-out pose: the nearest `source_views` other poses provide
// condition-`source_cond` source images, `code` sets the appearance.
util::ImageF render_pose(const nvsnet::RendererParams& params,
                         const scenegen::SceneBundle& scene, int pose,
                         const std::string& source_cond, const applat::AppearanceCode& code,
                         int source_views, int batch_size);

// Full source-condition x target-condition PSNR/SSIM matrix over the given
// scenes, mean over scene/pose cells; consistency columns filled for the
// configured pairs.
metrics::MetricsReport eval_condition_matrix(const nvsnet::RendererParams& params,
                                             const std::vector<scenegen::SceneBundle>& scenes,
                                             const EvalSection& eval, int source_views);

int cmd_gen_data(const RunConfig& cfg);

int cmd_train(const RunConfig& cfg, const std::optional<std::string>& resume_checkpoint);

struct RenderRequest {
    std::string checkpoint;
    std::string scene_id;
    std::string source_condition;
    std::string target_condition;
    int pose_index = 0;
    std::string out_path;
};
int cmd_render(const RunConfig& cfg, const RenderRequest& req);

struct InterpRequest {
    std::string checkpoint;
    std::string scene_id;
    std::string cond_a;
    std::string cond_b;
    int steps = 5;
    int pose_index = 0;
    std::string out_dir;
};
int cmd_interp(const RunConfig& cfg, const InterpRequest& req);

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint);

}  // namespace ava::cli
