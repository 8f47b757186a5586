// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Joint optimization of the reconstruction and appearance-change losses over
// multi-condition scenes. Each iteration draws one scene, one source
// condition c and one distinct target condition c', renders a shared ray
// batch twice (once per appearance code, reusing the geometry trunk), and
// applies one adaptive-moment update. Every random choice derives from the
// master seed and the iteration index alone, so a run is reproducible and a
// checkpointed run resumes bit-identically.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ava/nvsnet/checkpoint.hpp"
#include "ava/nvsnet/renderer.hpp"
#include "ava/scenegen/scenegen.hpp"
#include "ava/util/errors.hpp"
#include "ava/util/rng.hpp"

namespace ava::trainer {

struct TrainConfig {
    int64_t iterations = 10000;
    int rays_per_step = 48;
    int source_views = 3;      // N nearest poses feeding each target
    double lr = 5e-4;
    double lr_final = 1e-5;    // cosine-decayed floor
    double weight_rec = 1.0;
    double weight_app = 1.0;
    std::vector<std::string> conditions = {"day", "evening", "rain", "night"};
    uint64_t seed = 0;
    int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
    std::string checkpoint_dir;
    bool stratified = true;  // jittered depth sampling during training

    void validate() const {
        if (iterations < 1) throw util::InputError("trainer needs iterations >= 1");
        if (rays_per_step < 1) throw util::InputError("trainer needs rays_per_step >= 1");
        if (source_views < 1) throw util::InputError("trainer needs source_views >= 1");
        if (!(weight_rec > 0.0) || !(weight_app > 0.0)) {
            throw util::InputError("loss weights must be positive");
        }
        if (conditions.size() < 2) {
            throw util::InputError("training needs at least two conditions to sample c' != c");
        }
    }
};

struct LossBreakdown {
    double l_rec = 0.0;
    double l_app = 0.0;
    double total = 0.0;
};

// One sampled step: rays through a target pose plus everything needed to
// score them under both conditions.
struct RayBatch {
    std::vector<geomcam::Ray> rays;
    std::vector<float> gt_c;        // [n*3] target colors under condition c
    std::vector<float> gt_c_prime;  // [n*3] same pixels under condition c'
    std::vector<util::ImageF> source_images;  // condition-c source views
    std::vector<geomcam::Camera> source_cameras;
    int target_pose = -1;
    std::vector<int> source_poses;
    std::string cond;
    std::string cond_prime;
};

// The n poses nearest to `target` by camera centre, excluding target
// itself; ties break toward the lower index.
std::vector<int> nearest_source_poses(const std::vector<geomcam::Camera>& cameras, int target,
                                      int n);

// Picks one target pose, the n_sources nearest other poses (by camera
// centre) as sources in condition c, and n uniformly random pixels; ground
// truth is read from the stored target images in c and c'.
RayBatch sample_training_rays(const scenegen::SceneBundle& scene, const std::string& c,
                              const std::string& c_prime, int n, int n_sources, double near,
                              double far, uint64_t seed);

struct StepOptions {
    double weight_rec = 1.0;
    double weight_app = 1.0;
    bool stratified = false;
    uint64_t sample_seed = 0;
};

template <class Real>
struct StepLossT {
    diffcore::TensorT<Real> total;  // scalar graph root; backward() trains
    LossBreakdown values;
};

// Renders the batch once per code on a shared geometry trunk and forms
// l_rec (code z_c vs condition-c truth), l_app (z_c' vs c' truth), and their
// weighted sum. When c == c' the same render and target are reused, so both
// terms are one and the same scalar.
template <class Real>
StepLossT<Real> step_loss(const RayBatch& batch, const nvsnet::RendererParamsT<Real>& params,
                          const applat::AppearanceCodeT<Real>& z_c,
                          const applat::AppearanceCodeT<Real>& z_c_prime,
                          const StepOptions& opts = {}) {
    using namespace diffcore;
    if (batch.rays.empty()) throw util::InputError("step_loss needs a non-empty ray batch");
    const int n = int(batch.rays.size());

    auto sources = nvsnet::encode_sources(params, batch.source_images, batch.source_cameras);
    nvsnet::RenderOptions ropts;
    ropts.stratified = opts.stratified;
    ropts.sample_seed = opts.sample_seed;
    auto ctx = nvsnet::build_ray_context(params, batch.rays, sources, ropts);

    auto gt_c = TensorT<Real>::constant({n, 3},
                                        std::vector<Real>(batch.gt_c.begin(), batch.gt_c.end()));
    auto rgb_c = nvsnet::render_with_code(params, ctx, z_c);
    auto l_rec = mse(rgb_c, gt_c);

    TensorT<Real> l_app;
    if (batch.cond == batch.cond_prime) {
        l_app = l_rec;  // degenerate pair: same render, same truth, same scalar
    } else {
        auto gt_cp = TensorT<Real>::constant(
            {n, 3}, std::vector<Real>(batch.gt_c_prime.begin(), batch.gt_c_prime.end()));
        auto rgb_cp = nvsnet::render_with_code(params, ctx, z_c_prime);
        l_app = mse(rgb_cp, gt_cp);
    }

    StepLossT<Real> out;
    const bool unit = opts.weight_rec == 1.0 && opts.weight_app == 1.0;
    out.total = unit ? add(l_rec, l_app)
                     : add(scale(l_rec, Real(opts.weight_rec)), scale(l_app, Real(opts.weight_app)));
    out.values.l_rec = double(l_rec.item());
    out.values.l_app = double(l_app.item());
    out.values.total = double(out.total.item());
    return out;
}

// Adaptive moment estimation with bias correction. Moments are keyed by the
// stable parameter names so they serialize alongside the weights.
template <class Real>
struct AdamStateT {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;  // completed updates
    std::map<std::string, std::pair<std::vector<Real>, std::vector<Real>>> moments;
};

template <class Real>
void adam_update(nvsnet::RendererParamsT<Real>& params, AdamStateT<Real>& state, double lr) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    nvsnet::visit_params(params, [&](const std::string& name, diffcore::TensorT<Real>& t) {
        auto& [m, v] = state.moments[name];
        if (m.empty()) {
            m.assign(size_t(t.size()), Real(0));
            v.assign(size_t(t.size()), Real(0));
        }
        const auto g = t.grad();
        auto value = t.mutable_data();
        for (size_t i = 0; i < value.size(); ++i) {
            const double gi = double(g[i]);
            m[i] = Real(state.beta1 * double(m[i]) + (1.0 - state.beta1) * gi);
            v[i] = Real(state.beta2 * double(v[i]) + (1.0 - state.beta2) * gi * gi);
            const double mhat = double(m[i]) / bc1;
            const double vhat = double(v[i]) / bc2;
            value[i] = Real(double(value[i]) - lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    });
}

// Cosine decay from cfg.lr at iteration 0 to cfg.lr_final at the last one.
inline double learning_rate_at(const TrainConfig& cfg, int64_t iteration) {
    if (cfg.iterations <= 1) return cfg.lr;
    const double t = double(iteration) / double(cfg.iterations - 1);
    return cfg.lr_final +
           0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(3.14159265358979323846 * t));
}

template <class Real>
struct TrainerStateT {
    AdamStateT<Real> adam;
    int64_t iteration = 0;  // next iteration to execute
};

struct TrainLogEntry {
    int64_t iteration = 0;
    LossBreakdown loss;
};

// Per-iteration draws, all derived from (master seed, iteration) so that a
// resumed run replays the identical sequence.
struct IterationDraw {
    size_t scene = 0;
    std::string cond;
    std::string cond_prime;
    uint64_t batch_seed = 0;
    uint64_t sample_seed = 0;
};

inline IterationDraw draw_iteration(const TrainConfig& cfg, size_t num_scenes,
                                    int64_t iteration) {
    util::Rng rng(util::derive_seed(cfg.seed, "train-iter", uint64_t(iteration)));
    IterationDraw d;
    d.scene = size_t(rng.next_below(num_scenes));
    d.cond = cfg.conditions[size_t(rng.next_below(cfg.conditions.size()))];
    const size_t alt = size_t(rng.next_below(cfg.conditions.size() - 1));
    size_t pick = 0;
    for (size_t i = 0, seen = 0; i < cfg.conditions.size(); ++i) {
        if (cfg.conditions[i] == d.cond) continue;
        if (seen++ == alt) {
            pick = i;
            break;
        }
    }
    d.cond_prime = cfg.conditions[pick];
    d.batch_seed = rng.next_u64();
    d.sample_seed = rng.next_u64();
    return d;
}

void validate_dataset_for_training(const std::vector<scenegen::SceneBundle>& scenes,
                                   const TrainConfig& cfg);

// Serializes the optimizer moments and iteration counter as checkpoint
// records understood by resume_state (float-precision training only).
std::vector<nvsnet::CheckpointRecord> trainer_state_records(const TrainerStateT<float>& state);
TrainerStateT<float> resume_state(const std::map<std::string, nvsnet::CheckpointRecord>& extra);

void write_loss_csv_header(std::ostream& os);
void write_loss_csv_row(std::ostream& os, const TrainLogEntry& entry);

// Runs iterations [state.iteration, cfg.iterations), mutating params and
// state in place. Appends one log entry per iteration and mirrors it to the
// CSV stream when given. Periodic checkpoints carry the optimizer state.
std::vector<TrainLogEntry> train(nvsnet::RendererParams& params,
                                 const std::vector<scenegen::SceneBundle>& scenes,
                                 const TrainConfig& cfg, TrainerStateT<float>& state,
                                 std::ostream* csv = nullptr);

// Fresh-state convenience overload.
std::vector<TrainLogEntry> train(nvsnet::RendererParams& params,
                                 const std::vector<scenegen::SceneBundle>& scenes,
                                 const TrainConfig& cfg, std::ostream* csv = nullptr);

}  // namespace ava::trainer
