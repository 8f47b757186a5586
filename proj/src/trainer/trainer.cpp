// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#include "ava/trainer/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace ava::trainer {

namespace {

const util::ImageU8& condition_images(const scenegen::SceneBundle& scene, const std::string& c,
                                      int pose) {
    auto it = scene.images.find(c);
    if (it == scene.images.end()) {
        throw util::InputError("scene '" + scene.id + "' has no condition '" + c + "'");
    }
    return it->second.at(size_t(pose));
}

}  // namespace

std::vector<int> nearest_source_poses(const std::vector<geomcam::Camera>& cameras, int target,
                                      int n) {
    if (target < 0 || target >= int(cameras.size())) {
        throw util::InputError("source selection: target pose out of range");
    }
    const geomcam::Vec3 target_center = cameras[size_t(target)].center();
    std::vector<int> order;
    for (int p = 0; p < int(cameras.size()); ++p) {
        if (p != target) order.push_back(p);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double da = (cameras[size_t(a)].center() - target_center).norm();
        const double db = (cameras[size_t(b)].center() - target_center).norm();
        if (da != db) return da < db;
        return a < b;
    });
    order.resize(size_t(std::min(n, int(order.size()))));
    return order;
}

RayBatch sample_training_rays(const scenegen::SceneBundle& scene, const std::string& c,
                              const std::string& c_prime, int n, int n_sources, double near,
                              double far, uint64_t seed) {
    if (n < 1 || n_sources < 1) {
        throw util::InputError("ray sampling needs n >= 1 and n_sources >= 1");
    }
    if (!scene.images.count(c) || !scene.images.count(c_prime)) {
        throw util::InputError("scene '" + scene.id + "' is missing condition '" +
                               (scene.images.count(c) ? c_prime : c) + "'");
    }
    const int poses = int(scene.cameras.size());
    if (poses < 2) throw util::InputError("ray sampling needs at least two poses");

    util::Rng rng(seed);
    RayBatch batch;
    batch.cond = c;
    batch.cond_prime = c_prime;
    batch.target_pose = int(rng.next_below(uint64_t(poses)));
    batch.source_poses = nearest_source_poses(scene.cameras, batch.target_pose, n_sources);
    for (int p : batch.source_poses) {
        batch.source_images.push_back(util::from_u8<float>(condition_images(scene, c, p)));
        batch.source_cameras.push_back(scene.cameras[size_t(p)]);
    }

    const auto& target_cam = scene.cameras[size_t(batch.target_pose)];
    const auto& img_c = condition_images(scene, c, batch.target_pose);
    const auto& img_cp = condition_images(scene, c_prime, batch.target_pose);
    const int W = target_cam.width(), H = target_cam.height();
    batch.rays.reserve(size_t(n));
    batch.gt_c.reserve(size_t(n) * 3);
    batch.gt_c_prime.reserve(size_t(n) * 3);
    for (int i = 0; i < n; ++i) {
        const int x = int(rng.next_below(uint64_t(W)));
        const int y = int(rng.next_below(uint64_t(H)));
        batch.rays.push_back(target_cam.ray_for_pixel(x + 0.5, y + 0.5, near, far));
        for (int ch = 0; ch < 3; ++ch) {
            batch.gt_c.push_back(float(img_c.at(x, y, ch) / 255.0));
            batch.gt_c_prime.push_back(float(img_cp.at(x, y, ch) / 255.0));
        }
    }
    return batch;
}

void validate_dataset_for_training(const std::vector<scenegen::SceneBundle>& scenes,
                                   const TrainConfig& cfg) {
    cfg.validate();
    if (scenes.empty()) throw util::InputError("training needs at least one scene");
    for (const auto& s : scenes) {
        if (s.cameras.size() < 2) {
            throw util::InputError("scene '" + s.id + "' has fewer than two poses");
        }
        for (const auto& c : cfg.conditions) {
            if (!s.images.count(c)) {
                throw util::InputError("scene '" + s.id + "' is missing condition '" + c + "'");
            }
        }
    }
}

std::vector<nvsnet::CheckpointRecord> trainer_state_records(const TrainerStateT<float>& state) {
    std::vector<nvsnet::CheckpointRecord> records;
    records.push_back({"trainer.iteration",
                       {1},
                       {float(state.iteration)}});
    records.push_back({"trainer.adam_step", {1}, {float(state.adam.step)}});
    for (const auto& [name, mv] : state.adam.moments) {
        records.push_back({"adam.m." + name, {uint32_t(mv.first.size())}, mv.first});
        records.push_back({"adam.v." + name, {uint32_t(mv.second.size())}, mv.second});
    }
    return records;
}

TrainerStateT<float> resume_state(const std::map<std::string, nvsnet::CheckpointRecord>& extra) {
    TrainerStateT<float> state;
    const auto it_iter = extra.find("trainer.iteration");
    const auto it_step = extra.find("trainer.adam_step");
    if (it_iter == extra.end() || it_step == extra.end()) {
        throw util::FormatError("checkpoint carries no trainer state to resume from");
    }
    state.iteration = int64_t(it_iter->second.data.at(0));
    state.adam.step = int64_t(it_step->second.data.at(0));
    for (const auto& [name, rec] : extra) {
        constexpr std::string_view kM = "adam.m.";
        constexpr std::string_view kV = "adam.v.";
        if (name.rfind(kM, 0) == 0) {
            state.adam.moments[name.substr(kM.size())].first = rec.data;
        } else if (name.rfind(kV, 0) == 0) {
            state.adam.moments[name.substr(kV.size())].second = rec.data;
        }
    }
    for (const auto& [name, mv] : state.adam.moments) {
        if (mv.first.size() != mv.second.size()) {
            throw util::FormatError("optimizer moments for '" + name + "' are inconsistent");
        }
    }
    return state;
}

void write_loss_csv_header(std::ostream& os) { os << "iteration,l_rec,l_app,total\n"; }

void write_loss_csv_row(std::ostream& os, const TrainLogEntry& entry) {
    os << entry.iteration << "," << entry.loss.l_rec << "," << entry.loss.l_app << ","
       << entry.loss.total << "\n";
}

std::vector<TrainLogEntry> train(nvsnet::RendererParams& params,
                                 const std::vector<scenegen::SceneBundle>& scenes,
                                 const TrainConfig& cfg, TrainerStateT<float>& state,
                                 std::ostream* csv) {
    validate_dataset_for_training(scenes, cfg);
    if (csv && state.iteration == 0) write_loss_csv_header(*csv);

    std::vector<TrainLogEntry> log;
    for (int64_t it = state.iteration; it < cfg.iterations; ++it) {
        const auto draw = draw_iteration(cfg, scenes.size(), it);
        const auto& scene = scenes[draw.scene];
        auto batch = sample_training_rays(scene, draw.cond, draw.cond_prime, cfg.rays_per_step,
                                          cfg.source_views, params.config.near,
                                          params.config.far, draw.batch_seed);
        auto z_c = applat::code_for_condition(draw.cond, params.latent);
        auto z_cp = applat::code_for_condition(draw.cond_prime, params.latent);

        StepOptions opts;
        opts.weight_rec = cfg.weight_rec;
        opts.weight_app = cfg.weight_app;
        opts.stratified = cfg.stratified;
        opts.sample_seed = draw.sample_seed;
        auto step = step_loss(batch, params, z_c, z_cp, opts);

        nvsnet::visit_params(params, [](const std::string&, diffcore::TensorT<float>& t) {
            t.zero_grad();
        });
        step.total.backward();
        adam_update(params, state.adam, learning_rate_at(cfg, it));
        state.iteration = it + 1;

        TrainLogEntry entry{it, step.values};
        if (csv) write_loss_csv_row(*csv, entry);
        log.push_back(entry);

        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
            state.iteration % cfg.checkpoint_every == 0 && state.iteration < cfg.iterations) {
            const auto path = std::filesystem::path(cfg.checkpoint_dir) /
                              ("checkpoint_" + std::to_string(state.iteration) + ".avnv");
            nvsnet::save_renderer(path.string(), params, trainer_state_records(state));
        }
    }
    return log;
}

std::vector<TrainLogEntry> train(nvsnet::RendererParams& params,
                                 const std::vector<scenegen::SceneBundle>& scenes,
                                 const TrainConfig& cfg, std::ostream* csv) {
    TrainerStateT<float> state;
    return train(params, scenes, cfg, state, csv);
}

}  // namespace ava::trainer
