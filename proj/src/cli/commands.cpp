// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#include "ava/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ava/nvsnet/checkpoint.hpp"
#include "ava/trainer/trainer.hpp"
#include "ava/util/errors.hpp"

namespace ava::cli {

namespace fs = std::filesystem;

void apply_thread_cap(std::optional<int> threads) {
    if (!threads) return;
    if (*threads < 1) throw util::InputError("--threads must be >= 1");
#ifdef _OPENMP
    omp_set_num_threads(*threads);
#endif
}

void write_sidecar(const std::string& artifact_path, const std::string& command,
                   const RunConfig& cfg) {
    nlohmann::json meta;
    meta["command"] = command;
    meta["config_hash"] = cfg.hash();
    meta["seed"] = cfg.seed;
    const std::string path = artifact_path + ".meta.json";
    std::ofstream out(path);
    if (!out) throw util::IoError("cannot write sidecar '" + path + "'");
    out << meta.dump(2) << "\n";
}

namespace {

std::vector<util::ImageF> condition_views(const scenegen::SceneBundle& scene,
                                          const std::string& cond, const std::vector<int>& poses) {
    auto it = scene.images.find(cond);
    if (it == scene.images.end()) {
        throw util::InputError("scene '" + scene.id + "' has no condition '" + cond + "'");
    }
    std::vector<util::ImageF> out;
    for (int p : poses) out.push_back(util::from_u8<float>(it->second.at(size_t(p))));
    return out;
}

const scenegen::SceneBundle& find_scene(const std::vector<scenegen::SceneBundle>& scenes,
                                        const std::string& id) {
    for (const auto& s : scenes) {
        if (s.id == id) return s;
    }
    std::string known;
    for (const auto& s : scenes) known += (known.empty() ? "" : ", ") + s.id;
    throw util::InputError("unknown scene '" + id + "' (dataset has: " + known + ")");
}

void require_condition(const nvsnet::RendererParams& params, const std::string& cond) {
    if (params.latent.has_condition(cond)) return;
    std::string known;
    for (const auto& c : params.config.conditions) known += (known.empty() ? "" : ", ") + c;
    throw util::InputError("unknown condition '" + cond + "' (registered: " + known + ")");
}

void check_pose_index(const scenegen::SceneBundle& scene, int pose) {
    if (pose < 0 || pose >= int(scene.cameras.size())) {
        throw util::InputError("pose index " + std::to_string(pose) + " out of range for scene '" +
                               scene.id + "' with " + std::to_string(scene.cameras.size()) +
                               " poses");
    }
}

}  // namespace

util::ImageF render_pose(const nvsnet::RendererParams& params,
                         const scenegen::SceneBundle& scene, int pose,
                         const std::string& source_cond, const applat::AppearanceCode& code,
                         int source_views, int batch_size) {
    check_pose_index(scene, pose);
    const auto source_poses = trainer::nearest_source_poses(scene.cameras, pose, source_views);
    const auto images = condition_views(scene, source_cond, source_poses);
    std::vector<geomcam::Camera> cameras;
    for (int p : source_poses) cameras.push_back(scene.cameras[size_t(p)]);
    const auto sources = nvsnet::encode_sources(params, images, cameras);
    return nvsnet::render_image(params, scene.cameras[size_t(pose)], sources, code, batch_size);
}

metrics::MetricsReport eval_condition_matrix(const nvsnet::RendererParams& params,
                                             const std::vector<scenegen::SceneBundle>& scenes,
                                             const EvalSection& eval, int source_views) {
    if (scenes.empty()) throw util::InputError("evaluation needs at least one scene");
    if (eval.pose_indices.empty()) throw util::InputError("evaluation needs pose indices");
    const auto& conds = params.config.conditions;

    metrics::MetricsReport report;
    for (const auto& c_src : conds) {
        for (const auto& c_tgt : conds) {
            const auto code = applat::code_for_condition(c_tgt, params.latent);
            double sum_psnr = 0.0, sum_ssim = 0.0;
            int cells = 0;
            for (const auto& scene : scenes) {
                for (int pose : eval.pose_indices) {
                    check_pose_index(scene, pose);
                    const auto rendered = render_pose(params, scene, pose, c_src, code,
                                                      source_views, eval.batch_size);
                    const auto gt = condition_views(scene, c_tgt, {pose}).front();
                    sum_psnr += metrics::psnr(rendered, gt);
                    sum_ssim += metrics::ssim(rendered, gt);
                    ++cells;
                }
            }
            metrics::PairMetrics cell;
            cell.source = c_src;
            cell.target = c_tgt;
            cell.psnr = sum_psnr / cells;
            cell.ssim = sum_ssim / cells;
            report.pairs.push_back(cell);
        }
    }

    for (const auto& [c_src, c_tgt] : eval.consistency_pairs) {
        if (eval.consistency_poses.size() < 2) {
            throw util::InputError("consistency needs at least two poses configured");
        }
        const auto code = applat::code_for_condition(c_tgt, params.latent);
        double sum_tof = 0.0, sum_tss = 0.0;
        for (const auto& scene : scenes) {
            std::vector<util::ImageF> rendered, reference;
            for (int pose : eval.consistency_poses) {
                check_pose_index(scene, pose);
                rendered.push_back(render_pose(params, scene, pose, c_src, code, source_views,
                                               eval.batch_size));
                reference.push_back(condition_views(scene, c_tgt, {pose}).front());
            }
            const auto result = metrics::consistency(rendered, reference);
            sum_tof += result.tof;
            sum_tss += result.tss;
        }
        for (auto& cell : report.pairs) {
            if (cell.source == c_src && cell.target == c_tgt) {
                cell.tof = sum_tof / double(scenes.size());
                cell.tss = sum_tss / double(scenes.size());
            }
        }
    }
    return report;
}

int cmd_gen_data(const RunConfig& cfg) {
    const std::string root = cfg.resolved_data_root();
    std::vector<scenegen::SceneBundle> bundles;
    auto pad3 = [](int i) {
        std::ostringstream os;
        os.width(3);
        os.fill('0');
        os << i;
        return os.str();
    };
    for (int i = 0; i < cfg.dataset.train_scenes; ++i) {
        bundles.push_back(scenegen::make_scene_bundle(
            util::derive_seed(cfg.seed, "scene-train", uint64_t(i)), scenegen::Region::kTrain,
            "train_" + pad3(i), cfg.dataset.width, cfg.dataset.height, cfg.dataset.conditions));
    }
    for (int i = 0; i < cfg.dataset.eval_scenes; ++i) {
        bundles.push_back(scenegen::make_scene_bundle(
            util::derive_seed(cfg.seed, "scene-eval", uint64_t(i)), scenegen::Region::kEval,
            "eval_" + pad3(i), cfg.dataset.width, cfg.dataset.height, cfg.dataset.conditions));
    }
    scenegen::write_dataset(bundles, root);
    write_sidecar((fs::path(root) / "manifest.json").string(), "gen-data", cfg);
    std::cout << "wrote " << cfg.dataset.train_scenes << " train + " << cfg.dataset.eval_scenes
              << " eval scenes (" << cfg.dataset.conditions.size() << " conditions x "
              << cfg.dataset.views_per_scene << " views each) to " << root << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::optional<std::string>& resume_checkpoint) {
    auto all = scenegen::read_dataset(cfg.resolved_data_root());
    std::vector<scenegen::SceneBundle> train_scenes;
    for (auto& s : all) {
        if (s.split == "train") train_scenes.push_back(std::move(s));
    }
    if (train_scenes.empty()) {
        throw util::InputError("dataset at '" + cfg.resolved_data_root() +
                               "' has no train split");
    }

    nvsnet::RendererParams params;
    trainer::TrainerStateT<float> state;
    if (resume_checkpoint) {
        auto loaded = nvsnet::load_renderer(*resume_checkpoint);
        params = std::move(loaded.params);
        state = trainer::resume_state(loaded.extra);
    } else {
        params = nvsnet::make_renderer_params<float>(cfg.model,
                                                     util::derive_seed(cfg.seed, "model-init"));
    }

    trainer::TrainConfig tc = cfg.trainer_config();
    tc.checkpoint_dir = cfg.out_dir;
    fs::create_directories(cfg.out_dir);

    const std::string log_path = (fs::path(cfg.out_dir) / "loss_log.csv").string();
    std::ofstream csv(log_path, state.iteration > 0 ? std::ios::app : std::ios::trunc);
    if (!csv) throw util::IoError("cannot write loss log '" + log_path + "'");

    const auto log = trainer::train(params, train_scenes, tc, state, &csv);

    const std::string model_path = (fs::path(cfg.out_dir) / "model.avnv").string();
    nvsnet::save_renderer(model_path, params, trainer::trainer_state_records(state));
    write_sidecar(model_path, "train", cfg);
    write_sidecar(log_path, "train", cfg);
    if (!log.empty()) {
        std::cout << "trained to iteration " << state.iteration << "; final total loss "
                  << log.back().loss.total << "; model at " << model_path << "\n";
    } else {
        std::cout << "checkpoint already at iteration " << state.iteration
                  << "; re-saved to " << model_path << "\n";
    }
    return 0;
}

int cmd_render(const RunConfig& cfg, const RenderRequest& req) {
    auto loaded = nvsnet::load_renderer(req.checkpoint);
    require_condition(loaded.params, req.source_condition);
    require_condition(loaded.params, req.target_condition);
    const auto scenes = scenegen::read_dataset(cfg.resolved_data_root());
    const auto& scene = find_scene(scenes, req.scene_id);
    const auto code = applat::code_for_condition(req.target_condition, loaded.params.latent);
    const auto img = render_pose(loaded.params, scene, req.pose_index, req.source_condition,
                                 code, cfg.train.source_views, cfg.eval.batch_size);
    if (const auto dir = fs::path(req.out_path).parent_path(); !dir.empty()) {
        fs::create_directories(dir);
    }
    util::write_png(req.out_path, util::to_u8(img));
    write_sidecar(req.out_path, "render", cfg);
    std::cout << "rendered " << req.scene_id << " pose " << req.pose_index << " ("
              << req.source_condition << " -> " << req.target_condition << ") to " << req.out_path
              << "\n";
    return 0;
}

int cmd_interp(const RunConfig& cfg, const InterpRequest& req) {
    if (req.steps < 2) throw util::InputError("interp needs steps >= 2");
    auto loaded = nvsnet::load_renderer(req.checkpoint);
    require_condition(loaded.params, req.cond_a);
    require_condition(loaded.params, req.cond_b);
    const auto scenes = scenegen::read_dataset(cfg.resolved_data_root());
    const auto& scene = find_scene(scenes, req.scene_id);

    const auto z_a = applat::code_for_condition(req.cond_a, loaded.params.latent);
    const auto z_b = applat::code_for_condition(req.cond_b, loaded.params.latent);
    fs::create_directories(req.out_dir);
    for (int s = 0; s < req.steps; ++s) {
        const double alpha = double(s) / double(req.steps - 1);
        const auto code = applat::interpolate(z_a, z_b, alpha);
        const auto img = render_pose(loaded.params, scene, req.pose_index, req.cond_b, code,
                                     cfg.train.source_views, cfg.eval.batch_size);
        std::ostringstream name;
        name << "frame_";
        name.width(3);
        name.fill('0');
        name << s;
        name << ".png";
        util::write_png((fs::path(req.out_dir) / name.str()).string(), util::to_u8(img));
    }
    write_sidecar((fs::path(req.out_dir) / "frames").string(), "interp", cfg);
    std::cout << "wrote " << req.steps << " interpolation frames (" << req.cond_b << " -> "
              << req.cond_a << ") to " << req.out_dir << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
    auto loaded = nvsnet::load_renderer(checkpoint);
    auto all = scenegen::read_dataset(cfg.resolved_data_root());
    std::vector<scenegen::SceneBundle> eval_scenes;
    for (auto& s : all) {
        if (s.split == "eval") eval_scenes.push_back(std::move(s));
    }
    if (eval_scenes.empty()) {
        throw util::InputError("dataset at '" + cfg.resolved_data_root() + "' has no eval split");
    }

    const auto report =
        eval_condition_matrix(loaded.params, eval_scenes, cfg.eval, cfg.train.source_views);

    fs::create_directories(cfg.out_dir);
    const std::string csv_path = (fs::path(cfg.out_dir) / "eval_metrics.csv").string();
    std::ofstream csv(csv_path);
    if (!csv) throw util::IoError("cannot write '" + csv_path + "'");
    csv << metrics::report_csv(report);
    write_sidecar(csv_path, "eval", cfg);

    const std::string md_path = (fs::path(cfg.out_dir) / "eval_metrics.md").string();
    std::ofstream md(md_path);
    if (!md) throw util::IoError("cannot write '" + md_path + "'");
    md << metrics::report_markdown(report);

    std::cout << metrics::report_markdown(report);
    std::cout << "metrics written to " << csv_path << "\n";
    return 0;
}

}  // namespace ava::cli
