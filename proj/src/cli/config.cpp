// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#include "ava/cli/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "ava/util/errors.hpp"
#include "ava/util/rng.hpp"

namespace ava::cli {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& path) {
    throw util::InputError("config: unknown key '" + path + "'");
}

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& prefix) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) bad_key(prefix.empty() ? key : prefix + "." + key);
    }
}

template <class T>
void read_field(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_dataset(const json& obj, DatasetConfig& out) {
    require_keys(obj, {"train_scenes", "eval_scenes", "views_per_scene", "width", "height",
                       "conditions"},
                 "dataset");
    read_field(obj, "train_scenes", out.train_scenes);
    read_field(obj, "eval_scenes", out.eval_scenes);
    read_field(obj, "views_per_scene", out.views_per_scene);
    read_field(obj, "width", out.width);
    read_field(obj, "height", out.height);
    read_field(obj, "conditions", out.conditions);
}

void parse_model(const json& obj, nvsnet::ModelConfig& out) {
    require_keys(obj,
                 {"token_dim", "heads", "blocks", "samples_per_ray", "pe_frequencies",
                  "ffn_multiplier", "latent_dim", "latent_hidden1", "latent_hidden2",
                  "latent_mode", "near", "far"},
                 "model");
    read_field(obj, "token_dim", out.token_dim);
    read_field(obj, "heads", out.heads);
    read_field(obj, "blocks", out.blocks);
    read_field(obj, "samples_per_ray", out.samples_per_ray);
    read_field(obj, "pe_frequencies", out.pe_frequencies);
    read_field(obj, "ffn_multiplier", out.ffn_multiplier);
    read_field(obj, "latent_dim", out.latent_dim);
    read_field(obj, "latent_hidden1", out.latent_hidden1);
    read_field(obj, "latent_hidden2", out.latent_hidden2);
    if (obj.contains("latent_mode")) {
        out.latent_mode = applat::latent_mode_from_name(obj.at("latent_mode").get<std::string>());
    }
    read_field(obj, "near", out.near);
    read_field(obj, "far", out.far);
}

void parse_train(const json& obj, TrainSection& out) {
    require_keys(obj,
                 {"iterations", "rays_per_step", "source_views", "lr", "lr_final", "weight_rec",
                  "weight_app", "checkpoint_every", "stratified"},
                 "train");
    read_field(obj, "iterations", out.iterations);
    read_field(obj, "rays_per_step", out.rays_per_step);
    read_field(obj, "source_views", out.source_views);
    read_field(obj, "lr", out.lr);
    read_field(obj, "lr_final", out.lr_final);
    read_field(obj, "weight_rec", out.weight_rec);
    read_field(obj, "weight_app", out.weight_app);
    read_field(obj, "checkpoint_every", out.checkpoint_every);
    read_field(obj, "stratified", out.stratified);
}

void parse_eval(const json& obj, EvalSection& out) {
    require_keys(obj, {"pose_indices", "batch_size", "consistency_pairs", "consistency_poses"},
                 "eval");
    read_field(obj, "pose_indices", out.pose_indices);
    read_field(obj, "batch_size", out.batch_size);
    if (obj.contains("consistency_pairs")) {
        out.consistency_pairs.clear();
        for (const auto& pair : obj.at("consistency_pairs")) {
            if (!pair.is_array() || pair.size() != 2) {
                throw util::InputError(
                    "config: eval.consistency_pairs entries must be [source, target] pairs");
            }
            out.consistency_pairs.emplace_back(pair.at(0).get<std::string>(),
                                               pair.at(1).get<std::string>());
        }
    }
    read_field(obj, "consistency_poses", out.consistency_poses);
}

void validate(const RunConfig& cfg) {
    const auto& d = cfg.dataset;
    if (d.train_scenes < 0 || d.eval_scenes < 0 || d.train_scenes + d.eval_scenes < 1) {
        throw util::InputError("config: dataset needs at least one scene");
    }
    if (d.views_per_scene < 2) throw util::InputError("config: views_per_scene must be >= 2");
    if (d.width < 16 || d.height < 16 || d.width % 4 != 0 || d.height % 4 != 0) {
        throw util::InputError("config: image extents must be >= 16 and divisible by 4");
    }
    if (d.conditions.empty()) throw util::InputError("config: conditions must be non-empty");
    for (const auto& c : d.conditions) {
        if (!applat::condition_coords().count(c)) {
            throw util::InputError("config: unregistered condition '" + c + "'");
        }
    }
    const auto& m = cfg.model;
    if (m.token_dim < 1 || m.heads < 1 || m.token_dim % m.heads != 0) {
        throw util::InputError("config: token_dim must be a positive multiple of heads");
    }
    if (m.blocks < 1 || m.samples_per_ray < 2 || m.pe_frequencies < 1 || m.ffn_multiplier < 1 ||
        m.latent_dim < 1 || m.latent_hidden1 < 1 || m.latent_hidden2 < 1) {
        throw util::InputError("config: model dimensions must be positive (samples >= 2)");
    }
    if (!(m.near > 0.0) || !(m.far > m.near)) {
        throw util::InputError("config: need 0 < near < far");
    }
    for (int p : cfg.eval.pose_indices) {
        if (p < 0 || p >= d.views_per_scene) {
            throw util::InputError("config: eval pose index out of range");
        }
    }
    for (int p : cfg.eval.consistency_poses) {
        if (p < 0 || p >= d.views_per_scene) {
            throw util::InputError("config: eval consistency pose index out of range");
        }
    }
    if (cfg.eval.batch_size < 1) throw util::InputError("config: eval.batch_size must be >= 1");
}

}  // namespace

std::string RunConfig::resolved_data_root() const {
    if (!data_root.empty()) return data_root;
    if (const char* env = std::getenv("AVA_NVS_DATA_ROOT"); env && *env) return env;
    return "data";
}

nlohmann::json RunConfig::to_json() const {
    json doc;
    doc["seed"] = seed;
    doc["data_root"] = data_root;
    doc["out_dir"] = out_dir;
    doc["dataset"] = {{"train_scenes", dataset.train_scenes},
                      {"eval_scenes", dataset.eval_scenes},
                      {"views_per_scene", dataset.views_per_scene},
                      {"width", dataset.width},
                      {"height", dataset.height},
                      {"conditions", dataset.conditions}};
    doc["model"] = {{"token_dim", model.token_dim},
                    {"heads", model.heads},
                    {"blocks", model.blocks},
                    {"samples_per_ray", model.samples_per_ray},
                    {"pe_frequencies", model.pe_frequencies},
                    {"ffn_multiplier", model.ffn_multiplier},
                    {"latent_dim", model.latent_dim},
                    {"latent_hidden1", model.latent_hidden1},
                    {"latent_hidden2", model.latent_hidden2},
                    {"latent_mode", applat::latent_mode_name(model.latent_mode)},
                    {"near", model.near},
                    {"far", model.far}};
    doc["train"] = {{"iterations", train.iterations},
                    {"rays_per_step", train.rays_per_step},
                    {"source_views", train.source_views},
                    {"lr", train.lr},
                    {"lr_final", train.lr_final},
                    {"weight_rec", train.weight_rec},
                    {"weight_app", train.weight_app},
                    {"checkpoint_every", train.checkpoint_every},
                    {"stratified", train.stratified}};
    json pairs = json::array();
    for (const auto& [a, b] : eval.consistency_pairs) pairs.push_back({a, b});
    doc["eval"] = {{"pose_indices", eval.pose_indices},
                   {"batch_size", eval.batch_size},
                   {"consistency_pairs", pairs},
                   {"consistency_poses", eval.consistency_poses}};
    return doc;
}

std::string RunConfig::hash() const {
    const uint64_t h = util::fnv1a(to_json().dump());
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

trainer::TrainConfig RunConfig::trainer_config() const {
    trainer::TrainConfig tc;
    tc.iterations = train.iterations;
    tc.rays_per_step = train.rays_per_step;
    tc.source_views = train.source_views;
    tc.lr = train.lr;
    tc.lr_final = train.lr_final;
    tc.weight_rec = train.weight_rec;
    tc.weight_app = train.weight_app;
    tc.conditions = dataset.conditions;
    tc.seed = util::derive_seed(seed, "trainer");
    tc.checkpoint_every = train.checkpoint_every;
    tc.stratified = train.stratified;
    return tc;
}

RunConfig config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw util::InputError("config: top level must be a JSON object");
    require_keys(doc, {"seed", "data_root", "out_dir", "dataset", "model", "train", "eval"}, "");
    RunConfig cfg;
    try {
        read_field(doc, "seed", cfg.seed);
        read_field(doc, "data_root", cfg.data_root);
        read_field(doc, "out_dir", cfg.out_dir);
        if (doc.contains("dataset")) parse_dataset(doc.at("dataset"), cfg.dataset);
        if (doc.contains("model")) parse_model(doc.at("model"), cfg.model);
        if (doc.contains("train")) parse_train(doc.at("train"), cfg.train);
        if (doc.contains("eval")) parse_eval(doc.at("eval"), cfg.eval);
    } catch (const nlohmann::json::exception& e) {
        throw util::InputError(std::string("config: ") + e.what());
    }
    cfg.model.conditions = cfg.dataset.conditions;
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw util::IoError("cannot open config file '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw util::InputError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(doc);
}

RunConfig resolve_config(const std::optional<std::string>& path,
                         const std::optional<uint64_t>& seed_override) {
    RunConfig cfg = path ? load_config(*path) : config_from_json(nlohmann::json::object());
    if (seed_override) cfg.seed = *seed_override;
    return cfg;
}

}  // namespace ava::cli
