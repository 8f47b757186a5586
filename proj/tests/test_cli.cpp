// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: configuration parsing and hashing, the five
// commands run in-process against a tiny dataset and model, and the
// installed binary's exit-code contract run as a subprocess.

#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ava/cli/commands.hpp"
#include "ava/cli/config.hpp"
#include "ava/nvsnet/checkpoint.hpp"
#include "ava/trainer/trainer.hpp"
#include "ava/util/errors.hpp"
#include "ava/util/image.hpp"
#include "ava/util/rng.hpp"
#include "helpers.hpp"

using namespace ava;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(bool(in));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(bool(in));
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

cli::RunConfig tiny_run_config(const testutil::TempDir& dir) {
    cli::RunConfig cfg;
    cfg.seed = 1234;
    cfg.data_root = dir.str("data");
    cfg.out_dir = dir.str("out");
    cfg.dataset.train_scenes = 1;
    cfg.dataset.eval_scenes = 1;
    cfg.dataset.width = 16;
    cfg.dataset.height = 16;
    cfg.dataset.conditions = {"day", "night"};
    cfg.model = testutil::tiny_model_config();
    cfg.model.conditions = cfg.dataset.conditions;
    cfg.train.iterations = 4;
    cfg.train.rays_per_step = 6;
    cfg.train.source_views = 2;
    cfg.train.checkpoint_every = 2;
    cfg.eval.pose_indices = {4};
    cfg.eval.batch_size = 128;
    cfg.eval.consistency_pairs = {{"day", "night"}};
    cfg.eval.consistency_poses = {3, 4, 5};
    return cfg;
}

// One generated dataset and trained model shared by the command tests.
struct CliWorld {
    testutil::TempDir dir{"cli"};
    cli::RunConfig cfg;
    std::string model_path;

    CliWorld() : cfg(tiny_run_config(dir)) {
        REQUIRE(cli::cmd_gen_data(cfg) == 0);
        REQUIRE(cli::cmd_train(cfg, std::nullopt) == 0);
        model_path = dir.str("out/model.avnv");
        REQUIRE(fs::exists(model_path));
    }
};

const CliWorld& world() {
    static CliWorld w;
    return w;
}

int run_binary(const std::string& args, const std::string& out_file,
               const std::string& err_file) {
    const std::string cmd =
        std::string(AVA_NVS_BIN) + " " + args + " >" + out_file + " 2>" + err_file;
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("an empty config document yields the documented defaults") {
    const auto cfg = cli::config_from_json(nlohmann::json::object());
    CHECK(cfg.seed == 0);
    CHECK(cfg.out_dir == "out");
    CHECK(cfg.dataset.train_scenes == 8);
    CHECK(cfg.dataset.eval_scenes == 2);
    CHECK(cfg.dataset.views_per_scene == 10);
    CHECK(cfg.dataset.width == 64);
    CHECK(cfg.dataset.height == 48);
    CHECK(cfg.dataset.conditions ==
          std::vector<std::string>{"day", "evening", "rain", "night"});
    CHECK(cfg.model.token_dim == 32);
    CHECK(cfg.model.heads == 4);
    CHECK(cfg.model.blocks == 2);
    CHECK(cfg.model.samples_per_ray == 32);
    CHECK(cfg.model.latent_dim == 136);
    CHECK(cfg.model.latent_mode == applat::LatentMode::kStructured);
    CHECK(cfg.model.conditions == cfg.dataset.conditions);
    CHECK(cfg.train.iterations == 10000);
    CHECK(cfg.train.rays_per_step == 48);
    CHECK(cfg.train.source_views == 3);
    CHECK(cfg.train.checkpoint_every == 2000);
    CHECK(cfg.train.stratified);
    CHECK(cfg.eval.pose_indices == std::vector<int>{4});
    CHECK(cfg.eval.batch_size == 1024);
    CHECK(cfg.eval.consistency_pairs.empty());
    CHECK(cfg.eval.consistency_poses == std::vector<int>{3, 4, 5});

    // Data root: explicit value > environment > "data".
    unsetenv("AVA_NVS_DATA_ROOT");
    CHECK(cfg.resolved_data_root() == "data");
    setenv("AVA_NVS_DATA_ROOT", "/somewhere/else", 1);
    CHECK(cfg.resolved_data_root() == "/somewhere/else");
    auto explicit_cfg = cfg;
    explicit_cfg.data_root = "/chosen";
    CHECK(explicit_cfg.resolved_data_root() == "/chosen");
    unsetenv("AVA_NVS_DATA_ROOT");
}

TEST_CASE("unknown config keys are rejected with their full path") {
    CHECK_THROWS_WITH_AS(cli::config_from_json({{"sed", 1}}), "config: unknown key 'sed'",
                         util::InputError);
    CHECK_THROWS_WITH_AS(cli::config_from_json({{"dataset", {{"widht", 64}}}}),
                         "config: unknown key 'dataset.widht'", util::InputError);
    CHECK_THROWS_WITH_AS(cli::config_from_json({{"train", {{"lr_fnal", 0.1}}}}),
                         "config: unknown key 'train.lr_fnal'", util::InputError);
    CHECK_THROWS_WITH_AS(
        cli::config_from_json({{"model", {{"blocks", 2}, {"bogus", 1}}}}),
        "config: unknown key 'model.bogus'", util::InputError);
    CHECK_THROWS_WITH_AS(cli::config_from_json({{"eval", {{"poses", 1}}}}),
                         "config: unknown key 'eval.poses'", util::InputError);
}

TEST_CASE("invalid config values are rejected") {
    using nlohmann::json;
    const auto reject = [](const json& doc) {
        CHECK_THROWS_AS(cli::config_from_json(doc), util::InputError);
    };
    reject({{"dataset", {{"width", 66}}}});             // not divisible by 4
    reject({{"dataset", {{"width", 12}}}});             // too small
    reject({{"dataset", {{"views_per_scene", 1}}}});    // need held-out + sources
    reject({{"dataset", {{"train_scenes", 0}, {"eval_scenes", 0}}}});
    reject({{"dataset", {{"conditions", json::array({"day", "fog"})}}}});
    reject({{"dataset", {{"conditions", json::array()}}}});
    reject({{"model", {{"token_dim", 30}}}});           // not a multiple of heads (4)
    reject({{"model", {{"samples_per_ray", 1}}}});
    reject({{"model", {{"near", 0.0}}}});
    reject({{"model", {{"near", 5.0}, {"far", 1.0}}}});
    reject({{"model", {{"latent_mode", "banana"}}}});
    reject({{"train", {{"iterations", "many"}}}});      // type error
    reject({{"eval", {{"pose_indices", json::array({10})}}}});   // >= views_per_scene
    reject({{"eval", {{"consistency_poses", json::array({-1})}}}});
    reject({{"eval", {{"batch_size", 0}}}});
    reject({{"eval", {{"consistency_pairs", json::array({json::array({"day"})})}}}});
    CHECK_THROWS_AS(cli::config_from_json(nlohmann::json::array()), util::InputError);
}

TEST_CASE("the config hash is stable and value-sensitive") {
    const auto base = cli::config_from_json(nlohmann::json::object());
    const auto h = base.hash();
    CHECK(!h.empty());
    CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(base.hash() == h);  // repeatable

    // Spelling a default explicitly does not change the effective document.
    const auto spelled = cli::config_from_json({{"train", {{"rays_per_step", 48}}}});
    CHECK(spelled.hash() == h);

    auto seeded = base;
    seeded.seed = 1;
    CHECK(seeded.hash() != h);
    auto tuned = base;
    tuned.train.lr = 1e-3;
    CHECK(tuned.hash() != h);
}

TEST_CASE("config files load with IO and format errors distinguished") {
    testutil::TempDir tmp("config");
    CHECK_THROWS_AS(cli::load_config(tmp.str("missing.json")), util::IoError);

    {
        std::ofstream out(tmp.str("broken.json"));
        out << "{ not json";
    }
    CHECK_THROWS_AS(cli::load_config(tmp.str("broken.json")), util::InputError);

    {
        std::ofstream out(tmp.str("good.json"));
        out << nlohmann::json{{"seed", 5}, {"train", {{"iterations", 17}}}}.dump();
    }
    const auto cfg = cli::load_config(tmp.str("good.json"));
    CHECK(cfg.seed == 5);
    CHECK(cfg.train.iterations == 17);

    // resolve_config: defaults without a file; the seed flag wins over the file.
    const auto defaults = cli::resolve_config(std::nullopt, std::nullopt);
    CHECK(defaults.seed == 0);
    const auto overridden = cli::resolve_config(tmp.str("good.json"), uint64_t(99));
    CHECK(overridden.seed == 99);
    CHECK(overridden.train.iterations == 17);
}

TEST_CASE("the trainer section maps onto the trainer configuration") {
    auto cfg = cli::config_from_json(nlohmann::json::object());
    cfg.seed = 77;
    const auto tc = cfg.trainer_config();
    CHECK(tc.iterations == cfg.train.iterations);
    CHECK(tc.rays_per_step == cfg.train.rays_per_step);
    CHECK(tc.source_views == cfg.train.source_views);
    CHECK(tc.lr == cfg.train.lr);
    CHECK(tc.lr_final == cfg.train.lr_final);
    CHECK(tc.conditions == cfg.dataset.conditions);
    CHECK(tc.seed == util::derive_seed(77, "trainer"));
    CHECK(tc.checkpoint_every == cfg.train.checkpoint_every);
    CHECK(tc.stratified == cfg.train.stratified);
}

TEST_CASE("thread caps accept positive counts only") {
    CHECK_NOTHROW(cli::apply_thread_cap(std::nullopt));
    CHECK_NOTHROW(cli::apply_thread_cap(2));
    CHECK_THROWS_AS(cli::apply_thread_cap(0), util::InputError);
}

TEST_CASE("dataset generation writes the documented layout and is reproducible") {
    const auto& w = world();
    const std::string root = w.cfg.data_root;

    CHECK(fs::exists(fs::path(root) / "manifest.json"));
    CHECK(fs::exists(fs::path(root) / "manifest.json.meta.json"));
    for (const std::string scene : {"train_000", "eval_000"}) {
        CHECK(fs::exists(fs::path(root) / scene / "cameras.json"));
        for (const std::string cond : {"day", "night"}) {
            for (int v = 0; v < 10; ++v) {
                CHECK(fs::exists(fs::path(root) / scene / cond / (std::to_string(v) + ".png")));
            }
        }
    }

    const auto scenes = scenegen::read_dataset(root);
    REQUIRE(scenes.size() == 2);
    CHECK(scenes[0].id == "train_000");
    CHECK(scenes[0].split == "train");
    CHECK(scenes[1].id == "eval_000");
    CHECK(scenes[1].split == "eval");

    // The sidecar records the command, effective-config hash, and seed.
    const auto meta =
        nlohmann::json::parse(read_text((fs::path(root) / "manifest.json.meta.json").string()));
    CHECK(meta.at("command") == "gen-data");
    CHECK(meta.at("config_hash") == w.cfg.hash());
    CHECK(meta.at("seed") == 1234);

    // A second run with the same seed produces byte-identical data files.
    auto cfg2 = w.cfg;
    cfg2.data_root = w.dir.str("data_again");
    REQUIRE(cli::cmd_gen_data(cfg2) == 0);
    int compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), root);
        if (rel.string().find(".meta.json") != std::string::npos) continue;  // hash covers paths
        const auto other = fs::path(cfg2.data_root) / rel;
        REQUIRE(fs::exists(other));
        CHECK(testutil::file_bytes(entry.path().string()) ==
              testutil::file_bytes(other.string()));
        ++compared;
    }
    CHECK(compared == 1 + 2 * (1 + 2 * 10));  // manifest + per scene: cameras + 2x10 PNGs
}

TEST_CASE("training writes the model, loss log, and sidecars") {
    const auto& w = world();
    const std::string out = w.cfg.out_dir;

    CHECK(fs::exists(fs::path(out) / "model.avnv"));
    CHECK(fs::exists(fs::path(out) / "model.avnv.meta.json"));
    CHECK(fs::exists(fs::path(out) / "loss_log.csv"));
    CHECK(fs::exists(fs::path(out) / "loss_log.csv.meta.json"));
    CHECK(fs::exists(fs::path(out) / "checkpoint_2.avnv"));  // periodic, not the final state

    const auto lines = read_lines((fs::path(out) / "loss_log.csv").string());
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "iteration,l_rec,l_app,total");
    for (int i = 0; i < 4; ++i) {
        const auto fields = split_csv(lines[size_t(i + 1)]);
        REQUIRE(fields.size() == 4);
        CHECK(fields[0] == std::to_string(i));
        CHECK(std::stod(fields[3]) > 0.0);
    }

    auto loaded = nvsnet::load_renderer(w.model_path);
    CHECK(loaded.params.config.token_dim == w.cfg.model.token_dim);
    CHECK(loaded.params.config.conditions == w.cfg.dataset.conditions);
    const auto state = trainer::resume_state(loaded.extra);
    CHECK(state.iteration == 4);
    CHECK(state.adam.step == 4);
}

TEST_CASE("rendering a held-out pose is byte-reproducible") {
    const auto& w = world();
    cli::RenderRequest req;
    req.checkpoint = w.model_path;
    req.scene_id = "eval_000";
    req.source_condition = "day";
    req.target_condition = "night";
    req.pose_index = 4;
    req.out_path = w.dir.str("render_a.png");
    REQUIRE(cli::cmd_render(w.cfg, req) == 0);
    CHECK(fs::exists(req.out_path));
    CHECK(fs::exists(req.out_path + ".meta.json"));

    auto again = req;
    again.out_path = w.dir.str("render_b.png");
    REQUIRE(cli::cmd_render(w.cfg, again) == 0);
    CHECK(testutil::file_bytes(req.out_path) == testutil::file_bytes(again.out_path));

    const auto img = util::read_png(req.out_path);
    CHECK(img.width == 16);
    CHECK(img.height == 16);
}

TEST_CASE("render requests are validated against the dataset and model") {
    const auto& w = world();
    cli::RenderRequest req;
    req.checkpoint = w.model_path;
    req.scene_id = "eval_000";
    req.source_condition = "day";
    req.target_condition = "night";
    req.pose_index = 4;
    req.out_path = w.dir.str("unused.png");

    auto bad = req;
    bad.scene_id = "nope";
    try {
        cli::cmd_render(w.cfg, bad);
        FAIL("expected an unknown-scene error");
    } catch (const util::InputError& e) {
        CHECK(std::string(e.what()).find("unknown scene 'nope'") != std::string::npos);
        CHECK(std::string(e.what()).find("train_000") != std::string::npos);
    }

    bad = req;
    bad.target_condition = "fog";
    CHECK_THROWS_AS(cli::cmd_render(w.cfg, bad), util::InputError);
    bad = req;
    bad.source_condition = "fog";
    CHECK_THROWS_AS(cli::cmd_render(w.cfg, bad), util::InputError);
    bad = req;
    bad.pose_index = 99;
    CHECK_THROWS_AS(cli::cmd_render(w.cfg, bad), util::InputError);
    bad = req;
    bad.checkpoint = w.dir.str("missing.avnv");
    CHECK_THROWS_AS(cli::cmd_render(w.cfg, bad), util::IoError);
}

TEST_CASE("interpolation endpoints match the single-condition renders byte for byte") {
    const auto& w = world();

    cli::InterpRequest req;
    req.checkpoint = w.model_path;
    req.scene_id = "eval_000";
    req.cond_a = "night";
    req.cond_b = "day";
    req.steps = 3;
    req.pose_index = 4;
    req.out_dir = w.dir.str("frames");
    REQUIRE(cli::cmd_interp(w.cfg, req) == 0);
    for (int s = 0; s < 3; ++s) {
        CHECK(fs::exists(fs::path(req.out_dir) / ("frame_00" + std::to_string(s) + ".png")));
    }
    CHECK(fs::exists(fs::path(req.out_dir) / "frames.meta.json"));

    // Frame 0 carries the pure cond_b appearance, the last frame pure cond_a;
    // sources always come from cond_b.
    cli::RenderRequest ref;
    ref.checkpoint = w.model_path;
    ref.scene_id = "eval_000";
    ref.source_condition = "day";
    ref.pose_index = 4;
    ref.target_condition = "day";
    ref.out_path = w.dir.str("interp_ref_day.png");
    REQUIRE(cli::cmd_render(w.cfg, ref) == 0);
    ref.target_condition = "night";
    ref.out_path = w.dir.str("interp_ref_night.png");
    REQUIRE(cli::cmd_render(w.cfg, ref) == 0);

    CHECK(testutil::file_bytes((fs::path(req.out_dir) / "frame_000.png").string()) ==
          testutil::file_bytes(w.dir.str("interp_ref_day.png")));
    CHECK(testutil::file_bytes((fs::path(req.out_dir) / "frame_002.png").string()) ==
          testutil::file_bytes(w.dir.str("interp_ref_night.png")));

    auto bad = req;
    bad.steps = 1;
    CHECK_THROWS_AS(cli::cmd_interp(w.cfg, bad), util::InputError);
}

TEST_CASE("evaluation writes the full condition matrix") {
    const auto& w = world();
    auto cfg = w.cfg;
    cfg.out_dir = w.dir.str("eval_out");
    REQUIRE(cli::cmd_eval(cfg, w.model_path) == 0);

    const auto csv_path = (fs::path(cfg.out_dir) / "eval_metrics.csv").string();
    CHECK(fs::exists(csv_path + ".meta.json"));
    CHECK(fs::exists((fs::path(cfg.out_dir) / "eval_metrics.md").string()));

    const auto lines = read_lines(csv_path);
    REQUIRE(lines.size() == 5);  // header + 2x2 condition pairs
    CHECK(lines[0] == "source,target,psnr,ssim,tof,tss");
    const std::vector<std::pair<std::string, std::string>> expected = {
        {"day", "day"}, {"day", "night"}, {"night", "day"}, {"night", "night"}};
    for (size_t i = 0; i < expected.size(); ++i) {
        const auto fields = split_csv(lines[i + 1]);
        REQUIRE(fields.size() == 6);
        CHECK(fields[0] == expected[i].first);
        CHECK(fields[1] == expected[i].second);
        CHECK(std::stod(fields[2]) > 0.0);   // psnr
        const double ssim = std::stod(fields[3]);
        CHECK(ssim >= -1.0);
        CHECK(ssim <= 1.0);
        if (expected[i] == std::make_pair(std::string("day"), std::string("night"))) {
            // The configured consistency pair has temporal numbers...
            CHECK(!fields[4].empty());
            CHECK(!fields[5].empty());
            CHECK(std::stod(fields[4]) >= 0.0);
            CHECK(std::stod(fields[5]) >= 0.0);
        } else {
            // ...every other cell leaves them blank.
            CHECK(fields[4].empty());
            CHECK(fields[5].empty());
        }
    }
}

TEST_CASE("resumed training continues the loss log and reaches the same model") {
    const auto& w = world();

    auto cfg_a = w.cfg;
    cfg_a.out_dir = w.dir.str("out_full");
    REQUIRE(cli::cmd_train(cfg_a, std::nullopt) == 0);
    const auto lines_a = read_lines((fs::path(cfg_a.out_dir) / "loss_log.csv").string());
    REQUIRE(lines_a.size() == 5);

    auto cfg_b = w.cfg;
    cfg_b.out_dir = w.dir.str("out_resumed");
    REQUIRE(cli::cmd_train(cfg_b, (fs::path(cfg_a.out_dir) / "checkpoint_2.avnv").string()) == 0);
    const auto lines_b = read_lines((fs::path(cfg_b.out_dir) / "loss_log.csv").string());

    // The resumed run writes exactly the remaining iterations, no header.
    REQUIRE(lines_b.size() == 2);
    CHECK(lines_b[0] == lines_a[3]);
    CHECK(lines_b[1] == lines_a[4]);

    CHECK(testutil::file_bytes((fs::path(cfg_a.out_dir) / "model.avnv").string()) ==
          testutil::file_bytes((fs::path(cfg_b.out_dir) / "model.avnv").string()));
}

TEST_CASE("the binary runs the full pipeline and reports success") {
    testutil::TempDir tmp("bin");
    nlohmann::json doc = {
        {"seed", 7},
        {"data_root", tmp.str("data")},
        {"out_dir", tmp.str("out")},
        {"dataset",
         {{"train_scenes", 1},
          {"eval_scenes", 0},
          {"width", 16},
          {"height", 16},
          {"conditions", {"day", "night"}}}},
        {"model",
         {{"token_dim", 16},
          {"heads", 2},
          {"samples_per_ray", 6},
          {"pe_frequencies", 2},
          {"latent_dim", 8},
          {"latent_hidden1", 4},
          {"latent_hidden2", 6}}},
        {"train",
         {{"iterations", 1}, {"rays_per_step", 4}, {"source_views", 2}, {"checkpoint_every", 0}}},
    };
    {
        std::ofstream out(tmp.str("run.json"));
        out << doc.dump(2);
    }

    const int gen = run_binary("gen-data --config " + tmp.str("run.json"), tmp.str("gen.out"),
                               tmp.str("gen.err"));
    CHECK(gen == 0);
    CHECK(read_text(tmp.str("gen.out")).find("wrote 1 train") != std::string::npos);

    const int train = run_binary("train --config " + tmp.str("run.json"), tmp.str("train.out"),
                                 tmp.str("train.err"));
    CHECK(train == 0);
    CHECK(read_text(tmp.str("train.out")).find("trained to iteration 1") != std::string::npos);
    CHECK(fs::exists(tmp.str("out/model.avnv")));
}

TEST_CASE("the binary distinguishes input errors from IO errors in its exit code") {
    testutil::TempDir tmp("bincodes");
    {
        std::ofstream out(tmp.str("bad.json"));
        out << "{\"bogus\": 1}";
    }
    const int bad_key = run_binary("gen-data --config " + tmp.str("bad.json"), tmp.str("k.out"),
                                   tmp.str("k.err"));
    CHECK(bad_key == 2);
    CHECK(read_text(tmp.str("k.err")).find("unknown key 'bogus'") != std::string::npos);

    const int bad_cmd = run_binary("frobnicate", tmp.str("c.out"), tmp.str("c.err"));
    CHECK(bad_cmd == 2);

    const int missing_ckpt = run_binary("eval --checkpoint " + tmp.str("nope.avnv"),
                                        tmp.str("m.out"), tmp.str("m.err"));
    CHECK(missing_ckpt == 3);
    CHECK(read_text(tmp.str("m.err")).find("error") != std::string::npos);

    // A valid config whose dataset was never generated is an IO failure too.
    nlohmann::json doc = {{"data_root", tmp.str("no_data")}};
    {
        std::ofstream out(tmp.str("empty_data.json"));
        out << doc.dump();
    }
    const int no_data = run_binary("train --config " + tmp.str("empty_data.json"),
                                   tmp.str("t.out"), tmp.str("t.err"));
    CHECK(no_data == 3);
}
