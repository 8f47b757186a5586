// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// ava-nvs: desk-scale novel view synthesis with appearance control.
//   ava-nvs gen-data --config run.json
//   ava-nvs train    --config run.json [--resume out/checkpoint_2000.avnv]
//   ava-nvs render   --config run.json --checkpoint out/model.avnv \
//       --scene eval_000 --source-condition day --target-condition night \
//       --pose 4 --out night.png
//   ava-nvs interp   --config run.json --checkpoint out/model.avnv \
//       --scene eval_000 --cond-a night --cond-b day --steps 5 --out-dir frames
//   ava-nvs eval     --config run.json --checkpoint out/model.avnv
// Exit codes: 0 success, 2 input error, 3 IO error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ava/cli/commands.hpp"
#include "ava/util/errors.hpp"

namespace {

struct CommonArgs {
    std::optional<std::string> config_path;
    std::optional<uint64_t> seed;
    std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON run configuration");
    cmd->add_option("--seed", args.seed, "master seed override");
    cmd->add_option("--threads", args.threads, "worker thread cap");
}

ava::cli::RunConfig make_config(const CommonArgs& args) {
    ava::cli::apply_thread_cap(args.threads);
    return ava::cli::resolve_config(args.config_path, args.seed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"appearance-aware novel view synthesis"};
    app.require_subcommand(1);

    CommonArgs gen_args;
    auto* gen = app.add_subcommand("gen-data", "generate the multi-condition dataset");
    add_common(gen, gen_args);

    CommonArgs train_args;
    std::optional<std::string> resume;
    auto* train = app.add_subcommand("train", "train the renderer");
    add_common(train, train_args);
    train->add_option("--resume", resume, "checkpoint to continue from");

    CommonArgs render_args;
    ava::cli::RenderRequest render_req;
    auto* render = app.add_subcommand("render", "render one held-out pose");
    add_common(render, render_args);
    render->add_option("--checkpoint", render_req.checkpoint, "trained model")->required();
    render->add_option("--scene", render_req.scene_id, "scene id")->required();
    render->add_option("--source-condition", render_req.source_condition)->required();
    render->add_option("--target-condition", render_req.target_condition)->required();
    render->add_option("--pose", render_req.pose_index, "held-out pose index");
    render->add_option("--out", render_req.out_path, "output PNG")->required();

    CommonArgs interp_args;
    ava::cli::InterpRequest interp_req;
    auto* interp = app.add_subcommand("interp", "interpolate between two appearances");
    add_common(interp, interp_args);
    interp->add_option("--checkpoint", interp_req.checkpoint, "trained model")->required();
    interp->add_option("--scene", interp_req.scene_id, "scene id")->required();
    interp->add_option("--cond-a", interp_req.cond_a, "appearance at the last frame")->required();
    interp->add_option("--cond-b", interp_req.cond_b, "appearance at frame 0")->required();
    interp->add_option("--steps", interp_req.steps, "number of frames (>= 2)");
    interp->add_option("--pose", interp_req.pose_index, "held-out pose index");
    interp->add_option("--out-dir", interp_req.out_dir, "frame directory")->required();

    CommonArgs eval_args;
    std::string eval_checkpoint;
    auto* eval = app.add_subcommand("eval", "condition-matrix metrics on the eval split");
    add_common(eval, eval_args);
    eval->add_option("--checkpoint", eval_checkpoint, "trained model")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return ava::cli::cmd_gen_data(make_config(gen_args));
        if (train->parsed()) return ava::cli::cmd_train(make_config(train_args), resume);
        if (render->parsed()) return ava::cli::cmd_render(make_config(render_args), render_req);
        if (interp->parsed()) return ava::cli::cmd_interp(make_config(interp_args), interp_req);
        if (eval->parsed()) return ava::cli::cmd_eval(make_config(eval_args), eval_checkpoint);
    } catch (const ava::util::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ava::util::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
