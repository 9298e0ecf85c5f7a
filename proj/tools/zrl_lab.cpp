// zrl-lab: dataset generation, training runs, evaluation and plots.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "zrl/commands.hpp"

#ifndef ZRL_PRESET_DIR
#define ZRL_PRESET_DIR "presets"
#endif

int main(int argc, char** argv) {
    CLI::App app{"Zero-reward-barrier lab: star-graph search RL experiments"};
    app.require_subcommand(1);

    zrl::GenDataOptions gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "write train/test JSONL datasets");
    gen_cmd->add_option("--mix", gen.mix, "mixture, e.g. d2p5:0.25,d5p2:0.25,d5p5:0.25,d10p10:0.25")->required();
    gen_cmd->add_option("--n", gen.n, "training instances")->capture_default_str();
    gen_cmd->add_option("--test-n", gen.test_n, "held-out instances (default: --n)");
    gen_cmd->add_option("--seed", gen.seed, "master seed")->capture_default_str();
    gen_cmd->add_option("--label-min", gen.label_min)->capture_default_str();
    gen_cmd->add_option("--label-max", gen.label_max)->capture_default_str();
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->capture_default_str();
    gen_cmd->add_flag("--force", gen.force, "overwrite existing files");

    zrl::TrainOptions train;
    const char* preset_env = std::getenv("ZRL_PRESETS");
    train.preset_dir = preset_env ? preset_env : ZRL_PRESET_DIR;
    auto* train_cmd = app.add_subcommand("train", "run an experiment from a config file or preset");
    train_cmd->add_option("config", train.config_path, "config file")->check(CLI::ExistingFile);
    train_cmd->add_option("--preset", train.preset, "preset name from the preset directory");
    train_cmd->add_option("--preset-dir", train.preset_dir)->capture_default_str();
    train_cmd->add_option("--set", train.overrides, "override a config key (key=value)");
    train_cmd->add_option("--out", train.out_dir, "output directory");

    zrl::EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "success rates of a checkpoint on a dataset");
    eval_cmd->add_option("checkpoint", eval.checkpoint)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("dataset", eval.dataset)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--config", eval.config_path, "require the architecture of this config")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--temperature", eval.temperature)->capture_default_str();
    eval_cmd->add_option("--top-p", eval.top_p)->capture_default_str();
    eval_cmd->add_option("--max-response-len", eval.max_response_len);
    eval_cmd->add_option("--seed", eval.seed)->capture_default_str();
    eval_cmd->add_option("--out", eval.out, "report JSON path");

    zrl::PlotCommandOptions plot;
    auto* plot_cmd = app.add_subcommand("plot", "SVG curves from metrics files");
    plot_cmd->add_option("files", plot.files, "metrics.jsonl files")->required()->check(CLI::ExistingFile);
    plot_cmd->add_option("--label", plot.labels, "series label, one per file");
    plot_cmd->add_option("--out", plot.out)->capture_default_str();
    plot_cmd->add_option("--panel", plot.panel, "success | train_reward | nonzero_adv")->capture_default_str();
    plot_cmd->add_option("--tag", plot.tag, "difficulty tag for the success panel");
    plot_cmd->add_option("--decoding", plot.decoding, "sampled | greedy")->capture_default_str();
    plot_cmd->add_option("--title", plot.title);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : zrl::kExitConfig;
    }

    return zrl::guarded(
        [&] {
            if (*gen_cmd) return zrl::cmd_gen_data(gen, std::cout);
            if (*train_cmd) return zrl::cmd_train(train, std::cout);
            if (*eval_cmd) return zrl::cmd_eval(eval, std::cout);
            return zrl::cmd_plot(plot, std::cout, std::cerr);
        },
        std::cerr);
}
