#pragma once

// The operator commands behind the zrl-lab executable.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "zrl/config.hpp"

namespace zrl {

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Runs `body`, mapping ConfigError to 2 and any other failure to 3.
int guarded(const std::function<int()>& body, std::ostream& err);

// Train/test splits use disjoint seed partitions of one master seed.
enum class Split { train, test };
Dataset make_split(const std::vector<MixtureComponent>& mix, std::size_t size, std::uint64_t seed, Split split);

// Datasets of an experiment, from files or generated from the mixtures.
Dataset load_train_set(const ExperimentConfig& config);
Dataset load_test_set(const ExperimentConfig& config);

struct GenDataOptions {
    std::string mix;
    long n = 1000;
    long test_n = -1;  // -1: same as n
    std::uint64_t seed = 0;
    Label label_min = 2;
    Label label_max = 999;
    std::filesystem::path out_dir = "data";
    bool force = false;
};
int cmd_gen_data(const GenDataOptions& options, std::ostream& out);

struct TrainOptions {
    std::filesystem::path config_path;  // or
    std::string preset;
    std::filesystem::path preset_dir;
    std::vector<std::string> overrides;  // "key=value"
    std::filesystem::path out_dir;       // overrides run.output_dir
};
ExperimentConfig resolve_experiment(const TrainOptions& options);
int cmd_train(const TrainOptions& options, std::ostream& out);

struct EvalOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path dataset;
    std::filesystem::path config_path;  // optional: architecture the checkpoint must match
    double temperature = 0.6;
    double top_p = 0.999;
    int max_response_len = 0;  // 0: the model's window
    std::uint64_t seed = 0;
    std::filesystem::path out;  // report JSON; empty: <checkpoint>.eval.json
};
int cmd_eval(const EvalOptions& options, std::ostream& out);

struct PlotCommandOptions {
    std::vector<std::filesystem::path> files;
    std::vector<std::string> labels;
    std::filesystem::path out = "plot.svg";
    std::string panel = "success";
    std::string tag;
    std::string decoding = "sampled";
    std::string title;
};
int cmd_plot(const PlotCommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace zrl
