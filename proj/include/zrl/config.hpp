#pragma once

// Experiment configuration files: one `dotted.key = value` per line, `#`
// comments. Unknown keys are rejected.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "zrl/trainer.hpp"

namespace zrl {

struct DataConfig {
    std::string train_mix = "d2p2:1.0";
    long train_size = 1000;
    std::string test_mix;  // empty: same as train_mix
    long test_size = 100;
    std::string train_file;  // JSONL; overrides train_mix when set
    std::string test_file;
};

struct BackendConfig {
    std::string prover_url;  // external prover for the progress objective
    long timeout_ms = 30000;
    int retries = 3;
    int max_tokens = 256;
};

struct ExperimentConfig {
    std::string name = "run";
    std::string output_dir;  // empty: runs/<name>
    long checkpoint_interval = 0;
    std::string init_checkpoint;
    TrainConfig train;
    DataConfig data;
    BackendConfig backend;
    // Relative file paths resolve against this directory.
    std::filesystem::path base_dir = ".";

    [[nodiscard]] std::filesystem::path resolve(const std::string& file) const;
    [[nodiscard]] std::string effective_test_mix() const { return data.test_mix.empty() ? data.train_mix : data.test_mix; }
    // Schema-level checks plus existence of every referenced file.
    void validate() const;
};

struct ConfigKey {
    std::string key;
    std::string doc;
};

const std::vector<ConfigKey>& config_schema();

// Sets one key from its text value; ConfigError names the key on failure.
void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir, std::string_view origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical listing of every key, loadable by parse_config.
std::string dump_config(const ExperimentConfig& config);

// Applies ZRL_SEED from the environment if set.
void apply_env_overrides(ExperimentConfig& config);

}  // namespace zrl
