#pragma once

// Checkpoint files: a version line, one JSON line with the architecture, then
// the parameters as little-endian float64.

#include <filesystem>

#include "zrl/policy.hpp"

namespace zrl {

struct Checkpoint {
    PolicyParams params;
    long iteration = 0;
};

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params, long iteration);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws ConfigError naming the first architecture field that differs.
void require_compatible(const ModelConfig& expected, const ModelConfig& actual);

}  // namespace zrl
