#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "zrl/graphtask.hpp"
#include "zrl/policy.hpp"
#include "zrl/rng.hpp"
#include "zrl/sampling.hpp"

namespace zrl::test {

// Under 1k parameters: labels 2..5, two layers of width 6.
inline ModelConfig tiny_config() {
    ModelConfig c;
    c.label_min = 2;
    c.label_max = 5;
    c.width = 6;
    c.layers = 2;
    c.heads = 2;
    c.mlp_width = 12;
    c.max_prompt_len = 10;
    c.max_response_len = 4;
    c.init_scale = 0.5;
    return c;
}

// Support of exactly four tokens (two labels plus <ans>, <eos>) and horizon 4.
inline ModelConfig toy_config() {
    ModelConfig c = tiny_config();
    c.label_max = 3;
    c.init_scale = 1.0;
    return c;
}

// Initial weights plus noise so nothing sits at a symmetric point.
inline PolicyParams random_params(const ModelConfig& cfg, std::uint64_t seed, double noise = 0.3) {
    auto p = init_params(cfg, seed);
    Rng rng(derive_seed(seed, 99));
    for (double& v : p.values) v += noise * rng.normal();
    return p;
}

inline TaskInstance tiny_instance(const ModelConfig& cfg, std::uint64_t seed, int degree = 1) {
    DifficultySpec spec{degree, 2, cfg.label_min, cfg.label_max};
    return render_instance(generate_star(spec, seed), seed);
}

inline double norm(std::span<const double> v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

inline double rel_error(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(d) / std::max(norm(b), 1e-300);
}

}  // namespace zrl::test
