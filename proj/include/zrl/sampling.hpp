#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "zrl/policy.hpp"
#include "zrl/rng.hpp"

namespace zrl {

struct SamplingSettings {
    double temperature = 0.6;
    double top_p = 0.999;
    int max_response_len = 12;  // clamped to the model's own limit
};

// Distribution actually sampled from: softmax(logits / T) restricted to the
// smallest top-probability set whose mass reaches top_p, renormalized.
// Temperature 0 is greedy (ties go to the lowest index).
std::vector<double> sampling_distribution(std::span<const double> logits, const SamplingSettings& settings);

// Index drawn from a normalized distribution.
std::size_t draw_index(std::span<const double> probs, Rng& rng);

// Samples a response. Trajectory::logprobs holds the untransformed
// (temperature 1, no truncation) policy log-probabilities.
Trajectory sample(const PolicyParams& params, std::span<const Token> prompt, const SamplingSettings& settings,
                  std::uint64_t seed);

// Continues `response_prefix`; the returned response includes the prefix.
Trajectory complete(const PolicyParams& params, std::span<const Token> prompt, std::span<const Token> response_prefix,
                    const SamplingSettings& settings, std::uint64_t seed);

// `count` independent samples; sample i uses derive_seed(seed, i). The prompt
// (and prefix) is encoded once.
std::vector<Trajectory> sample_group(const PolicyParams& params, std::span<const Token> prompt,
                                     std::span<const Token> response_prefix, const SamplingSettings& settings,
                                     int count, std::uint64_t seed);

// Greedy decode.
Trajectory greedy(const PolicyParams& params, std::span<const Token> prompt, int max_response_len);

}  // namespace zrl
