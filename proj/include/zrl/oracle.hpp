#pragma once

// Brute-force references for tiny policies.

#include <functional>
#include <span>
#include <vector>

#include "zrl/sampling.hpp"

namespace zrl {

struct EnumerationBudget {
    int max_support = 4;     // tokens the policy may emit after the prompt
    int max_horizon = 4;     // response tokens
    long max_sequences = 4096;
};

using TokenScorer = std::function<double(std::span<const Token> response)>;

struct Enumerated {
    TokenSeq response;
    double probability = 0.0;
    bool truncated = false;
};

// Every completion of `prefix` with its exact probability under the sampling
// distribution (temperature and top-p applied). Truncation at the horizon is a
// terminal outcome. Throws BudgetError rather than truncating the enumeration.
std::vector<Enumerated> enumerate_completions(const PolicyParams& params, std::span<const Token> prompt,
                                              std::span<const Token> prefix, const SamplingSettings& settings,
                                              const EnumerationBudget& budget);

// Sum over completions of probability x score.
double exact_value(const PolicyParams& params, std::span<const Token> prompt, std::span<const Token> prefix,
                   const SamplingSettings& settings, const EnumerationBudget& budget, const TokenScorer& scorer);

// 1 - (1 - exact_value)^n.
double exact_bon_value(const PolicyParams& params, std::span<const Token> prompt, std::span<const Token> prefix,
                       const SamplingSettings& settings, int n, const EnumerationBudget& budget,
                       const TokenScorer& scorer);

// Central differences, one coordinate at a time. Throws std::domain_error
// naming the coordinate if f is not finite there.
std::vector<double> finite_diff_grad(std::span<const double> x, const std::function<double(std::span<const double>)>& f,
                                     double eps);

}  // namespace zrl
