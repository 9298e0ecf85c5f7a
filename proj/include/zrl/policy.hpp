#pragma once

// The trainable token policy: a small pre-LayerNorm causal transformer with
// tied input/output embeddings, exact reverse-mode gradients and a KV cache
// for incremental decoding.
//
// Output distributions are restricted to the prompt's support (see
// Vocab::output_support): labels that never appear in the prompt get
// probability exactly zero.
//
// Positions are right-aligned: the last prompt token always sits at position
// max_prompt_len - 1 and response token j at max_prompt_len + j, whatever the
// prompt length.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include <json.hpp>

#include "zrl/vocab.hpp"

namespace zrl {

// Architecture descriptor.
struct ModelConfig {
    Label label_min = 2;
    Label label_max = 999;
    int width = 64;
    int layers = 2;
    int heads = 4;
    int mlp_width = 256;
    int max_prompt_len = 280;
    int max_response_len = 12;
    double init_scale = 0.3;  // std of the embedding tables

    [[nodiscard]] int context_len() const { return max_prompt_len + max_response_len; }
    [[nodiscard]] int vocab_size() const { return Vocab(label_min, label_max).size(); }
    [[nodiscard]] Vocab vocab() const { return Vocab(label_min, label_max); }
    [[nodiscard]] std::size_t param_count() const;
    // Throws ConfigError naming the offending field.
    void validate() const;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);

    // Name of the first field that differs, or nullopt when equal.
    [[nodiscard]] std::optional<std::string> first_mismatch(const ModelConfig& other) const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Storage for every buffer the network maps as a matrix. A fixed SIMD-aligned
// base keeps vectorized reductions on the same split whatever the heap looks
// like, so repeated computations agree to the last bit.
using AlignedDoubles = std::vector<double, Eigen::aligned_allocator<double>>;

struct PolicyParams {
    ModelConfig config;
    AlignedDoubles values;

    [[nodiscard]] std::size_t size() const { return values.size(); }
    [[nodiscard]] bool all_finite() const;
};

PolicyParams init_params(const ModelConfig& config, std::uint64_t seed);

// Frozen copy of the policy parameters taken at a given iteration.
class ReferenceSnapshot {
public:
    ReferenceSnapshot(const PolicyParams& params, long iteration)
        : params_(std::make_shared<const PolicyParams>(params)), iteration_(iteration) {}

    [[nodiscard]] const PolicyParams& params() const { return *params_; }
    [[nodiscard]] long iteration() const { return iteration_; }

private:
    std::shared_ptr<const PolicyParams> params_;
    long iteration_;
};

ReferenceSnapshot snapshot_reference(const PolicyParams& params, long iteration = 0);

struct Trajectory {
    TokenSeq prompt;
    TokenSeq response;
    // log pi_theta(response[t] | prompt, response[<t]) of the unmodified
    // (temperature 1, untruncated) policy distribution.
    std::vector<double> logprobs;
    bool truncated = false;

    [[nodiscard]] const std::optional<double>& reward() const { return reward_; }
    // Throws ContractError when called twice.
    void set_reward(double r);

private:
    std::optional<double> reward_;
};

namespace detail {
struct KvCache;
}

// Incremental decoder. Copying a session forks it (the prompt is encoded once
// and shared by value).
class DecodeSession {
public:
    DecodeSession(const PolicyParams& params, std::span<const Token> prompt);
    DecodeSession(const PolicyParams& params, std::span<const Token> prompt, std::span<const Token> response_prefix);
    DecodeSession(const DecodeSession& other);
    DecodeSession& operator=(const DecodeSession& other);
    DecodeSession(DecodeSession&&) noexcept;
    DecodeSession& operator=(DecodeSession&&) noexcept;
    ~DecodeSession();

    [[nodiscard]] std::span<const Token> support() const { return support_; }
    // Next-token logits, aligned with support().
    [[nodiscard]] std::span<const double> logits() const { return logits_; }
    [[nodiscard]] std::vector<double> log_probs() const;
    [[nodiscard]] int response_length() const { return response_len_; }
    [[nodiscard]] const PolicyParams& params() const { return *params_; }

    // Index of a token in support(); throws ContractError if the token has zero probability.
    [[nodiscard]] std::size_t support_index(Token t) const;

    void push(Token t);

private:
    const PolicyParams* params_;
    TokenSeq support_;
    std::unique_ptr<detail::KvCache> cache_;
    std::vector<double> logits_;
    int response_len_ = 0;
};

// Exact per-position log-probabilities of a response.
std::vector<double> response_log_probs(const PolicyParams& params, std::span<const Token> prompt,
                                       std::span<const Token> response);

struct GradientResult {
    double value = 0.0;
    AlignedDoubles gradient;
};

// Objective sum_t coeffs[t] * log pi(y_t | y_<t, x) and its exact gradient.
// A single coefficient broadcasts to every response position.
GradientResult logprob_grad(const PolicyParams& params, const Trajectory& traj, std::span<const double> coeffs);

// Mean over response positions of KL(pi_theta(.|prefix) || pi_ref(.|prefix)) and its gradient.
GradientResult token_kl(const PolicyParams& params, const ReferenceSnapshot& ref, const Trajectory& traj);

// Accumulates into `grad` the gradient of
//   sum_i sum_t coeffs[i][t] * log pi(y_it)  +  kl_weight * sum_i KL_i
// for responses sharing one prompt. The prompt is encoded once for the whole
// group. KL_i is only computed when `ref` is given.
struct GroupGradientStats {
    double objective = 0.0;
    std::vector<double> kl;  // per response; empty without ref
};
GroupGradientStats accumulate_group_gradient(const PolicyParams& params, const PolicyParams* ref,
                                             std::span<const Token> prompt,
                                             std::span<const TokenSeq> responses,
                                             std::span<const std::vector<double>> coeffs, double kl_weight,
                                             std::span<double> grad);

}  // namespace zrl
