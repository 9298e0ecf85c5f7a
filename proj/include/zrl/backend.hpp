#pragma once

// Rollout sources used by the estimators. A backend completes a partial
// response several times and returns the scored outcomes; it never exposes
// gradients, so an external service can stand in for the internal policy.

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zrl/graphtask.hpp"
#include "zrl/sampling.hpp"

namespace zrl {

class Scorer {
public:
    virtual ~Scorer() = default;
    [[nodiscard]] virtual double score_tokens(std::span<const Token> response) const = 0;
    [[nodiscard]] virtual double score_text(std::string_view response_text) const = 0;
};

// Binary outcome reward of one task instance.
class InstanceScorer final : public Scorer {
public:
    InstanceScorer(TaskInstance instance, Vocab vocab) : instance_(std::move(instance)), vocab_(vocab) {}

    [[nodiscard]] double score_tokens(std::span<const Token> response) const override;
    [[nodiscard]] double score_text(std::string_view response_text) const override;
    [[nodiscard]] const TaskInstance& instance() const { return instance_; }

private:
    TaskInstance instance_;
    Vocab vocab_;
};

struct RolloutQuery {
    const TaskInstance* instance = nullptr;  // needed by text backends
    std::span<const Token> prompt;
    std::span<const Token> response_prefix;
    const Scorer* scorer = nullptr;
};

class RolloutBackend {
public:
    virtual ~RolloutBackend() = default;
    // Scores of `n` independent completions of the query's prefix.
    virtual std::vector<double> rollout_scores(const RolloutQuery& query, int n, std::uint64_t seed) = 0;
    [[nodiscard]] virtual const SamplingSettings& settings() const = 0;
};

// Samples from a parameter vector held by the caller.
class PolicyBackend final : public RolloutBackend {
public:
    PolicyBackend(const PolicyParams& params, SamplingSettings settings) : params_(&params), settings_(settings) {}

    std::vector<double> rollout_scores(const RolloutQuery& query, int n, std::uint64_t seed) override;
    [[nodiscard]] const SamplingSettings& settings() const override { return settings_; }

private:
    const PolicyParams* params_;
    SamplingSettings settings_;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 8000;
    std::string path = "/generate";
    std::chrono::milliseconds timeout{30000};
    int retries = 3;
};

// POST {prompt, n, temperature, top_p, max_tokens} -> {completions: [...]}.
// The prompt is the rendered task text followed by the partial response text.
class ExternalBackend final : public RolloutBackend {
public:
    ExternalBackend(Endpoint endpoint, SamplingSettings settings, Vocab vocab, int max_tokens = 256)
        : endpoint_(std::move(endpoint)), settings_(settings), vocab_(vocab), max_tokens_(max_tokens) {}

    std::vector<double> rollout_scores(const RolloutQuery& query, int n, std::uint64_t seed) override;
    [[nodiscard]] const SamplingSettings& settings() const override { return settings_; }

    // Raw completions for a text prompt; throws TransportError once retries are spent.
    std::vector<std::string> generate(const std::string& prompt, int n);

private:
    Endpoint endpoint_;
    SamplingSettings settings_;
    Vocab vocab_;
    int max_tokens_;
};

// Parses "http://host:port/path".
Endpoint parse_endpoint(std::string_view url);

}  // namespace zrl
