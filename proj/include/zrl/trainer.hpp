#pragma once

// On-policy training loop: sample groups, turn rewards into per-token
// coefficients, take one Adam ascent step on the KL-regularized objective.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "zrl/estimators.hpp"

namespace zrl {

enum class Algorithm { drgrpo, vineppo, progress, bon };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);

struct KlSchedule {
    double start = 1e-3;
    double end = 1e-3;
    long horizon = 0;  // iterations; 0 means constant at `start`
};

double kl_schedule(long iteration, const KlSchedule& schedule);

struct TrainConfig {
    Algorithm algorithm = Algorithm::drgrpo;
    ModelConfig model;
    SamplingSettings sampling;

    int group_size = 5;
    int batch_prompts = 8;
    int micro_batch_prompts = 0;  // 0: the whole batch at once
    double learning_rate = 3e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double max_grad_norm = 0.0;  // 0 disables clipping
    KlSchedule kl;
    long ref_refresh = 0;  // iterations between reference refreshes; 0 = never

    int mc_rollouts = 3;
    int chunk_size = 16;
    double progress_alpha = 5.0;
    int prover_n = 4;
    BonValueMode prover_mode = BonValueMode::transform;
    BonSettings bon;

    long max_iterations = 100;
    long eval_interval = 10;
    double wall_clock_budget_s = 0.0;  // 0: unlimited
    bool record_wall_clock = false;
    std::uint64_t seed = 0;

    // Throws ConfigError naming the field.
    void validate() const;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long steps = 0;
};

struct TrainState {
    PolicyParams params;
    ReferenceSnapshot reference;
    AdamState adam;
    long iteration = 0;  // completed steps
    double learning_rate = 0.0;

    static TrainState initial(const TrainConfig& config);
    TrainState(PolicyParams p, ReferenceSnapshot ref, double lr);
};

struct SuccessRates {
    double greedy = 0.0;
    double sampled = 0.0;
    long count = 0;
};

struct MetricsRecord {
    long iteration = 0;
    // Training fields are absent on the initial record.
    std::optional<double> mean_train_reward;
    std::optional<double> grad_norm;
    std::optional<double> kl;
    std::optional<double> beta;
    std::optional<double> nonzero_adv_fraction;
    std::optional<double> learning_rate;
    std::map<std::string, SuccessRates> success;  // by difficulty tag; empty when not evaluated
    std::optional<double> wall_clock_s;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
    static MetricsRecord from_json(const nlohmann::json& j);
};

// Per-group view handed to hooks.
struct GroupView {
    const TaskInstance& instance;
    const std::vector<Trajectory>& trajectories;
    const std::vector<double>& rewards;
};

struct StepHooks {
    // Rewrites the rewards of a group before coefficients are computed.
    std::function<void(std::vector<double>& rewards)> on_rewards;
    // Replaces the algorithm's per-token coefficients for a group.
    std::function<std::vector<std::vector<double>>(const GroupView&)> coefficients;
    // Sees (and may corrupt) the ascent direction before the finiteness check.
    std::function<void(std::span<double> grad, int attempt)> on_gradient;
    // Prover for the progress objective in place of Best-of-n of the reference policy.
    RolloutBackend* prover = nullptr;
};

// Per-token coefficients of a group under the configured algorithm, plus the
// fraction of non-zero step advantages.
struct GroupCoefficients {
    std::vector<std::vector<double>> per_token;
    double nonzero_fraction = 0.0;
};
GroupCoefficients compute_coefficients(const TrainConfig& config, const TrainState& state, const TaskInstance& instance,
                                       std::span<const Trajectory> trajectories, std::span<const double> rewards,
                                       std::uint64_t seed, RolloutBackend* prover = nullptr);

// One on-policy update. Non-finite gradients halve the learning rate and retry
// once with fresh samples; a second failure throws FatalTrainingError.
MetricsRecord train_step(TrainState& state, std::span<const TaskInstance> batch, const TrainConfig& config,
                         const StepHooks* hooks = nullptr);

struct InstanceOutcome {
    std::string tag;
    int greedy = 0;
    int sampled = 0;
};

struct EvalReport {
    std::map<std::string, SuccessRates> by_tag;
    std::vector<InstanceOutcome> outcomes;
};

// Greedy and sampled success per difficulty tag. Throws ContractError on an empty dataset.
EvalReport evaluate(const PolicyParams& params, const Dataset& testset, const SamplingSettings& settings,
                    std::uint64_t seed);

struct RunCallbacks {
    std::function<void(const MetricsRecord&)> on_record;
    std::function<void(const TrainState&)> on_checkpoint;
    long checkpoint_interval = 0;
    const StepHooks* hooks = nullptr;
};

// Trains until max_iterations or the wall-clock budget. Emits the initial
// evaluation record and one record per completed iteration.
TrainState run(const TrainConfig& config, const Dataset& train, const Dataset& test, const RunCallbacks& callbacks,
               std::optional<TrainState> resume = std::nullopt);

}  // namespace zrl
