#pragma once

// Advantage and weight computations for the four objectives.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zrl/backend.hpp"

namespace zrl {

// Reward minus group mean, computed as mean pairwise difference so that a
// constant shift of all rewards cancels exactly for integer-valued rewards.
std::vector<double> group_advantages(std::span<const double> rewards);

// Response span [start, end) with its coefficient.
struct StepChunk {
    int index = 0;
    int start = 0;
    int end = 0;
    double coefficient = 0.0;
};

std::vector<StepChunk> chunk_spans(int response_len, int chunk_size);
std::vector<StepChunk> chunk(const Trajectory& traj, int chunk_size);

struct ValueEstimate {
    double value = 0.0;
    int rollouts = 0;
    int successes = 0;
};

ValueEstimate mc_value(RolloutBackend& backend, const RolloutQuery& query, int k, std::uint64_t seed);

enum class BonValueMode { transform, batch_max };

// Probability that the best of n completions succeeds. `transform` turns K
// single-rollout estimates into 1-(1-v)^n; `batch_max` draws K batches of n.
ValueEstimate bestofn_value(RolloutBackend& backend, const RolloutQuery& query, int k, int n, std::uint64_t seed,
                            BonValueMode mode = BonValueMode::transform);

struct AdvantageReport {
    std::string algorithm;
    double advantage = 0.0;        // trajectory-level A(y)
    std::vector<StepChunk> chunks;  // empty for trajectory-level algorithms
    std::vector<double> step_advantages;  // per chunk, the value differences
    double nonzero_fraction = 0.0;

    // Coefficient for every response position.
    [[nodiscard]] std::vector<double> token_coefficients(int response_len) const;
};

// Chunk coefficients from state values V_0..V_n (V_0: empty prefix, V_n: terminal).
AdvantageReport vineppo_from_values(int response_len, int chunk_size, std::span<const double> values);

// V_0..V_{n-1} from `k` rollouts each; V_n is the trajectory's observed reward.
AdvantageReport vineppo_advantages(const Trajectory& traj, const TaskInstance* instance, const Scorer& scorer,
                                   RolloutBackend& backend, int k, int chunk_size, std::uint64_t seed);

// Coefficient of chunk i: group_advantage + alpha * (Vmu_{i+1} - Vmu_i).
AdvantageReport progress_from_values(int response_len, int chunk_size, double group_advantage, double alpha,
                                     std::span<const double> prover_values);

// Prover values are Best-of-n of the prover backend.
AdvantageReport progress_coefficients(const Trajectory& traj, const TaskInstance* instance, const Scorer& scorer,
                                      double group_advantage, RolloutBackend& prover, int k, int prover_n, double alpha,
                                      int chunk_size, std::uint64_t seed, BonValueMode mode = BonValueMode::transform);

struct BonWeights {
    double p_fail = 0.0;  // after clipping
    int n = 1;
    double g_plus_raw = 0.0;
    double g_minus_raw = 0.0;
    double g_plus = 0.0;
    double g_minus = 0.0;
};

struct BonSettings {
    int n = 8;
    double clip = 3.0;
    double p_min = 1e-4;
    double p_max = 1.0 - 1e-4;
};

BonWeights bon_weights(double p_fail, const BonSettings& settings);

// Successes get +g+/|S|, failures -g-/|F|, with p_fail the group's failing fraction.
std::vector<double> bon_coefficients(std::span<const double> rewards, const BonSettings& settings);

}  // namespace zrl
