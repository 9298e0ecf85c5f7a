#include "zrl/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "zrl/errors.hpp"

namespace zrl {

std::vector<double> group_advantages(std::span<const double> rewards) {
    if (rewards.empty()) throw ContractError("empty reward group");
    const auto g = static_cast<double>(rewards.size());
    std::vector<double> out(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        double acc = 0.0;
        for (double r : rewards) acc += rewards[i] - r;
        out[i] = acc / g;
    }
    return out;
}

std::vector<StepChunk> chunk_spans(int response_len, int chunk_size) {
    if (chunk_size < 1) throw ContractError("chunk_size must be positive");
    std::vector<StepChunk> out;
    for (int s = 0, i = 0; s < response_len; s += chunk_size, ++i) {
        out.push_back({i, s, std::min(s + chunk_size, response_len), 0.0});
    }
    return out;
}

std::vector<StepChunk> chunk(const Trajectory& traj, int chunk_size) {
    return chunk_spans(static_cast<int>(traj.response.size()), chunk_size);
}

ValueEstimate mc_value(RolloutBackend& backend, const RolloutQuery& query, int k, std::uint64_t seed) {
    if (k < 1) throw ContractError("mc_value needs at least one rollout");
    const auto scores = backend.rollout_scores(query, k, seed);
    ValueEstimate v;
    v.rollouts = k;
    for (double s : scores) v.successes += s > 0.5 ? 1 : 0;
    v.value = static_cast<double>(v.successes) / k;
    return v;
}

ValueEstimate bestofn_value(RolloutBackend& backend, const RolloutQuery& query, int k, int n, std::uint64_t seed,
                            BonValueMode mode) {
    if (n < 1 || k < 1) throw ContractError("bestofn_value needs n >= 1 and k >= 1");
    if (mode == BonValueMode::transform) {
        auto v = mc_value(backend, query, k, seed);
        v.value = 1.0 - std::pow(1.0 - v.value, n);
        return v;
    }
    const auto scores = backend.rollout_scores(query, k * n, seed);
    ValueEstimate v;
    v.rollouts = k;
    for (int b = 0; b < k; ++b) {
        const auto first = scores.begin() + static_cast<std::ptrdiff_t>(b) * n;
        if (std::any_of(first, first + n, [](double s) { return s > 0.5; })) ++v.successes;
    }
    v.value = static_cast<double>(v.successes) / k;
    return v;
}

std::vector<double> AdvantageReport::token_coefficients(int response_len) const {
    if (chunks.empty()) return std::vector<double>(static_cast<std::size_t>(response_len), advantage);
    std::vector<double> out(static_cast<std::size_t>(response_len), 0.0);
    for (const auto& c : chunks) {
        if (c.end > response_len) throw ContractError("chunk extends past the response");
        std::fill(out.begin() + c.start, out.begin() + c.end, c.coefficient);
    }
    return out;
}

namespace {

double nonzero_fraction(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    const auto nz = std::count_if(xs.begin(), xs.end(), [](double x) { return x != 0.0; });
    return static_cast<double>(nz) / static_cast<double>(xs.size());
}

// Values at the start of each chunk plus the terminal reward.
std::vector<double> prefix_values(const Trajectory& traj, const TaskInstance* instance, const Scorer& scorer,
                                  const std::vector<StepChunk>& chunks,
                                  const std::function<double(const RolloutQuery&, std::uint64_t)>& estimate,
                                  std::uint64_t seed) {
    std::vector<double> values;
    values.reserve(chunks.size() + 1);
    for (const auto& c : chunks) {
        RolloutQuery q;
        q.instance = instance;
        q.prompt = traj.prompt;
        q.response_prefix = std::span<const Token>(traj.response).first(static_cast<std::size_t>(c.start));
        q.scorer = &scorer;
        values.push_back(estimate(q, derive_seed(seed, c.index)));
    }
    values.push_back(traj.reward() ? *traj.reward() : scorer.score_tokens(traj.response));
    return values;
}

}  // namespace

AdvantageReport vineppo_from_values(int response_len, int chunk_size, std::span<const double> values) {
    AdvantageReport r;
    r.algorithm = "vineppo";
    r.chunks = chunk_spans(response_len, chunk_size);
    if (values.size() != r.chunks.size() + 1) throw ContractError("need one value per chunk boundary");
    for (auto& c : r.chunks) {
        c.coefficient = values[c.index + 1] - values[c.index];
        r.step_advantages.push_back(c.coefficient);
    }
    r.nonzero_fraction = nonzero_fraction(r.step_advantages);
    return r;
}

AdvantageReport vineppo_advantages(const Trajectory& traj, const TaskInstance* instance, const Scorer& scorer,
                                   RolloutBackend& backend, int k, int chunk_size, std::uint64_t seed) {
    const auto chunks = chunk(traj, chunk_size);
    const auto values = prefix_values(
        traj, instance, scorer, chunks,
        [&](const RolloutQuery& q, std::uint64_t s) { return mc_value(backend, q, k, s).value; }, seed);
    return vineppo_from_values(static_cast<int>(traj.response.size()), chunk_size, values);
}

AdvantageReport progress_from_values(int response_len, int chunk_size, double group_advantage, double alpha,
                                     std::span<const double> prover_values) {
    AdvantageReport r;
    r.algorithm = "progress";
    r.advantage = group_advantage;
    r.chunks = chunk_spans(response_len, chunk_size);
    if (prover_values.size() != r.chunks.size() + 1) throw ContractError("need one prover value per chunk boundary");
    for (auto& c : r.chunks) {
        const double step = prover_values[c.index + 1] - prover_values[c.index];
        r.step_advantages.push_back(step);
        c.coefficient = group_advantage + alpha * step;
    }
    r.nonzero_fraction = nonzero_fraction(r.step_advantages);
    return r;
}

AdvantageReport progress_coefficients(const Trajectory& traj, const TaskInstance* instance, const Scorer& scorer,
                                      double group_advantage, RolloutBackend& prover, int k, int prover_n, double alpha,
                                      int chunk_size, std::uint64_t seed, BonValueMode mode) {
    const auto chunks = chunk(traj, chunk_size);
    std::vector<double> values;
    if (alpha != 0.0) {
        values = prefix_values(
            traj, instance, scorer, chunks,
            [&](const RolloutQuery& q, std::uint64_t s) { return bestofn_value(prover, q, k, prover_n, s, mode).value; },
            seed);
    } else {
        // The prover term vanishes; skip its rollouts.
        values.assign(chunks.size() + 1, 0.0);
    }
    return progress_from_values(static_cast<int>(traj.response.size()), chunk_size, group_advantage, alpha, values);
}

BonWeights bon_weights(double p_fail, const BonSettings& s) {
    if (s.n < 1) throw ContractError("bon n must be >= 1");
    BonWeights w;
    w.n = s.n;
    w.p_fail = std::clamp(p_fail, s.p_min, s.p_max);
    const double p = w.p_fail;
    const double n = s.n;
    const double pn1 = std::pow(p, s.n - 1);
    const double denom = 1.0 - std::pow(p, s.n);
    w.g_plus_raw = n * pn1 / denom;
    w.g_minus_raw = n * (1.0 - pn1) / denom;
    w.g_plus = std::clamp(w.g_plus_raw, -s.clip, s.clip);
    w.g_minus = std::clamp(w.g_minus_raw, -s.clip, s.clip);
    return w;
}

std::vector<double> bon_coefficients(std::span<const double> rewards, const BonSettings& s) {
    if (rewards.size() < 2) throw ContractError("bon group needs at least two trajectories");
    std::size_t successes = 0;
    for (double r : rewards) successes += r > 0.5 ? 1 : 0;
    const std::size_t failures = rewards.size() - successes;
    const double p_fail = static_cast<double>(failures) / static_cast<double>(rewards.size());
    const auto w = bon_weights(p_fail, s);
    std::vector<double> out(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        out[i] = rewards[i] > 0.5 ? w.g_plus / static_cast<double>(successes)
                                  : -w.g_minus / static_cast<double>(failures);
    }
    return out;
}

}  // namespace zrl
