#include "zrl/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "zrl/errors.hpp"

namespace zrl {

std::vector<double> sampling_distribution(std::span<const double> logits, const SamplingSettings& settings) {
    const std::size_t n = logits.size();
    if (n == 0) throw ContractError("empty distribution");
    std::vector<double> probs(n, 0.0);
    if (settings.temperature <= 0.0) {
        probs[static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin())] = 1.0;
        return probs;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        probs[i] = std::exp((logits[i] - mx) / settings.temperature);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    if (settings.top_p >= 1.0) return probs;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    double mass = 0.0;
    std::size_t keep = 0;
    while (keep < n && mass < settings.top_p) mass += probs[order[keep++]];
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < keep; ++k) out[order[k]] = probs[order[k]] / mass;
    return out;
}

std::size_t draw_index(std::span<const double> probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last = i;
        if (u < acc) return i;
    }
    return last;
}

namespace {

int response_limit(const PolicyParams& params, const SamplingSettings& settings) {
    return std::min(settings.max_response_len, params.config.max_response_len);
}

Trajectory run_decode(DecodeSession session, std::span<const Token> prompt, std::span<const Token> prefix,
                      const SamplingSettings& settings, int limit, Rng* rng) {
    Trajectory traj;
    traj.prompt.assign(prompt.begin(), prompt.end());
    traj.response.assign(prefix.begin(), prefix.end());
    if (!prefix.empty()) {
        traj.logprobs = response_log_probs(session.params(), prompt, prefix);
        if (prefix.back() == Vocab::kEos) return traj;
    }
    const auto support = session.support();
    while (true) {
        if (static_cast<int>(traj.response.size()) >= limit) {
            traj.truncated = true;
            break;
        }
        const auto lp = session.log_probs();
        std::size_t idx = 0;
        if (rng == nullptr || settings.temperature <= 0.0) {
            idx = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        } else {
            const auto dist = sampling_distribution(session.logits(), settings);
            idx = draw_index(dist, *rng);
        }
        const Token t = support[idx];
        traj.response.push_back(t);
        traj.logprobs.push_back(lp[idx]);
        if (t == Vocab::kEos) break;
        if (static_cast<int>(traj.response.size()) < limit) session.push(t);
    }
    return traj;
}

}  // namespace

Trajectory sample(const PolicyParams& params, std::span<const Token> prompt, const SamplingSettings& settings,
                  std::uint64_t seed) {
    return complete(params, prompt, {}, settings, seed);
}

Trajectory complete(const PolicyParams& params, std::span<const Token> prompt, std::span<const Token> response_prefix,
                    const SamplingSettings& settings, std::uint64_t seed) {
    Rng rng(seed);
    return run_decode(DecodeSession(params, prompt, response_prefix), prompt, response_prefix, settings,
                      response_limit(params, settings), &rng);
}

std::vector<Trajectory> sample_group(const PolicyParams& params, std::span<const Token> prompt,
                                     std::span<const Token> response_prefix, const SamplingSettings& settings,
                                     int count, std::uint64_t seed) {
    std::vector<Trajectory> out;
    if (count <= 0) return out;
    out.reserve(static_cast<std::size_t>(count));
    const DecodeSession root(params, prompt, response_prefix);
    const int limit = response_limit(params, settings);
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, i));
        out.push_back(run_decode(root, prompt, response_prefix, settings, limit, &rng));
    }
    return out;
}

Trajectory greedy(const PolicyParams& params, std::span<const Token> prompt, int max_response_len) {
    SamplingSettings s;
    s.temperature = 0.0;
    s.max_response_len = max_response_len;
    return run_decode(DecodeSession(params, prompt), prompt, {}, s, response_limit(params, s), nullptr);
}

}  // namespace zrl
