#include "zrl/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "zrl/errors.hpp"

namespace zrl {

namespace {

struct Walker {
    const SamplingSettings& settings;
    int horizon;
    long max_sequences;
    std::vector<Enumerated>& out;

    void visit(const DecodeSession& session, TokenSeq& response, double prob) {
        if (static_cast<int>(response.size()) >= horizon) {
            emit(response, prob, true);
            return;
        }
        const auto dist = sampling_distribution(session.logits(), settings);
        const auto support = session.support();
        for (std::size_t i = 0; i < dist.size(); ++i) {
            if (dist[i] <= 0.0) continue;
            const Token t = support[i];
            response.push_back(t);
            if (t == Vocab::kEos) {
                emit(response, prob * dist[i], false);
            } else if (static_cast<int>(response.size()) >= horizon) {
                emit(response, prob * dist[i], true);
            } else {
                DecodeSession next = session;
                next.push(t);
                visit(next, response, prob * dist[i]);
            }
            response.pop_back();
        }
    }

    void emit(const TokenSeq& response, double prob, bool truncated) {
        if (static_cast<long>(out.size()) >= max_sequences) {
            throw BudgetError("enumeration exceeds " + std::to_string(max_sequences) + " sequences");
        }
        out.push_back({response, prob, truncated});
    }
};

}  // namespace

std::vector<Enumerated> enumerate_completions(const PolicyParams& params, std::span<const Token> prompt,
                                              std::span<const Token> prefix, const SamplingSettings& settings,
                                              const EnumerationBudget& budget) {
    const int horizon = std::min(settings.max_response_len, params.config.max_response_len);
    if (horizon > budget.max_horizon) {
        throw BudgetError("horizon " + std::to_string(horizon) + " exceeds budget " + std::to_string(budget.max_horizon));
    }
    const DecodeSession root(params, prompt, prefix);
    const auto support = static_cast<int>(root.support().size());
    if (support > budget.max_support) {
        throw BudgetError("support of " + std::to_string(support) + " tokens exceeds budget " +
                          std::to_string(budget.max_support));
    }
    // Check the worst case up front so an over-budget request is refused before any work.
    double worst = 1.0;
    for (int i = static_cast<int>(prefix.size()); i < horizon; ++i) worst *= support;
    if (worst > static_cast<double>(budget.max_sequences)) {
        throw BudgetError("up to " + std::to_string(static_cast<long long>(worst)) + " sequences exceed budget " +
                          std::to_string(budget.max_sequences));
    }

    std::vector<Enumerated> out;
    TokenSeq response(prefix.begin(), prefix.end());
    if (!prefix.empty() && prefix.back() == Vocab::kEos) {
        out.push_back({response, 1.0, false});
        return out;
    }
    Walker w{settings, horizon, budget.max_sequences, out};
    w.visit(root, response, 1.0);
    return out;
}

double exact_value(const PolicyParams& params, std::span<const Token> prompt, std::span<const Token> prefix,
                   const SamplingSettings& settings, const EnumerationBudget& budget, const TokenScorer& scorer) {
    double v = 0.0;
    for (const auto& e : enumerate_completions(params, prompt, prefix, settings, budget)) {
        v += e.probability * scorer(e.response);
    }
    return v;
}

double exact_bon_value(const PolicyParams& params, std::span<const Token> prompt, std::span<const Token> prefix,
                       const SamplingSettings& settings, int n, const EnumerationBudget& budget,
                       const TokenScorer& scorer) {
    if (n < 1) throw ContractError("n must be >= 1");
    const double v = exact_value(params, prompt, prefix, settings, budget, scorer);
    return 1.0 - std::pow(1.0 - v, n);
}

std::vector<double> finite_diff_grad(std::span<const double> x, const std::function<double(std::span<const double>)>& f,
                                     double eps) {
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + eps;
        const double up = f(probe);
        probe[i] = x[i] - eps;
        const double down = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::domain_error("function not finite around coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

}  // namespace zrl
