#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "zrl/errors.hpp"
#include "zrl/estimators.hpp"
#include "zrl/vocab.hpp"

using namespace zrl;
using namespace zrl::test;

namespace {

// Returns a fixed score pattern regardless of the query.
class ScriptedBackend final : public RolloutBackend {
public:
    explicit ScriptedBackend(std::vector<double> pattern) : pattern_(std::move(pattern)) {}
    std::vector<double> rollout_scores(const RolloutQuery&, int n, std::uint64_t) override {
        ++calls;
        std::vector<double> out;
        for (int i = 0; i < n; ++i) out.push_back(pattern_[static_cast<std::size_t>(i) % pattern_.size()]);
        return out;
    }
    [[nodiscard]] const SamplingSettings& settings() const override { return settings_; }
    int calls = 0;

private:
    std::vector<double> pattern_;
    SamplingSettings settings_;
};

class NullScorer final : public Scorer {
public:
    [[nodiscard]] double score_tokens(std::span<const Token>) const override { return 0.0; }
    [[nodiscard]] double score_text(std::string_view) const override { return 0.0; }
};

Trajectory traj_of_length(int n, double reward) {
    Trajectory t;
    t.prompt = {Vocab::kSource, 5, Vocab::kDestination, 6};
    t.response.assign(static_cast<std::size_t>(n), 5);
    t.logprobs.assign(static_cast<std::size_t>(n), -0.1);
    t.set_reward(reward);
    return t;
}

void check_all(std::span<const double> got, std::initializer_list<double> want, double eps = 1e-12) {
    REQUIRE(got.size() == want.size());
    std::size_t i = 0;
    for (double w : want) CHECK(got[i++] == doctest::Approx(w).epsilon(eps));
}

}  // namespace

TEST_CASE("group advantages: worked examples") {
    check_all(group_advantages(std::vector<double>{1, 0, 0, 0, 0}), {0.8, -0.2, -0.2, -0.2, -0.2});
    for (double x : group_advantages(std::vector<double>{0, 0, 0, 0, 0})) CHECK(x == 0.0);
    for (double x : group_advantages(std::vector<double>{1, 1, 1, 1, 1})) CHECK(x == 0.0);
    CHECK_THROWS_AS(group_advantages(std::vector<double>{}), ContractError);
}

TEST_CASE("group advantages sum to zero and ignore constant shifts") {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const auto g = 2 + rng.below(15);
        std::vector<double> r(g);
        for (double& x : r) x = static_cast<double>(rng.below(2));
        const auto a = group_advantages(r);
        CHECK(std::abs(std::accumulate(a.begin(), a.end(), 0.0)) < 1e-9);
        const double shift = static_cast<double>(rng.below(7)) - 3.0;
        auto shifted = r;
        for (double& x : shifted) x += shift;
        CHECK(group_advantages(shifted) == a);

        std::vector<double> real(g);
        for (double& x : real) x = rng.uniform() * 4 - 2;
        const auto b = group_advantages(real);
        CHECK(std::abs(std::accumulate(b.begin(), b.end(), 0.0)) < 1e-9);
        const double mean = std::accumulate(real.begin(), real.end(), 0.0) / static_cast<double>(g);
        for (std::size_t i = 0; i < g; ++i) CHECK(b[i] == doctest::Approx(real[i] - mean).epsilon(1e-12));
    }
}

TEST_CASE("chunk spans") {
    const auto c = chunk_spans(10, 4);
    REQUIRE(c.size() == 3);
    CHECK((c[0].start == 0 && c[0].end == 4));
    CHECK((c[1].start == 4 && c[1].end == 8));
    CHECK((c[2].start == 8 && c[2].end == 10));
    CHECK(chunk_spans(10, 10).size() == 1);
    CHECK(chunk_spans(3, 16).size() == 1);
    CHECK(chunk_spans(0, 4).empty());
    CHECK_THROWS_AS(chunk_spans(5, 0), ContractError);
    for (int len = 1; len < 40; ++len) {
        for (int size = 1; size < 12; ++size) {
            int expect = 0;
            for (const auto& s : chunk_spans(len, size)) {
                CHECK(s.start == expect);
                CHECK(s.end > s.start);
                CHECK(s.end - s.start <= size);
                expect = s.end;
            }
            CHECK(expect == len);
        }
    }
    CHECK(chunk(traj_of_length(7, 0), 3).size() == 3);
}

TEST_CASE("mc_value counts successes") {
    NullScorer scorer;
    const RolloutQuery q{nullptr, {}, {}, &scorer};
    ScriptedBackend none({0});
    CHECK(mc_value(none, q, 3, 1).value == 0.0);
    ScriptedBackend two_of_three({1, 1, 0});
    const auto v = mc_value(two_of_three, q, 3, 1);
    CHECK(v.value == doctest::Approx(2.0 / 3.0));
    CHECK(v.successes == 2);
    CHECK(v.rollouts == 3);
    CHECK_THROWS_AS(mc_value(none, q, 0, 1), ContractError);
}

TEST_CASE("best-of-n transform") {
    NullScorer scorer;
    const RolloutQuery q{nullptr, {}, {}, &scorer};
    ScriptedBackend none({0});
    for (int n : {1, 4, 9}) CHECK(bestofn_value(none, q, 8, n, 1).value == 0.0);
    ScriptedBackend half({1, 0});
    CHECK(bestofn_value(half, q, 4, 4, 1).value == doctest::Approx(0.9375));
    // batch_max: four batches of two drawn from 1,0,1,0,... all contain a success.
    CHECK(bestofn_value(half, q, 4, 2, 1, BonValueMode::batch_max).value == 1.0);
    ScriptedBackend rare({0, 0, 0, 1});
    CHECK(bestofn_value(rare, q, 2, 2, 1, BonValueMode::batch_max).value == 0.5);
}

TEST_CASE("vineppo advantages are first differences of values") {
    const auto r = vineppo_from_values(3, 1, std::vector<double>{0.1, 0.2, 0.5, 1.0});
    REQUIRE(r.chunks.size() == 3);
    CHECK(r.chunks[0].coefficient == doctest::Approx(0.1));
    CHECK(r.chunks[1].coefficient == doctest::Approx(0.3));
    CHECK(r.chunks[2].coefficient == doctest::Approx(0.5));
    CHECK(r.nonzero_fraction == 1.0);
    check_all(r.token_coefficients(3), {0.1, 0.3, 0.5}, 1e-9);
}

TEST_CASE("vineppo telescopes to the value difference") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const int len = 1 + static_cast<int>(rng.below(30));
        const int size = 1 + static_cast<int>(rng.below(8));
        const auto n = chunk_spans(len, size).size();
        std::vector<double> v(n + 1);
        for (double& x : v) x = rng.uniform();
        const auto r = vineppo_from_values(len, size, v);
        double sum = 0.0;
        for (const auto& c : r.chunks) sum += c.coefficient;
        CHECK(sum == doctest::Approx(v.back() - v.front()).epsilon(1e-12));
    }
}

TEST_CASE("failed rollouts from every prefix give zero vineppo coefficients") {
    NullScorer scorer;
    ScriptedBackend none({0});
    const auto traj = traj_of_length(9, 0.0);
    const auto r = vineppo_advantages(traj, nullptr, scorer, none, 3, 4, 7);
    REQUIRE(r.chunks.size() == 3);
    for (double c : r.token_coefficients(9)) CHECK(c == 0.0);
    CHECK(r.nonzero_fraction == 0.0);
    // V_0..V_{n-1} need rollouts; the terminal value is the reward.
    CHECK(none.calls == 3);
}

TEST_CASE("vineppo terminal value is the observed reward") {
    NullScorer scorer;
    ScriptedBackend always({1});
    const auto r = vineppo_advantages(traj_of_length(5, 0.0), nullptr, scorer, always, 3, 5, 1);
    REQUIRE(r.chunks.size() == 1);
    CHECK(r.chunks[0].coefficient == -1.0);
}

TEST_CASE("progress coefficients: hand-set prover values") {
    const auto r = progress_from_values(3, 1, -0.2, 5.0, std::vector<double>{0.0, 0.25, 0.25, 1.0});
    REQUIRE(r.chunks.size() == 3);
    CHECK(r.chunks[0].coefficient == doctest::Approx(1.05).epsilon(1e-12));
    CHECK(r.chunks[1].coefficient == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK(r.chunks[2].coefficient == doctest::Approx(3.55).epsilon(1e-12));
    CHECK(r.nonzero_fraction == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("progress reduces to the group advantage") {
    NullScorer scorer;
    const auto traj = traj_of_length(11, 1.0);
    ScriptedBackend mixed({1, 0, 0});
    const auto zero_alpha = progress_coefficients(traj, nullptr, scorer, 0.6, mixed, 3, 4, 0.0, 4, 2);
    for (double c : zero_alpha.token_coefficients(11)) CHECK(c == 0.6);
    CHECK(mixed.calls == 0);

    ScriptedBackend none({0});
    const auto weak = progress_coefficients(traj, nullptr, scorer, -0.25, none, 3, 4, 5.0, 4, 2);
    // Last step jumps from prover value 0 to the observed reward 1.
    const auto c = weak.token_coefficients(11);
    for (int i = 0; i < 8; ++i) CHECK(c[static_cast<std::size_t>(i)] == -0.25);
    CHECK(c[8] == doctest::Approx(-0.25 + 5.0));
}

TEST_CASE("bon weights: closed-form values") {
    const auto half = bon_weights(0.5, {2, 3.0});
    CHECK(half.g_plus == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(half.g_minus == doctest::Approx(4.0 / 3.0).epsilon(1e-12));

    const auto w = bon_weights(0.8, {8, 3.0});
    CHECK(w.g_plus_raw == doctest::Approx(2.01594).epsilon(1e-5));
    CHECK(w.g_plus == w.g_plus_raw);
    CHECK(w.g_minus_raw == doctest::Approx(7.59680).epsilon(1e-5));
    CHECK(w.g_minus == 3.0);

    const auto zero = bon_weights(0.0, {8, 3.0});
    CHECK(zero.p_fail == 1e-4);
    CHECK(zero.g_plus < 1e-26);
    CHECK(zero.g_minus_raw == doctest::Approx(8.0).epsilon(1e-9));
    CHECK(zero.g_minus == 3.0);

    const auto one = bon_weights(1.0, {8, 3.0});
    CHECK(one.p_fail == 1.0 - 1e-4);
    CHECK(std::isfinite(one.g_plus_raw));
    CHECK(one.g_plus == 3.0);
}

TEST_CASE("bon weights sum identity and clip bound") {
    for (int n = 1; n <= 12; ++n) {
        for (int k = 0; k <= 1000; ++k) {
            const double p = 1e-4 + (1.0 - 2e-4) * k / 1000.0;
            const auto w = bon_weights(p, {n, 3.0});
            const double expect = n / (1.0 - std::pow(p, n));
            CHECK(std::abs(w.g_plus_raw + w.g_minus_raw - expect) <= 1e-12 * std::max(1.0, expect));
            CHECK(std::abs(w.g_plus) <= 3.0);
            CHECK(std::abs(w.g_minus) <= 3.0);
        }
    }
}

TEST_CASE("bon coefficients") {
    const BonSettings s{8, 3.0};
    const auto mixed = bon_coefficients(std::vector<double>{1, 0, 0, 0, 0}, s);
    const auto w = bon_weights(0.8, s);
    CHECK(mixed[0] == doctest::Approx(w.g_plus));
    for (int i = 1; i < 5; ++i) CHECK(mixed[static_cast<std::size_t>(i)] == doctest::Approx(-w.g_minus / 4));

    for (double c : bon_coefficients(std::vector<double>{0, 0, 0, 0, 0}, s)) CHECK(c == doctest::Approx(-3.0 / 5));
    for (double c : bon_coefficients(std::vector<double>{1, 1, 1, 1, 1}, s)) CHECK(std::abs(c) < 1e-26);
}

TEST_CASE("equal binary rewards give no policy-gradient signal") {
    for (double r : {0.0, 1.0}) {
        const std::vector<double> g(6, r);
        double norm2 = 0.0;
        for (double a : group_advantages(g)) norm2 += a * a;
        CHECK(norm2 == 0.0);
    }
    NullScorer scorer;
    ScriptedBackend none({0});
    const auto v = vineppo_advantages(traj_of_length(20, 0.0), nullptr, scorer, none, 3, 4, 1);
    double n2 = 0.0;
    for (double c : v.token_coefficients(20)) n2 += c * c;
    CHECK(n2 == 0.0);
}
