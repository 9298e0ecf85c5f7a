#include "zrl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>

#include "zrl/errors.hpp"

namespace zrl {

namespace {

// Salts separating the random streams of one run.
constexpr std::uint64_t kSampleSalt = 0x5a11;
constexpr std::uint64_t kValueSalt = 0x7a1e;
constexpr std::uint64_t kBatchSalt = 0xba7c;
constexpr std::uint64_t kEvalSalt = 0xe7a1;
constexpr std::uint64_t kInitSalt = 0x1417;

}  // namespace

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::drgrpo: return "drgrpo";
        case Algorithm::vineppo: return "vineppo";
        case Algorithm::progress: return "progress";
        case Algorithm::bon: return "bon";
    }
    return "?";
}

Algorithm parse_algorithm(std::string_view name) {
    if (name == "drgrpo") return Algorithm::drgrpo;
    if (name == "vineppo") return Algorithm::vineppo;
    if (name == "progress") return Algorithm::progress;
    if (name == "bon") return Algorithm::bon;
    throw ConfigError("unknown algorithm '" + std::string(name) + "' (expected drgrpo, vineppo, progress or bon)");
}

double kl_schedule(long iteration, const KlSchedule& s) {
    if (iteration < 0) throw ContractError("negative iteration");
    if (s.horizon <= 0 || s.start == s.end) return s.start;
    if (iteration >= s.horizon) return s.end;
    const double frac = static_cast<double>(iteration) / static_cast<double>(s.horizon);
    if (s.start <= 0.0 || s.end <= 0.0) return s.start + (s.end - s.start) * frac;
    return s.start * std::pow(s.end / s.start, frac);
}

void TrainConfig::validate() const {
    const auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("train." + field + ": " + why);
    };
    model.validate();
    if (group_size < 2) fail("group_size", "must be >= 2");
    if (batch_prompts < 1) fail("batch_prompts", "must be >= 1");
    if (micro_batch_prompts < 0) fail("micro_batch_prompts", "must be >= 0");
    if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1", "must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2", "must be in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps", "must be positive");
    if (max_grad_norm < 0.0) fail("max_grad_norm", "must be >= 0");
    if (kl.start < 0.0 || kl.end < 0.0) fail("kl", "coefficients must be >= 0");
    if (kl.horizon < 0) fail("kl.horizon", "must be >= 0");
    if (ref_refresh < 0) fail("ref_refresh", "must be >= 0");
    if (mc_rollouts < 1) fail("mc_rollouts", "must be >= 1");
    if (chunk_size < 1) fail("chunk_size", "must be >= 1");
    if (prover_n < 1) fail("prover_n", "must be >= 1");
    if (bon.n < 1) fail("bon_n", "must be >= 1");
    if (!(bon.clip > 0.0)) fail("weight_clip", "must be positive");
    if (!(bon.p_min > 0.0 && bon.p_min < bon.p_max && bon.p_max < 1.0)) fail("p_fail_clip", "need 0 < min < max < 1");
    if (sampling.temperature < 0.0) fail("temperature", "must be >= 0");
    if (!(sampling.top_p > 0.0 && sampling.top_p <= 1.0)) fail("top_p", "must be in (0, 1]");
    if (sampling.max_response_len < 1) fail("max_response_len", "must be >= 1");
    if (sampling.max_response_len > model.max_response_len) fail("max_response_len", "exceeds the model's response window");
    if (max_iterations < 0) fail("max_iterations", "must be >= 0");
    if (eval_interval < 1) fail("eval_interval", "must be >= 1");
    if (wall_clock_budget_s < 0.0) fail("wall_clock_budget_s", "must be >= 0");
}

TrainState::TrainState(PolicyParams p, ReferenceSnapshot ref, double lr)
    : params(std::move(p)), reference(std::move(ref)), learning_rate(lr) {
    adam.m.assign(params.size(), 0.0);
    adam.v.assign(params.size(), 0.0);
}

TrainState TrainState::initial(const TrainConfig& config) {
    auto params = init_params(config.model, derive_seed(config.seed, kInitSalt));
    auto ref = snapshot_reference(params, 0);
    return TrainState(std::move(params), std::move(ref), config.learning_rate);
}

// ---------------------------------------------------------------------------
// Metrics records

namespace {

nlohmann::ordered_json opt(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

nlohmann::ordered_json MetricsRecord::to_json() const {
    nlohmann::ordered_json j;
    j["iteration"] = iteration;
    j["mean_train_reward"] = opt(mean_train_reward);
    j["grad_norm"] = opt(grad_norm);
    j["kl"] = opt(kl);
    j["beta"] = opt(beta);
    j["nonzero_adv_fraction"] = opt(nonzero_adv_fraction);
    j["learning_rate"] = opt(learning_rate);
    auto& s = j["success"] = nlohmann::ordered_json::object();
    for (const auto& [tag, r] : success) {
        s[tag] = {{"greedy", r.greedy}, {"sampled", r.sampled}, {"count", r.count}};
    }
    if (wall_clock_s) j["wall_clock_s"] = *wall_clock_s;
    return j;
}

MetricsRecord MetricsRecord::from_json(const nlohmann::json& j) {
    MetricsRecord r;
    r.iteration = j.at("iteration").get<long>();
    r.mean_train_reward = opt_from(j, "mean_train_reward");
    r.grad_norm = opt_from(j, "grad_norm");
    r.kl = opt_from(j, "kl");
    r.beta = opt_from(j, "beta");
    r.nonzero_adv_fraction = opt_from(j, "nonzero_adv_fraction");
    r.learning_rate = opt_from(j, "learning_rate");
    if (j.contains("success")) {
        for (const auto& [tag, v] : j.at("success").items()) {
            r.success[tag] = {v.at("greedy").get<double>(), v.at("sampled").get<double>(), v.value("count", 0L)};
        }
    }
    r.wall_clock_s = opt_from(j, "wall_clock_s");
    return r;
}

// ---------------------------------------------------------------------------
// Coefficients

GroupCoefficients compute_coefficients(const TrainConfig& config, const TrainState& state, const TaskInstance& instance,
                                       std::span<const Trajectory> trajectories, std::span<const double> rewards,
                                       std::uint64_t seed, RolloutBackend* prover) {
    if (trajectories.size() != rewards.size()) throw ContractError("one reward per trajectory required");
    GroupCoefficients out;
    const auto vocab = config.model.vocab();
    const InstanceScorer scorer(instance, vocab);

    const auto broadcast = [&](std::span<const double> per_traj) {
        std::size_t nonzero = 0;
        for (std::size_t i = 0; i < trajectories.size(); ++i) {
            out.per_token.emplace_back(trajectories[i].response.size(), per_traj[i]);
            nonzero += per_traj[i] != 0.0 ? 1 : 0;
        }
        out.nonzero_fraction = static_cast<double>(nonzero) / static_cast<double>(trajectories.size());
    };

    switch (config.algorithm) {
        case Algorithm::drgrpo: {
            broadcast(group_advantages(rewards));
            break;
        }
        case Algorithm::bon: {
            broadcast(bon_coefficients(rewards, config.bon));
            break;
        }
        case Algorithm::vineppo:
        case Algorithm::progress: {
            const auto adv = group_advantages(rewards);
            // VinePPO values follow the current policy; the prover is Best-of-n of the reference.
            PolicyBackend internal(config.algorithm == Algorithm::vineppo ? state.params : state.reference.params(),
                                   config.sampling);
            RolloutBackend& backend =
                config.algorithm == Algorithm::progress && prover != nullptr ? *prover : internal;
            std::size_t steps = 0;
            std::size_t nonzero = 0;
            for (std::size_t i = 0; i < trajectories.size(); ++i) {
                const auto& t = trajectories[i];
                const auto s = derive_seed(seed, i);
                const auto report =
                    config.algorithm == Algorithm::vineppo
                        ? vineppo_advantages(t, &instance, scorer, backend, config.mc_rollouts, config.chunk_size, s)
                        : progress_coefficients(t, &instance, scorer, adv[i], backend, config.mc_rollouts,
                                                config.prover_n, config.progress_alpha, config.chunk_size, s,
                                                config.prover_mode);
                out.per_token.push_back(report.token_coefficients(static_cast<int>(t.response.size())));
                steps += report.step_advantages.size();
                for (double a : report.step_advantages) nonzero += a != 0.0 ? 1 : 0;
            }
            out.nonzero_fraction = steps ? static_cast<double>(nonzero) / static_cast<double>(steps) : 0.0;
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Update

namespace {

struct Group {
    TokenSeq prompt;
    std::vector<Trajectory> trajectories;
    std::vector<double> rewards;
    GroupCoefficients coeffs;
};

void adam_ascent(TrainState& state, std::span<const double> grad, const TrainConfig& config) {
    auto& a = state.adam;
    ++a.steps;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(a.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(a.steps));
    auto& theta = state.params.values;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        a.m[i] = b1 * a.m[i] + (1.0 - b1) * grad[i];
        a.v[i] = b2 * a.v[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = a.m[i] / c1;
        const double vhat = a.v[i] / c2;
        theta[i] += state.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
}

bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

MetricsRecord train_step(TrainState& state, std::span<const TaskInstance> batch, const TrainConfig& config,
                         const StepHooks* hooks) {
    if (batch.empty()) throw ContractError("empty training batch");
    if (state.params.config != config.model) throw ContractError("state and config disagree on the architecture");
    const auto vocab = config.model.vocab();
    const double beta = kl_schedule(state.iteration, config.kl);
    const auto B = batch.size();
    const auto G = static_cast<std::size_t>(config.group_size);
    const std::size_t micro = config.micro_batch_prompts > 0 ? static_cast<std::size_t>(config.micro_batch_prompts) : B;
    const std::size_t n = state.params.size();
    const PolicyParams* ref = &state.reference.params();

    AlignedDoubles grad(n);
    AlignedDoubles group_grad(n);
    for (int attempt = 0;; ++attempt) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double reward_sum = 0.0;
        double kl_sum = 0.0;
        double nonzero_sum = 0.0;

        for (std::size_t start = 0; start < B; start += micro) {
            const std::size_t stop = std::min(B, start + micro);
            // Sampling phase: parameters are read-only.
            std::vector<Group> groups;
            groups.reserve(stop - start);
            for (std::size_t b = start; b < stop; ++b) {
                Group g;
                g.prompt = vocab.encode_instance(batch[b]);
                g.trajectories = sample_group(state.params, g.prompt, {}, config.sampling, config.group_size,
                                              derive_seed(config.seed, kSampleSalt, state.iteration, b, attempt));
                for (auto& t : g.trajectories) {
                    t.set_reward(score_response(batch[b], vocab, t.response));
                    g.rewards.push_back(*t.reward());
                }
                if (hooks && hooks->on_rewards) hooks->on_rewards(g.rewards);
                if (hooks && hooks->coefficients) {
                    g.coeffs.per_token = hooks->coefficients(GroupView{batch[b], g.trajectories, g.rewards});
                    std::size_t nz = 0;
                    std::size_t total = 0;
                    for (const auto& c : g.coeffs.per_token) {
                        total += c.size();
                        nz += static_cast<std::size_t>(std::count_if(c.begin(), c.end(), [](double x) { return x != 0.0; }));
                    }
                    g.coeffs.nonzero_fraction = total ? static_cast<double>(nz) / static_cast<double>(total) : 0.0;
                } else {
                    g.coeffs = compute_coefficients(config, state, batch[b], g.trajectories, g.rewards,
                                                    derive_seed(config.seed, kValueSalt, state.iteration, b, attempt),
                                                    hooks ? hooks->prover : nullptr);
                }
                groups.push_back(std::move(g));
            }
            // Accumulation phase. Each group is summed on its own first so the
            // result does not depend on the micro-batch size.
            for (const auto& g : groups) {
                std::vector<TokenSeq> responses;
                responses.reserve(g.trajectories.size());
                for (const auto& t : g.trajectories) responses.push_back(t.response);
                std::fill(group_grad.begin(), group_grad.end(), 0.0);
                const auto stats = accumulate_group_gradient(state.params, ref, g.prompt, responses, g.coeffs.per_token,
                                                             -beta, group_grad);
                for (std::size_t i = 0; i < n; ++i) grad[i] += group_grad[i];
                for (double r : g.rewards) reward_sum += r;
                for (double k : stats.kl) kl_sum += k;
                nonzero_sum += g.coeffs.nonzero_fraction;
            }
        }

        const double scale = 1.0 / static_cast<double>(B * G);
        for (double& x : grad) x *= scale;
        if (hooks && hooks->on_gradient) hooks->on_gradient(grad, attempt);

        if (!all_finite(grad)) {
            if (attempt == 0) {
                state.learning_rate *= 0.5;
                std::cerr << "warning: non-finite gradient at iteration " << state.iteration + 1
                          << "; retrying with learning rate " << state.learning_rate << "\n";
                continue;
            }
            throw FatalTrainingError("non-finite gradient at iteration " + std::to_string(state.iteration + 1) +
                                     " after halving the learning rate");
        }

        double norm = std::sqrt(std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0));
        MetricsRecord rec;
        rec.grad_norm = norm;
        if (config.max_grad_norm > 0.0 && norm > config.max_grad_norm) {
            const double c = config.max_grad_norm / norm;
            for (double& x : grad) x *= c;
        }
        rec.learning_rate = state.learning_rate;
        adam_ascent(state, grad, config);
        ++state.iteration;
        if (config.ref_refresh > 0 && state.iteration % config.ref_refresh == 0) {
            state.reference = snapshot_reference(state.params, state.iteration);
        }

        rec.iteration = state.iteration;
        rec.mean_train_reward = reward_sum * scale;
        rec.kl = kl_sum * scale;
        rec.beta = beta;
        rec.nonzero_adv_fraction = nonzero_sum / static_cast<double>(B);
        return rec;
    }
}

// ---------------------------------------------------------------------------
// Evaluation and the run loop

EvalReport evaluate(const PolicyParams& params, const Dataset& testset, const SamplingSettings& settings,
                    std::uint64_t seed) {
    if (testset.empty()) throw ContractError("evaluation dataset is empty");
    const auto vocab = params.config.vocab();
    EvalReport report;
    std::map<std::string, std::pair<long, long>> hits;
    for (std::size_t i = 0; i < testset.size(); ++i) {
        const auto& inst = testset.instances[i];
        const auto prompt = vocab.encode_instance(inst);
        const auto g = greedy(params, prompt, settings.max_response_len);
        const auto s = sample(params, prompt, settings, derive_seed(seed, i));
        InstanceOutcome o{inst.difficulty, score_response(inst, vocab, g.response), score_response(inst, vocab, s.response)};
        auto& rates = report.by_tag[o.tag];
        ++rates.count;
        hits[o.tag].first += o.greedy;
        hits[o.tag].second += o.sampled;
        report.outcomes.push_back(std::move(o));
    }
    for (auto& [tag, r] : report.by_tag) {
        r.greedy = static_cast<double>(hits[tag].first) / static_cast<double>(r.count);
        r.sampled = static_cast<double>(hits[tag].second) / static_cast<double>(r.count);
    }
    return report;
}

TrainState run(const TrainConfig& config, const Dataset& train, const Dataset& test, const RunCallbacks& cb,
               std::optional<TrainState> resume) {
    config.validate();
    if (train.empty()) throw ConfigError("training dataset is empty");
    if (test.empty()) throw ConfigError("evaluation dataset is empty");
    TrainState state = resume ? std::move(*resume) : TrainState::initial(config);
    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    const auto emit = [&](MetricsRecord& rec) {
        if (config.record_wall_clock) rec.wall_clock_s = elapsed();
        if (cb.on_record) cb.on_record(rec);
    };
    const std::uint64_t eval_seed = derive_seed(config.seed, kEvalSalt);

    if (!resume) {
        MetricsRecord rec;
        rec.iteration = state.iteration;
        rec.success = evaluate(state.params, test, config.sampling, eval_seed).by_tag;
        emit(rec);
    }

    std::vector<TaskInstance> batch(static_cast<std::size_t>(config.batch_prompts));
    while (state.iteration < config.max_iterations) {
        if (config.wall_clock_budget_s > 0.0 && elapsed() >= config.wall_clock_budget_s) break;
        Rng rng(derive_seed(config.seed, kBatchSalt, state.iteration));
        for (auto& inst : batch) inst = train.instances[rng.below(train.size())];
        auto rec = train_step(state, batch, config, cb.hooks);
        if (state.iteration % config.eval_interval == 0 || state.iteration == config.max_iterations) {
            rec.success = evaluate(state.params, test, config.sampling, eval_seed).by_tag;
        }
        emit(rec);
        if (cb.on_checkpoint && cb.checkpoint_interval > 0 && state.iteration % cb.checkpoint_interval == 0) {
            cb.on_checkpoint(state);
        }
    }
    return state;
}

}  // namespace zrl
