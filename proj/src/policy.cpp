#include "zrl/policy.hpp"

#include <algorithm>
#include <cmath>

#include "transformer.hpp"
#include "zrl/errors.hpp"
#include "zrl/rng.hpp"

namespace zrl {

using detail::KvCache;
using detail::KvGrad;
using detail::Mat;
using detail::SegmentActs;
using detail::Transformer;

// ---------------------------------------------------------------------------
// ModelConfig

std::size_t ModelConfig::param_count() const { return detail::Layout(*this).total; }

void ModelConfig::validate() const {
    const auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("model." + field + ": " + why);
    };
    if (label_max < label_min) fail("label_max", "must be >= label_min");
    if (width < 1) fail("width", "must be positive");
    if (layers < 1) fail("layers", "must be positive");
    if (heads < 1) fail("heads", "must be positive");
    if (width % heads != 0) fail("heads", "must divide width");
    if (mlp_width < 1) fail("mlp_width", "must be positive");
    if (max_prompt_len < 4) fail("max_prompt_len", "must hold at least one query (4 tokens)");
    if (max_response_len < 1) fail("max_response_len", "must be positive");
    if (!(init_scale > 0.0)) fail("init_scale", "must be positive");
}

nlohmann::ordered_json ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["label_min"] = label_min;
    j["label_max"] = label_max;
    j["width"] = width;
    j["layers"] = layers;
    j["heads"] = heads;
    j["mlp_width"] = mlp_width;
    j["max_prompt_len"] = max_prompt_len;
    j["max_response_len"] = max_response_len;
    j["init_scale"] = init_scale;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.label_min = j.at("label_min").get<int>();
    c.label_max = j.at("label_max").get<int>();
    c.width = j.at("width").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_width = j.at("mlp_width").get<int>();
    c.max_prompt_len = j.at("max_prompt_len").get<int>();
    c.max_response_len = j.at("max_response_len").get<int>();
    c.init_scale = j.value("init_scale", c.init_scale);
    return c;
}

std::optional<std::string> ModelConfig::first_mismatch(const ModelConfig& o) const {
    if (label_min != o.label_min) return "label_min";
    if (label_max != o.label_max) return "label_max";
    if (width != o.width) return "width";
    if (layers != o.layers) return "layers";
    if (heads != o.heads) return "heads";
    if (mlp_width != o.mlp_width) return "mlp_width";
    if (max_prompt_len != o.max_prompt_len) return "max_prompt_len";
    if (max_response_len != o.max_response_len) return "max_response_len";
    return std::nullopt;
}

bool PolicyParams::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

PolicyParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    const detail::Layout layout(config);
    PolicyParams params{config, AlignedDoubles(layout.total, 0.0)};
    Rng rng(derive_seed(seed, 0x1417));
    auto& v = params.values;
    const auto fill_normal = [&](std::size_t off, std::size_t n, double stddev) {
        for (std::size_t i = 0; i < n; ++i) v[off + i] = stddev * rng.normal();
    };
    const auto fill = [&](std::size_t off, std::size_t n, double value) { std::fill_n(v.begin() + off, n, value); };

    const auto d = static_cast<std::size_t>(config.width);
    const auto h = static_cast<std::size_t>(config.mlp_width);
    const double resid = 1.0 / std::sqrt(2.0 * config.layers);
    fill_normal(layout.tok_emb, static_cast<std::size_t>(layout.vocab) * d, config.init_scale);
    fill_normal(layout.pos_emb, static_cast<std::size_t>(layout.context) * d, config.init_scale);
    for (const auto& lo : layout.layers) {
        fill(lo.ln1_g, d, 1.0);
        fill_normal(lo.wq, d * d, 1.0 / std::sqrt(static_cast<double>(d)));
        fill_normal(lo.wk, d * d, 1.0 / std::sqrt(static_cast<double>(d)));
        fill_normal(lo.wv, d * d, 1.0 / std::sqrt(static_cast<double>(d)));
        fill_normal(lo.wo, d * d, resid / std::sqrt(static_cast<double>(d)));
        fill(lo.ln2_g, d, 1.0);
        fill_normal(lo.w1, d * h, 1.0 / std::sqrt(static_cast<double>(d)));
        fill_normal(lo.w2, h * d, resid / std::sqrt(static_cast<double>(h)));
    }
    fill(layout.lnf_g, d, 1.0);
    return params;
}

ReferenceSnapshot snapshot_reference(const PolicyParams& params, long iteration) {
    return ReferenceSnapshot(params, iteration);
}

void Trajectory::set_reward(double r) {
    if (reward_) throw ContractError("trajectory reward already set");
    reward_ = r;
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

int prompt_start(const ModelConfig& cfg, std::size_t prompt_len) {
    if (prompt_len == 0) throw ContractError("empty prompt");
    if (static_cast<int>(prompt_len) > cfg.max_prompt_len) {
        throw ContractError("prompt of " + std::to_string(prompt_len) + " tokens exceeds max_prompt_len " +
                            std::to_string(cfg.max_prompt_len));
    }
    return cfg.max_prompt_len - static_cast<int>(prompt_len);
}

const Transformer& transformer_for(const ModelConfig& cfg) {
    // One engine per thread and architecture; construction only computes offsets.
    thread_local std::vector<std::unique_ptr<Transformer>> engines;
    for (const auto& e : engines) {
        if (e->config() == cfg) return *e;
    }
    engines.push_back(std::make_unique<Transformer>(cfg));
    return *engines.back();
}

std::size_t index_in_support(std::span<const Token> support, Token t) {
    const auto it = std::lower_bound(support.begin(), support.end(), t);
    if (it == support.end() || *it != t) {
        throw ContractError("token " + std::to_string(t) + " has zero probability under this prompt");
    }
    return static_cast<std::size_t>(it - support.begin());
}

}  // namespace

DecodeSession::DecodeSession(const PolicyParams& params, std::span<const Token> prompt)
    : DecodeSession(params, prompt, {}) {}

DecodeSession::DecodeSession(const PolicyParams& params, std::span<const Token> prompt,
                             std::span<const Token> response_prefix)
    : params_(&params) {
    const auto& cfg = params.config;
    const int start = prompt_start(cfg, prompt.size());
    if (static_cast<int>(response_prefix.size()) > cfg.max_response_len) {
        throw ContractError("response prefix longer than max_response_len");
    }
    support_ = cfg.vocab().output_support(prompt);
    cache_ = std::make_unique<detail::KvCache>(cfg.layers, cfg.width, static_cast<int>(prompt.size()) + cfg.max_response_len);

    TokenSeq tokens(prompt.begin(), prompt.end());
    for (Token t : response_prefix) {
        (void)index_in_support(support_, t);
        tokens.push_back(t);
    }
    const auto& net = transformer_for(cfg);
    Mat f, z;
    net.forward(params.values.data(), tokens, start, *cache_, nullptr, f);
    net.logits(params.values.data(), f.bottomRows(1), support_, z);
    logits_.assign(z.data(), z.data() + z.size());
    response_len_ = static_cast<int>(response_prefix.size());
}

DecodeSession::DecodeSession(const DecodeSession& o)
    : params_(o.params_),
      support_(o.support_),
      cache_(std::make_unique<detail::KvCache>(*o.cache_)),
      logits_(o.logits_),
      response_len_(o.response_len_) {}

DecodeSession& DecodeSession::operator=(const DecodeSession& o) {
    if (this != &o) {
        params_ = o.params_;
        support_ = o.support_;
        cache_ = std::make_unique<detail::KvCache>(*o.cache_);
        logits_ = o.logits_;
        response_len_ = o.response_len_;
    }
    return *this;
}

DecodeSession::DecodeSession(DecodeSession&&) noexcept = default;
DecodeSession& DecodeSession::operator=(DecodeSession&&) noexcept = default;
DecodeSession::~DecodeSession() = default;

std::vector<double> DecodeSession::log_probs() const {
    const double mx = *std::max_element(logits_.begin(), logits_.end());
    double sum = 0.0;
    for (double z : logits_) sum += std::exp(z - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(logits_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits_[i] - lse;
    return out;
}

std::size_t DecodeSession::support_index(Token t) const { return index_in_support(support_, t); }

void DecodeSession::push(Token t) {
    const auto& cfg = params_->config;
    if (response_len_ >= cfg.max_response_len) throw ContractError("response already at max_response_len");
    (void)support_index(t);
    const auto& net = transformer_for(cfg);
    Mat f, z;
    const Token tok[1] = {t};
    net.forward(params_->values.data(), tok, cfg.max_prompt_len + response_len_, *cache_, nullptr, f);
    net.logits(params_->values.data(), f, support_, z);
    logits_.assign(z.data(), z.data() + z.size());
    ++response_len_;
}

// ---------------------------------------------------------------------------
// Scoring and gradients

namespace {

// Tail segment for a response: the last prompt token followed by every
// response token but the final one. Row t of its output predicts response[t].
TokenSeq tail_tokens(std::span<const Token> prompt, std::span<const Token> response) {
    TokenSeq tail;
    tail.reserve(response.size());
    tail.push_back(prompt.back());
    tail.insert(tail.end(), response.begin(), response.end() - 1);
    return tail;
}

}  // namespace

std::vector<double> response_log_probs(const PolicyParams& params, std::span<const Token> prompt,
                                       std::span<const Token> response) {
    const auto& cfg = params.config;
    const int start = prompt_start(cfg, prompt.size());
    if (response.empty()) return {};
    if (static_cast<int>(response.size()) > cfg.max_response_len) throw ContractError("response longer than max_response_len");
    const auto support = cfg.vocab().output_support(prompt);
    const auto& net = transformer_for(cfg);
    KvCache cache(cfg.layers, cfg.width, static_cast<int>(prompt.size() + response.size()));
    Mat f, z;
    if (prompt.size() > 1) net.forward(params.values.data(), prompt.first(prompt.size() - 1), start, cache, nullptr, f);
    const auto tail = tail_tokens(prompt, response);
    net.forward(params.values.data(), tail, cfg.max_prompt_len - 1, cache, nullptr, f);
    net.logits(params.values.data(), f, support, z);
    const Mat lp = detail::log_softmax_rows(z);
    std::vector<double> out(response.size());
    for (std::size_t t = 0; t < response.size(); ++t) {
        out[t] = lp(static_cast<int>(t), static_cast<int>(index_in_support(support, response[t])));
    }
    return out;
}

GroupGradientStats accumulate_group_gradient(const PolicyParams& params, const PolicyParams* ref,
                                             std::span<const Token> prompt, std::span<const TokenSeq> responses,
                                             std::span<const std::vector<double>> coeffs, double kl_weight,
                                             std::span<double> grad) {
    const auto& cfg = params.config;
    if (grad.size() != params.values.size()) throw ContractError("gradient buffer size mismatch");
    if (coeffs.size() != responses.size()) throw ContractError("one coefficient vector per response required");
    if (ref && ref->config != cfg) throw ContractError("reference policy has a different architecture");
    const int start = prompt_start(cfg, prompt.size());
    const auto support = cfg.vocab().output_support(prompt);
    const auto& net = transformer_for(cfg);
    const double* p = params.values.data();
    const int S = static_cast<int>(prompt.size()) - 1;

    GroupGradientStats stats;
    if (ref) stats.kl.assign(responses.size(), 0.0);

    KvCache cache(cfg.layers, cfg.width, S + cfg.max_response_len);
    SegmentActs prefix_acts;
    Mat f, z, df;
    if (S > 0) net.forward(p, prompt.first(static_cast<std::size_t>(S)), start, cache, &prefix_acts, f);

    std::optional<KvCache> ref_cache;
    if (ref) {
        ref_cache.emplace(cfg.layers, cfg.width, S + cfg.max_response_len);
        if (S > 0) net.forward(ref->values.data(), prompt.first(static_cast<std::size_t>(S)), start, *ref_cache, nullptr, f);
    }

    KvGrad dkv(cfg.layers, S, cfg.width);
    bool any_backward = false;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const auto& resp = responses[i];
        const int L = static_cast<int>(resp.size());
        if (L == 0) continue;
        if (L > cfg.max_response_len) throw ContractError("response longer than max_response_len");
        const auto& c = coeffs[i];
        if (c.size() != resp.size()) {
            throw ContractError("coefficient count " + std::to_string(c.size()) + " does not match response length " +
                                std::to_string(resp.size()));
        }
        const bool zero_coeffs = std::all_of(c.begin(), c.end(), [](double x) { return x == 0.0; });
        if (zero_coeffs && !ref) continue;

        const auto tail = tail_tokens(prompt, resp);
        SegmentActs acts;
        net.forward(p, tail, cfg.max_prompt_len - 1, cache, &acts, f);
        net.logits(p, f, support, z);
        const Mat lp = detail::log_softmax_rows(z);
        const Mat probs = lp.array().exp();
        Mat dz = Mat::Zero(L, static_cast<int>(support.size()));
        for (int t = 0; t < L; ++t) {
            const auto idx = static_cast<int>(index_in_support(support, resp[t]));
            stats.objective += c[t] * lp(t, idx);
            if (c[t] != 0.0) {
                dz.row(t) -= c[t] * probs.row(t);
                dz(t, idx) += c[t];
            }
        }
        if (ref) {
            Mat fr, zr;
            net.forward(ref->values.data(), tail, cfg.max_prompt_len - 1, *ref_cache, nullptr, fr);
            ref_cache->truncate(S, cfg.width);
            net.logits(ref->values.data(), fr, support, zr);
            const Mat lq = detail::log_softmax_rows(zr);
            const Mat diff = lp - lq;
            double kl_sum = 0.0;
            for (int t = 0; t < L; ++t) {
                const double kl_t = (probs.row(t).array() * diff.row(t).array()).sum();
                kl_sum += kl_t;
                if (kl_weight != 0.0) {
                    dz.row(t) += (kl_weight / L) * (probs.row(t).array() * (diff.row(t).array() - kl_t)).matrix();
                }
            }
            stats.kl[i] = kl_sum / L;
        }
        if (zero_coeffs && kl_weight == 0.0) {
            cache.truncate(S, cfg.width);
            continue;
        }
        net.logits_backward(p, f, support, dz, df, grad.data());
        net.backward(p, acts, cache, df, dkv, grad.data());
        cache.truncate(S, cfg.width);
        any_backward = true;
    }
    if (any_backward && S > 0) {
        const Mat zero = Mat::Zero(S, cfg.width);
        net.backward(p, prefix_acts, cache, zero, dkv, grad.data());
    }
    return stats;
}

namespace {

std::vector<double> broadcast_coeffs(std::span<const double> coeffs, std::size_t len) {
    if (coeffs.size() == 1) return std::vector<double>(len, coeffs[0]);
    if (coeffs.size() != len) {
        throw ContractError("coefficient count " + std::to_string(coeffs.size()) + " does not match response length " +
                            std::to_string(len));
    }
    return {coeffs.begin(), coeffs.end()};
}

}  // namespace

GradientResult logprob_grad(const PolicyParams& params, const Trajectory& traj, std::span<const double> coeffs) {
    GradientResult out;
    out.gradient.assign(params.size(), 0.0);
    const std::vector<TokenSeq> responses{traj.response};
    const std::vector<std::vector<double>> c{broadcast_coeffs(coeffs, traj.response.size())};
    out.value = accumulate_group_gradient(params, nullptr, traj.prompt, responses, c, 0.0, out.gradient).objective;
    return out;
}

GradientResult token_kl(const PolicyParams& params, const ReferenceSnapshot& ref, const Trajectory& traj) {
    GradientResult out;
    out.gradient.assign(params.size(), 0.0);
    const std::vector<TokenSeq> responses{traj.response};
    const std::vector<std::vector<double>> c{std::vector<double>(traj.response.size(), 0.0)};
    const auto stats = accumulate_group_gradient(params, &ref.params(), traj.prompt, responses, c, 1.0, out.gradient);
    out.value = stats.kl.empty() ? 0.0 : stats.kl[0];
    return out;
}

}  // namespace zrl
