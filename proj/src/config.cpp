#include "zrl/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "zrl/errors.hpp"

namespace zrl {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw ConfigError(std::string(key) + ": expected " + std::string(expected) + ", got '" + std::string(value) + "'");
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) bad_value(key, v, std::is_integral_v<T> ? "an integer" : "a number");
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, "true or false");
}

std::string fmt_double(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

struct Entry {
    ConfigKey info;
    std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define ZRL_INT(KEY, FIELD, DOC)                                                                          \
    Entry {                                                                                               \
        {KEY, DOC}, [](ExperimentConfig& c, std::string_view k, std::string_view v) {                     \
            c.FIELD = parse_number<std::remove_reference_t<decltype(c.FIELD)>>(k, v);                     \
        },                                                                                                \
            [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                             \
    }
#define ZRL_REAL(KEY, FIELD, DOC)                                                                         \
    Entry {                                                                                               \
        {KEY, DOC}, [](ExperimentConfig& c, std::string_view k, std::string_view v) {                     \
            c.FIELD = parse_number<double>(k, v);                                                         \
        },                                                                                                \
            [](const ExperimentConfig& c) { return fmt_double(c.FIELD); }                                 \
    }
#define ZRL_BOOL(KEY, FIELD, DOC)                                                                         \
    Entry {                                                                                               \
        {KEY, DOC}, [](ExperimentConfig& c, std::string_view k, std::string_view v) {                     \
            c.FIELD = parse_bool(k, v);                                                                   \
        },                                                                                                \
            [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); }             \
    }
#define ZRL_TEXT(KEY, FIELD, DOC)                                                                         \
    Entry {                                                                                               \
        {KEY, DOC}, [](ExperimentConfig& c, std::string_view, std::string_view v) { c.FIELD = std::string(v); }, \
            [](const ExperimentConfig& c) { return c.FIELD; }                                             \
    }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        ZRL_TEXT("run.name", name, "run name; default output directory is runs/<name>"),
        ZRL_TEXT("run.output_dir", output_dir, "output directory for metrics, checkpoints and the config copy"),
        ZRL_INT("run.checkpoint_interval", checkpoint_interval, "iterations between checkpoints (0: final only)"),
        ZRL_TEXT("run.init_checkpoint", init_checkpoint, "start from these parameters instead of a fresh init"),

        Entry{{"train.algorithm", "drgrpo | vineppo | progress | bon"},
              [](ExperimentConfig& c, std::string_view, std::string_view v) { c.train.algorithm = parse_algorithm(v); },
              [](const ExperimentConfig& c) { return to_string(c.train.algorithm); }},
        ZRL_INT("train.seed", train.seed, "master seed (ZRL_SEED overrides)"),
        ZRL_INT("train.group_size", train.group_size, "samples per prompt (G)"),
        ZRL_INT("train.batch_prompts", train.batch_prompts, "prompts per iteration"),
        ZRL_INT("train.micro_batch_prompts", train.micro_batch_prompts, "prompts per accumulation pass (0: all)"),
        ZRL_REAL("train.learning_rate", train.learning_rate, "Adam step size"),
        ZRL_REAL("train.adam_beta1", train.adam_beta1, "Adam first-moment decay"),
        ZRL_REAL("train.adam_beta2", train.adam_beta2, "Adam second-moment decay"),
        ZRL_REAL("train.adam_eps", train.adam_eps, "Adam epsilon"),
        ZRL_REAL("train.max_grad_norm", train.max_grad_norm, "clip the ascent direction to this norm (0: off)"),
        ZRL_REAL("train.kl_start", train.kl.start, "KL coefficient at iteration 0"),
        ZRL_REAL("train.kl_end", train.kl.end, "KL coefficient from kl_horizon on"),
        ZRL_INT("train.kl_horizon", train.kl.horizon, "iterations of geometric decay (0: constant kl_start)"),
        ZRL_INT("train.ref_refresh", train.ref_refresh, "iterations between reference refreshes (0: never)"),
        ZRL_INT("train.mc_rollouts", train.mc_rollouts, "Monte-Carlo rollouts per value estimate (K)"),
        ZRL_INT("train.chunk_size", train.chunk_size, "tokens per step chunk"),
        ZRL_REAL("train.progress_alpha", train.progress_alpha, "weight of the prover advantage"),
        ZRL_INT("train.prover_n", train.prover_n, "best-of-n of the prover policy"),
        Entry{{"train.prover_mode", "transform | batch_max"},
              [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                  if (v == "transform") c.train.prover_mode = BonValueMode::transform;
                  else if (v == "batch_max") c.train.prover_mode = BonValueMode::batch_max;
                  else bad_value(k, v, "transform or batch_max");
              },
              [](const ExperimentConfig& c) {
                  return std::string(c.train.prover_mode == BonValueMode::transform ? "transform" : "batch_max");
              }},
        ZRL_INT("train.bon_n", train.bon.n, "N of the best-of-N objective"),
        ZRL_REAL("train.weight_clip", train.bon.clip, "clip bound for the best-of-N weights"),
        ZRL_REAL("train.p_fail_min", train.bon.p_min, "lower clip of the failure probability"),
        ZRL_REAL("train.p_fail_max", train.bon.p_max, "upper clip of the failure probability"),
        Entry{{"train.discount", "reward discount; only 1 is supported"},
              [](ExperimentConfig&, std::string_view k, std::string_view v) {
                  if (parse_number<double>(k, v) != 1.0) bad_value(k, v, "1");
              },
              [](const ExperimentConfig&) { return std::string("1"); }},
        ZRL_INT("train.max_iterations", train.max_iterations, "training iterations"),
        ZRL_INT("train.eval_interval", train.eval_interval, "iterations between evaluations"),
        ZRL_REAL("train.wall_clock_budget_s", train.wall_clock_budget_s, "stop after this many seconds (0: no limit)"),
        ZRL_BOOL("train.record_wall_clock", train.record_wall_clock, "add wall_clock_s to metrics records"),

        ZRL_REAL("sampling.temperature", train.sampling.temperature, "sampling temperature (0: greedy)"),
        ZRL_REAL("sampling.top_p", train.sampling.top_p, "nucleus mass"),
        ZRL_INT("sampling.max_response_len", train.sampling.max_response_len, "response tokens per sample"),

        ZRL_INT("model.label_min", train.model.label_min, "smallest node label"),
        ZRL_INT("model.label_max", train.model.label_max, "largest node label"),
        ZRL_INT("model.width", train.model.width, "embedding width"),
        ZRL_INT("model.layers", train.model.layers, "transformer blocks"),
        ZRL_INT("model.heads", train.model.heads, "attention heads"),
        ZRL_INT("model.mlp_width", train.model.mlp_width, "hidden units of each MLP"),
        ZRL_INT("model.max_prompt_len", train.model.max_prompt_len, "prompt window in tokens"),
        ZRL_INT("model.max_response_len", train.model.max_response_len, "response window in tokens"),
        ZRL_REAL("model.init_scale", train.model.init_scale, "std of the embedding init"),

        ZRL_TEXT("data.train_mix", data.train_mix, "training mixture, e.g. d2p2:0.5,d5p5:0.5"),
        ZRL_INT("data.train_size", data.train_size, "training instances"),
        ZRL_TEXT("data.test_mix", data.test_mix, "held-out mixture (default: train_mix)"),
        ZRL_INT("data.test_size", data.test_size, "held-out instances"),
        ZRL_TEXT("data.train_file", data.train_file, "JSONL training set (overrides train_mix)"),
        ZRL_TEXT("data.test_file", data.test_file, "JSONL held-out set (overrides test_mix)"),

        ZRL_TEXT("backend.prover_url", backend.prover_url, "http://host:port/generate of an external prover"),
        ZRL_INT("backend.timeout_ms", backend.timeout_ms, "request timeout"),
        ZRL_INT("backend.retries", backend.retries, "retries after a failed request"),
        ZRL_INT("backend.max_tokens", backend.max_tokens, "max_tokens sent to the external backend"),
    };
    return table;
}

#undef ZRL_INT
#undef ZRL_REAL
#undef ZRL_BOOL
#undef ZRL_TEXT

const Entry& find_entry(std::string_view key) {
    for (const auto& e : entries()) {
        if (e.info.key == key) return e;
    }
    throw ConfigError("unknown key '" + std::string(key) + "'");
}

}  // namespace

std::filesystem::path ExperimentConfig::resolve(const std::string& file) const {
    const std::filesystem::path p(file);
    return p.is_absolute() ? p : base_dir / p;
}

void ExperimentConfig::validate() const {
    train.validate();
    const auto label_min = train.model.label_min;
    const auto label_max = train.model.label_max;
    const auto check_file = [&](const char* key, const std::string& file) {
        if (!file.empty() && !std::filesystem::exists(resolve(file))) {
            throw ConfigError(std::string(key) + ": file not found: " + resolve(file).string());
        }
    };
    check_file("data.train_file", data.train_file);
    check_file("data.test_file", data.test_file);
    check_file("run.init_checkpoint", init_checkpoint);
    const auto check_mix = [&](const char* key, const std::string& mix) {
        try {
            for (const auto& c : parse_mixture(mix, label_min, label_max)) {
                c.spec.validate();
                if (3 * c.spec.edge_count() + 4 > train.model.max_prompt_len) {
                    throw ConfigError(c.spec.tag() + " prompts need " + std::to_string(3 * c.spec.edge_count() + 4) +
                                      " tokens; model.max_prompt_len is " + std::to_string(train.model.max_prompt_len));
                }
            }
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(key) + ": " + e.what());
        }
    };
    if (data.train_file.empty()) {
        check_mix("data.train_mix", data.train_mix);
        if (data.train_size < 1) throw ConfigError("data.train_size: must be >= 1");
    }
    if (data.test_file.empty()) {
        check_mix("data.test_mix", effective_test_mix());
        if (data.test_size < 1) throw ConfigError("data.test_size: must be >= 1");
    }
    if (checkpoint_interval < 0) throw ConfigError("run.checkpoint_interval: must be >= 0");
    if (!backend.prover_url.empty()) (void)parse_endpoint(backend.prover_url);
    if (backend.timeout_ms < 1) throw ConfigError("backend.timeout_ms: must be positive");
    if (backend.retries < 0) throw ConfigError("backend.retries: must be >= 0");
}

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> out;
        for (const auto& e : entries()) out.push_back(e.info);
        return out;
    }();
    return keys;
}

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
    find_entry(key).set(config, key, trim(value));
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir, std::string_view origin) {
    ExperimentConfig config;
    config.base_dir = base_dir;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path(),
                        path.string());
}

std::string dump_config(const ExperimentConfig& config) {
    std::string out;
    std::string section;
    for (const auto& e : entries()) {
        const auto dot = e.info.key.find('.');
        const auto sec = e.info.key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out += "\n";
            section = sec;
        }
        out += e.info.key + " = " + e.get(config) + "\n";
    }
    return out;
}

void apply_env_overrides(ExperimentConfig& config) {
    if (const char* s = std::getenv("ZRL_SEED"); s != nullptr && *s != '\0') {
        try {
            set_config_value(config, "train.seed", s);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("ZRL_SEED: ") + e.what());
        }
    }
}

}  // namespace zrl
