#include "zrl/commands.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "zrl/checkpoint.hpp"
#include "zrl/errors.hpp"
#include "zrl/metrics.hpp"
#include "zrl/plot.hpp"

namespace zrl {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTrainDataSalt = 0xda7a01;
constexpr std::uint64_t kTestDataSalt = 0xda7a02;

Dataset read_dataset_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read dataset " + path.string());
    try {
        return read_dataset(in);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void print_rates(std::ostream& out, const std::map<std::string, SuccessRates>& rates) {
    out << std::left << std::setw(10) << "difficulty" << std::right << std::setw(8) << "count" << std::setw(10)
        << "greedy" << std::setw(10) << "sampled" << "\n";
    for (const auto& [tag, r] : rates) {
        out << std::left << std::setw(10) << tag << std::right << std::setw(8) << r.count << std::fixed
            << std::setprecision(4) << std::setw(10) << r.greedy << std::setw(10) << r.sampled << "\n";
    }
    out.unsetf(std::ios::fixed);
}

// Checks that every instance fits the model's vocabulary and prompt window.
void require_fits(const Dataset& data, const ModelConfig& model, const std::string& what) {
    for (const auto& inst : data.instances) {
        for (const auto& [a, b] : inst.edges) {
            for (Label l : {a, b}) {
                if (l < model.label_min || l > model.label_max) {
                    throw ConfigError(what + ": label " + std::to_string(l) + " outside model.label_min..label_max [" +
                                      std::to_string(model.label_min) + ", " + std::to_string(model.label_max) + "]");
                }
            }
        }
        const auto need = static_cast<int>(3 * inst.edges.size() + 4);
        if (need > model.max_prompt_len) {
            throw ConfigError(what + ": " + inst.difficulty + " prompts need " + std::to_string(need) +
                              " tokens, more than model.max_prompt_len " + std::to_string(model.max_prompt_len));
        }
    }
}

}  // namespace

int guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

Dataset make_split(const std::vector<MixtureComponent>& mix, std::size_t size, std::uint64_t seed, Split split) {
    return build_mixture(mix, size, derive_seed(seed, split == Split::train ? kTrainDataSalt : kTestDataSalt));
}

Dataset load_train_set(const ExperimentConfig& c) {
    const auto& m = c.train.model;
    Dataset d = c.data.train_file.empty()
                    ? make_split(parse_mixture(c.data.train_mix, m.label_min, m.label_max),
                                 static_cast<std::size_t>(c.data.train_size), c.train.seed, Split::train)
                    : read_dataset_file(c.resolve(c.data.train_file));
    require_fits(d, m, "training set");
    return d;
}

Dataset load_test_set(const ExperimentConfig& c) {
    const auto& m = c.train.model;
    Dataset d = c.data.test_file.empty()
                    ? make_split(parse_mixture(c.effective_test_mix(), m.label_min, m.label_max),
                                 static_cast<std::size_t>(c.data.test_size), c.train.seed, Split::test)
                    : read_dataset_file(c.resolve(c.data.test_file));
    require_fits(d, m, "test set");
    return d;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const GenDataOptions& o, std::ostream& out) {
    if (o.n < 1) throw ConfigError("--n must be >= 1");
    const long test_n = o.test_n < 0 ? o.n : o.test_n;
    const auto mix = parse_mixture(o.mix, o.label_min, o.label_max);
    for (const auto& c : mix) c.spec.validate();
    const fs::path train_path = o.out_dir / "train.jsonl";
    const fs::path test_path = o.out_dir / "test.jsonl";
    for (const auto& p : {train_path, test_path}) {
        if (fs::exists(p) && !o.force) throw ConfigError(p.string() + " exists; pass --force to overwrite");
    }
    fs::create_directories(o.out_dir);

    const auto write = [&](const fs::path& path, const Dataset& d) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + path.string());
        write_dataset(f, d);
        std::map<std::string, long> counts;
        for (const auto& inst : d.instances) ++counts[inst.difficulty];
        out << path.string() << ": " << d.size() << " instances";
        for (const auto& [tag, n] : counts) out << "  " << tag << "=" << n;
        out << "\n";
    };
    write(train_path, make_split(mix, static_cast<std::size_t>(o.n), o.seed, Split::train));
    if (test_n > 0) write(test_path, make_split(mix, static_cast<std::size_t>(test_n), o.seed, Split::test));
    return kExitOk;
}

ExperimentConfig resolve_experiment(const TrainOptions& o) {
    ExperimentConfig config;
    if (!o.preset.empty()) {
        const fs::path p = o.preset_dir / (o.preset + ".cfg");
        if (!fs::exists(p)) throw ConfigError("unknown preset '" + o.preset + "' (looked for " + p.string() + ")");
        config = load_config(p);
    } else if (!o.config_path.empty()) {
        config = load_config(o.config_path);
    } else {
        throw ConfigError("train needs a config file or --preset");
    }
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
        set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    apply_env_overrides(config);
    if (!o.out_dir.empty()) config.output_dir = o.out_dir.string();
    if (config.output_dir.empty()) config.output_dir = (fs::path("runs") / config.name).string();
    config.validate();
    return config;
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
    const auto config = resolve_experiment(o);
    const auto train = load_train_set(config);
    const auto test = load_test_set(config);

    std::optional<TrainState> init;
    if (!config.init_checkpoint.empty()) {
        auto ck = load_checkpoint(config.resolve(config.init_checkpoint));
        require_compatible(config.train.model, ck.params.config);
        auto ref = snapshot_reference(ck.params, 0);
        init.emplace(std::move(ck.params), std::move(ref), config.train.learning_rate);
    }

    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "config.cfg", std::ios::trunc);
        cfg << dump_config(config);
    }
    MetricsWriter metrics(dir / "metrics.jsonl");

    std::unique_ptr<ExternalBackend> prover;
    StepHooks hooks;
    if (!config.backend.prover_url.empty()) {
        auto ep = parse_endpoint(config.backend.prover_url);
        ep.timeout = std::chrono::milliseconds(config.backend.timeout_ms);
        ep.retries = config.backend.retries;
        prover = std::make_unique<ExternalBackend>(ep, config.train.sampling, config.train.model.vocab(),
                                                   config.backend.max_tokens);
        hooks.prover = prover.get();
    }

    std::map<std::string, SuccessRates> last_eval;
    RunCallbacks cb;
    cb.hooks = &hooks;
    cb.checkpoint_interval = config.checkpoint_interval;
    cb.on_record = [&](const MetricsRecord& r) {
        metrics.write(r);
        if (!r.success.empty()) last_eval = r.success;
    };
    cb.on_checkpoint = [&](const TrainState& s) {
        save_checkpoint(dir / ("checkpoint-" + std::to_string(s.iteration) + ".bin"), s.params, s.iteration);
    };

    // With an initial checkpoint the run still starts with an evaluation record.
    TrainState final_state = [&] {
        if (!init) return run(config.train, train, test, cb);
        MetricsRecord first;
        first.iteration = 0;
        first.success = evaluate(init->params, test, config.train.sampling,
                                 derive_seed(config.train.seed, 0xe7a1)).by_tag;
        cb.on_record(first);
        return run(config.train, train, test, cb, std::move(init));
    }();
    save_checkpoint(dir / "final.bin", final_state.params, final_state.iteration);

    out << "run " << config.name << ": " << final_state.iteration << " iterations, outputs in " << dir.string() << "\n";
    out << "final success rates:\n";
    print_rates(out, last_eval);
    return kExitOk;
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
    const auto ck = load_checkpoint(o.checkpoint);
    if (!o.config_path.empty()) require_compatible(load_config(o.config_path).train.model, ck.params.config);
    std::ifstream in(o.dataset);
    if (!in) throw ConfigError("cannot read dataset " + o.dataset.string());
    const Dataset data = read_dataset(in);
    if (data.empty()) throw ConfigError(o.dataset.string() + ": dataset is empty; nothing to evaluate");
    require_fits(data, ck.params.config, o.dataset.string());

    SamplingSettings s;
    s.temperature = o.temperature;
    s.top_p = o.top_p;
    s.max_response_len = o.max_response_len > 0 ? o.max_response_len : ck.params.config.max_response_len;
    const auto report = evaluate(ck.params, data, s, o.seed);

    nlohmann::ordered_json j;
    j["checkpoint"] = o.checkpoint.string();
    j["dataset"] = o.dataset.string();
    j["iteration"] = ck.iteration;
    auto& rates = j["success"] = nlohmann::ordered_json::object();
    for (const auto& [tag, r] : report.by_tag) rates[tag] = {{"greedy", r.greedy}, {"sampled", r.sampled}, {"count", r.count}};
    auto& per = j["instances"] = nlohmann::ordered_json::array();
    for (const auto& x : report.outcomes) per.push_back({{"difficulty", x.tag}, {"greedy", x.greedy}, {"sampled", x.sampled}});
    const fs::path report_path = o.out.empty() ? fs::path(o.checkpoint.string() + ".eval.json") : o.out;
    std::ofstream f(report_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + report_path.string());
    f << j.dump(2) << "\n";

    print_rates(out, report.by_tag);
    out << "report written to " << report_path.string() << "\n";
    return kExitOk;
}

int cmd_plot(const PlotCommandOptions& o, std::ostream& out, std::ostream& err) {
    if (o.files.empty()) throw ConfigError("plot needs at least one metrics file");
    if (!o.labels.empty() && o.labels.size() != o.files.size()) {
        throw ConfigError("got " + std::to_string(o.labels.size()) + " labels for " + std::to_string(o.files.size()) +
                          " files");
    }
    PlotOptions po;
    po.panel = parse_panel(o.panel);
    po.tag = o.tag;
    if (o.decoding != "sampled" && o.decoding != "greedy") throw ConfigError("--decoding must be sampled or greedy");
    po.decoding = o.decoding;
    po.title = o.title;

    std::vector<PlotSeries> series;
    std::size_t warnings = 0;
    for (std::size_t i = 0; i < o.files.size(); ++i) {
        auto mf = read_metrics(o.files[i]);
        for (const auto& w : mf.warnings) err << "warning: " << w << "\n";
        warnings += mf.warnings.size();
        series.push_back({o.labels.empty() ? o.files[i].parent_path().filename().string() : o.labels[i],
                          std::move(mf.records)});
        if (series.back().label.empty()) series.back().label = o.files[i].stem().string();
    }
    std::ofstream f(o.out, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + o.out.string());
    f << render_svg(series, po);
    out << "wrote " << o.out.string() << " (" << series.size() << " series, " << warnings << " warnings)\n";
    return kExitOk;
}

}  // namespace zrl
