// Python bindings for the task generator, estimators, policy and commands.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "zrl/checkpoint.hpp"
#include "zrl/commands.hpp"
#include "zrl/errors.hpp"
#include "zrl/estimators.hpp"
#include "zrl/metrics.hpp"
#include "zrl/trainer.hpp"
#include "zrl/vocab.hpp"

namespace py = pybind11;
using namespace zrl;

namespace {

py::dict trajectory_dict(const Trajectory& t) {
    py::dict d;
    d["prompt"] = t.prompt;
    d["response"] = t.response;
    d["logprobs"] = t.logprobs;
    d["truncated"] = t.truncated;
    return d;
}

Trajectory trajectory_of(const TokenSeq& prompt, const TokenSeq& response) {
    Trajectory t;
    t.prompt = prompt;
    t.response = response;
    return t;
}

// Runs a command, raising on a nonzero exit with the captured message.
py::str run_command(const std::function<int(std::ostream&)>& body) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = guarded([&] { return body(out); }, err);
    if (code == kExitConfig) throw ConfigError(err.str());
    if (code != kExitOk) throw std::runtime_error(err.str());
    return out.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Star-graph RL lab: task generation, estimators, tiny policy and training";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<EncodingError>(m, "EncodingError", PyExc_ValueError);
    py::register_exception<BudgetError>(m, "BudgetError", PyExc_RuntimeError);
    py::register_exception<TransportError>(m, "TransportError", PyExc_RuntimeError);
    py::register_exception<FatalTrainingError>(m, "FatalTrainingError", PyExc_RuntimeError);

    // Tasks
    py::class_<TaskInstance>(m, "TaskInstance")
        .def_readonly("edges", &TaskInstance::edges)
        .def_readonly("source", &TaskInstance::source)
        .def_readonly("destination", &TaskInstance::destination)
        .def_readonly("gold_path", &TaskInstance::gold_path)
        .def_readonly("difficulty", &TaskInstance::difficulty)
        .def_property_readonly("edges_text", &TaskInstance::edges_text)
        .def_property_readonly("gold_text", &TaskInstance::gold_text)
        .def("to_json", &instance_to_json_line)
        .def_static("from_json", [](const std::string& line) { return instance_from_json_line(line); })
        .def("__eq__", [](const TaskInstance& a, const TaskInstance& b) { return a == b; })
        .def("__repr__", [](const TaskInstance& t) { return "<TaskInstance " + instance_to_json_line(t) + ">"; });

    m.def(
        "generate_instance",
        [](int degree, int path_len, std::uint64_t seed, Label label_min, Label label_max) {
            return render_instance(generate_star({degree, path_len, label_min, label_max}, seed), seed);
        },
        py::arg("degree"), py::arg("path_len"), py::arg("seed") = 0, py::arg("label_min") = 2,
        py::arg("label_max") = 999);
    m.def(
        "build_mixture",
        [](const std::string& mix, std::size_t size, std::uint64_t seed, Label label_min, Label label_max) {
            return build_mixture(parse_mixture(mix, label_min, label_max), size, seed).instances;
        },
        py::arg("mix"), py::arg("size"), py::arg("seed") = 0, py::arg("label_min") = 2, py::arg("label_max") = 999);
    m.def("render_prompt", &render_prompt);
    m.def("extract_answer", &extract_answer);
    m.def("score", [](const TaskInstance& inst, const std::optional<std::string>& answer) { return score(inst, answer); });
    m.def("score_text", [](const TaskInstance& inst, const std::string& text) { return score(inst, extract_answer(text)); });

    py::class_<Vocab>(m, "Vocab")
        .def(py::init<Label, Label>(), py::arg("label_min") = 2, py::arg("label_max") = 999)
        .def_property_readonly("size", &Vocab::size)
        .def("encode", &Vocab::encode_instance)
        .def("node_token", &Vocab::node_token)
        .def("read_answer", [](const Vocab& v, const TokenSeq& r) { return v.read_answer(r); })
        .def("response_text", [](const Vocab& v, const TokenSeq& r) { return v.response_text(r); })
        .def("score", [](const Vocab& v, const TaskInstance& inst, const TokenSeq& r) { return score_response(inst, v, r); })
        .def_readonly_static("SEP", &Vocab::kSep)
        .def_readonly_static("SRC", &Vocab::kSource)
        .def_readonly_static("DST", &Vocab::kDestination)
        .def_readonly_static("ANS", &Vocab::kAnswer)
        .def_readonly_static("EOS", &Vocab::kEos);

    // Estimators
    m.def("group_advantages", [](const std::vector<double>& r) { return group_advantages(r); });
    m.def("chunk_spans", [](int len, int size) {
        std::vector<std::pair<int, int>> out;
        for (const auto& c : chunk_spans(len, size)) out.emplace_back(c.start, c.end);
        return out;
    });
    m.def("vineppo_coefficients", [](int len, int chunk, const std::vector<double>& values) {
        return vineppo_from_values(len, chunk, values).token_coefficients(len);
    });
    m.def("progress_coefficients",
          [](int len, int chunk, double advantage, double alpha, const std::vector<double>& prover_values) {
              return progress_from_values(len, chunk, advantage, alpha, prover_values).token_coefficients(len);
          });
    m.def(
        "bon_weights",
        [](double p_fail, int n, double clip) {
            const auto w = bon_weights(p_fail, {n, clip});
            py::dict d;
            d["p_fail"] = w.p_fail;
            d["n"] = w.n;
            d["g_plus_raw"] = w.g_plus_raw;
            d["g_minus_raw"] = w.g_minus_raw;
            d["g_plus"] = w.g_plus;
            d["g_minus"] = w.g_minus;
            return d;
        },
        py::arg("p_fail"), py::arg("n") = 8, py::arg("clip") = 3.0);
    m.def(
        "bon_coefficients",
        [](const std::vector<double>& rewards, int n, double clip) { return bon_coefficients(rewards, {n, clip}); },
        py::arg("rewards"), py::arg("n") = 8, py::arg("clip") = 3.0);
    m.def(
        "kl_schedule",
        [](long iteration, double start, double end, long horizon) { return kl_schedule(iteration, {start, end, horizon}); },
        py::arg("iteration"), py::arg("start") = 1e-3, py::arg("end") = 1e-3, py::arg("horizon") = 0);

    // Policy
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("label_min", &ModelConfig::label_min)
        .def_readwrite("label_max", &ModelConfig::label_max)
        .def_readwrite("width", &ModelConfig::width)
        .def_readwrite("layers", &ModelConfig::layers)
        .def_readwrite("heads", &ModelConfig::heads)
        .def_readwrite("mlp_width", &ModelConfig::mlp_width)
        .def_readwrite("max_prompt_len", &ModelConfig::max_prompt_len)
        .def_readwrite("max_response_len", &ModelConfig::max_response_len)
        .def_readwrite("init_scale", &ModelConfig::init_scale)
        .def_property_readonly("param_count", &ModelConfig::param_count)
        .def("validate", &ModelConfig::validate);

    py::class_<PolicyParams>(m, "Policy")
        .def(py::init([](const ModelConfig& c, std::uint64_t seed) {
                 c.validate();
                 return init_params(c, seed);
             }),
             py::arg("config"), py::arg("seed") = 0)
        .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p).params; })
        .def("save", [](const PolicyParams& p, const std::filesystem::path& path) { save_checkpoint(path, p, 0); })
        .def_readonly("config", &PolicyParams::config)
        .def_readwrite("values", &PolicyParams::values)
        .def("__len__", &PolicyParams::size)
        .def(
            "sample",
            [](const PolicyParams& p, const TokenSeq& prompt, double temperature, double top_p, int max_len,
               std::uint64_t seed) { return trajectory_dict(sample(p, prompt, {temperature, top_p, max_len}, seed)); },
            py::arg("prompt"), py::arg("temperature") = 0.6, py::arg("top_p") = 0.999, py::arg("max_len") = 12,
            py::arg("seed") = 0)
        .def(
            "greedy",
            [](const PolicyParams& p, const TokenSeq& prompt, int max_len) {
                return trajectory_dict(greedy(p, prompt, max_len));
            },
            py::arg("prompt"), py::arg("max_len") = 12)
        .def("log_probs",
             [](const PolicyParams& p, const TokenSeq& prompt, const TokenSeq& response) {
                 return response_log_probs(p, prompt, response);
             })
        .def("logprob_grad",
             [](const PolicyParams& p, const TokenSeq& prompt, const TokenSeq& response, const std::vector<double>& c) {
                 const auto r = logprob_grad(p, trajectory_of(prompt, response), c);
                 return py::make_tuple(r.value, r.gradient);
             })
        .def("token_kl", [](const PolicyParams& p, const PolicyParams& ref, const TokenSeq& prompt,
                            const TokenSeq& response) {
            const auto r = token_kl(p, snapshot_reference(ref), trajectory_of(prompt, response));
            return py::make_tuple(r.value, r.gradient);
        });

    // Commands
    m.def(
        "gen_data",
        [](const std::string& mix, long n, long test_n, std::uint64_t seed, const std::filesystem::path& out_dir,
           bool force, Label label_min, Label label_max) {
            GenDataOptions o;
            o.mix = mix;
            o.n = n;
            o.test_n = test_n;
            o.seed = seed;
            o.out_dir = out_dir;
            o.force = force;
            o.label_min = label_min;
            o.label_max = label_max;
            return run_command([&](std::ostream& out) { return cmd_gen_data(o, out); });
        },
        py::arg("mix"), py::arg("n"), py::arg("test_n") = -1, py::arg("seed") = 0, py::arg("out_dir") = "data",
        py::arg("force") = false, py::arg("label_min") = 2, py::arg("label_max") = 999);
    m.def(
        "train",
        [](const std::filesystem::path& config, const std::string& preset, const std::filesystem::path& preset_dir,
           const std::vector<std::string>& overrides, const std::filesystem::path& out_dir) {
            TrainOptions o{config, preset, preset_dir, overrides, out_dir};
            py::gil_scoped_release release;
            return run_command([&](std::ostream& out) { return cmd_train(o, out); });
        },
        py::arg("config") = std::filesystem::path(), py::arg("preset") = "", py::arg("preset_dir") = "presets",
        py::arg("overrides") = std::vector<std::string>{}, py::arg("out_dir") = std::filesystem::path());
    m.def("evaluate_checkpoint",
          [](const std::filesystem::path& checkpoint, const std::filesystem::path& dataset, std::uint64_t seed,
             const std::filesystem::path& out) {
              EvalOptions o;
              o.checkpoint = checkpoint;
              o.dataset = dataset;
              o.seed = seed;
              o.out = out;
              return run_command([&](std::ostream& s) { return cmd_eval(o, s); });
          },
          py::arg("checkpoint"), py::arg("dataset"), py::arg("seed") = 0, py::arg("out") = std::filesystem::path());
    m.def("read_metrics", [](const std::filesystem::path& path) {
        const auto mf = read_metrics(path);
        std::vector<std::string> lines;
        for (const auto& r : mf.records) lines.push_back(r.to_json().dump());
        return py::make_tuple(lines, mf.warnings);
    });
}
