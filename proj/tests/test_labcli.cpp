#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "zrl/checkpoint.hpp"
#include "zrl/commands.hpp"
#include "zrl/config.hpp"
#include "zrl/errors.hpp"
#include "zrl/metrics.hpp"

using namespace zrl;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("zrl-labcli-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

struct Result {
    int code = 0;
    std::string output;
};

// Runs the built executable; stdout and stderr are merged.
Result lab(const std::string& args) {
    const char* bin = std::getenv("ZRL_LAB_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "ZRL_LAB_BIN is not set");
    const auto out = fs::temp_directory_path() / "zrl-labcli-out.txt";
    const std::string cmd = std::string(bin) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

// Small model and run sizes so CLI tests stay fast.
const std::string kSmall =
    " --set model.width=16 --set model.heads=2 --set model.mlp_width=32 --set model.max_prompt_len=40"
    " --set train.group_size=2 --set train.batch_prompts=2 --set train.max_iterations=2 --set train.eval_interval=1"
    " --set data.train_size=10 --set data.test_size=6";

}  // namespace

TEST_CASE("config parsing and validation") {
    const auto cfg = parse_config(
        "# comment\n"
        "train.algorithm = vineppo\n"
        "train.learning_rate = 0.01   \n"
        "\n"
        "model.width = 32\n"
        "data.train_mix = d2p2:0.5, d3p3:0.5\n",
        ".", "x.cfg");
    CHECK(cfg.train.algorithm == Algorithm::vineppo);
    CHECK(cfg.train.learning_rate == 0.01);
    CHECK(cfg.train.model.width == 32);

    try {
        parse_config("train.algorithm = drgrpo\ntrain.learnig_rate = 0.1\n", ".", "typo.cfg");
        FAIL("unknown key accepted");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("typo.cfg:2") != std::string::npos);
        CHECK(msg.find("train.learnig_rate") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("train.group_size = many\n", ".", "c"), ConfigError);
    CHECK_THROWS_AS(parse_config("no equals sign\n", ".", "c"), ConfigError);
    CHECK_THROWS_AS(parse_config("train.discount = 0.9\n", ".", "c"), ConfigError);

    // The dump is a complete config that parses back to the same dump.
    const auto dumped = dump_config(cfg);
    CHECK(dump_config(parse_config(dumped, ".", "dump")) == dumped);
    for (const auto& key : config_schema()) CHECK(dumped.find(key.key) != std::string::npos);
}

TEST_CASE("referenced files must exist") {
    auto cfg = parse_config("data.train_file = does-not-exist.jsonl\n", ".", "c");
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("ZRL_SEED overrides the configured seed") {
    auto cfg = parse_config("train.seed = 4\n", ".", "c");
    setenv("ZRL_SEED", "99", 1);
    apply_env_overrides(cfg);
    unsetenv("ZRL_SEED");
    CHECK(cfg.train.seed == 99);
    apply_env_overrides(cfg);
    CHECK(cfg.train.seed == 99);
}

TEST_CASE("gen-data: counts, determinism and --force") {
    const auto dir = scratch("gen");
    const auto a = dir / "a";
    auto r = lab("gen-data --mix d2p5:0.25,d5p2:0.25,d5p5:0.25,d10p10:0.25 --n 400 --test-n 40 --seed 3 --out " +
                 a.string());
    CHECK(r.code == 0);
    for (const char* tag : {"d2p5", "d5p2", "d5p5", "d10p10"}) {
        CHECK(r.output.find(std::string(tag) + "=100") != std::string::npos);
    }
    std::ifstream f(a / "train.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(f, line)) ++n;
    CHECK(n == 400);

    const auto first = slurp(a / "train.jsonl");
    CHECK(lab("gen-data --mix d2p5:0.25,d5p2:0.25,d5p5:0.25,d10p10:0.25 --n 400 --test-n 40 --seed 3 --out " +
              a.string())
              .code == kExitConfig);
    CHECK(lab("gen-data --mix d2p5:0.25,d5p2:0.25,d5p5:0.25,d10p10:0.25 --n 400 --test-n 40 --seed 3 --force --out " +
              a.string())
              .code == 0);
    CHECK(slurp(a / "train.jsonl") == first);

    // Train and test come from disjoint seed partitions.
    CHECK(slurp(a / "test.jsonl").find(first.substr(0, first.find('\n'))) == std::string::npos);

    const auto b = dir / "b";
    CHECK(lab("gen-data --mix d3p3:1.0 --n 20 --out " + b.string()).code == 0);
    std::ifstream g(b / "train.jsonl");
    while (std::getline(g, line)) CHECK(line.find("\"difficulty\":\"d3p3\"") != std::string::npos);

    CHECK(lab("gen-data --mix d3p3:0.5 --n 20 --out " + (dir / "c").string()).code == kExitConfig);
}

TEST_CASE("train: preset run, zero iterations, determinism, field errors") {
    const auto dir = scratch("train");
    auto r = lab("train --preset drgrpo-d2p2-smoke --out " + (dir / "run1").string() + kSmall);
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(fs::exists(dir / "run1" / "config.cfg"));
    CHECK(fs::exists(dir / "run1" / "final.bin"));
    const auto m1 = read_metrics(dir / "run1" / "metrics.jsonl");
    CHECK(m1.warnings.empty());
    REQUIRE(m1.records.size() == 3);
    CHECK_FALSE(m1.records[0].success.empty());

    CHECK(lab("train --preset drgrpo-d2p2-smoke --out " + (dir / "run2").string() + kSmall).code == 0);
    CHECK(slurp(dir / "run1" / "metrics.jsonl") == slurp(dir / "run2" / "metrics.jsonl"));

    // The copied config reproduces the run.
    CHECK(lab("train " + (dir / "run1" / "config.cfg").string() + " --out " + (dir / "run3").string()).code == 0);
    CHECK(slurp(dir / "run1" / "metrics.jsonl") == slurp(dir / "run3" / "metrics.jsonl"));

    CHECK(lab("train --preset drgrpo-d2p2-smoke --out " + (dir / "zero").string() + kSmall +
              " --set train.max_iterations=0")
              .code == 0);
    CHECK(read_metrics(dir / "zero" / "metrics.jsonl").records.size() == 1);

    r = lab("train --preset drgrpo-d2p2-smoke --out " + (dir / "bad").string() + " --set train.group_size=1");
    CHECK(r.code == kExitConfig);
    CHECK(r.output.find("train.group_size") != std::string::npos);
    CHECK(lab("train --preset no-such-preset").code == kExitConfig);
    CHECK(lab("train --preset drgrpo-d2p2-smoke --set train.nope=1").code == kExitConfig);
}

TEST_CASE("ZRL_SEED changes the run") {
    const auto dir = scratch("seed");
    CHECK(lab("train --preset drgrpo-d2p2-smoke --out " + (dir / "a").string() + kSmall).code == 0);
    setenv("ZRL_SEED", "12345", 1);
    const auto r = lab("train --preset drgrpo-d2p2-smoke --out " + (dir / "b").string() + kSmall);
    unsetenv("ZRL_SEED");
    CHECK(r.code == 0);
    CHECK(slurp(dir / "b" / "config.cfg").find("train.seed = 12345") != std::string::npos);
}

TEST_CASE("eval: report, architecture mismatch, empty dataset") {
    const auto dir = scratch("eval");
    REQUIRE(lab("train --preset drgrpo-d2p2-smoke --out " + (dir / "run").string() + kSmall +
                " --set train.max_iterations=0 --set model.label_max=99")
                .code == 0);
    REQUIRE(lab("gen-data --mix d10p10:1.0 --n 20 --label-max 99 --out " + (dir / "data").string()).code == 0);
    const auto ckpt = (dir / "run" / "final.bin").string();
    auto r = lab("eval " + ckpt + " " + (dir / "data" / "test.jsonl").string());
    CHECK_MESSAGE(r.code == kExitConfig, r.output);  // prompts longer than the model window

    REQUIRE(lab("gen-data --mix d2p2:1.0 --n 20 --label-max 99 --out " + (dir / "easy").string()).code == 0);
    r = lab("eval " + ckpt + " " + (dir / "easy" / "test.jsonl").string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(fs::exists(ckpt + ".eval.json"));
    CHECK(r.output.find("d2p2") != std::string::npos);

    write_file(dir / "other.cfg", "model.width = 32\nmodel.heads = 2\nmodel.label_max = 99\n");
    r = lab("eval " + ckpt + " " + (dir / "easy" / "test.jsonl").string() + " --config " + (dir / "other.cfg").string());
    CHECK(r.code == kExitConfig);
    CHECK(r.output.find("model.width") != std::string::npos);

    write_file(dir / "empty.jsonl", "");
    r = lab("eval " + ckpt + " " + (dir / "empty.jsonl").string());
    CHECK(r.code == kExitConfig);
    CHECK(r.output.find("empty") != std::string::npos);
}

TEST_CASE("plot: series, flat curves and malformed lines") {
    const auto dir = scratch("plot");
    const std::string rec0 = R"({"iteration":0,"mean_train_reward":null,"grad_norm":null,"kl":null,"beta":null,"nonzero_adv_fraction":null,"learning_rate":null,"success":{"d2p2":{"greedy":0.0,"sampled":0.0,"count":4}}})";
    const std::string rec1 = R"({"iteration":5,"mean_train_reward":0.0,"grad_norm":0.0,"kl":0.0,"beta":0.0,"nonzero_adv_fraction":0.0,"learning_rate":0.001,"success":{"d2p2":{"greedy":0.0,"sampled":0.0,"count":4}}})";
    write_file(dir / "flat.jsonl", rec0 + "\n" + rec1 + "\n");
    write_file(dir / "broken.jsonl", rec0 + "\n{not json\n" + rec1 + "\n");

    auto r = lab("plot " + (dir / "flat.jsonl").string() + " --out " + (dir / "one.svg").string());
    CHECK(r.code == 0);
    const auto svg = slurp(dir / "one.svg");
    CHECK(svg.find(">iteration<") != std::string::npos);
    CHECK(svg.find(">success rate<") != std::string::npos);
    CHECK(svg.find("class=\"series\"") != std::string::npos);

    const auto f = (dir / "flat.jsonl").string();
    r = lab("plot " + f + " " + f + " " + f + " " + (dir / "broken.jsonl").string() +
            " --label a --label b --label c --label d --out " + (dir / "four.svg").string());
    CHECK(r.code == 0);
    CHECK(r.output.find("4 series, 1 warnings") != std::string::npos);
    const auto four = slurp(dir / "four.svg");
    for (const char* label : {"a", "b", "c", "d"}) {
        CHECK(four.find("data-label=\"" + std::string(label) + "\"") != std::string::npos);
    }

    CHECK(lab("plot " + f + " --label a --label b").code == kExitConfig);
    CHECK(lab("plot " + f + " --panel train_reward --out " + (dir / "tr.svg").string()).code == 0);
    CHECK(lab("plot " + f + " --panel nonzero_adv --out " + (dir / "nz.svg").string()).code == 0);
    CHECK(lab("plot " + f + " --panel bogus").code == kExitConfig);
}

TEST_CASE("usage errors exit with the config code") {
    CHECK(lab("").code != 0);
    CHECK(lab("frobnicate").code == kExitConfig);
    CHECK(lab("gen-data").code == kExitConfig);
}
