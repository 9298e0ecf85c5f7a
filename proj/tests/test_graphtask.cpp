#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "zrl/errors.hpp"
#include "zrl/graphtask.hpp"
#include "zrl/rng.hpp"

using namespace zrl;

namespace {

const std::vector<Edge> kExampleEdges = {{81, 252}, {97, 124}, {285, 182}, {97, 285}, {97, 81}, {124, 199}};

bool has_edge(const std::vector<Edge>& edges, Label a, Label b) {
    for (const auto& [x, y] : edges) {
        if ((x == a && y == b) || (x == b && y == a)) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("example graph from the prompt template") {
    const auto g = StarGraph::from_edges(kExampleEdges, 97);
    CHECK(g.degree() == 3);
    CHECK(g.node_count() == 7);
    CHECK(g.edges().size() == 6);
    CHECK(g.node_degree(97) == 3);
    const auto inst = instance_for_destination(g, 252, 4);
    CHECK(inst.source == 97);
    CHECK(inst.destination == 252);
    CHECK(inst.gold_path == std::vector<Label>{97, 81, 252});
    CHECK(inst.gold_text() == "97,81,252");
    CHECK(score(inst, std::optional<std::string>("97,81,252")) == 1);
    CHECK(score(inst, std::optional<std::string>("97,124,252")) == 0);
    CHECK(score(inst, std::nullopt) == 0);
}

TEST_CASE("rendered prompt reproduces the template layout") {
    TaskInstance inst;
    inst.edges = kExampleEdges;
    inst.source = 97;
    inst.destination = 252;
    const auto text = render_prompt(inst);
    CHECK(text.find("For this question the graph is 81,252  97,124  285,182  97,285  97,81  124,199\n\n") !=
          std::string::npos);
    CHECK(text.find("The source node is 97\n\nThe destination node is 252\n\n") != std::string::npos);
    CHECK(text.ends_with("\\boxed{}."));
}

TEST_CASE("generate_star sizes") {
    const auto g33 = generate_star({3, 3}, 1);
    CHECK(g33.node_count() == 7);
    CHECK(g33.edges().size() == 6);
    CHECK(g33.node_degree(g33.center) == 3);

    const auto g12 = generate_star({1, 2}, 1);
    CHECK(g12.node_count() == 2);
    CHECK(g12.edges().size() == 1);

    const auto g1010 = generate_star({10, 10}, 1);
    CHECK(g1010.node_count() == 91);
    CHECK(g1010.edges().size() == 90);
}

TEST_CASE("degenerate single branch: gold path is every node") {
    const auto g = generate_star({1, 4}, 9);
    const auto inst = render_instance(g, 9);
    CHECK(inst.gold_path.size() == 4);
    std::set<Label> nodes(inst.gold_path.begin(), inst.gold_path.end());
    CHECK(nodes.size() == 4);
    for (const auto& [a, b] : inst.edges) CHECK((nodes.count(a) == 1 && nodes.count(b) == 1));
}

TEST_CASE("label range too small is a configuration error") {
    CHECK_THROWS_AS(generate_star({3, 3, 2, 7}, 1), ConfigError);
    CHECK_NOTHROW(generate_star({3, 3, 2, 8}, 1));
    CHECK_THROWS_AS(generate_star({0, 3}, 1), ConfigError);
    CHECK_THROWS_AS(generate_star({2, 1}, 1), ConfigError);
}

TEST_CASE("generation is deterministic given the seed") {
    const auto a = render_instance(generate_star({4, 3}, 77), 78);
    const auto b = render_instance(generate_star({4, 3}, 77), 78);
    CHECK(a == b);
    const auto c = render_instance(generate_star({4, 3}, 79), 78);
    CHECK_FALSE(a == c);
}

TEST_CASE("exhaustive structure check for d, p <= 6") {
    for (int d = 1; d <= 6; ++d) {
        for (int p = 2; p <= 6; ++p) {
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                const DifficultySpec spec{d, p};
                const auto g = generate_star(spec, seed);
                const auto edges = g.edges();
                std::map<Label, int> deg;
                for (const auto& [a, b] : edges) {
                    ++deg[a];
                    ++deg[b];
                }
                REQUIRE(static_cast<int>(deg.size()) == spec.node_count());
                REQUIRE(static_cast<int>(edges.size()) == spec.edge_count());
                CHECK(deg[g.center] == d);
                const auto leaves = g.leaves();
                for (const auto& [node, k] : deg) {
                    CHECK((node >= 2 && node <= 999));
                    if (node == g.center) continue;
                    const bool leaf = std::find(leaves.begin(), leaves.end(), node) != leaves.end();
                    CHECK(k == (leaf ? 1 : 2));
                }
                const auto inst = render_instance(g, seed);
                CHECK(inst.difficulty == spec.tag());
                CHECK(inst.gold_path.front() == inst.source);
                CHECK(inst.gold_path.back() == inst.destination);
                for (std::size_t i = 0; i + 1 < inst.gold_path.size(); ++i) {
                    CHECK(has_edge(inst.edges, inst.gold_path[i], inst.gold_path[i + 1]));
                }
            }
        }
    }
}

TEST_CASE("destination is uniform over leaves") {
    const auto g = generate_star({4, 2}, 5);
    std::map<Label, int> hits;
    const int n = 8000;
    for (int s = 0; s < n; ++s) ++hits[render_instance(g, static_cast<std::uint64_t>(s)).destination];
    REQUIRE(hits.size() == 4);
    for (const auto& [leaf, k] : hits) CHECK(std::abs(k - n / 4) < 4 * std::sqrt(n * 0.25 * 0.75));
}

TEST_CASE("edge orientation and order are shuffled") {
    const auto g = generate_star({5, 3}, 3);
    int flipped = 0;
    int total = 0;
    std::set<std::string> orders;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto inst = render_instance(g, s);
        orders.insert(inst.edges_text());
        for (const auto& [a, b] : inst.edges) {
            ++total;
            // Canonical orientation points away from the center.
            bool outward = a == g.center;
            for (const auto& br : g.branches) {
                for (std::size_t i = 0; i + 1 < br.size(); ++i) outward = outward || (a == br[i] && b == br[i + 1]);
            }
            flipped += outward ? 0 : 1;
        }
    }
    CHECK(orders.size() > 40);
    CHECK(flipped > total / 3);
    CHECK(flipped < 2 * total / 3);
}

TEST_CASE("extract_answer") {
    CHECK(extract_answer("so \\boxed{97,81,252}") == std::optional<std::string>("97,81,252"));
    CHECK_FALSE(extract_answer("no box here").has_value());
    CHECK(extract_answer("\\boxed{1,2} then \\boxed{97, 81, 252}") == std::optional<std::string>("97,81,252"));
    CHECK_FALSE(extract_answer("\\boxed{97,81").has_value());
    CHECK(extract_answer("\\boxed{}") == std::optional<std::string>(""));
    CHECK(extract_answer("\\boxed{ 7 ,8}") == std::optional<std::string>("7,8"));
}

TEST_CASE("gold answers score 1 and single-element perturbations score 0") {
    Rng rng(1);
    for (int d = 1; d <= 6; ++d) {
        for (int p = 2; p <= 6; ++p) {
            for (std::uint64_t seed = 0; seed < 10; ++seed) {
                const auto inst = render_instance(generate_star({d, p}, seed), seed);
                CHECK(score(inst, extract_answer("answer: \\boxed{" + inst.gold_text() + "}")) == 1);
                auto wrong = inst.gold_path;
                const auto i = rng.below(wrong.size());
                wrong[i] += 1 + static_cast<Label>(rng.below(5));
                std::string text;
                for (std::size_t k = 0; k < wrong.size(); ++k) text += (k ? "," : "") + std::to_string(wrong[k]);
                CHECK(score(inst, std::optional<std::string>(text)) == 0);
            }
        }
    }
}

TEST_CASE("mixtures honor proportions") {
    const auto mix = parse_mixture("d5p5:0.5,d10p10:0.5");
    const auto d = build_mixture(mix, 100, 3);
    std::map<std::string, int> tags;
    for (const auto& inst : d.instances) ++tags[inst.difficulty];
    CHECK(tags["d5p5"] == 50);
    CHECK(tags["d10p10"] == 50);

    const auto four = parse_mixture("d2p5:0.25,d5p2:0.25,d5p5:0.25,d10p10:0.25");
    const auto d4 = build_mixture(four, 103, 1);
    std::map<std::string, int> t4;
    for (const auto& inst : d4.instances) ++t4[inst.difficulty];
    for (const auto& [tag, k] : t4) CHECK(std::abs(k - 103.0 / 4) <= 1.0);

    const auto single = build_mixture(parse_mixture("d3p3:1.0"), 20, 1);
    for (const auto& inst : single.instances) CHECK(inst.difficulty == "d3p3");

    CHECK_THROWS_AS(mixture_counts(parse_mixture("d2p2:0.5,d3p3:0.4"), 10), ConfigError);
    CHECK_THROWS_AS(mixture_counts(parse_mixture("d2p2:-0.5,d3p3:1.5"), 10), ConfigError);
    CHECK_THROWS_AS(parse_mixture("d2p2:abc"), ConfigError);
}

TEST_CASE("mixture proportions within one instance, randomized") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + static_cast<int>(rng.below(4));
        std::vector<MixtureComponent> comps;
        double total = 0.0;
        std::vector<double> w;
        for (int i = 0; i < k; ++i) {
            w.push_back(0.1 + rng.uniform());
            total += w.back();
        }
        for (int i = 0; i < k; ++i) comps.push_back({DifficultySpec{1 + i, 2}, w[static_cast<std::size_t>(i)] / total});
        const auto n = 1 + rng.below(300);
        const auto counts = mixture_counts(comps, n);
        std::size_t sum = 0;
        for (int i = 0; i < k; ++i) {
            sum += counts[static_cast<std::size_t>(i)];
            CHECK(std::abs(static_cast<double>(counts[static_cast<std::size_t>(i)]) - comps[static_cast<std::size_t>(i)].proportion * static_cast<double>(n)) <= 1.0);
        }
        CHECK(sum == n);
    }
}

TEST_CASE("mixtures are shuffled and deterministic") {
    const auto mix = parse_mixture("d2p2:0.5,d3p3:0.5");
    const auto a = build_mixture(mix, 40, 8);
    const auto b = build_mixture(mix, 40, 8);
    CHECK(a.instances == b.instances);
    CHECK(a.component == b.component);
    bool interleaved = false;
    for (std::size_t i = 1; i < a.size(); ++i) interleaved = interleaved || a.component[i] < a.component[i - 1];
    CHECK(interleaved);
}

TEST_CASE("dataset JSONL round trip") {
    const auto d = build_mixture(parse_mixture("d2p3:0.5,d3p2:0.5"), 10, 4);
    std::stringstream ss;
    write_dataset(ss, d);
    const auto first_line = ss.str().substr(0, ss.str().find('\n'));
    CHECK(first_line.starts_with("{\"edges\":"));
    CHECK(first_line.find("\"difficulty\":\"d") != std::string::npos);
    const auto back = read_dataset(ss);
    CHECK(back.instances == d.instances);
}
