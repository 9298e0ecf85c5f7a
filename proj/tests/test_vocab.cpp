#include <doctest.h>

#include <algorithm>

#include "zrl/errors.hpp"
#include "zrl/graphtask.hpp"
#include "zrl/vocab.hpp"

using namespace zrl;

namespace {

TaskInstance example() {
    TaskInstance inst;
    inst.edges = {{81, 252}, {97, 124}, {285, 182}, {97, 285}, {97, 81}, {124, 199}};
    inst.source = 97;
    inst.destination = 252;
    inst.gold_path = {97, 81, 252};
    inst.difficulty = "d3p3";
    return inst;
}

}  // namespace

TEST_CASE("example instance encodes 12 edge node tokens") {
    const Vocab v(2, 999);
    const auto seq = v.encode_instance(example());
    CHECK(seq.size() == 3 * 6 + 4);
    const auto src = std::find(seq.begin(), seq.end(), Vocab::kSource) - seq.begin();
    const auto nodes = std::count_if(seq.begin(), seq.begin() + src, [&](Token t) { return v.is_node(t); });
    CHECK(nodes == 12);
    CHECK(seq[static_cast<std::size_t>(src) + 1] == v.node_token(97));
    CHECK(seq.back() == v.node_token(252));
}

TEST_CASE("encode then decode round trips") {
    const Vocab v(2, 999);
    const auto inst = example();
    const auto seq = v.encode_instance(inst);
    CHECK(v.decode_edges(seq) == inst.edges_text());
    const auto back = v.decode_instance(seq);
    CHECK(back.edges == inst.edges);
    CHECK(back.source == 97);
    CHECK(back.destination == 252);

    for (std::uint64_t s = 0; s < 30; ++s) {
        const auto r = render_instance(generate_star({3, 4}, s), s);
        const auto d = v.decode_instance(v.encode_instance(r));
        CHECK(d.edges == r.edges);
        CHECK(d.source == r.source);
        CHECK(d.destination == r.destination);
    }
}

TEST_CASE("instances differing only in destination differ only after the marker") {
    const Vocab v(2, 999);
    auto a = example();
    auto b = example();
    b.destination = 199;
    const auto sa = v.encode_instance(a);
    const auto sb = v.encode_instance(b);
    REQUIRE(sa.size() == sb.size());
    const auto dst = static_cast<std::size_t>(std::find(sa.begin(), sa.end(), Vocab::kDestination) - sa.begin());
    for (std::size_t i = 0; i <= dst; ++i) CHECK(sa[i] == sb[i]);
    CHECK(sa.back() != sb.back());
}

TEST_CASE("out-of-range labels are encoding errors") {
    const Vocab v(2, 200);
    CHECK_THROWS_AS((void)v.node_token(1), EncodingError);
    CHECK_THROWS_AS((void)v.node_token(201), EncodingError);
    CHECK_THROWS_AS((void)v.encode_instance(example()), EncodingError);
    CHECK(v.size() == 5 + 199);
    CHECK(v.label_of(v.node_token(17)) == 17);
}

TEST_CASE("output support holds prompt labels plus answer and end markers") {
    const Vocab v(2, 999);
    const auto support = v.output_support(v.encode_instance(example()));
    CHECK(support.size() == 7 + 2);
    CHECK(std::is_sorted(support.begin(), support.end()));
    CHECK(support[0] == Vocab::kAnswer);
    CHECK(support[1] == Vocab::kEos);
}

TEST_CASE("read_answer uses the last answer marker and requires termination") {
    const Vocab v(2, 999);
    const auto n = [&](Label l) { return v.node_token(l); };
    const TokenSeq good = {n(5), Vocab::kAnswer, n(97), n(81), n(252), Vocab::kEos};
    CHECK(v.read_answer(good) == std::vector<Label>{97, 81, 252});
    CHECK(score_response(example(), v, good) == 1);

    const TokenSeq twice = {Vocab::kAnswer, n(1 + 1), Vocab::kAnswer, n(97), n(81), n(252), Vocab::kEos};
    CHECK(v.read_answer(twice) == std::vector<Label>{97, 81, 252});

    const TokenSeq truncated = {Vocab::kAnswer, n(97), n(81), n(252)};
    CHECK_FALSE(v.read_answer(truncated).has_value());
    CHECK(score_response(example(), v, truncated) == 0);

    const TokenSeq none = {n(97), n(81), n(252), Vocab::kEos};
    CHECK_FALSE(v.read_answer(none).has_value());

    const TokenSeq wrong = {Vocab::kAnswer, n(97), n(124), n(252), Vocab::kEos};
    CHECK(score_response(example(), v, wrong) == 0);
}

TEST_CASE("response_text writes the answer as a box") {
    const Vocab v(2, 999);
    const auto n = [&](Label l) { return v.node_token(l); };
    const TokenSeq done = {n(5), Vocab::kAnswer, n(97), n(81), n(252), Vocab::kEos};
    CHECK(v.response_text(done) == "5 \\boxed{97,81,252}");
    CHECK(extract_answer(v.response_text(done)) == std::optional<std::string>("97,81,252"));
    const TokenSeq partial = {n(5), Vocab::kAnswer, n(97)};
    CHECK(v.response_text(partial) == "5 \\boxed{97");
    CHECK_FALSE(extract_answer(v.response_text(partial)).has_value());
}
