#include "zrl/graphtask.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "zrl/errors.hpp"
#include "zrl/rng.hpp"

namespace zrl {

namespace {

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::optional<int> parse_int(std::string_view s) {
    s = trim(s);
    int value = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (s.empty() || ec != std::errc{} || ptr != end) return std::nullopt;
    return value;
}

std::string join_labels(const std::vector<Label>& labels) {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(labels[i]);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// DifficultySpec

std::string DifficultySpec::tag() const {
    return "d" + std::to_string(degree) + "p" + std::to_string(path_len);
}

void DifficultySpec::validate() const {
    if (degree < 1) throw ConfigError("difficulty " + tag() + ": degree must be >= 1");
    if (path_len < 2) throw ConfigError("difficulty " + tag() + ": path_len must be >= 2");
    if (label_max < label_min) throw ConfigError("difficulty " + tag() + ": empty label range");
    const auto range = static_cast<long long>(label_max) - label_min + 1;
    if (range < node_count()) {
        throw ConfigError("difficulty " + tag() + ": label range [" + std::to_string(label_min) + ", " +
                          std::to_string(label_max) + "] holds " + std::to_string(range) +
                          " labels but the graph needs " + std::to_string(node_count()));
    }
}

DifficultySpec DifficultySpec::parse(std::string_view tag, Label label_min, Label label_max) {
    tag = trim(tag);
    const auto p = tag.find('p');
    if (tag.size() < 4 || tag.front() != 'd' || p == std::string_view::npos) {
        throw ConfigError("malformed difficulty tag '" + std::string(tag) + "' (expected dDpP)");
    }
    const auto degree = parse_int(tag.substr(1, p - 1));
    const auto path_len = parse_int(tag.substr(p + 1));
    if (!degree || !path_len) {
        throw ConfigError("malformed difficulty tag '" + std::string(tag) + "' (expected dDpP)");
    }
    DifficultySpec spec{*degree, *path_len, label_min, label_max};
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// StarGraph

int StarGraph::node_count() const {
    int n = 1;
    for (const auto& b : branches) n += static_cast<int>(b.size());
    return n;
}

std::vector<Edge> StarGraph::edges() const {
    std::vector<Edge> out;
    for (const auto& branch : branches) {
        Label prev = center;
        for (Label node : branch) {
            out.emplace_back(prev, node);
            prev = node;
        }
    }
    return out;
}

std::vector<Label> StarGraph::leaves() const {
    std::vector<Label> out;
    out.reserve(branches.size());
    for (const auto& b : branches) {
        if (!b.empty()) out.push_back(b.back());
    }
    return out;
}

int StarGraph::node_degree(Label node) const {
    int deg = 0;
    for (const auto& [a, b] : edges()) deg += (a == node) + (b == node);
    return deg;
}

StarGraph StarGraph::from_edges(const std::vector<Edge>& edges, Label center) {
    std::map<Label, std::vector<Label>> adjacency;
    for (const auto& [a, b] : edges) {
        if (a == b) throw ConfigError("self-loop on node " + std::to_string(a));
        adjacency[a].push_back(b);
        adjacency[b].push_back(a);
    }
    const auto it = adjacency.find(center);
    if (it == adjacency.end()) throw ConfigError("center " + std::to_string(center) + " has no edges");

    StarGraph graph;
    graph.center = center;
    std::set<Label> seen{center};
    for (Label first : it->second) {
        std::vector<Label> branch;
        Label prev = center;
        Label cur = first;
        while (true) {
            if (!seen.insert(cur).second) throw ConfigError("edges contain a cycle or shared node");
            branch.push_back(cur);
            const auto& nbrs = adjacency.at(cur);
            if (nbrs.size() == 1) break;
            if (nbrs.size() != 2) throw ConfigError("node " + std::to_string(cur) + " is not on a simple branch");
            const Label next = nbrs[0] == prev ? nbrs[1] : nbrs[0];
            prev = cur;
            cur = next;
        }
        graph.branches.push_back(std::move(branch));
    }
    if (seen.size() != adjacency.size()) throw ConfigError("edges are not connected to the center");
    for (const auto& b : graph.branches) {
        if (b.size() != graph.branches.front().size()) throw ConfigError("branches have unequal lengths");
    }
    return graph;
}

// ---------------------------------------------------------------------------
// Generation

StarGraph generate_star(const DifficultySpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(derive_seed(seed, 0x57A2));
    const int n = spec.node_count();
    const auto range = static_cast<std::uint64_t>(spec.label_max) - spec.label_min + 1;

    // Floyd's sampling of n distinct offsets, then a shuffle to randomize roles.
    std::set<std::uint64_t> picked;
    for (std::uint64_t j = range - n; j < range; ++j) {
        const std::uint64_t t = rng.below(j + 1);
        if (!picked.insert(t).second) picked.insert(j);
    }
    std::vector<Label> labels;
    labels.reserve(n);
    for (auto off : picked) labels.push_back(static_cast<Label>(spec.label_min + static_cast<long long>(off)));
    rng.shuffle(std::span<Label>(labels));

    StarGraph graph;
    graph.center = labels[0];
    graph.branches.resize(spec.degree);
    std::size_t next = 1;
    for (auto& branch : graph.branches) {
        branch.assign(labels.begin() + static_cast<std::ptrdiff_t>(next),
                      labels.begin() + static_cast<std::ptrdiff_t>(next + spec.path_len - 1));
        next += spec.path_len - 1;
    }
    return graph;
}

TaskInstance instance_for_destination(const StarGraph& graph, Label destination, std::uint64_t seed) {
    const auto leaves = graph.leaves();
    const auto leaf_it = std::find(leaves.begin(), leaves.end(), destination);
    if (leaf_it == leaves.end()) throw ContractError("destination " + std::to_string(destination) + " is not a leaf");
    const auto& branch = graph.branches[static_cast<std::size_t>(leaf_it - leaves.begin())];

    TaskInstance inst;
    inst.source = graph.center;
    inst.destination = destination;
    inst.gold_path.push_back(graph.center);
    inst.gold_path.insert(inst.gold_path.end(), branch.begin(), branch.end());
    inst.difficulty = "d" + std::to_string(graph.degree()) + "p" + std::to_string(branch.size() + 1);

    Rng rng(derive_seed(seed, 0xED6E));
    inst.edges = graph.edges();
    rng.shuffle(std::span<Edge>(inst.edges));
    for (auto& e : inst.edges) {
        if (rng.below(2) == 1) std::swap(e.first, e.second);
    }
    return inst;
}

TaskInstance render_instance(const StarGraph& graph, std::uint64_t seed) {
    if (graph.branches.empty()) throw ContractError("graph has no branches");
    Rng rng(derive_seed(seed, 0xDE57));
    const auto leaves = graph.leaves();
    const Label dest = leaves[static_cast<std::size_t>(rng.below(leaves.size()))];
    return instance_for_destination(graph, dest, derive_seed(seed, 0x0DE5));
}

// ---------------------------------------------------------------------------
// Answers and reward

std::string normalize_path(std::string_view path) {
    std::string out;
    std::size_t start = 0;
    while (true) {
        const auto comma = path.find(',', start);
        const auto piece = trim(path.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        out.append(piece);
        if (comma == std::string_view::npos) break;
        out += ',';
        start = comma + 1;
    }
    return out;
}

std::optional<std::string> extract_answer(std::string_view text) {
    constexpr std::string_view marker = "\\boxed{";
    const auto pos = text.rfind(marker);
    if (pos == std::string_view::npos) return std::nullopt;
    const auto open = pos + marker.size();
    int depth = 1;
    for (std::size_t i = open; i < text.size(); ++i) {
        if (text[i] == '{') {
            ++depth;
        } else if (text[i] == '}') {
            if (--depth == 0) return normalize_path(text.substr(open, i - open));
        }
    }
    return std::nullopt;  // unbalanced
}

std::string TaskInstance::edges_text() const {
    std::string out;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(edges[i].first) + ',' + std::to_string(edges[i].second);
    }
    return out;
}

std::string TaskInstance::gold_text() const { return join_labels(gold_path); }

int score(const TaskInstance& instance, const std::optional<std::string>& answer) {
    if (!answer) return 0;
    return normalize_path(*answer) == instance.gold_text() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Mixtures

std::vector<MixtureComponent> parse_mixture(std::string_view text, Label label_min, Label label_max) {
    std::vector<MixtureComponent> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto item = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (!item.empty()) {
            const auto colon = item.find(':');
            MixtureComponent c;
            c.spec = DifficultySpec::parse(item.substr(0, colon), label_min, label_max);
            if (colon != std::string_view::npos) {
                const std::string num(trim(item.substr(colon + 1)));
                char* end = nullptr;
                c.proportion = std::strtod(num.c_str(), &end);
                if (num.empty() || end != num.c_str() + num.size()) {
                    throw ConfigError("malformed mixture proportion in '" + std::string(item) + "'");
                }
            }
            out.push_back(c);
        }
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw ConfigError("empty mixture");
    return out;
}

std::string format_mixture(const std::vector<MixtureComponent>& components) {
    std::ostringstream os;
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (i) os << ',';
        os << components[i].spec.tag() << ':' << components[i].proportion;
    }
    return os.str();
}

std::vector<std::size_t> mixture_counts(const std::vector<MixtureComponent>& components, std::size_t total_size) {
    if (components.empty()) throw ConfigError("mixture has no components");
    double sum = 0.0;
    for (const auto& c : components) {
        if (!(c.proportion > 0.0)) throw ConfigError("mixture proportion for " + c.spec.tag() + " must be positive");
        sum += c.proportion;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("mixture proportions sum to " + std::to_string(sum) + ", expected 1");
    }
    std::vector<std::size_t> counts(components.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < components.size(); ++i) {
        const double exact = components[i].proportion * static_cast<double>(total_size);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[i];
        remainders.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total_size; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];
    return counts;
}

Dataset build_mixture(const std::vector<MixtureComponent>& components, std::size_t total_size, std::uint64_t seed) {
    const auto counts = mixture_counts(components, total_size);
    Dataset ds;
    for (const auto& c : components) ds.components.push_back(c.spec);

    std::vector<std::pair<TaskInstance, std::size_t>> items;
    items.reserve(total_size);
    for (std::size_t ci = 0; ci < components.size(); ++ci) {
        for (std::size_t k = 0; k < counts[ci]; ++k) {
            const auto s = derive_seed(seed, ci, k);
            items.emplace_back(render_instance(generate_star(components[ci].spec, s), derive_seed(s, 1)), ci);
        }
    }
    Rng rng(derive_seed(seed, 0x5F1E));
    rng.shuffle(std::span(items));
    for (auto& [inst, ci] : items) {
        ds.instances.push_back(std::move(inst));
        ds.component.push_back(ci);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Text I/O

std::string render_prompt(const TaskInstance& instance) {
    std::string edges;
    for (std::size_t i = 0; i < instance.edges.size(); ++i) {
        if (i) edges += "  ";
        edges += std::to_string(instance.edges[i].first) + ',' + std::to_string(instance.edges[i].second);
    }
    return "Given a bi-directional graph in the form of space separated edges, output a path from source node "
           "to the destination node in the form of comma separated integers.\n\n"
           "For this question the graph is " + edges + "\n\n"
           "The source node is " + std::to_string(instance.source) + "\n\n"
           "The destination node is " + std::to_string(instance.destination) + "\n\n"
           "Please reason step by step, and put your final answer within \\boxed{}.";
}

std::vector<Edge> parse_edges(std::string_view text) {
    std::vector<Edge> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && text[i] == ' ') ++i;
        if (i >= text.size()) break;
        auto j = text.find(' ', i);
        if (j == std::string_view::npos) j = text.size();
        const auto pair = text.substr(i, j - i);
        const auto comma = pair.find(',');
        const auto a = comma == std::string_view::npos ? std::nullopt : parse_int(pair.substr(0, comma));
        const auto b = comma == std::string_view::npos ? std::nullopt : parse_int(pair.substr(comma + 1));
        if (!a || !b) throw ConfigError("malformed edge '" + std::string(pair) + "'");
        out.emplace_back(*a, *b);
        i = j;
    }
    return out;
}

std::vector<Label> parse_path(std::string_view text) {
    std::vector<Label> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = text.find(',', start);
        const auto v = parse_int(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (!v) throw ConfigError("malformed path '" + std::string(text) + "'");
        out.push_back(*v);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string instance_to_json_line(const TaskInstance& instance) {
    // Field order is fixed so files are byte-stable.
    nlohmann::ordered_json j;
    j["edges"] = instance.edges_text();
    j["source"] = std::to_string(instance.source);
    j["destination"] = std::to_string(instance.destination);
    j["gold_path"] = instance.gold_text();
    j["difficulty"] = instance.difficulty;
    return j.dump();
}

TaskInstance instance_from_json_line(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed dataset line: ") + e.what());
    }
    TaskInstance inst;
    try {
        inst.edges = parse_edges(j.at("edges").get<std::string>());
        const auto src = parse_int(j.at("source").get<std::string>());
        const auto dst = parse_int(j.at("destination").get<std::string>());
        if (!src || !dst) throw ConfigError("malformed source/destination");
        inst.source = *src;
        inst.destination = *dst;
        inst.gold_path = parse_path(j.at("gold_path").get<std::string>());
        inst.difficulty = j.at("difficulty").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dataset line is missing a field: ") + e.what());
    }
    if (inst.gold_path.empty() || inst.gold_path.front() != inst.source || inst.gold_path.back() != inst.destination) {
        throw ConfigError("gold_path does not run from source to destination");
    }
    return inst;
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
    for (const auto& inst : dataset.instances) out << instance_to_json_line(inst) << '\n';
}

Dataset read_dataset(std::istream& in) {
    Dataset ds;
    std::map<std::string, std::size_t> index;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto inst = instance_from_json_line(line);
        auto [it, inserted] = index.try_emplace(inst.difficulty, ds.components.size());
        if (inserted) ds.components.push_back(DifficultySpec::parse(inst.difficulty, 0, 1 << 30));
        ds.component.push_back(it->second);
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

}  // namespace zrl
