#pragma once

// Star-graph search instances: generation at controlled difficulty, text
// rendering, answer extraction and the binary outcome reward.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace zrl {

using Label = int;
using Edge = std::pair<Label, Label>;

// Degree-d-Path-p: d branches, each with p nodes counting the center.
struct DifficultySpec {
    int degree = 1;
    int path_len = 2;
    Label label_min = 2;
    Label label_max = 999;

    [[nodiscard]] int node_count() const { return 1 + degree * (path_len - 1); }
    [[nodiscard]] int edge_count() const { return degree * (path_len - 1); }
    // "d3p3"
    [[nodiscard]] std::string tag() const;
    // Throws ConfigError when the invariants do not hold.
    void validate() const;

    // Parses "d<degree>p<path_len>"; labels take the given range.
    static DifficultySpec parse(std::string_view tag, Label label_min = 2, Label label_max = 999);
};

struct StarGraph {
    Label center = 0;
    // Each branch lists the p-1 non-center nodes ordered outward from the center.
    std::vector<std::vector<Label>> branches;

    [[nodiscard]] int degree() const { return static_cast<int>(branches.size()); }
    [[nodiscard]] int node_count() const;
    [[nodiscard]] std::vector<Edge> edges() const;
    [[nodiscard]] std::vector<Label> leaves() const;
    // Degree of a node in the edge set; 0 when absent.
    [[nodiscard]] int node_degree(Label node) const;

    // Reconstructs a star from an unordered edge list; throws ConfigError if the
    // edges do not form a star with equal-length branches around `center`.
    static StarGraph from_edges(const std::vector<Edge>& edges, Label center);
};

struct TaskInstance {
    std::vector<Edge> edges;  // presentation order and orientation
    Label source = 0;
    Label destination = 0;
    std::vector<Label> gold_path;
    std::string difficulty;  // "dDpP"

    [[nodiscard]] std::string edges_text() const;
    [[nodiscard]] std::string gold_text() const;

    friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

struct Dataset {
    std::vector<TaskInstance> instances;
    // Index into `components` for every instance (the mixture provenance).
    std::vector<std::size_t> component;
    std::vector<DifficultySpec> components;

    [[nodiscard]] std::size_t size() const { return instances.size(); }
    [[nodiscard]] bool empty() const { return instances.empty(); }
};

StarGraph generate_star(const DifficultySpec& spec, std::uint64_t seed);

// Destination uniform over leaves; edge order and orientation shuffled.
TaskInstance render_instance(const StarGraph& graph, std::uint64_t seed);

// Same as render_instance but with a fixed destination leaf.
TaskInstance instance_for_destination(const StarGraph& graph, Label destination, std::uint64_t seed);

// Content of the last \boxed{...}, elements whitespace-trimmed and rejoined by ",".
std::optional<std::string> extract_answer(std::string_view response_text);

// Normalizes a comma separated path string (trims each element).
std::string normalize_path(std::string_view path);

// 1 iff the normalized answer equals the gold path; every malformed answer scores 0.
int score(const TaskInstance& instance, const std::optional<std::string>& answer);

struct MixtureComponent {
    DifficultySpec spec;
    double proportion = 1.0;
};

// Parses "d2p5:0.25,d5p2:0.75".
std::vector<MixtureComponent> parse_mixture(std::string_view text, Label label_min = 2,
                                            Label label_max = 999);
std::string format_mixture(const std::vector<MixtureComponent>& components);

// Per-component instance counts (largest remainder, so each is within 1 of the exact share).
std::vector<std::size_t> mixture_counts(const std::vector<MixtureComponent>& components,
                                        std::size_t total_size);

Dataset build_mixture(const std::vector<MixtureComponent>& components, std::size_t total_size,
                      std::uint64_t seed);

// Natural-language prompt for external text backends.
std::string render_prompt(const TaskInstance& instance);

// JSONL dataset files: {edges, source, destination, gold_path, difficulty} per line.
std::string instance_to_json_line(const TaskInstance& instance);
TaskInstance instance_from_json_line(std::string_view line);
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);

std::vector<Edge> parse_edges(std::string_view edges_text);
std::vector<Label> parse_path(std::string_view path_text);

}  // namespace zrl
