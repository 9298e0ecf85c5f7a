#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zrl/graphtask.hpp"

namespace zrl {

using Token = int;
using TokenSeq = std::vector<Token>;

// Node-level vocabulary: five markers followed by one token per label.
//
// Prompt layout:   a b <sep> a b <sep> ... <src> s <dst> t
// Response layout: free tokens, <ans>, path labels, <eos>
class Vocab {
public:
    static constexpr Token kSep = 0;
    static constexpr Token kSource = 1;
    static constexpr Token kDestination = 2;
    static constexpr Token kAnswer = 3;
    static constexpr Token kEos = 4;
    static constexpr int kNumSpecial = 5;

    Vocab(Label label_min, Label label_max);

    [[nodiscard]] int size() const { return kNumSpecial + (label_max_ - label_min_ + 1); }
    [[nodiscard]] Label label_min() const { return label_min_; }
    [[nodiscard]] Label label_max() const { return label_max_; }

    [[nodiscard]] bool is_node(Token t) const { return t >= kNumSpecial && t < size(); }
    // Throws EncodingError for labels outside the range.
    [[nodiscard]] Token node_token(Label label) const;
    [[nodiscard]] Label label_of(Token t) const;
    [[nodiscard]] std::string token_text(Token t) const;

    [[nodiscard]] TokenSeq encode_instance(const TaskInstance& instance) const;
    // Inverse of encode_instance on the edge section; returns edges_text.
    [[nodiscard]] std::string decode_edges(std::span<const Token> prompt) const;
    [[nodiscard]] TaskInstance decode_instance(std::span<const Token> prompt) const;

    // Tokens the policy may emit after this prompt: the node labels the prompt
    // mentions plus <ans> and <eos>, sorted ascending.
    [[nodiscard]] TokenSeq output_support(std::span<const Token> prompt) const;

    // Labels between the last <ans> and <eos>. Absent for truncated responses
    // (no <eos>), without <ans>, or when a marker sits inside the path.
    [[nodiscard]] std::optional<std::vector<Label>> read_answer(std::span<const Token> response) const;

    // Text form of a (possibly partial) response; the answer span is written as
    // \boxed{...} so text scorers and external backends see the usual convention.
    // The final box is closed only once <eos> was emitted.
    [[nodiscard]] std::string response_text(std::span<const Token> response) const;

    friend bool operator==(const Vocab&, const Vocab&) = default;

private:
    Label label_min_;
    Label label_max_;
};

// Binary outcome reward for an internal (token) response.
int score_response(const TaskInstance& instance, const Vocab& vocab, std::span<const Token> response);

}  // namespace zrl
