#include "zrl/vocab.hpp"

#include <algorithm>

#include "zrl/errors.hpp"

namespace zrl {

Vocab::Vocab(Label label_min, Label label_max) : label_min_(label_min), label_max_(label_max) {
    if (label_max < label_min) throw ConfigError("vocabulary label range is empty");
}

Token Vocab::node_token(Label label) const {
    if (label < label_min_ || label > label_max_) {
        throw EncodingError("label " + std::to_string(label) + " outside vocabulary range [" +
                            std::to_string(label_min_) + ", " + std::to_string(label_max_) + "]");
    }
    return kNumSpecial + (label - label_min_);
}

Label Vocab::label_of(Token t) const {
    if (!is_node(t)) throw EncodingError("token " + std::to_string(t) + " is not a node token");
    return label_min_ + (t - kNumSpecial);
}

std::string Vocab::token_text(Token t) const {
    switch (t) {
        case kSep: return "<sep>";
        case kSource: return "<src>";
        case kDestination: return "<dst>";
        case kAnswer: return "<ans>";
        case kEos: return "<eos>";
        default: return std::to_string(label_of(t));
    }
}

TokenSeq Vocab::encode_instance(const TaskInstance& instance) const {
    TokenSeq out;
    out.reserve(instance.edges.size() * 3 + 4);
    for (const auto& [a, b] : instance.edges) {
        out.push_back(node_token(a));
        out.push_back(node_token(b));
        out.push_back(kSep);
    }
    out.push_back(kSource);
    out.push_back(node_token(instance.source));
    out.push_back(kDestination);
    out.push_back(node_token(instance.destination));
    return out;
}

TaskInstance Vocab::decode_instance(std::span<const Token> prompt) const {
    if (prompt.size() < 4 || (prompt.size() - 4) % 3 != 0 || prompt[prompt.size() - 4] != kSource ||
        prompt[prompt.size() - 2] != kDestination) {
        throw EncodingError("token sequence is not an encoded instance");
    }
    TaskInstance inst;
    for (std::size_t i = 0; i + 4 < prompt.size(); i += 3) {
        if (prompt[i + 2] != kSep) throw EncodingError("missing edge separator");
        inst.edges.emplace_back(label_of(prompt[i]), label_of(prompt[i + 1]));
    }
    inst.source = label_of(prompt[prompt.size() - 3]);
    inst.destination = label_of(prompt.back());
    return inst;
}

std::string Vocab::decode_edges(std::span<const Token> prompt) const { return decode_instance(prompt).edges_text(); }

TokenSeq Vocab::output_support(std::span<const Token> prompt) const {
    TokenSeq out{kAnswer, kEos};
    for (Token t : prompt) {
        if (is_node(t)) out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::optional<std::vector<Label>> Vocab::read_answer(std::span<const Token> response) const {
    const auto eos = std::find(response.begin(), response.end(), kEos);
    if (eos == response.end()) return std::nullopt;  // truncated: no committed answer
    const auto view = response.first(static_cast<std::size_t>(eos - response.begin()));
    const auto it = std::find(view.rbegin(), view.rend(), kAnswer);
    if (it == view.rend()) return std::nullopt;
    std::vector<Label> labels;
    for (auto p = it.base(); p != view.end(); ++p) {
        if (!is_node(*p)) return std::nullopt;
        labels.push_back(label_of(*p));
    }
    return labels;
}

std::string Vocab::response_text(std::span<const Token> response) const {
    std::string out;
    bool in_answer = false;
    bool first_in_answer = false;
    for (Token t : response) {
        if (t == kEos) break;
        if (t == kAnswer) {
            if (in_answer) out += '}';
            if (!out.empty()) out += ' ';
            out += "\\boxed{";
            in_answer = true;
            first_in_answer = true;
            continue;
        }
        if (in_answer) {
            if (!first_in_answer) out += ',';
            first_in_answer = false;
            out += token_text(t);
        } else {
            if (!out.empty()) out += ' ';
            out += token_text(t);
        }
    }
    const bool terminated = std::find(response.begin(), response.end(), kEos) != response.end();
    if (in_answer && terminated) out += '}';
    return out;
}

int score_response(const TaskInstance& instance, const Vocab& vocab, std::span<const Token> response) {
    const auto labels = vocab.read_answer(response);
    if (!labels) return 0;
    return *labels == instance.gold_path ? 1 : 0;
}

}  // namespace zrl
