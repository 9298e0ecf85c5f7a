#include "zrl/backend.hpp"

#include <httplib.h>

#include <json.hpp>

#include "zrl/errors.hpp"

namespace zrl {

double InstanceScorer::score_tokens(std::span<const Token> response) const {
    return score_response(instance_, vocab_, response);
}

double InstanceScorer::score_text(std::string_view response_text) const {
    return score(instance_, extract_answer(response_text));
}

std::vector<double> PolicyBackend::rollout_scores(const RolloutQuery& query, int n, std::uint64_t seed) {
    if (query.scorer == nullptr) throw ContractError("rollout query without a scorer");
    const auto group = sample_group(*params_, query.prompt, query.response_prefix, settings_, n, seed);
    std::vector<double> out;
    out.reserve(group.size());
    for (const auto& t : group) out.push_back(query.scorer->score_tokens(t.response));
    return out;
}

std::vector<std::string> ExternalBackend::generate(const std::string& prompt, int n) {
    nlohmann::json body;
    body["prompt"] = prompt;
    body["n"] = n;
    body["temperature"] = settings_.temperature;
    body["top_p"] = settings_.top_p;
    body["max_tokens"] = max_tokens_;
    const std::string payload = body.dump();

    httplib::Client client(endpoint_.host, endpoint_.port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= endpoint_.retries; ++attempt) {
        auto res = client.Post(endpoint_.path, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        try {
            const auto reply = nlohmann::json::parse(res->body);
            auto completions = reply.at("completions").get<std::vector<std::string>>();
            if (static_cast<int>(completions.size()) != n) {
                last_error = "expected " + std::to_string(n) + " completions, got " + std::to_string(completions.size());
                continue;
            }
            return completions;
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("malformed reply: ") + e.what();
        }
    }
    throw TransportError("rollout backend " + endpoint_.host + ":" + std::to_string(endpoint_.port) + endpoint_.path +
                         " failed after " + std::to_string(endpoint_.retries + 1) + " attempts: " + last_error);
}

std::vector<double> ExternalBackend::rollout_scores(const RolloutQuery& query, int n, std::uint64_t /*seed*/) {
    if (query.scorer == nullptr) throw ContractError("rollout query without a scorer");
    if (query.instance == nullptr) throw ContractError("text backends need the task instance");
    const std::string partial = vocab_.response_text(query.response_prefix);
    const auto completions = generate(render_prompt(*query.instance) + partial, n);
    std::vector<double> out;
    out.reserve(completions.size());
    for (const auto& c : completions) out.push_back(query.scorer->score_text(partial + c));
    return out;
}

Endpoint parse_endpoint(std::string_view url) {
    Endpoint ep;
    std::string_view rest = url;
    if (rest.starts_with("http://")) rest.remove_prefix(7);
    else if (rest.find("://") != std::string_view::npos) throw ConfigError("only http:// endpoints are supported: " + std::string(url));
    const auto slash = rest.find('/');
    const std::string_view hostport = rest.substr(0, slash);
    if (slash != std::string_view::npos) ep.path = std::string(rest.substr(slash));
    const auto colon = hostport.rfind(':');
    if (colon == std::string_view::npos) {
        ep.host = std::string(hostport);
        ep.port = 80;
    } else {
        ep.host = std::string(hostport.substr(0, colon));
        try {
            ep.port = std::stoi(std::string(hostport.substr(colon + 1)));
        } catch (const std::exception&) {
            throw ConfigError("bad port in endpoint: " + std::string(url));
        }
    }
    if (ep.host.empty()) throw ConfigError("endpoint without host: " + std::string(url));
    return ep;
}

}  // namespace zrl
