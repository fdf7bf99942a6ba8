#include <cstdlib>
#include <regex>

#include <httplib.h>

#include "plurihop/providers.hpp"

namespace plurihop {

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(url, m, pattern)) throw ProviderError("invalid endpoint URL: " + url);
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

/// POSTs a JSON body; connection failures, 429 and 5xx raise TransportError,
/// other non-2xx statuses raise ProviderError.
nlohmann::json post_json(const HttpEndpoint& ep, const nlohmann::json& body) {
    auto url = parse_url(ep.url);
    httplib::Client client(url.origin);
    client.set_connection_timeout(ep.timeout_seconds);
    client.set_read_timeout(ep.timeout_seconds);
    client.set_write_timeout(ep.timeout_seconds);

    httplib::Headers headers;
    if (!ep.api_key_env.empty()) {
        const char* key = std::getenv(ep.api_key_env.c_str());
        if (!key || !*key) throw ProviderError("environment variable " + ep.api_key_env + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("POST " + ep.url + ": " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500) {
        throw TransportError("POST " + ep.url + " returned HTTP " + std::to_string(res->status));
    }
    if (res->status < 200 || res->status >= 300) {
        throw ProviderError("POST " + ep.url + " returned HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 300));
    }
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw TransportError("POST " + ep.url + " returned a non-JSON body");
    return parsed;
}

}  // namespace

ChatReply HttpChat::do_complete(const ChatRequest& req) {
    nlohmann::json messages = nlohmann::json::array();
    if (!req.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", req.system_prompt}});
    messages.push_back({{"role", "user"}, {"content", req.user_prompt}});
    nlohmann::json body = {{"model", req.model.empty() ? ep_.model : req.model},
                           {"temperature", req.temperature},
                           {"messages", messages}};
    auto res = post_json(ep_, body);
    try {
        ChatReply reply;
        reply.text = res.at("choices").at(0).at("message").at("content").get<std::string>();
        if (res.contains("usage") && res["usage"].is_object()) {
            reply.prompt_tokens = res["usage"].value("prompt_tokens", std::int64_t{-1});
            reply.completion_tokens = res["usage"].value("completion_tokens", std::int64_t{-1});
        }
        return reply;
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed chat response: ") + e.what());
    }
}

std::vector<std::vector<double>> HttpEmbedder::do_embed(const std::vector<std::string>& batch) {
    auto res = post_json(ep_, {{"model", ep_.model}, {"input", batch}});
    try {
        std::vector<std::vector<double>> out(batch.size());
        std::size_t position = 0;
        for (const auto& item : res.at("data")) {
            auto index = item.contains("index") ? item["index"].get<std::size_t>() : position;
            if (index >= out.size()) throw ProviderError("embedding index out of range");
            out[index] = item.at("embedding").get<std::vector<double>>();
            ++position;
        }
        for (const auto& v : out) {
            if (v.empty()) throw ProviderError("embedding response is missing vectors");
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed embedding response: ") + e.what());
    }
}

std::vector<double> HttpReranker::do_score(std::string_view query, const std::vector<std::string>& passages) {
    nlohmann::json body = {{"model", ep_.model},
                           {"query", std::string(query)},
                           {"documents", passages},
                           {"top_n", passages.size()}};
    auto res = post_json(ep_, body);
    try {
        std::vector<double> scores(passages.size(), -1.0);
        for (const auto& r : res.at("results")) {
            auto index = r.at("index").get<std::size_t>();
            if (index >= scores.size()) throw ProviderError("rerank index out of range");
            scores[index] = r.at("relevance_score").get<double>();
        }
        for (double s : scores) {
            if (s < 0.0) throw ProviderError("rerank response is missing scores");
        }
        return scores;
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed rerank response: ") + e.what());
    }
}

}  // namespace plurihop
