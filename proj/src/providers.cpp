#include "plurihop/providers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <thread>

#include "plurihop/log.hpp"
#include "plurihop/text.hpp"

namespace plurihop {

std::int64_t estimate_tokens(std::string_view text) {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

void ProviderBase::with_retries(const std::string& what, Ledger* ledger,
                                const std::function<void()>& fn) const {
    struct Slot {
        Throttle* t;
        explicit Slot(Throttle* t) : t(t) { if (t) t->acquire(); }
        ~Slot() { if (t) t->release(); }
    };

    thread_local std::mt19937 jitter_rng{std::random_device{}()};
    std::string last_error;
    for (int attempt = 0; attempt <= retry_.retries; ++attempt) {
        try {
            Slot slot(throttle_.get());
            fn();
            return;
        } catch (const TransportError& e) {
            last_error = e.what();
        }
        if (attempt == retry_.retries) break;
        if (ledger) ledger->add("provider.retries");
        logger()->warn("{} failed (attempt {}/{}): {}", what, attempt + 1, retry_.retries + 1, last_error);
        std::uniform_real_distribution<double> jitter(0.5, 1.5);
        auto delay = retry_.backoff.count() * std::pow(2.0, attempt) * jitter(jitter_rng);
        std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(delay)));
    }
    throw ProviderError(what + " failed after " + std::to_string(retry_.retries + 1) +
                        " attempts: " + last_error);
}

// ---------------------------------------------------------------------------

std::string strip_code_fences(std::string_view input) {
    std::string_view s = text::trim(input);
    while (s.size() >= 6 && s.starts_with("```") && s.ends_with("```")) {
        auto newline = s.find('\n');
        if (newline == std::string_view::npos || newline + 1 > s.size() - 3) {
            s = text::trim(s.substr(3, s.size() - 6));
        } else {
            s = text::trim(s.substr(newline + 1, s.size() - 3 - (newline + 1)));
        }
    }
    return std::string(s);
}

std::string ChatModel::complete(const ChatRequest& req, Ledger* ledger) {
    if (text::trim(req.user_prompt).empty()) {
        throw std::invalid_argument("chat request '" + req.role + "' has an empty user prompt");
    }
    ChatReply reply;
    with_retries("chat[" + req.role + "]", ledger, [&] { reply = do_complete(req); });
    if (ledger) {
        ledger->add("chat.calls");
        ledger->add("chat.calls." + (req.role.empty() ? std::string("unnamed") : req.role));
        ledger->add("chat.prompt_tokens", reply.prompt_tokens >= 0
                                              ? reply.prompt_tokens
                                              : estimate_tokens(req.system_prompt) + estimate_tokens(req.user_prompt));
        ledger->add("chat.completion_tokens",
                    reply.completion_tokens >= 0 ? reply.completion_tokens : estimate_tokens(reply.text));
    }
    return std::move(reply.text);
}

nlohmann::json parse_model_json(std::string_view text) {
    auto strict = nlohmann::json::parse(text, nullptr, false);
    if (!strict.is_discarded()) return strict;

    std::string out;
    out.reserve(text.size());
    char quote = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (quote) {
            if (c == '\\' && i + 1 < text.size()) {
                char next = text[i + 1];
                if (quote == '\'' && next == '\'') {
                    out += '\'';
                } else {
                    out += c;
                    out += next;
                }
                ++i;
            } else if (c == quote) {
                out += '"';
                quote = 0;
            } else if (c == '"') {
                out += "\\\"";
            } else {
                out += c;
            }
            continue;
        }
        if (c == '"' || c == '\'') {
            quote = c;
            out += '"';
            continue;
        }
        auto word_at = [&](std::string_view w) {
            if (text.substr(i, w.size()) != w) return false;
            auto after = i + w.size();
            bool left = i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
            bool right = after >= text.size() || !std::isalnum(static_cast<unsigned char>(text[after]));
            return left && right;
        };
        if (word_at("True")) {
            out += "true";
            i += 3;
        } else if (word_at("False")) {
            out += "false";
            i += 4;
        } else if (word_at("None")) {
            out += "null";
            i += 3;
        } else {
            out += c;
        }
    }
    return nlohmann::json::parse(out, nullptr, false);
}

nlohmann::json ChatModel::complete_json(const ChatRequest& req, Ledger* ledger) {
    ChatRequest json_req = req;
    json_req.expects_json = true;
    auto first = strip_code_fences(complete(json_req, ledger));
    auto parsed = parse_model_json(first);
    if (!parsed.is_discarded()) return parsed;

    logger()->warn("prompt '{}' returned invalid JSON, reprompting once", req.role);
    if (ledger) ledger->add("chat.json_reprompts");
    json_req.user_prompt += kJsonReprompt;
    auto second = strip_code_fences(complete(json_req, ledger));
    parsed = parse_model_json(second);
    if (!parsed.is_discarded()) return parsed;
    throw StructuredOutputError(req.role, "reply is not valid JSON: " + second.substr(0, 200));
}

// ---------------------------------------------------------------------------

std::vector<Embedding> Embedder::embed(const std::vector<std::string>& texts, Ledger* ledger) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        if (t.empty()) throw std::invalid_argument("cannot embed an empty string");
    }
    auto batch_size = std::max<std::size_t>(1, max_batch());
    auto tag = model_tag();
    for (std::size_t start = 0; start < texts.size(); start += batch_size) {
        std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                       texts.begin() + static_cast<std::ptrdiff_t>(std::min(texts.size(), start + batch_size)));
        std::vector<std::vector<double>> vectors;
        with_retries("embed", ledger, [&] { vectors = do_embed(batch); });
        if (vectors.size() != batch.size()) {
            throw ProviderError("embedding provider returned " + std::to_string(vectors.size()) +
                                " vectors for " + std::to_string(batch.size()) + " inputs");
        }
        if (ledger) {
            ledger->add("embed.calls");
            ledger->add("embed.texts", static_cast<std::int64_t>(batch.size()));
        }
        for (auto& v : vectors) {
            if (!out.empty() && v.size() != out.front().values.size()) {
                throw ProviderError("embedding provider returned vectors of inconsistent dimension");
            }
            out.push_back({std::move(v), tag});
        }
    }
    return out;
}

std::vector<double> Reranker::score(std::string_view query, const std::vector<std::string>& passages,
                                    Ledger* ledger) {
    if (text::trim(query).empty()) throw std::invalid_argument("rerank query is empty");
    if (passages.empty()) return {};
    std::vector<double> scores;
    with_retries("rerank", ledger, [&] { scores = do_score(query, passages); });
    if (scores.size() != passages.size()) {
        throw ProviderError("reranker returned " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(passages.size()) + " passages");
    }
    for (auto& s : scores) s = std::isnan(s) ? 0.0 : std::clamp(s, 0.0, 1.0);
    if (ledger) {
        ledger->add("rerank.calls");
        ledger->add("rerank.passages", static_cast<std::int64_t>(passages.size()));
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Mocks

ScriptedChat& ScriptedChat::on(std::string needle, std::string reply, std::string role) {
    rules_.push_back({std::move(needle), std::move(role), std::move(reply)});
    return *this;
}

std::vector<ScriptedChat::Rule> ScriptedChat::load_rules(const nlohmann::json& script) {
    if (!script.is_array()) throw std::invalid_argument("mock script must be a JSON array of rules");
    std::vector<Rule> rules;
    for (const auto& r : script) {
        Rule rule;
        rule.needle = r.value("match", "");
        rule.role = r.value("role", "");
        const auto& reply = r.at("reply");
        rule.reply = reply.is_string() ? reply.get<std::string>() : reply.dump();
        rules.push_back(std::move(rule));
    }
    return rules;
}

ChatReply ScriptedChat::do_complete(const ChatRequest& req) {
    for (const auto& rule : rules_) {
        if (!rule.role.empty() && rule.role != req.role) continue;
        if (rule.needle.empty() || req.user_prompt.find(rule.needle) != std::string::npos ||
            req.system_prompt.find(rule.needle) != std::string::npos) {
            return {rule.reply};
        }
    }
    if (fallback_) return {fallback_->complete(req)};
    throw ProviderError("scripted chat has no reply for prompt role '" + req.role + "'");
}

std::vector<double> HashEmbedder::embed_one(std::string_view input) const {
    std::vector<double> v(dim_, 0.0);
    auto lowered = text::to_lower_ascii(input);
    std::string normalized = " ";
    for (char c : lowered) {
        bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (space && normalized.back() == ' ') continue;
        normalized += space ? ' ' : c;
    }
    if (normalized.back() != ' ') normalized += ' ';

    auto add = [&](std::string_view feature) {
        auto h = text::fnv1a64(feature, seed_);
        v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    };
    for (std::size_t i = 0; i + 3 <= normalized.size(); ++i) add(std::string_view(normalized).substr(i, 3));
    for (const auto& w : text::tokenize(lowered)) add("w:" + w);

    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
        v[text::fnv1a64(lowered, seed_ + 1) % dim_] = 1.0;
        return v;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::vector<std::vector<double>> HashEmbedder::do_embed(const std::vector<std::string>& batch) {
    std::vector<std::vector<double>> out;
    out.reserve(batch.size());
    for (const auto& t : batch) out.push_back(embed_one(t));
    return out;
}

double TokenOverlapReranker::overlap(std::string_view query, std::string_view passage) {
    auto q = text::tokenize(query);
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end()), q.end());
    if (q.empty()) return 0.0;
    auto p = text::tokenize(passage);
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    std::vector<std::string> common;
    std::set_intersection(q.begin(), q.end(), p.begin(), p.end(), std::back_inserter(common));
    return static_cast<double>(common.size()) / static_cast<double>(q.size());
}

std::vector<double> TokenOverlapReranker::do_score(std::string_view query,
                                                   const std::vector<std::string>& passages) {
    std::vector<double> out;
    out.reserve(passages.size());
    for (const auto& p : passages) out.push_back(overlap(query, p));
    return out;
}

}  // namespace plurihop

namespace plurihop {

ProviderSet make_mock_providers(std::vector<ScriptedChat::Rule> script, std::size_t embedding_dim) {
    ProviderSet set;
    std::shared_ptr<ChatModel> heuristic = std::make_shared<HeuristicChat>();
    set.chat = script.empty() ? heuristic : std::make_shared<ScriptedChat>(std::move(script), heuristic);
    set.judge = set.chat;
    set.embedder = std::make_shared<HashEmbedder>(embedding_dim);
    set.reranker = std::make_shared<TokenOverlapReranker>();
    set.max_concurrency = 1;
    return set;
}

}  // namespace plurihop
