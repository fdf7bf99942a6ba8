#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "plurihop/ledger.hpp"

namespace plurihop {

// ---------------------------------------------------------------------------
// Errors

/// Retryable failure talking to a provider (connection error, 5xx, 429).
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-retryable provider failure, or retries exhausted.
class ProviderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The model did not return parseable JSON for a prompt that requires it,
/// even after one reprompt.
class StructuredOutputError : public std::runtime_error {
public:
    StructuredOutputError(std::string role, const std::string& detail)
        : std::runtime_error("structured output error for prompt role '" + role + "': " + detail),
          role_(std::move(role)) {}
    const std::string& role() const { return role_; }

private:
    std::string role_;
};

// ---------------------------------------------------------------------------
// Shared call machinery

struct RetryPolicy {
    int retries = 3;
    std::chrono::milliseconds backoff{200};
};

/// Caps in-flight provider calls across every provider sharing it.
class Throttle {
public:
    explicit Throttle(std::ptrdiff_t limit) : slots_(limit < 1 ? 1 : limit) {}
    void acquire() { slots_.acquire(); }
    void release() { slots_.release(); }

private:
    std::counting_semaphore<> slots_;
};

class ProviderBase {
public:
    virtual ~ProviderBase() = default;
    void set_retry_policy(RetryPolicy p) { retry_ = p; }
    void set_throttle(std::shared_ptr<Throttle> t) { throttle_ = std::move(t); }
    const RetryPolicy& retry_policy() const { return retry_; }

protected:
    /// Runs `fn` under the throttle, retrying TransportError with jittered
    /// exponential backoff. Exhausted retries surface as ProviderError.
    void with_retries(const std::string& what, Ledger* ledger, const std::function<void()>& fn) const;

private:
    RetryPolicy retry_;
    std::shared_ptr<Throttle> throttle_;
};

// ---------------------------------------------------------------------------
// Chat

struct ChatRequest {
    std::string role;           // prompt role tag, e.g. "decompose"; used in errors and the ledger
    std::string system_prompt;  // may be empty
    std::string user_prompt;    // must be non-empty
    bool expects_json = false;
    double temperature = 0.0;
    std::string model;          // overrides the provider's default model when set
    std::map<std::string, std::string> vars;  // template inputs; not sent over the wire
};

struct ChatReply {
    std::string text;
    std::int64_t prompt_tokens = -1;
    std::int64_t completion_tokens = -1;
};

/// Removes surrounding markdown code fences (```json ... ```). Applied until
/// a fixed point, so it is idempotent; fence-free text is only trimmed.
std::string strip_code_fences(std::string_view text);

/// Parses a model reply as JSON, accepting Python-style literals (single
/// quoted strings, True/False/None) as a fallback. Returns a discarded
/// value when neither form parses.
nlohmann::json parse_model_json(std::string_view text);

inline constexpr std::string_view kJsonReprompt =
    "\n\nYour previous reply was not valid JSON. Return valid JSON only, without markdown code block formatting.";

class ChatModel : public ProviderBase {
public:
    std::string complete(const ChatRequest& req, Ledger* ledger = nullptr);

    /// complete() + fence stripping + JSON parse, with one reprompt on a
    /// parse failure. Throws StructuredOutputError naming req.role.
    nlohmann::json complete_json(const ChatRequest& req, Ledger* ledger = nullptr);

    virtual std::string tag() const = 0;

protected:
    virtual ChatReply do_complete(const ChatRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// Embeddings

struct Embedding {
    std::vector<double> values;
    std::string model_tag;
};

class Embedder : public ProviderBase {
public:
    /// One vector per input, order preserved. Inputs larger than max_batch()
    /// are split into several provider calls.
    std::vector<Embedding> embed(const std::vector<std::string>& texts, Ledger* ledger = nullptr);

    virtual std::string model_tag() const = 0;
    virtual std::size_t max_batch() const { return 64; }

protected:
    virtual std::vector<std::vector<double>> do_embed(const std::vector<std::string>& batch) = 0;
};

// ---------------------------------------------------------------------------
// Cross-encoder relevance

class Reranker : public ProviderBase {
public:
    /// One score in [0,1] per passage, in input order.
    std::vector<double> score(std::string_view query, const std::vector<std::string>& passages,
                              Ledger* ledger = nullptr);

    virtual std::string tag() const = 0;

protected:
    virtual std::vector<double> do_score(std::string_view query, const std::vector<std::string>& passages) = 0;
};

// ---------------------------------------------------------------------------
// Offline mocks

/// Replies from an ordered rule list; the first rule whose needle occurs in
/// the system or user prompt (and whose role matches, if given) wins.
/// Unmatched requests go to the fallback, or fail when there is none.
class ScriptedChat : public ChatModel {
public:
    struct Rule {
        std::string needle;
        std::string role;  // empty matches any role
        std::string reply;
    };

    ScriptedChat() = default;
    explicit ScriptedChat(std::vector<Rule> rules, std::shared_ptr<ChatModel> fallback = nullptr)
        : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

    ScriptedChat& on(std::string needle, std::string reply, std::string role = {});

    /// Script file: JSON array of {"match", "role"?, "reply"} where reply is
    /// a string or any JSON value (serialized).
    static std::vector<Rule> load_rules(const nlohmann::json& script);

    std::string tag() const override { return "mock-scripted"; }

protected:
    ChatReply do_complete(const ChatRequest& req) override;

private:
    std::vector<Rule> rules_;
    std::shared_ptr<ChatModel> fallback_;
};

/// Deterministic stand-in for a real LLM: answers every prompt role
/// mechanically from the request's template variables (sentence extraction
/// by token overlap, regex metadata extraction, token-containment judging).
class HeuristicChat : public ChatModel {
public:
    std::string tag() const override { return "mock-heuristic"; }

protected:
    ChatReply do_complete(const ChatRequest& req) override;
};

/// Signed feature hashing of character trigrams and word unigrams into a
/// fixed number of dimensions, L2-normalized.
class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(std::size_t dim = 64, std::uint64_t seed = 0x5eed) : dim_(dim), seed_(seed) {}
    std::string model_tag() const override { return "mock-hash-" + std::to_string(dim_); }
    std::vector<double> embed_one(std::string_view text) const;

protected:
    std::vector<std::vector<double>> do_embed(const std::vector<std::string>& batch) override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// |tokens(query) ∩ tokens(passage)| / |tokens(query)|.
class TokenOverlapReranker : public Reranker {
public:
    std::string tag() const override { return "mock-token-overlap"; }
    static double overlap(std::string_view query, std::string_view passage);

protected:
    std::vector<double> do_score(std::string_view query, const std::vector<std::string>& passages) override;
};

// ---------------------------------------------------------------------------
// HTTP clients

struct HttpEndpoint {
    std::string url;          // full URL, e.g. https://api.openai.com/v1/chat/completions
    std::string model;
    std::string api_key_env;  // name of the environment variable holding the key
    int timeout_seconds = 120;
};

/// Chat-completions wire protocol.
class HttpChat : public ChatModel {
public:
    explicit HttpChat(HttpEndpoint ep) : ep_(std::move(ep)) {}
    std::string tag() const override { return "http:" + ep_.model; }

protected:
    ChatReply do_complete(const ChatRequest& req) override;

private:
    HttpEndpoint ep_;
};

/// Embeddings wire protocol ({model, input[]} -> {data[{index, embedding}]}).
class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(HttpEndpoint ep, std::size_t batch = 64) : ep_(std::move(ep)), batch_(batch) {}
    std::string model_tag() const override { return ep_.model; }
    std::size_t max_batch() const override { return batch_; }

protected:
    std::vector<std::vector<double>> do_embed(const std::vector<std::string>& batch) override;

private:
    HttpEndpoint ep_;
    std::size_t batch_;
};

/// Rerank protocol ({model, query, documents[]} -> {results[{index, relevance_score}]}).
class HttpReranker : public Reranker {
public:
    explicit HttpReranker(HttpEndpoint ep) : ep_(std::move(ep)) {}
    std::string tag() const override { return "http:" + ep_.model; }

protected:
    std::vector<double> do_score(std::string_view query, const std::vector<std::string>& passages) override;

private:
    HttpEndpoint ep_;
};

/// The model capabilities a run needs. `judge` is the chat model used for
/// evaluation; it may be the same object as `chat`.
struct ProviderSet {
    std::shared_ptr<ChatModel> chat;
    std::shared_ptr<ChatModel> judge;
    std::shared_ptr<Embedder> embedder;
    std::shared_ptr<Reranker> reranker;
    std::size_t max_concurrency = 1;
};

/// Offline providers: heuristic chat (optionally overlaid by scripted
/// rules), hash embeddings, token-overlap reranker.
ProviderSet make_mock_providers(std::vector<ScriptedChat::Rule> script = {}, std::size_t embedding_dim = 64);

/// Rough token estimate (4 characters per token) for providers that do not
/// report usage.
std::int64_t estimate_tokens(std::string_view text);

}  // namespace plurihop
