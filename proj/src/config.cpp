#include "plurihop/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace plurihop {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& target, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        target = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
    }
}

HttpEndpoint read_endpoint(const json& j, HttpEndpoint ep, const std::string& where,
                           std::size_t* batch = nullptr) {
    std::set<std::string> keys{"url", "model", "api_key_env", "timeout_seconds"};
    if (batch) keys.insert("batch");
    check_keys(j, keys, where);
    read(j, "url", ep.url, where);
    read(j, "model", ep.model, where);
    read(j, "api_key_env", ep.api_key_env, where);
    read(j, "timeout_seconds", ep.timeout_seconds, where);
    if (batch) read(j, "batch", *batch, where);
    return ep;
}

ordered_json endpoint_json(const HttpEndpoint& ep) {
    return {{"url", ep.url}, {"model", ep.model}, {"api_key_env", ep.api_key_env},
            {"timeout_seconds", ep.timeout_seconds}};
}

std::size_t parse_count(const std::string& value, const std::string& what) {
    try {
        std::size_t used = 0;
        auto n = std::stoll(value, &used);
        if (used != value.size() || n < 1) throw std::invalid_argument(value);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError(what + " must be a positive integer, got '" + value + "'");
    }
}

}  // namespace

void apply_config_json(AppConfig& cfg, const json& j) {
    check_keys(j, {"provider", "chat", "judge", "embedding", "rerank", "max_concurrency", "retries",
                   "retry_backoff_ms", "mock", "index_dir", "seed", "chunking", "index", "pipeline", "naive"},
               "config");
    read(j, "provider", cfg.provider, "config");
    if (j.contains("chat")) cfg.chat = read_endpoint(j["chat"], cfg.chat, "chat");
    if (j.contains("judge")) cfg.judge = read_endpoint(j["judge"], cfg.judge.value_or(cfg.chat), "judge");
    if (j.contains("embedding")) {
        cfg.embedding = read_endpoint(j["embedding"], cfg.embedding, "embedding", &cfg.embedding_batch);
    }
    if (j.contains("rerank")) cfg.rerank = read_endpoint(j["rerank"], cfg.rerank, "rerank");
    read(j, "max_concurrency", cfg.max_concurrency, "config");
    read(j, "retries", cfg.retries, "config");
    read(j, "retry_backoff_ms", cfg.retry_backoff_ms, "config");
    read(j, "seed", cfg.seed, "config");
    if (j.contains("index_dir")) cfg.index_dir = j["index_dir"].get<std::string>();
    if (j.contains("mock")) {
        const auto& m = j["mock"];
        check_keys(m, {"script", "embedding_dim"}, "mock");
        if (m.contains("script")) cfg.mock_script = m["script"].get<std::string>();
        read(m, "embedding_dim", cfg.mock_embedding_dim, "mock");
    }
    if (j.contains("chunking")) {
        const auto& c = j["chunking"];
        check_keys(c, {"mode", "size", "overlap"}, "chunking");
        if (c.contains("mode")) {
            auto mode = c["mode"].get<std::string>();
            if (mode == "character") {
                cfg.chunking.mode = ChunkMode::character;
            } else if (mode == "per_page") {
                cfg.chunking.mode = ChunkMode::per_page;
            } else {
                throw ConfigError("chunking.mode must be 'character' or 'per_page'");
            }
        }
        read(c, "size", cfg.chunking.size, "chunking");
        read(c, "overlap", cfg.chunking.overlap, "chunking");
    }
    if (j.contains("index")) {
        const auto& x = j["index"];
        check_keys(x, {"embed_batch", "summary_max_pages", "summary_max_chars"}, "index");
        read(x, "embed_batch", cfg.build.embed_batch, "index");
        read(x, "summary_max_pages", cfg.build.summary_max_pages, "index");
        read(x, "summary_max_chars", cfg.build.summary_max_chars, "index");
    }
    if (j.contains("pipeline")) {
        const auto& p = j["pipeline"];
        check_keys(p, {"K", "k", "tau", "use_metadata_filter", "use_relevance_filter", "context_budget",
                       "rerank_input_budget", "decomposer"},
                   "pipeline");
        if (p.contains("K")) cfg.pipeline.K = p["K"].is_null() ? kAllResults : p["K"].get<std::size_t>();
        read(p, "k", cfg.pipeline.k, "pipeline");
        read(p, "tau", cfg.pipeline.tau, "pipeline");
        read(p, "use_metadata_filter", cfg.pipeline.use_metadata_filter, "pipeline");
        read(p, "use_relevance_filter", cfg.pipeline.use_relevance_filter, "pipeline");
        read(p, "context_budget", cfg.pipeline.context_budget, "pipeline");
        read(p, "rerank_input_budget", cfg.pipeline.rerank_input_budget, "pipeline");
        if (p.contains("decomposer")) {
            const auto& d = p["decomposer"];
            check_keys(d, {"mode", "model"}, "pipeline.decomposer");
            if (d.contains("mode")) {
                auto mode = d["mode"].get<std::string>();
                if (mode == "few_shot") {
                    cfg.pipeline.decomposer.mode = DecomposerMode::few_shot;
                } else if (mode == "finetuned") {
                    cfg.pipeline.decomposer.mode = DecomposerMode::finetuned;
                } else {
                    throw ConfigError("pipeline.decomposer.mode must be 'few_shot' or 'finetuned'");
                }
            }
            read(d, "model", cfg.pipeline.decomposer.finetuned_model, "pipeline.decomposer");
        }
    }
    if (j.contains("naive")) {
        const auto& n = j["naive"];
        check_keys(n, {"k", "rerank_factor", "use_metadata_filter"}, "naive");
        read(n, "k", cfg.naive.k, "naive");
        read(n, "rerank_factor", cfg.naive.rerank_factor, "naive");
        read(n, "use_metadata_filter", cfg.naive.use_metadata_filter, "naive");
    }
}

AppConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
    AppConfig cfg;
    apply_config_json(cfg, j);
    return cfg;
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str()); v && *v) return std::string(v);
        return std::nullopt;
    };
}

void apply_env(AppConfig& cfg, const EnvLookup& env) {
    if (auto v = env("PLURIHOP_PROVIDER")) cfg.provider = *v;
    if (auto v = env("PLURIHOP_MAX_CONCURRENCY")) cfg.max_concurrency = parse_count(*v, "PLURIHOP_MAX_CONCURRENCY");
    if (auto v = env("PLURIHOP_INDEX_DIR")) cfg.index_dir = *v;
    if (auto v = env("PLURIHOP_CHAT_MODEL")) cfg.chat.model = *v;
    if (auto v = env("PLURIHOP_CHAT_URL")) cfg.chat.url = *v;
}

ordered_json AppConfig::to_json() const {
    ordered_json j;
    j["provider"] = provider;
    j["chat"] = endpoint_json(chat);
    j["judge"] = endpoint_json(judge.value_or(chat));
    j["embedding"] = endpoint_json(embedding);
    j["embedding"]["batch"] = embedding_batch;
    j["rerank"] = endpoint_json(rerank);
    j["max_concurrency"] = max_concurrency;
    j["retries"] = retries;
    j["retry_backoff_ms"] = retry_backoff_ms;
    j["mock"] = {{"script", mock_script.string()}, {"embedding_dim", mock_embedding_dim}};
    j["index_dir"] = index_dir.string();
    j["seed"] = seed;
    j["chunking"] = {{"mode", chunking.mode == ChunkMode::character ? "character" : "per_page"},
                     {"size", chunking.size},
                     {"overlap", chunking.overlap}};
    j["index"] = {{"embed_batch", build.embed_batch},
                  {"summary_max_pages", build.summary_max_pages},
                  {"summary_max_chars", build.summary_max_chars}};
    ordered_json p;
    p["K"] = pipeline.K == kAllResults ? ordered_json(nullptr) : ordered_json(pipeline.K);
    p["k"] = pipeline.k;
    p["tau"] = pipeline.tau;
    p["use_metadata_filter"] = pipeline.use_metadata_filter;
    p["use_relevance_filter"] = pipeline.use_relevance_filter;
    p["context_budget"] = pipeline.context_budget;
    p["rerank_input_budget"] = pipeline.rerank_input_budget;
    p["decomposer"] = {{"mode", pipeline.decomposer.mode == DecomposerMode::few_shot ? "few_shot" : "finetuned"},
                       {"model", pipeline.decomposer.finetuned_model}};
    j["pipeline"] = std::move(p);
    j["naive"] = {{"k", naive.k}, {"rerank_factor", naive.rerank_factor}, {"use_metadata_filter", naive.use_metadata_filter}};
    return j;
}

ProviderSet make_providers(const AppConfig& cfg) {
    ProviderSet set;
    if (cfg.provider == "mock") {
        std::vector<ScriptedChat::Rule> rules;
        if (!cfg.mock_script.empty()) {
            std::ifstream in(cfg.mock_script);
            if (!in) throw ConfigError("cannot read mock script " + cfg.mock_script.string());
            std::ostringstream ss;
            ss << in.rdbuf();
            auto j = json::parse(ss.str(), nullptr, false);
            if (j.is_discarded()) throw ConfigError("mock script " + cfg.mock_script.string() + " is not valid JSON");
            try {
                rules = ScriptedChat::load_rules(j);
            } catch (const std::exception& e) {
                throw ConfigError("mock script " + cfg.mock_script.string() + ": " + e.what());
            }
        }
        set = make_mock_providers(std::move(rules), cfg.mock_embedding_dim);
    } else if (cfg.provider == "http") {
        auto require = [](const HttpEndpoint& ep, const char* name) {
            if (ep.url.empty() || ep.model.empty()) {
                throw ConfigError(std::string("http provider needs ") + name + ".url and " + name + ".model");
            }
        };
        require(cfg.chat, "chat");
        require(cfg.embedding, "embedding");
        require(cfg.rerank, "rerank");
        set.chat = std::make_shared<HttpChat>(cfg.chat);
        set.judge = cfg.judge ? std::make_shared<HttpChat>(*cfg.judge) : set.chat;
        set.embedder = std::make_shared<HttpEmbedder>(cfg.embedding, cfg.embedding_batch);
        set.reranker = std::make_shared<HttpReranker>(cfg.rerank);
    } else {
        throw ConfigError("provider must be 'mock' or 'http', got '" + cfg.provider + "'");
    }
    if (cfg.max_concurrency < 1) throw ConfigError("max_concurrency must be at least 1");
    if (cfg.retries < 0) throw ConfigError("retries must not be negative");

    auto throttle = std::make_shared<Throttle>(static_cast<std::ptrdiff_t>(cfg.max_concurrency));
    RetryPolicy policy{cfg.retries, std::chrono::milliseconds(cfg.retry_backoff_ms)};
    for (ProviderBase* p : std::initializer_list<ProviderBase*>{set.chat.get(), set.judge.get(), set.embedder.get(),
                                                                set.reranker.get()}) {
        p->set_throttle(throttle);
        p->set_retry_policy(policy);
    }
    set.max_concurrency = cfg.max_concurrency;
    return set;
}

}  // namespace plurihop
