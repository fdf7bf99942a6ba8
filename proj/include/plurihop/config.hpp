#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "plurihop/corpus.hpp"
#include "plurihop/index.hpp"
#include "plurihop/pipeline.hpp"
#include "plurihop/providers.hpp"

namespace plurihop {

/// Invalid or inconsistent configuration (the CLI maps it to exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AppConfig {
    std::string provider = "mock";  // mock | http
    HttpEndpoint chat;
    std::optional<HttpEndpoint> judge;  // defaults to `chat`
    HttpEndpoint embedding;
    std::size_t embedding_batch = 64;
    HttpEndpoint rerank;
    std::size_t max_concurrency = 1;
    int retries = 3;
    int retry_backoff_ms = 200;
    std::filesystem::path mock_script;  // optional ScriptedChat rules
    std::size_t mock_embedding_dim = 64;
    std::filesystem::path index_dir = "plurihop-index";
    std::uint64_t seed = 42;

    ChunkingConfig chunking;
    BuildOptions build;
    PipelineConfig pipeline;
    NaiveConfig naive;

    /// Effective configuration; API keys are never included, only the
    /// names of the variables holding them.
    nlohmann::ordered_json to_json() const;
};

/// Overlays a JSON config object onto `cfg`. Unknown keys are rejected.
void apply_config_json(AppConfig& cfg, const nlohmann::json& j);
AppConfig load_config_file(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// PLURIHOP_PROVIDER, PLURIHOP_MAX_CONCURRENCY, PLURIHOP_INDEX_DIR,
/// PLURIHOP_CHAT_MODEL, PLURIHOP_CHAT_URL.
void apply_env(AppConfig& cfg, const EnvLookup& env);

/// Builds providers sharing one throttle of `max_concurrency` slots.
ProviderSet make_providers(const AppConfig& cfg);

}  // namespace plurihop
