#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "plurihop/corpus.hpp"
#include "plurihop/ledger.hpp"
#include "plurihop/providers.hpp"

namespace plurihop {

/// dot(a,b) / (|a||b|). Throws std::domain_error on a dimension mismatch or
/// a zero-norm input.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Structured retrieval constraint. A document matches iff, for every
/// constrained key, its metadata shares at least one value (ASCII
/// case-insensitive). An empty filter matches everything.
class MetadataFilter {
public:
    MetadataFilter() = default;
    explicit MetadataFilter(const Metadata& constraints);

    bool matches(const Metadata& metadata) const;
    bool empty() const { return constraints_.empty(); }
    const Metadata& constraints() const { return constraints_; }
    nlohmann::json to_json() const;

private:
    Metadata constraints_;
};

enum class IndexKind { chunk, summary };

std::string to_string(IndexKind kind);

inline constexpr std::size_t kAllResults = std::numeric_limits<std::size_t>::max();

struct Neighbor {
    std::string ref;
    std::string doc_id;
    double similarity = 0.0;
};

/// Exact brute-force cosine index.
class VectorIndex {
public:
    struct Entry {
        std::string ref;
        std::string doc_id;
        std::vector<double> vector;
        double norm = 0.0;
    };
    using Predicate = std::function<bool(const Entry&)>;

    explicit VectorIndex(IndexKind kind = IndexKind::chunk) : kind_(kind) {}

    /// Throws std::invalid_argument on a duplicate ref, a dimension or model
    /// tag mismatch, or a zero vector.
    void add(std::string ref, std::string doc_id, Embedding embedding);

    /// Top-k by cosine similarity, descending; ties by ascending ref. Entries
    /// rejected by `keep` are removed before ranking. k == 0 throws
    /// std::domain_error; kAllResults returns every kept entry.
    std::vector<Neighbor> knn(std::span<const double> query, std::size_t k, const Predicate& keep = {}) const;

    IndexKind kind() const { return kind_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t dimension() const { return dimension_; }
    const std::string& model_tag() const { return model_tag_; }
    const std::vector<Entry>& entries() const { return entries_; }
    const Entry* find(std::string_view ref) const;

private:
    IndexKind kind_;
    std::size_t dimension_ = 0;
    std::string model_tag_;
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> by_ref_;
};

/// content-hash -> vector store backing index builds; persisted as JSON lines.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    EmbeddingCache(EmbeddingCache&& other) noexcept : vectors_(std::move(other.vectors_)) {}
    EmbeddingCache& operator=(EmbeddingCache&& other) noexcept {
        if (this != &other) {
            std::scoped_lock lock(mutex_, other.mutex_);
            vectors_ = std::move(other.vectors_);
        }
        return *this;
    }
    static EmbeddingCache load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    static std::string key(const std::string& model_tag, std::string_view text);
    std::optional<std::vector<double>> lookup(const std::string& key) const;
    void store(const std::string& key, std::vector<double> vector);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::vector<double>> vectors_;
};

/// Embeds `texts` through the cache; only misses reach the provider.
std::vector<Embedding> embed_cached(Embedder& embedder, const std::vector<std::string>& texts,
                                    EmbeddingCache* cache, Ledger* ledger);

class IndexBuildError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DocumentInfo {
    std::string doc_id;
    std::string filename;
    Metadata metadata;
    std::size_t page_count = 0;
    std::string content_hash;
};

struct DocumentSummary {
    std::string doc_id;
    std::string summary_text;
    std::string content_hash;  // of the source document text
    std::vector<double> embedding;
};

struct ChunkIndex {
    ChunkingConfig config;
    std::vector<Chunk> chunks;
    std::unordered_map<std::string, std::size_t> chunk_pos;
    VectorIndex vectors{IndexKind::chunk};

    const Chunk* find(std::string_view chunk_id) const;
};

struct SummaryIndex {
    std::vector<DocumentSummary> summaries;
    VectorIndex vectors{IndexKind::summary};

    const DocumentSummary* find(std::string_view doc_id) const;
};

struct BuildOptions {
    std::size_t max_concurrency = 1;
    std::size_t embed_batch = 64;
    std::size_t summary_max_pages = 8;
    std::size_t summary_max_chars = 24000;
};

ChunkIndex build_chunk_index(const Corpus& corpus, const ChunkingConfig& cfg, Embedder& embedder,
                             EmbeddingCache* cache = nullptr, Ledger* ledger = nullptr,
                             const BuildOptions& opts = {});

/// Summarizes a document from its first pages. Empty documents fall back to
/// their filename without a chat call.
DocumentSummary summarize_document(const Document& doc, ChatModel& chat, Ledger* ledger = nullptr,
                                   const BuildOptions& opts = {});

/// `previous` summaries whose content hash still matches are reused.
SummaryIndex build_summary_index(const Corpus& corpus, ChatModel& chat, Embedder& embedder,
                                 EmbeddingCache* cache = nullptr, Ledger* ledger = nullptr,
                                 const BuildOptions& opts = {},
                                 const std::vector<DocumentSummary>& previous = {});

/// Both indexes plus the per-document metadata needed for filtering.
struct CorpusIndex {
    std::map<std::string, DocumentInfo> documents;
    ChunkIndex chunks;
    SummaryIndex summaries;

    /// Predicate admitting entries whose document satisfies `filter`.
    VectorIndex::Predicate filter_predicate(const MetadataFilter& filter) const;
    const DocumentInfo& document(std::string_view doc_id) const;

    /// Directory layout: manifest.json, vectors.jsonl, summaries.jsonl.
    void save(const std::filesystem::path& dir) const;
    static CorpusIndex load(const std::filesystem::path& dir);
    nlohmann::json manifest() const;
};

std::map<std::string, DocumentInfo> describe_documents(const Corpus& corpus);

/// Document info, chunk index and summary index in one call.
CorpusIndex build_corpus_index(const Corpus& corpus, const ChunkingConfig& chunking, ChatModel& chat,
                               Embedder& embedder, EmbeddingCache* cache = nullptr, Ledger* ledger = nullptr,
                               const BuildOptions& opts = {}, const std::vector<DocumentSummary>& previous = {});

}  // namespace plurihop
