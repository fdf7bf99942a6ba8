#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace plurihop {

/// Metadata keys are lowercase; every value is a list.
using Metadata = std::map<std::string, std::vector<std::string>>;

struct Document {
    std::string doc_id;
    std::string filename;
    std::vector<std::string> pages;
    Metadata metadata;
    std::optional<std::string> language;

    /// Pages joined by a single newline.
    std::string text() const;
};

enum class ChunkMode { character, per_page };

struct ChunkingConfig {
    ChunkMode mode = ChunkMode::character;
    std::size_t size = 500;    // L, in characters
    std::size_t overlap = 100; // l, in characters

    /// Throws std::invalid_argument unless 0 < size and overlap < size.
    void validate() const;
};

/// A contiguous window of a document. `begin`/`end` are code-point offsets
/// into Document::text(); `page` is set for per-page chunks.
struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::optional<std::size_t> page;
};

struct LoadError {
    std::filesystem::path path;
    std::string message;
};

struct Corpus {
    std::vector<Document> documents;  // sorted by doc_id
    std::vector<LoadError> errors;

    const Document* find(std::string_view doc_id) const;
};

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Loads `<root>/<name>.txt` (pages split on form feed) and
/// `<root>/<name>/page_###.txt` documents with optional `<name>.meta.json`
/// sidecars. Unreadable files are collected in Corpus::errors; a duplicate
/// doc_id or a missing root throws CorpusError.
Corpus load_corpus(const std::filesystem::path& root);

/// Parses a metadata sidecar object: keys lowercased, scalar values wrapped
/// into single-element lists. A "language" key is returned separately.
std::pair<Metadata, std::optional<std::string>> parse_metadata_sidecar(const std::string& json_text);

/// Character windows of `cfg.size` code points every `size - overlap`, or one
/// chunk per non-blank page.
std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg);

/// ceil((T - L) / (L - l)) + 1 for T > L; 1 for 0 < T <= L; 0 for T = 0.
std::size_t expected_chunk_count(std::size_t text_length, const ChunkingConfig& cfg);

}  // namespace plurihop
