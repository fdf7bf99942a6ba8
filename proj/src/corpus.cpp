#include "plurihop/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "plurihop/log.hpp"
#include "plurihop/text.hpp"

namespace plurihop {

namespace fs = std::filesystem;

std::string Document::text() const { return text::join(pages, "\n"); }

void ChunkingConfig::validate() const {
    if (size == 0) throw std::invalid_argument("chunk size must be positive");
    if (overlap >= size) throw std::invalid_argument("chunk overlap must be smaller than chunk size");
}

const Document* Corpus::find(std::string_view doc_id) const {
    auto it = std::lower_bound(documents.begin(), documents.end(), doc_id,
                               [](const Document& d, std::string_view id) { return d.doc_id < id; });
    return it != documents.end() && it->doc_id == doc_id ? &*it : nullptr;
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw std::runtime_error("read failure on " + path.string());
    return ss.str();
}

bool has_txt_extension(const fs::path& p) {
    return text::to_lower_ascii(p.extension().string()) == ".txt";
}

bool is_sidecar(const fs::path& p) {
    auto name = p.filename().string();
    return name.size() > 10 && name.ends_with(".meta.json");
}

std::vector<std::string> split_form_feed(const std::string& content) {
    std::vector<std::string> pages;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= content.size(); ++i) {
        if (i == content.size() || content[i] == '\x0C') {
            pages.push_back(content.substr(start, i - start));
            start = i + 1;
        }
    }
    // A trailing form feed terminates the last page rather than opening a new one.
    if (pages.size() > 1 && pages.back().empty()) pages.pop_back();
    return pages;
}

std::vector<std::string> read_page_directory(const fs::path& dir) {
    static const std::regex page_name(R"(page_(\d+)\.txt)", std::regex::icase);
    std::vector<std::pair<long, fs::path>> pages;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        auto name = entry.path().filename().string();
        if (entry.is_regular_file() && std::regex_match(name, m, page_name)) {
            pages.emplace_back(std::stol(m[1].str()), entry.path());
        }
    }
    std::sort(pages.begin(), pages.end());
    std::vector<std::string> out;
    for (const auto& [_, path] : pages) out.push_back(read_file(path));
    if (out.empty()) out.emplace_back();
    return out;
}

}  // namespace

std::pair<Metadata, std::optional<std::string>> parse_metadata_sidecar(const std::string& json_text) {
    auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) throw std::runtime_error("metadata sidecar must be a JSON object");
    Metadata meta;
    std::optional<std::string> language;
    auto as_string = [](const nlohmann::json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
    };
    for (const auto& [key, value] : j.items()) {
        auto lowered = text::to_lower_ascii(key);
        if (lowered == "language" && value.is_string()) {
            language = value.get<std::string>();
            continue;
        }
        auto& values = meta[lowered];
        if (value.is_array()) {
            for (const auto& v : value) values.push_back(as_string(v));
        } else if (!value.is_null()) {
            values.push_back(as_string(value));
        }
    }
    return {std::move(meta), std::move(language)};
}

Corpus load_corpus(const fs::path& root) {
    if (!fs::is_directory(root)) throw CorpusError("corpus root is not a directory: " + root.string());

    Corpus corpus;
    std::map<std::string, fs::path> seen;
    std::vector<fs::directory_entry> entries(fs::directory_iterator(root), fs::directory_iterator{});
    std::sort(entries.begin(), entries.end());

    for (const auto& entry : entries) {
        const auto& path = entry.path();
        auto name = path.filename().string();
        if (name.empty() || name.front() == '.' || is_sidecar(path)) continue;

        bool as_dir = entry.is_directory();
        if (!as_dir && !(entry.is_regular_file() && has_txt_extension(path))) continue;

        Document doc;
        doc.doc_id = as_dir ? name : path.stem().string();
        doc.filename = name;

        if (auto [it, inserted] = seen.emplace(doc.doc_id, path); !inserted) {
            throw CorpusError("duplicate doc_id '" + doc.doc_id + "' from " + it->second.string() +
                              " and " + path.string());
        }

        try {
            doc.pages = as_dir ? read_page_directory(path) : split_form_feed(read_file(path));
            auto sidecar = root / (doc.doc_id + ".meta.json");
            if (fs::exists(sidecar)) {
                auto [meta, language] = parse_metadata_sidecar(read_file(sidecar));
                doc.metadata = std::move(meta);
                doc.language = std::move(language);
            }
        } catch (const std::exception& e) {
            logger()->warn("skipping {}: {}", path.string(), e.what());
            corpus.errors.push_back({path, e.what()});
            continue;
        }
        corpus.documents.push_back(std::move(doc));
    }

    std::sort(corpus.documents.begin(), corpus.documents.end(),
              [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
    return corpus;
}

std::size_t expected_chunk_count(std::size_t text_length, const ChunkingConfig& cfg) {
    if (text_length == 0) return 0;
    if (text_length <= cfg.size) return 1;
    auto stride = cfg.size - cfg.overlap;
    return (text_length - cfg.size + stride - 1) / stride + 1;
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg) {
    cfg.validate();
    std::vector<Chunk> chunks;

    if (cfg.mode == ChunkMode::per_page) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < doc.pages.size(); ++p) {
            auto length = text::codepoint_offsets(doc.pages[p]).size() - 1;
            if (text::trim(doc.pages[p]).empty()) {
                offset += length + 1;
                continue;
            }
            Chunk c;
            c.chunk_id = doc.doc_id + "#p" + std::to_string(p);
            c.doc_id = doc.doc_id;
            c.text = doc.pages[p];
            c.begin = offset;
            c.end = offset + length;
            c.page = p;
            chunks.push_back(std::move(c));
            offset += length + 1;  // joining newline
        }
        return chunks;
    }

    auto full = doc.text();
    auto offsets = text::codepoint_offsets(full);
    auto length = offsets.size() - 1;
    if (length == 0) return chunks;

    auto stride = cfg.size - cfg.overlap;
    for (std::size_t start = 0;; start += stride) {
        auto end = std::min(start + cfg.size, length);
        Chunk c;
        c.chunk_id = doc.doc_id + "#c" + std::to_string(chunks.size());
        c.doc_id = doc.doc_id;
        c.text = full.substr(offsets[start], offsets[end] - offsets[start]);
        c.begin = start;
        c.end = end;
        chunks.push_back(std::move(c));
        if (end == length) break;
    }
    return chunks;
}

}  // namespace plurihop
