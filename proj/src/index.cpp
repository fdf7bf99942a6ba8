#include "plurihop/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "plurihop/log.hpp"
#include "plurihop/parallel.hpp"
#include "plurihop/prompts.hpp"
#include "plurihop/text.hpp"

namespace plurihop {

namespace fs = std::filesystem;
using nlohmann::json;

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::domain_error("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine_similarity: zero-norm vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------

MetadataFilter::MetadataFilter(const Metadata& constraints) {
    for (const auto& [key, values] : constraints) {
        if (values.empty()) continue;
        auto& out = constraints_[text::to_lower_ascii(key)];
        for (const auto& v : values) {
            if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
        }
    }
}

bool MetadataFilter::matches(const Metadata& metadata) const {
    for (const auto& [key, wanted] : constraints_) {
        auto it = metadata.find(key);
        if (it == metadata.end()) return false;
        bool shared = std::any_of(wanted.begin(), wanted.end(), [&](const std::string& w) {
            auto lw = text::to_lower_ascii(w);
            return std::any_of(it->second.begin(), it->second.end(),
                               [&](const std::string& have) { return text::to_lower_ascii(have) == lw; });
        });
        if (!shared) return false;
    }
    return true;
}

json MetadataFilter::to_json() const {
    json j = json::object();
    for (const auto& [k, v] : constraints_) j[k] = v;
    return j;
}

std::string to_string(IndexKind kind) { return kind == IndexKind::chunk ? "chunk" : "summary"; }

// ---------------------------------------------------------------------------

void VectorIndex::add(std::string ref, std::string doc_id, Embedding embedding) {
    if (by_ref_.contains(ref)) throw std::invalid_argument("duplicate index ref: " + ref);
    if (embedding.values.empty()) throw std::invalid_argument("empty embedding for " + ref);
    if (entries_.empty()) {
        dimension_ = embedding.values.size();
        model_tag_ = embedding.model_tag;
    } else if (embedding.values.size() != dimension_) {
        throw std::invalid_argument("embedding dimension mismatch for " + ref);
    } else if (embedding.model_tag != model_tag_) {
        throw std::invalid_argument("embedding model tag mismatch for " + ref);
    }
    double norm = 0.0;
    for (double x : embedding.values) norm += x * x;
    if (norm == 0.0) throw std::invalid_argument("zero-norm embedding for " + ref);
    by_ref_.emplace(ref, entries_.size());
    entries_.push_back({std::move(ref), std::move(doc_id), std::move(embedding.values), std::sqrt(norm)});
}

const VectorIndex::Entry* VectorIndex::find(std::string_view ref) const {
    auto it = by_ref_.find(std::string(ref));
    return it == by_ref_.end() ? nullptr : &entries_[it->second];
}

std::vector<Neighbor> VectorIndex::knn(std::span<const double> query, std::size_t k, const Predicate& keep) const {
    if (k == 0) throw std::domain_error("knn: k must be positive");
    std::vector<Neighbor> scored;
    if (entries_.empty()) return scored;
    if (query.size() != dimension_) throw std::domain_error("knn: query dimension mismatch");
    double qnorm = 0.0;
    for (double x : query) qnorm += x * x;
    if (qnorm == 0.0) throw std::domain_error("knn: zero-norm query");
    qnorm = std::sqrt(qnorm);

    for (const auto& e : entries_) {
        if (keep && !keep(e)) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < dimension_; ++i) dot += query[i] * e.vector[i];
        scored.push_back({e.ref, e.doc_id, std::clamp(dot / (qnorm * e.norm), -1.0, 1.0)});
    }
    auto better = [](const Neighbor& a, const Neighbor& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.ref < b.ref;
    };
    if (k < scored.size()) {
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
        scored.resize(k);
    } else {
        std::sort(scored.begin(), scored.end(), better);
    }
    return scored;
}

// ---------------------------------------------------------------------------

EmbeddingCache EmbeddingCache::load(const fs::path& path) {
    EmbeddingCache cache;
    std::ifstream in(path);
    if (!in) return cache;
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("key") || !j.contains("vector")) {
            logger()->warn("ignoring malformed embedding cache line in {}", path.string());
            continue;
        }
        cache.vectors_[j["key"].get<std::string>()] = j["vector"].get<std::vector<double>>();
    }
    return cache;
}

void EmbeddingCache::save(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write embedding cache " + path.string());
    std::lock_guard lock(mutex_);
    for (const auto& [k, v] : vectors_) out << json{{"key", k}, {"vector", v}}.dump() << '\n';
}

std::string EmbeddingCache::key(const std::string& model_tag, std::string_view text) {
    std::string material = model_tag;
    material += '\0';
    material += text;
    return text::sha256_hex(material);
}

std::optional<std::vector<double>> EmbeddingCache::lookup(const std::string& k) const {
    std::lock_guard lock(mutex_);
    auto it = vectors_.find(k);
    if (it == vectors_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingCache::store(const std::string& k, std::vector<double> vector) {
    std::lock_guard lock(mutex_);
    vectors_[k] = std::move(vector);
}

std::size_t EmbeddingCache::size() const {
    std::lock_guard lock(mutex_);
    return vectors_.size();
}

std::vector<Embedding> embed_cached(Embedder& embedder, const std::vector<std::string>& texts,
                                    EmbeddingCache* cache, Ledger* ledger) {
    auto tag = embedder.model_tag();
    std::vector<Embedding> out(texts.size());
    std::vector<std::size_t> missing;
    std::vector<std::string> keys(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (cache) {
            keys[i] = EmbeddingCache::key(tag, texts[i]);
            if (auto hit = cache->lookup(keys[i])) {
                out[i] = {std::move(*hit), tag};
                if (ledger) ledger->add("embed.cache_hits");
                continue;
            }
        }
        missing.push_back(i);
    }
    if (missing.empty()) return out;

    // Each distinct text reaches the provider once per call.
    std::vector<std::string> batch;
    std::map<std::string_view, std::size_t> slot;
    std::vector<std::size_t> source(missing.size());
    for (std::size_t j = 0; j < missing.size(); ++j) {
        auto [it, inserted] = slot.emplace(texts[missing[j]], batch.size());
        if (inserted) batch.push_back(texts[missing[j]]);
        source[j] = it->second;
    }
    auto fresh = embedder.embed(batch, ledger);
    for (std::size_t j = 0; j < missing.size(); ++j) {
        out[missing[j]] = fresh[source[j]];
        if (cache) cache->store(keys[missing[j]], fresh[source[j]].values);
    }
    return out;
}

// ---------------------------------------------------------------------------

const Chunk* ChunkIndex::find(std::string_view chunk_id) const {
    auto it = chunk_pos.find(std::string(chunk_id));
    return it == chunk_pos.end() ? nullptr : &chunks[it->second];
}

const DocumentSummary* SummaryIndex::find(std::string_view doc_id) const {
    for (const auto& s : summaries) {
        if (s.doc_id == doc_id) return &s;
    }
    return nullptr;
}

ChunkIndex build_chunk_index(const Corpus& corpus, const ChunkingConfig& cfg, Embedder& embedder,
                             EmbeddingCache* cache, Ledger* ledger, const BuildOptions& opts) {
    cfg.validate();
    ChunkIndex index;
    index.config = cfg;

    std::vector<std::vector<Chunk>> per_doc(corpus.documents.size());
    parallel_for(corpus.documents.size(), opts.max_concurrency,
                 [&](std::size_t i) { per_doc[i] = chunk_document(corpus.documents[i], cfg); });
    for (auto& doc_chunks : per_doc) {
        for (auto& c : doc_chunks) {
            index.chunk_pos.emplace(c.chunk_id, index.chunks.size());
            index.chunks.push_back(std::move(c));
        }
    }

    auto batch = std::max<std::size_t>(1, opts.embed_batch);
    auto batches = (index.chunks.size() + batch - 1) / batch;
    std::vector<std::vector<Embedding>> embedded(batches);
    std::vector<char> done(batches, 0);
    try {
        parallel_for(batches, opts.max_concurrency, [&](std::size_t b) {
            std::vector<std::string> texts;
            for (auto i = b * batch; i < std::min(index.chunks.size(), (b + 1) * batch); ++i) {
                texts.push_back(index.chunks[i].text);
            }
            embedded[b] = embed_cached(embedder, texts, cache, ledger);
            done[b] = 1;
        });
    } catch (const std::exception& e) {
        auto finished = static_cast<std::size_t>(std::count(done.begin(), done.end(), 1));
        throw IndexBuildError("chunk embedding failed after " + std::to_string(finished) + " of " +
                              std::to_string(batches) + " batches (" + std::to_string(index.chunks.size()) +
                              " chunks): " + e.what());
    }

    std::size_t i = 0;
    for (auto& b : embedded) {
        for (auto& e : b) {
            const auto& c = index.chunks[i++];
            index.vectors.add(c.chunk_id, c.doc_id, std::move(e));
        }
    }
    return index;
}

DocumentSummary summarize_document(const Document& doc, ChatModel& chat, Ledger* ledger, const BuildOptions& opts) {
    DocumentSummary summary;
    summary.doc_id = doc.doc_id;
    auto full = doc.text();
    summary.content_hash = text::sha256_hex(full);

    std::vector<std::string> first_pages(doc.pages.begin(),
                                         doc.pages.begin() + static_cast<std::ptrdiff_t>(
                                                                 std::min(doc.pages.size(), opts.summary_max_pages)));
    auto context = text::join(first_pages, "\n");
    if (context.size() > opts.summary_max_chars) {
        auto offsets = text::codepoint_offsets(context);
        std::size_t cut = 0;
        for (auto o : offsets) {
            if (o > opts.summary_max_chars) break;
            cut = o;
        }
        context.resize(cut);
    }
    if (text::trim(context).empty()) {
        summary.summary_text = doc.filename;
        return summary;
    }

    std::map<std::string, std::string> vars{{"filename", doc.filename}, {"context", context}};
    ChatRequest req;
    req.role = prompts::role::kSummarize;
    req.user_prompt = text::render(prompts::kDocumentSummarizer, vars);
    req.vars = std::move(vars);
    summary.summary_text = std::string(text::trim(chat.complete(req, ledger)));
    if (summary.summary_text.empty()) summary.summary_text = doc.filename;
    return summary;
}

SummaryIndex build_summary_index(const Corpus& corpus, ChatModel& chat, Embedder& embedder, EmbeddingCache* cache,
                                 Ledger* ledger, const BuildOptions& opts,
                                 const std::vector<DocumentSummary>& previous) {
    std::map<std::pair<std::string, std::string>, const DocumentSummary*> reusable;
    for (const auto& p : previous) reusable[{p.doc_id, p.content_hash}] = &p;

    SummaryIndex index;
    index.summaries.resize(corpus.documents.size());
    parallel_for(corpus.documents.size(), opts.max_concurrency, [&](std::size_t i) {
        const auto& doc = corpus.documents[i];
        auto hash = text::sha256_hex(doc.text());
        if (auto it = reusable.find({doc.doc_id, hash}); it != reusable.end()) {
            index.summaries[i] = *it->second;
            index.summaries[i].embedding.clear();
            if (ledger) ledger->add("summaries.reused");
            return;
        }
        index.summaries[i] = summarize_document(doc, chat, ledger, opts);
    });

    std::vector<std::string> texts;
    for (const auto& s : index.summaries) texts.push_back(s.summary_text);
    std::vector<Embedding> vectors;
    try {
        vectors = embed_cached(embedder, texts, cache, ledger);
    } catch (const std::exception& e) {
        throw IndexBuildError("summary embedding failed for " + std::to_string(texts.size()) +
                              " summaries: " + e.what());
    }
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        index.summaries[i].embedding = vectors[i].values;
        index.vectors.add(index.summaries[i].doc_id, index.summaries[i].doc_id, std::move(vectors[i]));
    }
    return index;
}

// ---------------------------------------------------------------------------

std::map<std::string, DocumentInfo> describe_documents(const Corpus& corpus) {
    std::map<std::string, DocumentInfo> out;
    for (const auto& d : corpus.documents) {
        out[d.doc_id] = {d.doc_id, d.filename, d.metadata, d.pages.size(), text::sha256_hex(d.text())};
    }
    return out;
}

VectorIndex::Predicate CorpusIndex::filter_predicate(const MetadataFilter& filter) const {
    if (filter.empty()) return {};
    return [this, filter](const VectorIndex::Entry& e) {
        auto it = documents.find(e.doc_id);
        return it != documents.end() && filter.matches(it->second.metadata);
    };
}

const DocumentInfo& CorpusIndex::document(std::string_view doc_id) const {
    auto it = documents.find(std::string(doc_id));
    if (it == documents.end()) throw std::out_of_range("unknown document: " + std::string(doc_id));
    return it->second;
}

namespace {

json chunking_to_json(const ChunkingConfig& c) {
    return {{"mode", c.mode == ChunkMode::character ? "character" : "per_page"},
            {"size", c.size},
            {"overlap", c.overlap}};
}

ChunkingConfig chunking_from_json(const json& j) {
    ChunkingConfig c;
    c.mode = j.value("mode", "character") == "per_page" ? ChunkMode::per_page : ChunkMode::character;
    c.size = j.value("size", c.size);
    c.overlap = j.value("overlap", c.overlap);
    return c;
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<json> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!text::trim(line).empty()) rows.push_back(json::parse(line));
    }
    return rows;
}

}  // namespace

json CorpusIndex::manifest() const {
    json docs = json::array();
    for (const auto& [id, d] : documents) {
        json meta = json::object();
        for (const auto& [k, v] : d.metadata) meta[k] = v;
        docs.push_back({{"doc_id", id},
                        {"filename", d.filename},
                        {"metadata", meta},
                        {"page_count", d.page_count},
                        {"content_hash", d.content_hash}});
    }
    return {{"format", "plurihop-index/1"},
            {"dimension", chunks.vectors.size() ? chunks.vectors.dimension() : summaries.vectors.dimension()},
            {"kinds", {to_string(IndexKind::chunk), to_string(IndexKind::summary)}},
            {"model_tag", chunks.vectors.size() ? chunks.vectors.model_tag() : summaries.vectors.model_tag()},
            {"chunking", chunking_to_json(chunks.config)},
            {"counts", {{"documents", documents.size()}, {"chunks", chunks.chunks.size()}, {"summaries", summaries.summaries.size()}}},
            {"documents", docs}};
}

void CorpusIndex::save(const fs::path& dir) const {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        out << manifest().dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "vectors.jsonl", std::ios::trunc);
        for (const auto& c : chunks.chunks) {
            json row = {{"ref", c.chunk_id}, {"doc_id", c.doc_id}, {"begin", c.begin}, {"end", c.end}, {"text", c.text}};
            if (c.page) row["page"] = *c.page;
            row["vector"] = chunks.vectors.find(c.chunk_id)->vector;
            out << row.dump() << '\n';
        }
    }
    {
        std::ofstream out(dir / "summaries.jsonl", std::ios::trunc);
        for (const auto& s : summaries.summaries) {
            out << json{{"doc_id", s.doc_id}, {"summary", s.summary_text}, {"content_hash", s.content_hash},
                        {"vector", s.embedding}}
                       .dump()
                << '\n';
        }
    }
}

CorpusIndex CorpusIndex::load(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("no index manifest in " + dir.string());
    auto manifest = json::parse(in);
    auto tag = manifest.at("model_tag").get<std::string>();

    CorpusIndex index;
    index.chunks.config = chunking_from_json(manifest.at("chunking"));
    for (const auto& d : manifest.at("documents")) {
        DocumentInfo info;
        info.doc_id = d.at("doc_id").get<std::string>();
        info.filename = d.value("filename", info.doc_id);
        auto meta = d.value("metadata", json::object());
        for (const auto& [k, v] : meta.items()) {
            info.metadata[k] = v.get<std::vector<std::string>>();
        }
        info.page_count = d.value("page_count", std::size_t{0});
        info.content_hash = d.value("content_hash", "");
        index.documents[info.doc_id] = std::move(info);
    }
    for (const auto& row : read_jsonl(dir / "vectors.jsonl")) {
        Chunk c;
        c.chunk_id = row.at("ref").get<std::string>();
        c.doc_id = row.at("doc_id").get<std::string>();
        c.begin = row.at("begin").get<std::size_t>();
        c.end = row.at("end").get<std::size_t>();
        c.text = row.at("text").get<std::string>();
        if (row.contains("page")) c.page = row["page"].get<std::size_t>();
        index.chunks.vectors.add(c.chunk_id, c.doc_id, {row.at("vector").get<std::vector<double>>(), tag});
        index.chunks.chunk_pos.emplace(c.chunk_id, index.chunks.chunks.size());
        index.chunks.chunks.push_back(std::move(c));
    }
    for (const auto& row : read_jsonl(dir / "summaries.jsonl")) {
        DocumentSummary s;
        s.doc_id = row.at("doc_id").get<std::string>();
        s.summary_text = row.at("summary").get<std::string>();
        s.content_hash = row.value("content_hash", "");
        s.embedding = row.at("vector").get<std::vector<double>>();
        index.summaries.vectors.add(s.doc_id, s.doc_id, {s.embedding, tag});
        index.summaries.summaries.push_back(std::move(s));
    }
    return index;
}

}  // namespace plurihop

namespace plurihop {

CorpusIndex build_corpus_index(const Corpus& corpus, const ChunkingConfig& chunking, ChatModel& chat,
                               Embedder& embedder, EmbeddingCache* cache, Ledger* ledger, const BuildOptions& opts,
                               const std::vector<DocumentSummary>& previous) {
    CorpusIndex index;
    index.documents = describe_documents(corpus);
    index.chunks = build_chunk_index(corpus, chunking, embedder, cache, ledger, opts);
    index.summaries = build_summary_index(corpus, chat, embedder, cache, ledger, opts, previous);
    return index;
}

}  // namespace plurihop
