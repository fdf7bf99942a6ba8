#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "plurihop/index.hpp"
#include "temp_dir.hpp"

using namespace plurihop;
using plurihop::testing::TempDir;

namespace {

Embedding vec(std::vector<double> v, std::string tag = "t") { return {std::move(v), std::move(tag)}; }

Corpus tiny_corpus() {
    Corpus c;
    c.documents.push_back({"a", "a.txt", {"Gearbox inspection of turbine T01 in Nordfeld."}, {{"plant_id", {"T01"}}}, {}});
    c.documents.push_back({"b", "b.txt", {"Oil analysis of turbine T02.", "Iron content 48 ppm."}, {{"plant_id", {"T02"}}}, {}});
    c.documents.push_back({"c", "c.txt", {""}, {}, {}});
    return c;
}

}  // namespace

TEST(Cosine, KnownValuesAndErrors) {
    std::vector<double> a{1, 0}, b{1, 1}, z{0, 0}, three{1, 2, 3};
    EXPECT_NEAR(cosine_similarity(a, b), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(cosine_similarity(b, b), 1.0, 1e-12);
    EXPECT_THROW(cosine_similarity(a, z), std::domain_error);
    EXPECT_THROW(cosine_similarity(a, three), std::domain_error);
}

TEST(MetadataFilterTest, ConjunctionOfDisjunctions) {
    MetadataFilter f({{"plant_id", {"T01", "T02"}}, {"Windpark", {"nordfeld"}}});
    EXPECT_TRUE(f.matches({{"plant_id", {"T02"}}, {"windpark", {"Nordfeld"}}}));
    EXPECT_FALSE(f.matches({{"plant_id", {"T03"}}, {"windpark", {"Nordfeld"}}}));
    EXPECT_FALSE(f.matches({{"plant_id", {"T01"}}}));
    EXPECT_TRUE(MetadataFilter().matches({}));
    EXPECT_TRUE(MetadataFilter(Metadata{{"plant_id", {}}}).empty());
}

TEST(VectorIndexTest, AddValidation) {
    VectorIndex idx;
    idx.add("r1", "d", vec({1, 0}));
    EXPECT_THROW(idx.add("r1", "d", vec({0, 1})), std::invalid_argument);
    EXPECT_THROW(idx.add("r2", "d", vec({0, 1, 0})), std::invalid_argument);
    EXPECT_THROW(idx.add("r3", "d", vec({0, 1}, "other")), std::invalid_argument);
    EXPECT_THROW(idx.add("r4", "d", vec({0, 0})), std::invalid_argument);
    EXPECT_THROW(idx.knn(std::vector<double>{1, 0}, 0), std::domain_error);
}

TEST(VectorIndexTest, KnnMatchesBruteForce) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    VectorIndex idx;
    std::vector<std::vector<double>> vs;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> v(8);
        for (auto& x : v) x = g(rng);
        vs.push_back(v);
        idx.add("r" + std::to_string(i), "d" + std::to_string(i % 10), vec(v));
    }
    for (int q = 0; q < 20; ++q) {
        std::vector<double> query(8);
        for (auto& x : query) x = g(rng);
        std::vector<std::pair<double, std::string>> oracle;
        for (int i = 0; i < 200; ++i) oracle.emplace_back(-cosine_similarity(query, vs[i]), "r" + std::to_string(i));
        std::sort(oracle.begin(), oracle.end());
        auto got = idx.knn(query, 15);
        ASSERT_EQ(got.size(), 15u);
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].ref, oracle[i].second);
            EXPECT_NEAR(got[i].similarity, -oracle[i].first, 1e-12);
        }
        EXPECT_EQ(idx.knn(query, kAllResults).size(), 200u);
    }
}

TEST(VectorIndexTest, PredicateAppliedBeforeRanking) {
    VectorIndex idx;
    idx.add("near", "x", vec({1, 0}));
    idx.add("far", "y", vec({0, 1}));
    idx.add("mid", "y", vec({1, 1}));
    auto got = idx.knn(std::vector<double>{1, 0}, 2, [](const VectorIndex::Entry& e) { return e.doc_id == "y"; });
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].ref, "mid");
    EXPECT_EQ(got[1].ref, "far");
}

TEST(VectorIndexTest, TiesBrokenByRef) {
    VectorIndex idx;
    idx.add("b", "d", vec({1, 0}));
    idx.add("a", "d", vec({2, 0}));
    auto got = idx.knn(std::vector<double>{1, 0}, 2);
    EXPECT_EQ(got[0].ref, "a");
    EXPECT_EQ(got[1].ref, "b");
}

TEST(Cache, OnlyMissesReachProvider) {
    HashEmbedder e;
    EmbeddingCache cache;
    Ledger first, second;
    auto a = embed_cached(e, {"one", "two", "one"}, &cache, &first);
    EXPECT_EQ(first.get("embed.texts"), 2);
    EXPECT_EQ(cache.size(), 2u);
    auto b = embed_cached(e, {"two", "three"}, &cache, &second);
    EXPECT_EQ(second.get("embed.texts"), 1);
    EXPECT_EQ(second.get("embed.cache_hits"), 1);
    EXPECT_EQ(a[1].values, b[0].values);
    EXPECT_EQ(a[0].values, a[2].values);
}

TEST(Cache, SaveLoadRoundTrip) {
    TempDir dir;
    HashEmbedder e;
    EmbeddingCache cache;
    embed_cached(e, {"alpha", "beta"}, &cache, nullptr);
    cache.save(dir / "cache.jsonl");
    auto loaded = EmbeddingCache::load(dir / "cache.jsonl");
    EXPECT_EQ(loaded.size(), 2u);
    auto k = EmbeddingCache::key(e.model_tag(), "alpha");
    EXPECT_EQ(loaded.lookup(k), cache.lookup(k));
    EXPECT_EQ(EmbeddingCache::load(dir / "missing.jsonl").size(), 0u);
}

TEST(CorpusIndexTest, BuildsSaveLoadAndFilters) {
    TempDir dir;
    auto corpus = tiny_corpus();
    HeuristicChat chat;
    HashEmbedder e;
    Ledger ledger;
    ChunkingConfig cfg;
    auto index = build_corpus_index(corpus, cfg, chat, e, nullptr, &ledger);
    EXPECT_EQ(index.documents.size(), 3u);
    EXPECT_EQ(index.chunks.chunks.size(), 2u);  // empty doc contributes no chunk
    EXPECT_EQ(index.summaries.summaries.size(), 3u);
    EXPECT_EQ(index.summaries.find("c")->summary_text, "c.txt");
    EXPECT_EQ(ledger.get("chat.calls.summarize"), 2);

    index.save(dir.path());
    auto loaded = CorpusIndex::load(dir.path());
    EXPECT_EQ(loaded.manifest(), index.manifest());
    EXPECT_EQ(loaded.chunks.vectors.size(), index.chunks.vectors.size());
    auto q = e.embed_one("turbine T02 iron");
    auto before = index.chunks.vectors.knn(q, kAllResults);
    auto after = loaded.chunks.vectors.knn(q, kAllResults);
    ASSERT_EQ(before.size(), after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        EXPECT_EQ(before[i].ref, after[i].ref);
        EXPECT_NEAR(before[i].similarity, after[i].similarity, 1e-12);
    }

    auto keep = loaded.filter_predicate(MetadataFilter(Metadata{{"plant_id", {"T01"}}}));
    auto hits = loaded.summaries.vectors.knn(q, kAllResults, keep);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].doc_id, "a");
    EXPECT_THROW(loaded.document("zzz"), std::out_of_range);
}

TEST(CorpusIndexTest, UnchangedSummariesAreReused) {
    auto corpus = tiny_corpus();
    HeuristicChat chat;
    HashEmbedder e;
    auto first = build_summary_index(corpus, chat, e);
    corpus.documents[1].pages[1] = "Iron content 52 ppm.";
    Ledger ledger;
    auto second = build_summary_index(corpus, chat, e, nullptr, &ledger, {}, first.summaries);
    EXPECT_EQ(ledger.get("summaries.reused"), 2);
    EXPECT_EQ(ledger.get("chat.calls.summarize"), 1);
    EXPECT_EQ(second.summaries[0].summary_text, first.summaries[0].summary_text);
}

TEST(CorpusIndexTest, LoadMissingDirectoryFails) {
    TempDir dir;
    EXPECT_THROW(CorpusIndex::load(dir / "nope"), std::runtime_error);
}
