#include <random>

#include <gtest/gtest.h>

#include "plurihop/corpus.hpp"
#include "plurihop/text.hpp"
#include "temp_dir.hpp"

using namespace plurihop;
using plurihop::testing::TempDir;

TEST(Text, TokenizeLowercasesAndSplitsOnPunctuation) {
    EXPECT_EQ(text::tokenize("Turbine T1, oil-report!"), (std::vector<std::string>{"turbine", "t1", "oil", "report"}));
    EXPECT_TRUE(text::tokenize("  ... ").empty());
}

TEST(Text, SplitSentencesKeepsDecimalsTogether) {
    auto s = text::split_sentences("Iron is 48.5 ppm. Water is fine!\nNext line");
    EXPECT_EQ(s, (std::vector<std::string>{"Iron is 48.5 ppm", "Water is fine", "Next line"}));
}

TEST(Text, RenderReplacesOnlyKnownPlaceholders) {
    std::map<std::string, std::string> vars{{"name", "T1"}};
    EXPECT_EQ(text::render("{name} and {'schema': str}", vars), "T1 and {'schema': str}");
}

TEST(Text, Sha256KnownVector) {
    EXPECT_EQ(text::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Text, CodepointOffsetsCountMultibyteOnce) {
    auto offsets = text::codepoint_offsets("aäb");  // ä is two bytes
    EXPECT_EQ(offsets, (std::vector<std::size_t>{0, 1, 3, 4}));
}

TEST(Corpus, LoadsFixtureWithSidecarsAndPageDirectories) {
    auto corpus = load_corpus(std::string(PLURIHOP_FIXTURES_DIR) + "/corpus");
    ASSERT_EQ(corpus.documents.size(), 7u);
    EXPECT_TRUE(corpus.errors.empty());
    const auto* service = corpus.find("service_T02_2023");
    ASSERT_NE(service, nullptr);
    EXPECT_EQ(service->pages.size(), 2u);
    EXPECT_EQ(service->metadata.at("plant_id"), std::vector<std::string>{"T02"});
    const auto* insp = corpus.find("inspection_T01_2022");
    ASSERT_NE(insp, nullptr);
    EXPECT_EQ(insp->pages.size(), 2u);
    EXPECT_EQ(insp->filename, "inspection_T01_2022.txt");
    EXPECT_EQ(insp->metadata.at("windpark"), std::vector<std::string>{"Nordfeld"});
}

TEST(Corpus, FormFeedSplitsPagesAndTrailingFeedIsDropped) {
    TempDir dir;
    dir.write("a.txt", "one\ftwo\f");
    dir.write(".hidden.txt", "skip me");
    auto corpus = load_corpus(dir.path());
    ASSERT_EQ(corpus.documents.size(), 1u);
    EXPECT_EQ(corpus.documents[0].pages, (std::vector<std::string>{"one", "two"}));
    EXPECT_EQ(corpus.documents[0].text(), "one\ntwo");
}

TEST(Corpus, DuplicateDocIdThrows) {
    TempDir dir;
    dir.write("a.txt", "x");
    dir.write("a/page_001.txt", "y");
    EXPECT_THROW(load_corpus(dir.path()), CorpusError);
}

TEST(Corpus, MissingRootThrows) { EXPECT_THROW(load_corpus("/nonexistent/corpus/root"), CorpusError); }

TEST(Corpus, SidecarKeysLowercasedAndScalarsWrapped) {
    auto [meta, lang] = parse_metadata_sidecar(R"({"Plant_ID": "T9", "Windpark": ["A", "B"], "language": "de"})");
    EXPECT_EQ(meta.at("plant_id"), std::vector<std::string>{"T9"});
    EXPECT_EQ(meta.at("windpark"), (std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(lang, "de");
    EXPECT_EQ(meta.count("language"), 0u);
}

TEST(Chunking, ConfigValidation) {
    EXPECT_THROW((ChunkingConfig{ChunkMode::character, 100, 100}.validate()), std::invalid_argument);
    EXPECT_THROW((ChunkingConfig{ChunkMode::character, 0, 0}.validate()), std::invalid_argument);
    EXPECT_NO_THROW((ChunkingConfig{ChunkMode::character, 500, 100}.validate()));
}

TEST(Chunking, SpansFollowStrideOfSizeMinusOverlap) {
    Document doc{"d", "d.txt", {std::string(1300, 'x')}, {}, std::nullopt};
    auto chunks = chunk_document(doc, {});
    // T=1300, L=500, l=100: starts 0, 400, 800; the third chunk reaches the end.
    ASSERT_EQ(chunks.size(), 3u);
    EXPECT_EQ(chunks[0].begin, 0u);
    EXPECT_EQ(chunks[0].end, 500u);
    EXPECT_EQ(chunks[1].begin, 400u);
    EXPECT_EQ(chunks[1].end, 900u);
    EXPECT_EQ(chunks[2].begin, 800u);
    EXPECT_EQ(chunks[2].end, 1300u);
    EXPECT_EQ(chunks[1].chunk_id, "d#c1");
}

TEST(Chunking, EdgeLengths) {
    ChunkingConfig cfg;
    EXPECT_EQ(expected_chunk_count(0, cfg), 0u);
    EXPECT_EQ(expected_chunk_count(1, cfg), 1u);
    EXPECT_EQ(expected_chunk_count(500, cfg), 1u);
    EXPECT_EQ(expected_chunk_count(501, cfg), 2u);
    EXPECT_EQ(expected_chunk_count(900, cfg), 2u);
    EXPECT_EQ(expected_chunk_count(901, cfg), 3u);
    Document empty{"e", "e.txt", {""}, {}, std::nullopt};
    EXPECT_TRUE(chunk_document(empty, cfg).empty());
}

namespace {

std::string random_text(std::mt19937_64& rng, std::size_t codepoints) {
    static const std::vector<std::string> alphabet = {"a", "b", " ", "\n", "ä", "€", "z", "."};
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::string s;
    for (std::size_t i = 0; i < codepoints; ++i) s += alphabet[pick(rng)];
    return s;
}

// Rebuilds the text from chunks: the first chunk whole, then each later
// chunk minus the part it shares with its predecessor.
std::string reconstruct(const std::vector<Chunk>& chunks) {
    std::string out;
    std::size_t covered = 0;
    for (const auto& c : chunks) {
        auto offsets = text::codepoint_offsets(c.text);
        auto skip = covered - c.begin;
        out += c.text.substr(offsets[skip]);
        covered = c.end;
    }
    return out;
}

}  // namespace

TEST(Chunking, ReconstructionOnRandomTexts) {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<std::size_t> length(0, 3000);
    ChunkingConfig cfg;
    for (int trial = 0; trial < 100; ++trial) {
        auto n = length(rng);
        auto t = random_text(rng, n);
        Document doc{"r", "r.txt", {t}, {}, std::nullopt};
        auto chunks = chunk_document(doc, cfg);
        std::size_t oracle = n == 0 ? 0 : n <= 500 ? 1 : (n - 500 + 399) / 400 + 1;
        ASSERT_EQ(chunks.size(), oracle) << "length " << n;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            ASSERT_EQ(chunks[i].begin, i * 400);
            ASSERT_EQ(chunks[i].end, std::min(i * 400 + 500, n));
            ASSERT_EQ(text::codepoint_offsets(chunks[i].text).size() - 1, chunks[i].end - chunks[i].begin);
        }
        ASSERT_EQ(reconstruct(chunks), t);
    }
}

TEST(Chunking, PerPageModeEmitsOneChunkPerPage) {
    Document doc{"p", "p.txt", {"first page", "", "third"}, {}, std::nullopt};
    ChunkingConfig cfg{ChunkMode::per_page, 500, 100};
    auto chunks = chunk_document(doc, cfg);
    ASSERT_EQ(chunks.size(), 2u);
    EXPECT_EQ(chunks[0].chunk_id, "p#p0");
    EXPECT_EQ(chunks[0].page, 0u);
    EXPECT_EQ(chunks[1].text, "third");
    EXPECT_EQ(chunks[1].page, 2u);
    EXPECT_EQ(doc.text().substr(chunks[1].begin, chunks[1].end - chunks[1].begin), "third");
}
