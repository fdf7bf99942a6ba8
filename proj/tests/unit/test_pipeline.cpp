#include <gtest/gtest.h>

#include "plurihop/pipeline.hpp"
#include "plurihop/prompts.hpp"

using namespace plurihop;
using nlohmann::json;

namespace {

const CorpusIndex& fixture_index() {
    static const CorpusIndex index = [] {
        auto corpus = load_corpus(std::filesystem::path(PLURIHOP_FIXTURES_DIR) / "corpus");
        HeuristicChat chat;
        HashEmbedder embedder;
        return build_corpus_index(corpus, ChunkingConfig{}, chat, embedder);
    }();
    return index;
}

ChatRequest user(std::string prompt) {
    ChatRequest r;
    r.user_prompt = std::move(prompt);
    return r;
}

}  // namespace

TEST(Config, Validation) {
    PipelineConfig p;
    EXPECT_NO_THROW(p.validate());
    p.tau = 1.5;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.tau = 0.1;
    p.k = 0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    NaiveConfig n;
    n.rerank = true;
    n.rerank_factor = 0;
    EXPECT_THROW(n.validate(), std::invalid_argument);
}

TEST(Decompose, CapsQuestionsAtTen) {
    json qs = json::array();
    for (int i = 0; i < 12; ++i) qs.push_back("q" + std::to_string(i));
    ScriptedChat chat({{"", "", json{{"hypothetical_summary", "s"}, {"questions", qs}}.dump()}});
    auto plan = decompose_query("question?", chat);
    EXPECT_EQ(plan.intermediate_questions.size(), kMaxIntermediateQuestions);
    EXPECT_EQ(plan.hypothetical_summary, "s");
}

TEST(Decompose, EmptyPlanFallsBackToQuery) {
    ScriptedChat chat({{"", "", R"({"questions": []})"}});
    Ledger ledger;
    auto plan = decompose_query("What broke?", chat, {}, &ledger);
    EXPECT_EQ(plan.intermediate_questions, std::vector<std::string>{"What broke?"});
    EXPECT_EQ(plan.hypothetical_summary, "What broke?");
    EXPECT_EQ(ledger.get("pipeline.decompose_fallbacks"), 1);
    EXPECT_THROW(decompose_query("  ", chat), std::invalid_argument);
}

TEST(Decompose, ModesShapeTheRequest) {
    class Recorder : public ChatModel {
    public:
        std::string tag() const override { return "rec"; }
        ChatRequest last;

    protected:
        ChatReply do_complete(const ChatRequest& req) override {
            last = req;
            return {R"({"hypothetical_summary": "h", "questions": ["a"]})"};
        }
    } chat;
    decompose_query("Q?", chat);
    EXPECT_NE(chat.last.system_prompt.find("Question: "), std::string::npos);
    EXPECT_TRUE(chat.last.model.empty());
    DecomposerConfig ft;
    ft.mode = DecomposerMode::finetuned;
    ft.finetuned_model = "ft:decomposer";
    decompose_query("Q?", chat, ft);
    EXPECT_EQ(chat.last.model, "ft:decomposer");
    EXPECT_EQ(chat.last.system_prompt, std::string(prompts::kQuestionDecomposer));
    EXPECT_EQ(chat.last.user_prompt, "Q?");
}

TEST(Metadata, ParsesListsAndDegradesOnGarbage) {
    ScriptedChat good({{"", "", R"({"plant_id": ["T01", null], "windpark": "Nordfeld", "other": null})"}});
    auto f = extract_metadata("q", good);
    EXPECT_EQ(f.constraints().at("plant_id"), std::vector<std::string>{"T01"});
    EXPECT_EQ(f.constraints().at("windpark"), std::vector<std::string>{"Nordfeld"});
    EXPECT_FALSE(f.constraints().contains("other"));

    ScriptedChat bad({{"", "", "no json here"}});
    Ledger ledger;
    EXPECT_TRUE(extract_metadata("q", bad, &ledger).empty());
    EXPECT_EQ(ledger.get("pipeline.metadata_fallbacks"), 1);
}

TEST(Metadata, HeuristicExtractorFindsIdsAndParks) {
    HeuristicChat chat;
    auto f = extract_metadata("Which damages were found on turbines T01 and T02 in windpark Nordfeld?", chat);
    EXPECT_EQ(f.constraints().at("plant_id"), (std::vector<std::string>{"T01", "T02"}));
    EXPECT_EQ(f.constraints().at("windpark"), std::vector<std::string>{"Nordfeld"});
    EXPECT_TRUE(extract_metadata("What is the typical lifetime of a gearbox?", chat).empty());
}

TEST(Citations, RenumberedToReturnedList) {
    FinalAnswer out;
    json reply = {{"answer", "Alpha [Document 3]. Beta [Document 1]. Gamma [Document 9]."},
                  {"relevant_documents", {3, "1"}}};
    resolve_citations(reply, {"x", "y", "z"}, out);
    EXPECT_EQ(out.relevant_documents, (std::vector<std::string>{"x", "z"}));
    EXPECT_EQ(out.answer_text, "Alpha [Document 2]. Beta [Document 1]. Gamma.");
    ASSERT_EQ(out.trace.warnings.size(), 1u);
}

TEST(Citations, InlineOnlyCitationsCount) {
    FinalAnswer out;
    resolve_citations(json{{"answer", "Only [Document 2]"}}, {"x", "y"}, out);
    EXPECT_EQ(out.relevant_documents, std::vector<std::string>{"y"});
    EXPECT_EQ(out.answer_text, "Only [Document 1]");
}

TEST(Chunks, ConcatenationRespectsBudget) {
    Chunk a{"d#c0", "d", "first", 0, 5, {}};
    Chunk b{"d#c1", "d", "second", 3, 9, {}};
    EXPECT_EQ(concatenate_chunks({&a, &b}), "first\n---\nsecond");
    EXPECT_EQ(concatenate_chunks({&a, &b}, 7), "first\n-");
}

TEST(Retrieval, GatherDedupsAndOrdersBySpan) {
    const auto& index = fixture_index();
    HashEmbedder e;
    auto qs = e.embed({"gearbox pitting", "blade damage", "gearbox pitting"});
    auto chunks = gather_doc_chunks(index, "inspection_T01_2022", qs, 20);
    ASSERT_FALSE(chunks.empty());
    for (std::size_t i = 1; i < chunks.size(); ++i) EXPECT_LE(chunks[i - 1]->begin, chunks[i]->begin);
    for (const auto* c : chunks) EXPECT_EQ(c->doc_id, "inspection_T01_2022");
    EXPECT_EQ(chunks.size(), index.chunks.vectors.knn(qs[0].values, kAllResults, [](const auto& en) {
                                  return en.doc_id == "inspection_T01_2022";
                              }).size());
}

TEST(Retrieval, CandidatesRespectFilterAndK) {
    const auto& index = fixture_index();
    HashEmbedder e;
    auto v = e.embed_one("oil analysis");
    EXPECT_EQ(retrieve_candidate_documents(index, v, {}, kAllResults).size(), index.documents.size());
    EXPECT_EQ(retrieve_candidate_documents(index, v, {}, 3).size(), 3u);
    auto seeblick = retrieve_candidate_documents(index, v, MetadataFilter(Metadata{{"windpark", {"Seeblick"}}}), kAllResults);
    EXPECT_EQ(seeblick.size(), 2u);
}

TEST(Answering, PageGroupsMergedWhenContextTooLarge) {
    Chunk a{"d#c0", "d", std::string(300, 'a'), 0, 300, {}};
    Chunk b{"d#c1", "d", std::string(300, 'b'), 300, 600, {}};
    ScriptedChat chat({{"", "merge_page_groups", R"({"answers": ["merged"]})"},
                       {"", "answer_document", R"({"answers": ["part"]})"}});
    Ledger ledger;
    QueryPlan plan{{"q1"}, "s"};
    auto out = answer_intermediate("d", plan, {&a, &b}, chat, 400, &ledger);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].answer, "merged");
    EXPECT_EQ(ledger.get("chat.calls.answer_document"), 2);
    EXPECT_EQ(ledger.get("pipeline.page_group_merges"), 1);
}

TEST(Answering, CountMismatchPadded) {
    Chunk a{"d#c0", "d", "text", 0, 4, {}};
    ScriptedChat chat({{"", "", R"({"answers": ["only one"]})"}});
    Ledger ledger;
    QueryPlan plan{{"q1", "q2"}, "s"};
    auto out = answer_intermediate("d", plan, {&a}, chat, 1000, &ledger);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[1].answer, "");
    EXPECT_EQ(ledger.get("pipeline.answer_count_mismatches"), 1);
}

TEST(Aggregate, NoAnswersSkipsTheModel) {
    ScriptedChat chat;  // any call would throw
    auto out = aggregate_answers("q", {{"q"}, "s"}, {}, chat);
    EXPECT_EQ(out.answer_text, kNoEvidenceAnswer);
    EXPECT_TRUE(out.relevant_documents.empty());
}

TEST(PluriHop, AnswersExhaustiveQuestionOnFixtures) {
    auto providers = make_mock_providers();
    PipelineConfig cfg;
    Ledger ledger;
    auto out = run_plurihop("What gearbox findings were reported for windpark Nordfeld?", fixture_index(), cfg,
                            providers, &ledger);
    EXPECT_NE(out.answer_text.find("T01"), std::string::npos);
    EXPECT_NE(out.answer_text.find("[Document 1]"), std::string::npos);
    EXPECT_GE(out.relevant_documents.size(), 2u);
    for (const auto& d : out.relevant_documents) {
        EXPECT_EQ(fixture_index().document(d).metadata.at("windpark").front(), "Nordfeld");
    }
    EXPECT_EQ(out.trace.metadata.constraints().at("windpark"), std::vector<std::string>{"Nordfeld"});
    EXPECT_EQ(out.trace.token_ledger, ledger.to_json());
    auto j = out.to_json();
    EXPECT_EQ(j["question"], out.question);
    EXPECT_TRUE(j.contains("trace"));
}

TEST(PluriHop, TauOneFiltersEverything) {
    auto providers = make_mock_providers();
    PipelineConfig cfg;
    cfg.tau = 1.0;
    auto out = run_plurihop("What did the oil analysis of turbine T03 report?", fixture_index(), cfg, providers);
    for (const auto& d : out.trace.documents) {
        EXPECT_EQ(d.passed, d.relevance >= 1.0);
    }
    EXPECT_EQ(out.trace.filtered.size() + out.relevant_documents.size() <= out.trace.documents.size(), true);
}

TEST(PluriHop, PlanningFailureCarriesPartialResult) {
    auto providers = make_mock_providers();
    providers.chat = std::make_shared<ScriptedChat>(std::vector<ScriptedChat::Rule>{{"", "decompose", "garbage"}});
    try {
        run_plurihop("q?", fixture_index(), {}, providers);
        FAIL();
    } catch (const PipelineError& e) {
        EXPECT_EQ(e.partial().question, "q?");
        EXPECT_NE(std::string(e.what()).find("decompose"), std::string::npos);
    }
}

TEST(Naive, RerankRetrievesFactorTimesK) {
    auto providers = make_mock_providers();
    NaiveConfig cfg;
    cfg.k = 2;
    cfg.rerank = true;
    cfg.use_metadata_filter = false;
    Ledger ledger;
    auto out = run_naive_rag("gearbox oil iron content", fixture_index(), cfg, providers, &ledger);
    EXPECT_EQ(ledger.get("naive.retrieved"), 7);  // the fixture index holds seven chunks
    EXPECT_EQ(ledger.get("naive.sent"), 2);
    EXPECT_EQ(out.trace.mode, "naive+rerank");
    EXPECT_EQ(out.trace.sent_chunks.size(), 2u);
}

TEST(Naive, CitationsNameSentDocuments) {
    auto providers = make_mock_providers();
    auto out = run_naive_rag("What did the oil analysis of turbine T03 report?", fixture_index(), {}, providers);
    ASSERT_FALSE(out.relevant_documents.empty());
    EXPECT_EQ(out.relevant_documents.front(), "oil_T03_2023");
    EXPECT_NE(out.answer_text.find("[Document 1]"), std::string::npos);
}
