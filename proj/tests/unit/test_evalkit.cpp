#include <cmath>

#include <gtest/gtest.h>

#include "plurihop/evalkit.hpp"

using namespace plurihop;
using nlohmann::json;

namespace {

std::shared_ptr<ScriptedChat> scripted_eval_chat() {
    return std::make_shared<ScriptedChat>(std::vector<ScriptedChat::Rule>{
        {"REFTEXT", "split_statements", R"({"1": "ra", "2": "rb", "3": "rc", "4": "rd", "5": "re"})"},
        {"GENTEXT", "split_statements", R"({"1": "ga", "2": "gb", "3": "gc", "4": "gd"})"},
        {"\"ra\"", "judge_statements", R"({"1": true, "2": false, "3": true, "4": true, "5": false, "inferred_statements": 3})"},
        {"\"ga\"", "judge_statements", R"({"1": true, "2": true, "3": false, "4": true, "inferred_statements": 3})"},
    });
}

}  // namespace

TEST(Scores, F1Values) {
    EXPECT_NEAR(f1_score(0.75, 0.6), 2.0 / 3.0, 1e-12);
    EXPECT_EQ(f1_score(0.0, 0.9), 0.0);
    EXPECT_EQ(f1_score(1.0, 1.0), 1.0);
    auto s = statement_scores(0, 0, 0, 0);
    EXPECT_EQ(s.precision, 0.0);
    EXPECT_EQ(s.recall, 0.0);
    EXPECT_EQ(s.f1, 0.0);
    auto t = statement_scores(3, 5, 3, 4);
    EXPECT_NEAR(t.recall, 0.6, 1e-12);
    EXPECT_NEAR(t.precision, 0.75, 1e-12);
}

TEST(Statements, ParseOrdersNumericallyAndKeepsPairs) {
    auto set = parse_statement_set(json::parse(R"({"10": "j", "2": "b", "1": {"Gearbox": "pitting"}, "3": null})"));
    ASSERT_EQ(set.size(), 3u);
    EXPECT_TRUE(set.statements[0].is_pair());
    EXPECT_EQ(set.statements[0].render(), R"({"Gearbox":"pitting"})");
    EXPECT_EQ(set.statements[1].value, "b");
    EXPECT_EQ(set.statements[2].value, "j");
    EXPECT_TRUE(parse_statement_set(json::object()).empty());
}

TEST(Statements, EmptyAnswerNeedsNoCall) {
    ScriptedChat chat;
    Ledger ledger;
    EXPECT_TRUE(split_statements("q", "   ", chat, &ledger).empty());
    EXPECT_EQ(ledger.get("chat.calls"), 0);
}

TEST(Judge, LocalCountWinsAndMissingIsFalse) {
    ScriptedChat chat({{"", "", R"({"1": true, "2": "false", "inferred_statements": 5})"}});
    StatementSet set{{{"", "a"}, {"", "b"}, {"", "c"}}};
    Ledger ledger;
    auto j = judge_statements("text", set, "reference", chat, &ledger);
    EXPECT_EQ(j.verdicts, (std::vector<bool>{true, false, false}));
    EXPECT_EQ(j.inferred, 1u);
    EXPECT_EQ(j.reported, 5);
    EXPECT_EQ(ledger.get("eval.missing_verdicts"), 1);
    EXPECT_EQ(ledger.get("eval.count_mismatches"), 1);
    EXPECT_THROW(judge_statements("t", {}, "r", chat), std::invalid_argument);
}

TEST(ScoreAnswer, ScriptedSplitAndJudge) {
    auto chat = scripted_eval_chat();
    auto s = score_answer("q", "GENTEXT", "REFTEXT", *chat);
    EXPECT_EQ(s.reference_statements, 5u);
    EXPECT_EQ(s.generated_statements, 4u);
    EXPECT_NEAR(s.recall, 0.6, 1e-12);
    EXPECT_NEAR(s.precision, 0.75, 1e-12);
    EXPECT_NEAR(s.f1, 2.0 / 3.0, 1e-12);
}

TEST(ScoreAnswer, SplitterFailureIsEvaluationError) {
    ScriptedChat chat({{"", "", "not json"}});
    EXPECT_THROW(score_answer("q", "a", "b", chat), EvaluationError);
}

TEST(ScoreAnswer, HeuristicJudgeOnIdenticalAnswers) {
    HeuristicChat chat;
    std::string text = "The gearbox of turbine T01 showed pitting.\nBlade B2 of turbine T03 had erosion.";
    auto s = score_answer("What was found?", text, text, chat);
    EXPECT_EQ(s.f1, 1.0);
    auto none = score_answer("What was found?", "No relevant information was found.", text, chat);
    EXPECT_EQ(none.f1, 0.0);
    EXPECT_EQ(none.generated_statements, 0u);
}

TEST(FileReferences, RegexAndModel) {
    EXPECT_EQ(find_file_references("See [a.pdf] and [B.PDF], again [a.pdf]; not [x.txt]."),
              (std::vector<std::string>{"a.pdf", "B.PDF"}));
    ScriptedChat good({{"", "", R"({"filenames": ["a.pdf", "a.pdf", "b.pdf"]})"}});
    auto refs = extract_file_references("text", good);
    EXPECT_EQ(refs, (std::vector<std::string>{"a.pdf", "b.pdf"}));
    ScriptedChat bad({{"", "", R"({"files": 3})"}});
    EXPECT_TRUE(extract_file_references("text", bad).empty());
}

TEST(Dataset, ParsingRules) {
    auto rows = parse_dataset(R"({"question": "q1", "reference_answer": "r1", "gold_documents": ["a.pdf"]}

{"question": "q2", "reference_answer": "r2"})");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].gold_documents->front(), "a.pdf");
    EXPECT_FALSE(rows[1].gold_documents.has_value());
    EXPECT_THROW(parse_dataset(R"({"question": "", "reference_answer": "r"})"), std::invalid_argument);
    EXPECT_THROW(parse_dataset(R"({"question": "q", "reference_answer": " "})"), std::invalid_argument);
    EXPECT_THROW(parse_dataset("[1, 2]"), std::invalid_argument);
}

TEST(Citations, NormalizedComparison) {
    auto c = citation_scores({"inspection_T01_2022", "oil_T01_2023"}, {"docs/Inspection_T01_2022.pdf", "x.pdf"});
    EXPECT_NEAR(c.precision, 0.5, 1e-12);
    EXPECT_NEAR(c.recall, 0.5, 1e-12);
    auto none = citation_scores({}, {"a.pdf"});
    EXPECT_EQ(none.precision, 0.0);
    EXPECT_EQ(none.recall, 0.0);
}

TEST(RunReportTest, MissingOutputExcludedFromAverages) {
    auto chat = scripted_eval_chat();
    std::vector<QARecord> data{{"q1", "REFTEXT", std::vector<std::string>{"d1.pdf"}}, {"q2", "REFTEXT", {}}};
    std::vector<std::optional<SystemOutput>> outputs{SystemOutput{"GENTEXT", std::vector<std::string>{"d1"}},
                                                     std::nullopt};
    auto report = evaluate_run(data, outputs, *chat);
    EXPECT_EQ(report.evaluated, 1u);
    EXPECT_NEAR(report.f1, 2.0 / 3.0, 1e-12);
    EXPECT_EQ(report.questions[1].error, "missing system output");
    EXPECT_EQ(report.citation_evaluated, 1u);
    EXPECT_EQ(report.citation_precision, 1.0);
    auto j = report.to_json();
    EXPECT_EQ(j["summary"]["evaluated"], 1);
    EXPECT_NE(report.to_markdown().find("q2"), std::string::npos);
}

TEST(Roc, SeparatedScoresGiveUnitArea) {
    std::vector<ScoredPair> pairs{{0, "a", 0.9, true}, {0, "b", 0.8, true}, {0, "c", 0.2, false}, {0, "d", 0.05, false}};
    auto roc = analyze_roc(pairs);
    EXPECT_NEAR(roc.auc, 1.0, 1e-12);
    EXPECT_EQ(roc.points.front().tpr, 1.0);
    EXPECT_EQ(roc.points.front().fpr, 1.0);
    EXPECT_EQ(roc.points.back().tpr, 0.0);
    EXPECT_EQ(roc.points.back().fpr, 0.0);
    EXPECT_LT(roc.points.front().tau, 0.05);
    EXPECT_GT(roc.points.back().tau, 0.9);
    EXPECT_EQ(roc.points.size(), 6u);
    EXPECT_EQ(roc.relevant_histogram[9], 1u);
    EXPECT_EQ(roc.relevant_histogram[8], 1u);
    EXPECT_EQ(roc.irrelevant_histogram[0], 1u);
    EXPECT_EQ(roc.irrelevant_histogram[2], 1u);
    EXPECT_NEAR(roc.bottom_decile_cutoff, 0.05 + 0.085, 1e-12);
    EXPECT_EQ(roc.irrelevant_in_bottom_decile, 0.5);
    EXPECT_EQ(roc.relevant_in_bottom_decile, 0.0);
    EXPECT_EQ(roc.points_csv().substr(0, 12), "tau,tpr,fpr\n");
}

TEST(Roc, TiesGiveHalfAreaAndOneClassThrows) {
    std::vector<ScoredPair> tied{{0, "a", 0.5, true}, {0, "b", 0.5, false}};
    EXPECT_NEAR(analyze_roc(tied).auc, 0.5, 1e-12);
    std::vector<ScoredPair> inverted{{0, "a", 0.1, true}, {0, "b", 0.9, false}};
    EXPECT_NEAR(analyze_roc(inverted).auc, 0.0, 1e-12);
    EXPECT_THROW(analyze_roc({{0, "a", 0.3, true}}), std::invalid_argument);
}

TEST(Repetitiveness, TwoClusters) {
    std::vector<std::vector<double>> vs;
    for (int i = 0; i < 5; ++i) vs.push_back({1.0, 0.0});
    for (int i = 0; i < 5; ++i) vs.push_back({0.0, 2.0});
    auto r = repetitiveness_from_vectors(vs, {1, 4, 5});
    EXPECT_NEAR(r.at(1), 1.0, 1e-12);
    EXPECT_NEAR(r.at(4), 1.0, 1e-12);
    EXPECT_NEAR(r.at(5), 0.8, 1e-12);
    EXPECT_THROW(repetitiveness_from_vectors(vs, {10}), std::invalid_argument);
    EXPECT_THROW(repetitiveness_from_vectors(vs, {}), std::invalid_argument);
    EXPECT_THROW(repetitiveness_from_vectors(vs, {0}), std::invalid_argument);
    vs.push_back({0.0, 0.0});
    EXPECT_THROW(repetitiveness_from_vectors(vs, {1}), std::domain_error);
}

TEST(Repetitiveness, SamplingIsSeededAndBounded) {
    Corpus c;
    for (int i = 0; i < 6; ++i) {
        c.documents.push_back({"d" + std::to_string(i), "d.txt", {"Report " + std::to_string(i) + " on turbine wear."}, {}, {}});
    }
    HashEmbedder e;
    auto a = repetitiveness_at_k(c, {1, 2}, 4, {}, e, 7);
    auto b = repetitiveness_at_k(c, {1, 2}, 4, {}, e, 7);
    EXPECT_EQ(a.sampled_doc_ids, b.sampled_doc_ids);
    EXPECT_EQ(a.r_at_k, b.r_at_k);
    EXPECT_EQ(a.documents_sampled, 4u);
    EXPECT_EQ(a.chunk_count, 4u);
    auto all = repetitiveness_at_k(c, {1}, 100, {}, e, 7);
    EXPECT_EQ(all.documents_sampled, 6u);
    EXPECT_GE(a.r_at_k.at(1), a.r_at_k.at(2));
}
