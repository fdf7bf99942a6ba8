#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plurihop/corpus.hpp"
#include "plurihop/index.hpp"
#include "plurihop/pipeline.hpp"
#include "plurihop/providers.hpp"

namespace plurihop {

// ---------------------------------------------------------------------------
// Statement-wise answer scoring

/// Either a plain sentence or a key-value pair.
struct Statement {
    std::string key;  // empty for plain statements
    std::string value;

    bool is_pair() const { return !key.empty(); }
    /// Plain text, or `{"key": "value"}` for pairs.
    std::string render() const;
};

/// Statements indexed consecutively from 1 (position i holds statement i+1).
struct StatementSet {
    std::vector<Statement> statements;
    std::size_t size() const { return statements.size(); }
    bool empty() const { return statements.empty(); }
};

struct Judgment {
    std::vector<bool> verdicts;           // verdicts[i] is statement i+1
    std::size_t inferred = 0;             // local count of true verdicts
    std::optional<long long> reported;    // the judge's own count, if given
};

struct EvalScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t reference_statements = 0;
    std::size_t reference_inferred = 0;   // reference statements found in the generated answer
    std::size_t generated_statements = 0;
    std::size_t generated_inferred = 0;   // generated statements found in the reference
    std::vector<bool> recall_judgments;
    std::vector<bool> precision_judgments;

    nlohmann::ordered_json to_json() const;
};

/// 2 / (1/recall + 1/precision) when both are positive, else 0.
double f1_score(double precision, double recall);

/// Ratios with zero denominators mapped to 0.
EvalScore statement_scores(std::size_t reference_inferred, std::size_t reference_total,
                           std::size_t generated_inferred, std::size_t generated_total);

class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

StatementSet split_statements(const std::string& question, const std::string& answer, ChatModel& chat,
                              Ledger* ledger = nullptr);

/// Parses a splitter reply `{"1": str | {key: value}, ...}`; keys are
/// ordered numerically and reindexed from 1.
StatementSet parse_statement_set(const nlohmann::json& reply);

/// Judges each statement against `reference_text`. The inferred count is
/// always recomputed locally; a disagreeing judge count is logged.
Judgment judge_statements(const std::string& answer_text, const StatementSet& statements,
                          const std::string& reference_text, ChatModel& chat, Ledger* ledger = nullptr);

/// recall = reference statements inferable from `generated` / reference
/// statements; precision = generated statements inferable from `reference`
/// / generated statements. Throws EvaluationError when splitting fails.
EvalScore score_answer(const std::string& question, const std::string& generated, const std::string& reference,
                       ChatModel& chat, Ledger* ledger = nullptr);

/// `[name.pdf]`-style references found by regex, unique, first-appearance order.
std::vector<std::string> find_file_references(std::string_view text);

/// Model-based reference finder; malformed replies yield an empty list.
std::vector<std::string> extract_file_references(const std::string& text, ChatModel& chat, Ledger* ledger = nullptr);

// ---------------------------------------------------------------------------
// Run-level reporting

struct QARecord {
    std::string question;
    std::string reference_answer;
    std::optional<std::vector<std::string>> gold_documents;
};

/// JSON lines of {question, reference_answer, gold_documents[]}. Rejects
/// records with an empty question or reference answer.
std::vector<QARecord> load_dataset(const std::filesystem::path& path);
std::vector<QARecord> parse_dataset(std::string_view jsonl);

struct SystemOutput {
    std::string answer;
    std::optional<std::vector<std::string>> relevant_documents;
};

struct CitationScore {
    double precision = 0.0;
    double recall = 0.0;
};

/// Compares cited documents with gold filenames, ignoring case, directories
/// and extensions.
CitationScore citation_scores(const std::vector<std::string>& cited, const std::vector<std::string>& gold);

struct QuestionReport {
    std::string question;
    std::optional<EvalScore> score;
    std::optional<CitationScore> citations;
    std::string error;  // why the record is unevaluated
};

struct RunReport {
    std::vector<QuestionReport> questions;
    std::size_t evaluated = 0;
    double precision = 0.0;  // macro averages over evaluated questions
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t citation_evaluated = 0;
    double citation_precision = 0.0;
    double citation_recall = 0.0;

    nlohmann::ordered_json to_json() const;
    std::string to_markdown() const;
};

/// outputs[i] answers dataset[i]; a missing output leaves the record
/// unevaluated and out of the averages.
RunReport evaluate_run(const std::vector<QARecord>& dataset, const std::vector<std::optional<SystemOutput>>& outputs,
                       ChatModel& judge, Ledger* ledger = nullptr, std::size_t max_concurrency = 1);

// ---------------------------------------------------------------------------
// Relevance-filter ROC

struct RocPoint {
    double tau = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

struct ScoredPair {
    std::size_t question = 0;
    std::string doc_id;
    double score = 0.0;
    bool relevant = false;
};

struct RocAnalysis {
    std::vector<ScoredPair> pairs;
    std::vector<RocPoint> points;  // tau ascending
    double auc = 0.0;
    std::vector<std::size_t> relevant_histogram;    // 10 bins over [0,1]
    std::vector<std::size_t> irrelevant_histogram;
    double bottom_decile_cutoff = 0.0;              // scores below this are in the bottom decile
    double irrelevant_in_bottom_decile = 0.0;       // fraction of irrelevant pairs
    double relevant_in_bottom_decile = 0.0;         // fraction of relevant pairs

    std::string points_csv() const;     // tau,tpr,fpr
    std::string histogram_csv() const;  // bin_low,bin_high,relevant,irrelevant
    nlohmann::ordered_json summary_json() const;
};

inline constexpr double kRocEpsilon = 1e-9;

/// Sweeps tau over the observed scores plus sentinels below the minimum and
/// above the maximum; a pair is predicted relevant when score >= tau.
RocAnalysis analyze_roc(std::vector<ScoredPair> pairs);

/// Scores every (question, document) pair with the pipeline's relevance
/// estimate; gold-cited documents are the positives.
RocAnalysis filter_roc(const std::vector<QARecord>& dataset, const CorpusIndex& index, const PipelineConfig& cfg,
                       const ProviderSet& providers, Ledger* ledger = nullptr);

// ---------------------------------------------------------------------------
// Corpus repetitiveness

/// r@k for each k: mean over chunks of the mean cosine similarity to their k
/// nearest other chunks. Throws std::invalid_argument with fewer than
/// max(ks)+1 vectors.
std::map<std::size_t, double> repetitiveness_from_vectors(const std::vector<std::vector<double>>& vectors,
                                                          const std::vector<std::size_t>& ks);

struct RepetitivenessResult {
    std::map<std::size_t, double> r_at_k;
    std::size_t documents_sampled = 0;
    std::size_t chunk_count = 0;
    std::vector<std::string> sampled_doc_ids;
};

RepetitivenessResult repetitiveness_at_k(const Corpus& corpus, const std::vector<std::size_t>& ks,
                                         std::size_t sample_n, const ChunkingConfig& chunking, Embedder& embedder,
                                         std::uint64_t seed = 42, Ledger* ledger = nullptr,
                                         EmbeddingCache* cache = nullptr);

}  // namespace plurihop
