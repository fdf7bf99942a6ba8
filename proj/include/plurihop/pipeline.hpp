#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "plurihop/index.hpp"
#include "plurihop/providers.hpp"

namespace plurihop {

struct QueryPlan {
    std::vector<std::string> intermediate_questions;  // 1..10
    std::string hypothetical_summary;

    nlohmann::ordered_json to_json() const;
};

inline constexpr std::size_t kMaxIntermediateQuestions = 10;

struct FewShotExample {
    std::string question;
    QueryPlan plan;
};

enum class DecomposerMode { finetuned, few_shot };

struct DecomposerConfig {
    DecomposerMode mode = DecomposerMode::few_shot;
    std::string finetuned_model;          // model tag used in finetuned mode
    std::vector<FewShotExample> examples; // few-shot mode; built-in pair when empty
};

/// The two built-in few-shot decomposition examples.
const std::vector<FewShotExample>& default_few_shot_examples();

struct PipelineConfig {
    std::size_t K = kAllResults;  // candidate-document cap
    std::size_t k = 20;           // chunks per intermediate question
    double tau = 0.1;             // cross-encoder threshold; keep documents scoring >= tau
    bool use_metadata_filter = true;
    bool use_relevance_filter = true;
    DecomposerConfig decomposer;
    std::size_t context_budget = 24000;      // characters of chunk text per answering call
    std::size_t rerank_input_budget = 16000; // characters passed to the cross-encoder
    std::size_t max_concurrency = 1;

    /// Throws std::invalid_argument unless tau is in [0,1] and k, K >= 1.
    void validate() const;
};

struct NaiveConfig {
    std::size_t k = 20;
    bool rerank = false;
    std::size_t rerank_factor = 4;
    bool use_metadata_filter = true;

    void validate() const;
};

struct IntermediateAnswer {
    std::string doc_id;
    std::string question;
    std::string answer;
};

struct DocumentTrace {
    std::string doc_id;
    double relevance = 0.0;
    bool passed = false;
    bool answered = false;
    std::size_t chunk_count = 0;
    std::string error;
};

struct FinalAnswer {
    std::string question;
    std::string answer_text;
    std::vector<std::string> relevant_documents;  // doc_ids; inline [Document i] refers to entry i-1

    struct Trace {
        std::string mode;
        std::optional<QueryPlan> plan;
        MetadataFilter metadata;
        std::vector<DocumentTrace> documents;  // retrieval order
        std::vector<std::string> filtered;     // rejected by the relevance filter
        std::vector<std::string> retrieved_chunks;
        std::vector<std::string> sent_chunks;
        std::vector<std::string> warnings;
        nlohmann::json token_ledger = nlohmann::json::object();
    } trace;

    /// {question, answer, relevant_documents[], trace{...}}
    nlohmann::ordered_json to_json() const;
};

/// Thrown when a provider failure aborts a run; carries what was completed.
class PipelineError : public std::runtime_error {
public:
    PipelineError(const std::string& what, FinalAnswer partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const FinalAnswer& partial() const { return partial_; }

private:
    FinalAnswer partial_;
};

inline constexpr std::string_view kNoEvidenceAnswer = "No relevant documents were found to answer the question.";

QueryPlan decompose_query(const std::string& query, ChatModel& chat, const DecomposerConfig& cfg = {},
                          Ledger* ledger = nullptr);

/// Malformed model output degrades to the match-all filter.
MetadataFilter extract_metadata(const std::string& query, ChatModel& chat, Ledger* ledger = nullptr);

std::vector<std::string> retrieve_candidate_documents(const CorpusIndex& index, std::span<const double> summary_vector,
                                                      const MetadataFilter& filter, std::size_t K);

/// Top-k chunks of one document for each question vector, deduplicated and
/// ordered by position in the document.
std::vector<const Chunk*> gather_doc_chunks(const CorpusIndex& index, const std::string& doc_id,
                                            const std::vector<Embedding>& question_vectors, std::size_t k);

/// Span-ordered chunk texts joined by "\n---\n", cut to `budget` characters.
std::string concatenate_chunks(const std::vector<const Chunk*>& chunks, std::size_t budget = kAllResults);

/// Cross-encoder score of the hypothetical summary against the document's
/// gathered chunks; 0 when there are none.
double score_document_relevance(const QueryPlan& plan, const std::vector<const Chunk*>& chunks, Reranker& reranker,
                                Ledger* ledger = nullptr, std::size_t input_budget = 16000);

/// One answer per intermediate question. Context over `context_budget`
/// characters is answered per page group and merged.
std::vector<IntermediateAnswer> answer_intermediate(const std::string& doc_id, const QueryPlan& plan,
                                                    const std::vector<const Chunk*>& chunks, ChatModel& chat,
                                                    std::size_t context_budget = 24000, Ledger* ledger = nullptr);

/// `answers` grouped by document in first-appearance order; document i in
/// the prompt is the i-th distinct doc_id (1-based).
FinalAnswer aggregate_answers(const std::string& query, const QueryPlan& plan,
                              const std::vector<IntermediateAnswer>& answers, ChatModel& chat,
                              Ledger* ledger = nullptr);

FinalAnswer run_plurihop(const std::string& query, const CorpusIndex& index, const PipelineConfig& cfg,
                         const ProviderSet& providers, Ledger* ledger = nullptr);

FinalAnswer run_naive_rag(const std::string& query, const CorpusIndex& index, const NaiveConfig& cfg,
                          const ProviderSet& providers, Ledger* ledger = nullptr);

/// Parses `{answer, relevant_documents[]}` and inline `[Document i]`
/// citations, mapping 1-based indices onto `documents` and renumbering the
/// inline citations to match the returned list. Out-of-range
/// citations are removed from the text and reported in `warnings`.
void resolve_citations(const nlohmann::json& reply, const std::vector<std::string>& documents, FinalAnswer& out);

}  // namespace plurihop
