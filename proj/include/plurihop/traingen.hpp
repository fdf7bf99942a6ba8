#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plurihop/corpus.hpp"
#include "plurihop/providers.hpp"

namespace plurihop {

struct TrainingTuple {
    std::string question;
    std::string doc_id;
};

/// JSON lines of {question, doc_id}.
std::vector<TrainingTuple> parse_training_tuples(std::string_view jsonl);
std::vector<TrainingTuple> load_training_tuples(const std::filesystem::path& path);

struct DecompositionExample {
    std::string question;
    std::string source_doc_id;
    std::string reasoning;
    std::string hypothetical_summary;
    std::vector<std::string> intermediate_questions;  // non-empty
    bool context_truncated = false;

    /// {reasoning, hypothetical_summary, questions}, in that key order.
    nlohmann::ordered_json target() const;
};

struct TrainGenConfig {
    std::size_t context_budget = 24000;  // characters of document text shown to the generator
    std::size_t max_concurrency = 1;
};

/// nullopt when the model returns no questions (the example is discarded).
std::optional<DecompositionExample> generate_example(const std::string& question, const Document& doc, ChatModel& chat,
                                                     const TrainGenConfig& cfg = {}, Ledger* ledger = nullptr);

class TrainGenError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainingFile {
    std::vector<DecompositionExample> examples;
    std::vector<std::string> diagnostics;  // one entry per discarded tuple

    /// One chat-format record per example: system = decomposer prompt,
    /// user = the question, assistant = target() JSON.
    std::string to_jsonl() const;
};

/// Generates examples in input order until `target_n` are valid or the
/// tuples run out. Throws TrainGenError when every tuple was discarded.
TrainingFile build_training_file(const std::vector<TrainingTuple>& tuples, std::size_t target_n, const Corpus& corpus,
                                 ChatModel& chat, const TrainGenConfig& cfg = {}, Ledger* ledger = nullptr);

}  // namespace plurihop
