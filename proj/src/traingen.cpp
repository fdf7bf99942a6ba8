#include "plurihop/traingen.hpp"

#include <fstream>
#include <sstream>

#include "plurihop/log.hpp"
#include "plurihop/parallel.hpp"
#include "plurihop/prompts.hpp"
#include "plurihop/text.hpp"

namespace plurihop {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<TrainingTuple> parse_training_tuples(std::string_view jsonl) {
    std::vector<TrainingTuple> out;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("question") || !j.contains("doc_id")) {
            throw std::invalid_argument("tuple line " + std::to_string(line_no) + " needs question and doc_id");
        }
        out.push_back({j["question"].get<std::string>(), j["doc_id"].get<std::string>()});
    }
    return out;
}

std::vector<TrainingTuple> load_training_tuples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read tuples file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_training_tuples(ss.str());
}

ordered_json DecompositionExample::target() const {
    ordered_json j;
    j["reasoning"] = reasoning;
    j["hypothetical_summary"] = hypothetical_summary;
    j["questions"] = intermediate_questions;
    return j;
}

std::optional<DecompositionExample> generate_example(const std::string& question, const Document& doc, ChatModel& chat,
                                                     const TrainGenConfig& cfg, Ledger* ledger) {
    auto context = doc.text();
    if (text::trim(context).empty()) throw std::invalid_argument("document " + doc.doc_id + " has no text");

    DecompositionExample ex;
    ex.question = question;
    ex.source_doc_id = doc.doc_id;
    auto offsets = text::codepoint_offsets(context);
    if (offsets.size() - 1 > cfg.context_budget) {
        context.resize(offsets[cfg.context_budget]);
        ex.context_truncated = true;
    }

    std::map<std::string, std::string> vars{
        {"question", question},
        {"filename", doc.filename},
        {"truncation_note",
         ex.context_truncated ? ", truncated to the first " + std::to_string(cfg.context_budget) + " characters" : ""},
        {"context", context}};
    ChatRequest req;
    req.role = prompts::role::kTrainingExample;
    req.user_prompt = text::render(prompts::kTrainingExampleGenerator, vars);
    req.vars = std::move(vars);
    auto reply = chat.complete_json(req, ledger);

    if (reply.is_object()) {
        auto str = [&](const char* key) {
            auto it = reply.find(key);
            if (it == reply.end()) return std::string();
            return it->is_string() ? it->get<std::string>() : it->dump();
        };
        ex.reasoning = str("reasoning");
        ex.hypothetical_summary = str("hypothetical_summary");
        if (auto it = reply.find("questions"); it != reply.end() && it->is_array()) {
            for (const auto& q : *it) {
                if (!q.is_string()) continue;
                auto s = std::string(text::trim(q.get<std::string>()));
                if (!s.empty()) ex.intermediate_questions.push_back(std::move(s));
            }
        }
    }
    if (ex.intermediate_questions.empty()) {
        logger()->warn("no questions generated for '{}' with document {}; example discarded", question, doc.doc_id);
        if (ledger) ledger->add("traingen.discarded");
        return std::nullopt;
    }
    return ex;
}

std::string TrainingFile::to_jsonl() const {
    std::string out;
    for (const auto& ex : examples) {
        ordered_json record;
        record["messages"] = ordered_json::array(
            {ordered_json{{"role", "system"}, {"content", std::string(prompts::kQuestionDecomposer)}},
             ordered_json{{"role", "user"}, {"content", ex.question}},
             ordered_json{{"role", "assistant"}, {"content", ex.target().dump()}}});
        out += record.dump();
        out += '\n';
    }
    return out;
}

TrainingFile build_training_file(const std::vector<TrainingTuple>& tuples, std::size_t target_n, const Corpus& corpus,
                                 ChatModel& chat, const TrainGenConfig& cfg, Ledger* ledger) {
    if (tuples.empty()) throw std::invalid_argument("no training tuples given");
    if (target_n == 0) throw std::invalid_argument("target example count must be at least 1");

    TrainingFile file;
    // Waves of `target_n - valid` tuples keep the output independent of the
    // concurrency level while avoiding calls beyond what is needed.
    std::size_t next = 0;
    while (file.examples.size() < target_n && next < tuples.size()) {
        auto wave = std::min(target_n - file.examples.size(), tuples.size() - next);
        std::vector<std::optional<DecompositionExample>> results(wave);
        std::vector<std::string> errors(wave);
        parallel_for(wave, cfg.max_concurrency, [&](std::size_t i) {
            const auto& t = tuples[next + i];
            const auto* doc = corpus.find(t.doc_id);
            if (!doc) {
                errors[i] = "tuple " + std::to_string(next + i + 1) + ": unknown document '" + t.doc_id + "'";
                return;
            }
            try {
                results[i] = generate_example(t.question, *doc, chat, cfg, ledger);
                if (!results[i]) errors[i] = "tuple " + std::to_string(next + i + 1) + ": no questions generated";
            } catch (const StructuredOutputError& e) {
                errors[i] = "tuple " + std::to_string(next + i + 1) + ": " + e.what();
            } catch (const std::invalid_argument& e) {
                errors[i] = "tuple " + std::to_string(next + i + 1) + ": " + e.what();
            }
        });
        for (std::size_t i = 0; i < wave; ++i) {
            if (results[i]) {
                file.examples.push_back(std::move(*results[i]));
            } else {
                file.diagnostics.push_back(errors[i]);
                if (errors[i].find("no questions") == std::string::npos && ledger) ledger->add("traingen.discarded");
            }
        }
        next += wave;
    }

    if (file.examples.empty()) {
        throw TrainGenError("every training tuple was discarded:\n  " + text::join(file.diagnostics, "\n  "));
    }
    if (file.examples.size() < target_n) {
        logger()->warn("only {} valid examples for a target of {}", file.examples.size(), target_n);
    }
    return file;
}

}  // namespace plurihop
