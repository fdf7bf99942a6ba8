#include "plurihop/evalkit.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "plurihop/log.hpp"
#include "plurihop/parallel.hpp"
#include "plurihop/prompts.hpp"
#include "plurihop/text.hpp"

namespace plurihop {

using nlohmann::json;
using nlohmann::ordered_json;

std::string Statement::render() const {
    if (!is_pair()) return value;
    return json{{key, value}}.dump();
}

double f1_score(double precision, double recall) {
    if (precision <= 0.0 || recall <= 0.0) return 0.0;
    return 2.0 / (1.0 / recall + 1.0 / precision);
}

EvalScore statement_scores(std::size_t reference_inferred, std::size_t reference_total,
                           std::size_t generated_inferred, std::size_t generated_total) {
    EvalScore s;
    s.reference_statements = reference_total;
    s.reference_inferred = reference_inferred;
    s.generated_statements = generated_total;
    s.generated_inferred = generated_inferred;
    s.recall = reference_total ? static_cast<double>(reference_inferred) / static_cast<double>(reference_total) : 0.0;
    s.precision =
        generated_total ? static_cast<double>(generated_inferred) / static_cast<double>(generated_total) : 0.0;
    s.f1 = f1_score(s.precision, s.recall);
    return s;
}

ordered_json EvalScore::to_json() const {
    return {{"precision", precision},
            {"recall", recall},
            {"f1", f1},
            {"reference_statements", reference_statements},
            {"reference_inferred", reference_inferred},
            {"generated_statements", generated_statements},
            {"generated_inferred", generated_inferred},
            {"recall_judgments", recall_judgments},
            {"precision_judgments", precision_judgments}};
}

// ---------------------------------------------------------------------------

StatementSet parse_statement_set(const json& reply) {
    if (!reply.is_object()) throw StructuredOutputError(std::string(prompts::role::kSplitStatements), "expected a JSON object");
    std::vector<std::pair<long long, Statement>> keyed;
    long long fallback = 1'000'000;
    for (const auto& [key, value] : reply.items()) {
        long long order = 0;
        try {
            std::size_t used = 0;
            order = std::stoll(key, &used);
            if (used != key.size()) order = fallback++;
        } catch (const std::exception&) {
            order = fallback++;
        }
        Statement st;
        if (value.is_object() && value.size() == 1) {
            st.key = value.begin().key();
            st.value = value.begin()->is_string() ? value.begin()->get<std::string>() : value.begin()->dump();
        } else if (value.is_string()) {
            st.value = value.get<std::string>();
        } else if (value.is_null()) {
            continue;
        } else {
            st.value = value.dump();
        }
        if (text::trim(st.value).empty() && st.key.empty()) continue;
        keyed.emplace_back(order, std::move(st));
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    StatementSet set;
    for (auto& [_, st] : keyed) set.statements.push_back(std::move(st));
    return set;
}

StatementSet split_statements(const std::string& question, const std::string& answer, ChatModel& chat,
                              Ledger* ledger) {
    if (text::trim(answer).empty()) return {};
    std::map<std::string, std::string> vars{{"question", question}, {"answer", answer}};
    ChatRequest req;
    req.role = prompts::role::kSplitStatements;
    req.user_prompt = text::render(prompts::kStatementSplitter, vars);
    req.vars = std::move(vars);
    return parse_statement_set(chat.complete_json(req, ledger));
}

Judgment judge_statements(const std::string& answer_text, const StatementSet& statements,
                          const std::string& reference_text, ChatModel& chat, Ledger* ledger) {
    if (statements.empty()) throw std::invalid_argument("judge_statements needs at least one statement");
    json rendered = json::array();
    for (const auto& s : statements.statements) rendered.push_back(s.render());

    std::map<std::string, std::string> vars{
        {"text", answer_text}, {"statements", rendered.dump()}, {"reference_text", reference_text}};
    ChatRequest req;
    req.role = prompts::role::kJudgeStatements;
    req.user_prompt = text::render(prompts::kStatementComparator, vars);
    vars["statements_json"] = rendered.dump();
    req.vars = std::move(vars);
    auto reply = chat.complete_json(req, ledger);
    if (!reply.is_object()) throw StructuredOutputError(req.role, "expected a JSON object");

    Judgment j;
    for (std::size_t i = 1; i <= statements.size(); ++i) {
        auto it = reply.find(std::to_string(i));
        bool verdict = false;
        if (it == reply.end()) {
            logger()->warn("judge gave no verdict for statement {}; counting it as not inferred", i);
            if (ledger) ledger->add("eval.missing_verdicts");
        } else if (it->is_boolean()) {
            verdict = it->get<bool>();
        } else if (it->is_string()) {
            verdict = text::to_lower_ascii(it->get<std::string>()) == "true";
        } else if (it->is_number()) {
            verdict = it->get<double>() != 0.0;
        }
        j.verdicts.push_back(verdict);
    }
    j.inferred = static_cast<std::size_t>(std::count(j.verdicts.begin(), j.verdicts.end(), true));
    if (auto it = reply.find("inferred_statements"); it != reply.end() && it->is_number()) {
        j.reported = it->get<long long>();
        if (*j.reported != static_cast<long long>(j.inferred)) {
            logger()->warn("judge reported {} inferred statements but marked {} true; using {}", *j.reported,
                           j.inferred, j.inferred);
            if (ledger) ledger->add("eval.count_mismatches");
        }
    }
    return j;
}

EvalScore score_answer(const std::string& question, const std::string& generated, const std::string& reference,
                       ChatModel& chat, Ledger* ledger) {
    StatementSet ref, gen;
    try {
        ref = split_statements(question, reference, chat, ledger);
        gen = split_statements(question, generated, chat, ledger);
    } catch (const StructuredOutputError& e) {
        throw EvaluationError(std::string("statement splitting failed: ") + e.what());
    }
    if (ref.empty()) logger()->warn("reference answer split into zero statements: {}", question);

    std::vector<bool> recall_judgments(ref.size(), false);
    std::vector<bool> precision_judgments;
    std::size_t ref_inferred = 0, gen_inferred = 0;
    try {
        if (!ref.empty() && !gen.empty()) {
            auto r = judge_statements(reference, ref, generated, chat, ledger);
            recall_judgments = r.verdicts;
            ref_inferred = r.inferred;
        }
        if (!gen.empty()) {
            auto p = judge_statements(generated, gen, reference, chat, ledger);
            precision_judgments = p.verdicts;
            gen_inferred = p.inferred;
        }
    } catch (const StructuredOutputError& e) {
        throw EvaluationError(std::string("statement judging failed: ") + e.what());
    }

    auto score = statement_scores(ref_inferred, ref.size(), gen_inferred, gen.size());
    score.recall_judgments = std::move(recall_judgments);
    score.precision_judgments = std::move(precision_judgments);
    return score;
}

std::vector<std::string> find_file_references(std::string_view text) {
    static const std::regex pattern(R"(\[([^\[\]\n]+?\.pdf)\])", std::regex::icase);
    std::vector<std::string> out;
    std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator(); ++it) {
        auto name = std::string(text::trim((*it)[1].str()));
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
    }
    return out;
}

std::vector<std::string> extract_file_references(const std::string& text, ChatModel& chat, Ledger* ledger) {
    std::map<std::string, std::string> vars{{"text", text}};
    ChatRequest req;
    req.role = prompts::role::kFileReferences;
    req.user_prompt = text::render(prompts::kFileReferenceFinder, vars);
    req.vars = std::move(vars);
    json reply;
    try {
        reply = chat.complete_json(req, ledger);
    } catch (const StructuredOutputError& e) {
        logger()->warn("file reference extraction failed: {}", e.what());
        return {};
    }
    const json* list = reply.is_array() ? &reply : nullptr;
    if (reply.is_object() && reply.contains("filenames") && reply["filenames"].is_array()) list = &reply["filenames"];
    if (!list) {
        logger()->warn("file reference extraction returned no 'filenames' list");
        return {};
    }
    std::vector<std::string> out;
    for (const auto& f : *list) {
        if (!f.is_string()) continue;
        auto name = f.get<std::string>();
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<QARecord> parse_dataset(std::string_view jsonl) {
    std::vector<QARecord> records;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw std::invalid_argument("dataset line " + std::to_string(line_no) + " is not a JSON object");
        }
        QARecord r;
        r.question = j.value("question", "");
        r.reference_answer = j.value("reference_answer", "");
        if (text::trim(r.question).empty()) {
            throw std::invalid_argument("dataset line " + std::to_string(line_no) + " has an empty question");
        }
        if (text::trim(r.reference_answer).empty()) {
            throw std::invalid_argument("dataset line " + std::to_string(line_no) + " has an empty reference answer");
        }
        if (j.contains("gold_documents") && j["gold_documents"].is_array()) {
            r.gold_documents = j["gold_documents"].get<std::vector<std::string>>();
        } else {
            logger()->warn("dataset line {} has no gold_documents; citation metrics skipped for it", line_no);
        }
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<QARecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read dataset " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str());
}

namespace {

std::string normalize_document_name(std::string_view name) {
    std::filesystem::path p{std::string(text::trim(name))};
    auto stem = p.filename().string();
    auto ext = text::to_lower_ascii(p.extension().string());
    if (ext == ".pdf" || ext == ".txt" || ext == ".md") stem = p.stem().string();
    return text::to_lower_ascii(stem);
}

}  // namespace

CitationScore citation_scores(const std::vector<std::string>& cited, const std::vector<std::string>& gold) {
    std::set<std::string> c, g;
    for (const auto& x : cited) c.insert(normalize_document_name(x));
    for (const auto& x : gold) g.insert(normalize_document_name(x));
    std::size_t hit = 0;
    for (const auto& x : c) hit += g.count(x);
    CitationScore s;
    s.precision = c.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(c.size());
    s.recall = g.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(g.size());
    return s;
}

RunReport evaluate_run(const std::vector<QARecord>& dataset, const std::vector<std::optional<SystemOutput>>& outputs,
                       ChatModel& judge, Ledger* ledger, std::size_t max_concurrency) {
    RunReport report;
    report.questions.resize(dataset.size());
    parallel_for(dataset.size(), max_concurrency, [&](std::size_t i) {
        auto& q = report.questions[i];
        q.question = dataset[i].question;
        if (i >= outputs.size() || !outputs[i]) {
            q.error = "missing system output";
            return;
        }
        const auto& out = *outputs[i];
        try {
            q.score = score_answer(dataset[i].question, out.answer, dataset[i].reference_answer, judge, ledger);
        } catch (const EvaluationError& e) {
            q.error = e.what();
            return;
        }
        if (dataset[i].gold_documents) {
            auto cited = out.relevant_documents ? *out.relevant_documents
                                                : extract_file_references(out.answer, judge, ledger);
            q.citations = citation_scores(cited, *dataset[i].gold_documents);
        }
    });

    for (const auto& q : report.questions) {
        if (q.score) {
            ++report.evaluated;
            report.precision += q.score->precision;
            report.recall += q.score->recall;
            report.f1 += q.score->f1;
        }
        if (q.score && q.citations) {
            ++report.citation_evaluated;
            report.citation_precision += q.citations->precision;
            report.citation_recall += q.citations->recall;
        }
    }
    if (report.evaluated) {
        auto n = static_cast<double>(report.evaluated);
        report.precision /= n;
        report.recall /= n;
        report.f1 /= n;
    }
    if (report.citation_evaluated) {
        auto n = static_cast<double>(report.citation_evaluated);
        report.citation_precision /= n;
        report.citation_recall /= n;
    }
    return report;
}

ordered_json RunReport::to_json() const {
    ordered_json per = ordered_json::array();
    std::size_t unevaluated = 0;
    for (const auto& q : questions) {
        ordered_json row;
        row["question"] = q.question;
        if (q.score) row["score"] = q.score->to_json();
        if (q.citations) row["citations"] = {{"precision", q.citations->precision}, {"recall", q.citations->recall}};
        if (!q.error.empty()) {
            row["error"] = q.error;
            ++unevaluated;
        }
        per.push_back(std::move(row));
    }
    ordered_json j;
    j["summary"] = {{"questions", questions.size()},
                    {"evaluated", evaluated},
                    {"unevaluated", unevaluated},
                    {"precision", precision},
                    {"recall", recall},
                    {"f1", f1},
                    {"citation_evaluated", citation_evaluated},
                    {"citation_precision", citation_precision},
                    {"citation_recall", citation_recall}};
    j["questions"] = std::move(per);
    return j;
}

std::string RunReport::to_markdown() const {
    std::string md = "# Evaluation report\n\n";
    md += fmt::format("Evaluated {} of {} questions.\n\n", evaluated, questions.size());
    md += "| Metric | Value |\n|---|---|\n";
    md += fmt::format("| Precision | {:.4f} |\n| Recall | {:.4f} |\n| F1 | {:.4f} |\n", precision, recall, f1);
    if (citation_evaluated) {
        md += fmt::format("| Citation precision | {:.4f} |\n| Citation recall | {:.4f} |\n", citation_precision,
                          citation_recall);
    }
    md += "\n| # | Question | P | R | F1 | Note |\n|---|---|---|---|---|---|\n";
    for (std::size_t i = 0; i < questions.size(); ++i) {
        const auto& q = questions[i];
        auto question = q.question;
        std::replace(question.begin(), question.end(), '|', '/');
        if (q.score) {
            md += fmt::format("| {} | {} | {:.3f} | {:.3f} | {:.3f} | |\n", i + 1, question, q.score->precision,
                              q.score->recall, q.score->f1);
        } else {
            md += fmt::format("| {} | {} | - | - | - | unevaluated: {} |\n", i + 1, question, q.error);
        }
    }
    return md;
}

}  // namespace plurihop
