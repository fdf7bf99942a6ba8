#include "plurihop/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include "plurihop/log.hpp"
#include "plurihop/parallel.hpp"
#include "plurihop/prompts.hpp"
#include "plurihop/text.hpp"

namespace plurihop {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string as_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string numbered(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += '\n';
        out += std::to_string(i + 1) + ". " + items[i];
    }
    return out;
}

}  // namespace

ordered_json QueryPlan::to_json() const {
    return {{"hypothetical_summary", hypothetical_summary}, {"questions", intermediate_questions}};
}

const std::vector<FewShotExample>& default_few_shot_examples() {
    static const std::vector<FewShotExample> examples = {
        {"Has Jane Doe's kidney function been steadily declining over the past 3 years?",
         {{"Is the person this document talks about Jane Doe?", "When was this document written?",
           "What does this document say about the patient's kidney function?"},
          "Laboratory report for patient Jane Doe with a dated kidney function test result such as eGFR or "
          "creatinine."}},
        {"In 2024, which turbines had major or critical blade damage? Give first noted date.",
         {{"Which turbine does this document describe?", "When was the inspection documented here carried out?",
           "What rotor blade damage does this document report, and how severe is each finding rated?"},
          "Inspection report of a wind turbine from 2024 listing rotor blade damage findings with severity "
          "ratings and dates."}},
    };
    return examples;
}

void PipelineConfig::validate() const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0,1]");
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    if (K == 0) throw std::invalid_argument("K must be at least 1");
    if (context_budget == 0) throw std::invalid_argument("context budget must be positive");
}

void NaiveConfig::validate() const {
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    if (rerank && rerank_factor == 0) throw std::invalid_argument("rerank factor must be at least 1");
}

ordered_json FinalAnswer::to_json() const {
    ordered_json t;
    t["mode"] = trace.mode;
    if (trace.plan) t["plan"] = trace.plan->to_json();
    t["metadata_filter"] = trace.metadata.to_json();
    ordered_json scores = ordered_json::array();
    for (const auto& d : trace.documents) {
        ordered_json row = {{"doc_id", d.doc_id},
                            {"relevance", d.relevance},
                            {"passed", d.passed},
                            {"answered", d.answered},
                            {"chunks", d.chunk_count}};
        if (!d.error.empty()) row["error"] = d.error;
        scores.push_back(std::move(row));
    }
    if (trace.mode == "plurihop") {
        t["doc_scores"] = std::move(scores);
        t["filtered"] = trace.filtered;
    } else {
        t["retrieved"] = trace.retrieved_chunks;
        t["sent"] = trace.sent_chunks;
    }
    if (!trace.warnings.empty()) t["warnings"] = trace.warnings;
    t["token_ledger"] = trace.token_ledger;

    ordered_json j;
    j["question"] = question;
    j["answer"] = answer_text;
    j["relevant_documents"] = relevant_documents;
    j["trace"] = std::move(t);
    return j;
}

// ---------------------------------------------------------------------------

QueryPlan decompose_query(const std::string& query, ChatModel& chat, const DecomposerConfig& cfg, Ledger* ledger) {
    if (text::trim(query).empty()) throw std::invalid_argument("query is empty");

    ChatRequest req;
    req.role = prompts::role::kDecompose;
    req.system_prompt = std::string(prompts::kQuestionDecomposer);
    req.user_prompt = query;
    req.vars = {{"query", query}};
    if (cfg.mode == DecomposerMode::finetuned) {
        req.model = cfg.finetuned_model;
    } else {
        const auto& examples = cfg.examples.empty() ? default_few_shot_examples() : cfg.examples;
        std::vector<std::string> rendered;
        for (const auto& ex : examples) {
            rendered.push_back("Question: " + ex.question + "\nResponse: " + ex.plan.to_json().dump());
        }
        req.system_prompt += text::render(prompts::kFewShotSuffix,
                                          std::map<std::string, std::string>{{"examples", text::join(rendered, "\n\n")}});
    }

    auto reply = chat.complete_json(req, ledger);
    QueryPlan plan;
    if (reply.is_object()) {
        if (auto it = reply.find("hypothetical_summary"); it != reply.end()) {
            plan.hypothetical_summary = std::string(text::trim(as_text(*it)));
        }
        auto qs = reply.find("questions");
        if (qs == reply.end()) qs = reply.find("intermediate_questions");
        if (qs != reply.end() && qs->is_array()) {
            for (const auto& q : *qs) {
                auto s = std::string(text::trim(as_text(q)));
                if (!s.empty()) plan.intermediate_questions.push_back(std::move(s));
            }
        }
    }
    if (plan.intermediate_questions.empty()) {
        logger()->warn("decomposer returned no questions; falling back to the original query");
        if (ledger) ledger->add("pipeline.decompose_fallbacks");
        plan.intermediate_questions = {query};
    }
    if (plan.intermediate_questions.size() > kMaxIntermediateQuestions) {
        logger()->warn("decomposer returned {} questions; keeping the first {}", plan.intermediate_questions.size(),
                       kMaxIntermediateQuestions);
        plan.intermediate_questions.resize(kMaxIntermediateQuestions);
    }
    if (plan.hypothetical_summary.empty()) plan.hypothetical_summary = query;
    return plan;
}

MetadataFilter extract_metadata(const std::string& query, ChatModel& chat, Ledger* ledger) {
    if (text::trim(query).empty()) throw std::invalid_argument("query is empty");
    std::map<std::string, std::string> vars{{"prompt", query}, {"query", query}};
    ChatRequest req;
    req.role = prompts::role::kExtractMetadata;
    req.user_prompt = text::render(prompts::kMetadataExtractor, vars);
    req.vars = std::move(vars);

    json reply;
    try {
        reply = chat.complete_json(req, ledger);
    } catch (const StructuredOutputError& e) {
        logger()->warn("metadata extraction failed, using match-all filter: {}", e.what());
        if (ledger) ledger->add("pipeline.metadata_fallbacks");
        return {};
    }
    if (!reply.is_object()) {
        logger()->warn("metadata extraction returned a non-object, using match-all filter");
        if (ledger) ledger->add("pipeline.metadata_fallbacks");
        return {};
    }
    Metadata constraints;
    for (const auto& [key, value] : reply.items()) {
        auto& values = constraints[text::to_lower_ascii(key)];
        if (value.is_array()) {
            for (const auto& v : value) {
                if (!v.is_null()) values.push_back(as_text(v));
            }
        } else if (!value.is_null()) {
            values.push_back(as_text(value));
        }
    }
    return MetadataFilter(constraints);
}

std::vector<std::string> retrieve_candidate_documents(const CorpusIndex& index, std::span<const double> summary_vector,
                                                      const MetadataFilter& filter, std::size_t K) {
    std::vector<std::string> out;
    if (index.summaries.vectors.size() == 0) return out;
    for (auto& n : index.summaries.vectors.knn(summary_vector, K, index.filter_predicate(filter))) {
        out.push_back(std::move(n.doc_id));
    }
    return out;
}

std::vector<const Chunk*> gather_doc_chunks(const CorpusIndex& index, const std::string& doc_id,
                                            const std::vector<Embedding>& question_vectors, std::size_t k) {
    std::set<std::string> seen;
    std::vector<const Chunk*> out;
    auto in_doc = [&](const VectorIndex::Entry& e) { return e.doc_id == doc_id; };
    for (const auto& q : question_vectors) {
        for (const auto& n : index.chunks.vectors.knn(q.values, k, in_doc)) {
            if (seen.insert(n.ref).second) out.push_back(index.chunks.find(n.ref));
        }
    }
    std::sort(out.begin(), out.end(), [](const Chunk* a, const Chunk* b) {
        if (a->begin != b->begin) return a->begin < b->begin;
        return a->chunk_id < b->chunk_id;
    });
    return out;
}

std::string concatenate_chunks(const std::vector<const Chunk*>& chunks, std::size_t budget) {
    std::string out;
    for (const auto* c : chunks) {
        if (!out.empty()) out += "\n---\n";
        out += c->text;
    }
    if (out.size() > budget) {
        auto offsets = text::codepoint_offsets(out);
        if (budget + 1 < offsets.size()) out.resize(offsets[budget]);
    }
    return out;
}

double score_document_relevance(const QueryPlan& plan, const std::vector<const Chunk*>& chunks, Reranker& reranker,
                                Ledger* ledger, std::size_t input_budget) {
    if (chunks.empty()) return 0.0;
    auto scores = reranker.score(plan.hypothetical_summary, {concatenate_chunks(chunks, input_budget)}, ledger);
    return scores.front();
}

namespace {

std::vector<std::string> parse_answer_list(const json& reply, std::size_t expected, const std::string& role,
                                           Ledger* ledger) {
    const json* list = nullptr;
    if (reply.is_object() && reply.contains("answers") && reply["answers"].is_array()) list = &reply["answers"];
    if (reply.is_array()) list = &reply;
    if (!list) throw StructuredOutputError(role, "reply has no 'answers' list");
    std::vector<std::string> answers;
    for (const auto& a : *list) answers.push_back(as_text(a));
    if (answers.size() != expected) {
        logger()->warn("prompt '{}' returned {} answers for {} questions", role, answers.size(), expected);
        if (ledger) ledger->add("pipeline.answer_count_mismatches");
        answers.resize(expected);
    }
    return answers;
}

std::vector<std::string> answer_context(const QueryPlan& plan, const std::string& context, ChatModel& chat,
                                        Ledger* ledger) {
    json questions = plan.intermediate_questions;
    std::map<std::string, std::string> vars{{"questions", questions.dump()}, {"context", context}};
    ChatRequest req;
    req.role = prompts::role::kAnswerDocument;
    req.user_prompt = text::render(prompts::kDocumentAnswerGenerator, vars);
    req.vars = std::move(vars);
    return parse_answer_list(chat.complete_json(req, ledger), plan.intermediate_questions.size(), req.role, ledger);
}

}  // namespace

std::vector<IntermediateAnswer> answer_intermediate(const std::string& doc_id, const QueryPlan& plan,
                                                    const std::vector<const Chunk*>& chunks, ChatModel& chat,
                                                    std::size_t context_budget, Ledger* ledger) {
    if (plan.intermediate_questions.empty()) throw std::domain_error("query plan has no intermediate questions");

    auto whole = concatenate_chunks(chunks);
    std::vector<std::string> answers;
    if (whole.size() <= context_budget) {
        answers = answer_context(plan, whole, chat, ledger);
    } else {
        std::vector<std::vector<const Chunk*>> groups(1);
        std::size_t used = 0;
        for (const auto* c : chunks) {
            auto cost = c->text.size() + 5;
            if (!groups.back().empty() && used + cost > context_budget) {
                groups.emplace_back();
                used = 0;
            }
            groups.back().push_back(c);
            used += cost;
        }
        json per_group = json::array();
        for (const auto& g : groups) per_group.push_back(answer_context(plan, concatenate_chunks(g), chat, ledger));

        json questions = plan.intermediate_questions;
        std::map<std::string, std::string> vars{{"questions", questions.dump()}, {"answers", per_group.dump()}};
        ChatRequest req;
        req.role = prompts::role::kMergePageGroups;
        req.user_prompt = text::render(prompts::kPageGroupAggregator, vars);
        req.vars = std::move(vars);
        if (ledger) ledger->add("pipeline.page_group_merges");
        answers = parse_answer_list(chat.complete_json(req, ledger), plan.intermediate_questions.size(), req.role,
                                    ledger);
    }

    std::vector<IntermediateAnswer> out;
    for (std::size_t i = 0; i < plan.intermediate_questions.size(); ++i) {
        out.push_back({doc_id, plan.intermediate_questions[i], answers[i]});
    }
    return out;
}

void resolve_citations(const json& reply, const std::vector<std::string>& documents, FinalAnswer& out) {
    std::string answer;
    std::set<std::size_t> cited;
    auto valid = [&](long long i) { return i >= 1 && static_cast<std::size_t>(i) <= documents.size(); };
    auto warn_drop = [&](long long i) {
        auto msg = "dropped out-of-range citation [Document " + std::to_string(i) + "]";
        logger()->warn("{}", msg);
        out.trace.warnings.push_back(msg);
    };

    if (reply.is_object()) {
        answer = reply.contains("answer") ? as_text(reply["answer"]) : std::string();
        if (auto it = reply.find("relevant_documents"); it != reply.end() && it->is_array()) {
            for (const auto& r : *it) {
                long long i = 0;
                if (r.is_number_integer()) {
                    i = r.get<long long>();
                } else if (r.is_string()) {
                    try {
                        i = std::stoll(r.get<std::string>());
                    } catch (const std::exception&) {
                        continue;
                    }
                } else {
                    continue;
                }
                if (valid(i)) cited.insert(static_cast<std::size_t>(i));
                else warn_drop(i);
            }
        }
    } else {
        answer = as_text(reply);
    }

    static const std::regex citation(R"(\s?\[Document\s*<?\s*(\d+)\s*>?\])");
    for (auto it = std::sregex_iterator(answer.begin(), answer.end(), citation); it != std::sregex_iterator(); ++it) {
        auto i = std::stoll((*it)[1].str());
        if (valid(i)) cited.insert(static_cast<std::size_t>(i));
        else warn_drop(i);
    }

    // Inline citations are renumbered so [Document r] names relevant_documents[r-1].
    std::map<std::size_t, std::size_t> rank;
    for (auto i : cited) rank.emplace(i, rank.size() + 1);
    std::string cleaned;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(answer.begin(), answer.end(), citation); it != std::sregex_iterator(); ++it) {
        auto i = std::stoll((*it)[1].str());
        auto pos = static_cast<std::size_t>(it->position());
        cleaned += answer.substr(last, pos - last);
        if (valid(i)) {
            auto match = it->str();
            if (std::isspace(static_cast<unsigned char>(match.front()))) cleaned += match.front();
            cleaned += "[Document " + std::to_string(rank.at(static_cast<std::size_t>(i))) + "]";
        }
        last = pos + static_cast<std::size_t>(it->length());
    }
    cleaned += answer.substr(last);

    out.answer_text = std::string(text::trim(cleaned));
    out.relevant_documents.clear();
    for (auto i : cited) out.relevant_documents.push_back(documents[i - 1]);
}

FinalAnswer aggregate_answers(const std::string& query, const QueryPlan& plan,
                              const std::vector<IntermediateAnswer>& answers, ChatModel& chat, Ledger* ledger) {
    FinalAnswer out;
    out.question = query;
    if (answers.empty()) {
        out.answer_text = std::string(kNoEvidenceAnswer);
        return out;
    }

    std::vector<std::string> documents;
    std::map<std::string, std::size_t> position;
    json structured = json::array();
    for (const auto& a : answers) {
        auto [it, inserted] = position.emplace(a.doc_id, documents.size());
        if (inserted) {
            documents.push_back(a.doc_id);
            structured.push_back({{"index", documents.size()}, {"doc_id", a.doc_id}, {"answers", json::array()}});
        }
        structured[it->second]["answers"].push_back({{"question", a.question}, {"answer", a.answer}});
    }
    std::string rendered;
    for (const auto& d : structured) {
        if (!rendered.empty()) rendered += "\n\n";
        rendered += "Document " + std::to_string(d["index"].get<std::size_t>()) + " (" +
                    d["doc_id"].get<std::string>() + "):";
        for (const auto& qa : d["answers"]) {
            rendered += "\nQ: " + qa["question"].get<std::string>() + "\nA: " + qa["answer"].get<std::string>();
        }
    }

    std::map<std::string, std::string> vars{{"original_question", query},
                                            {"intermediate_questions", numbered(plan.intermediate_questions)},
                                            {"document_answers", rendered}};
    ChatRequest req;
    req.role = prompts::role::kAggregate;
    req.user_prompt = text::render(prompts::kAnswerAggregator, vars);
    vars["document_answers_json"] = structured.dump();
    req.vars = std::move(vars);
    resolve_citations(chat.complete_json(req, ledger), documents, out);
    return out;
}

// ---------------------------------------------------------------------------

FinalAnswer run_plurihop(const std::string& query, const CorpusIndex& index, const PipelineConfig& cfg,
                         const ProviderSet& providers, Ledger* ledger) {
    cfg.validate();
    Ledger run;
    FinalAnswer out;
    out.question = query;
    out.trace.mode = "plurihop";
    auto finish = [&] {
        out.trace.token_ledger = run.to_json();
        if (ledger) ledger->merge(run);
    };
    auto fail = [&](const std::string& what) {
        finish();
        throw PipelineError(what, out);
    };

    QueryPlan plan;
    try {
        plan = decompose_query(query, *providers.chat, cfg.decomposer, &run);
        out.trace.plan = plan;
        if (cfg.use_metadata_filter) out.trace.metadata = extract_metadata(query, *providers.chat, &run);
    } catch (const std::exception& e) {
        fail(std::string("query planning failed: ") + e.what());
    }

    std::vector<std::string> texts{plan.hypothetical_summary};
    texts.insert(texts.end(), plan.intermediate_questions.begin(), plan.intermediate_questions.end());
    std::vector<Embedding> vectors;
    try {
        vectors = providers.embedder->embed(texts, &run);
    } catch (const std::exception& e) {
        fail(std::string("query embedding failed: ") + e.what());
    }
    std::vector<Embedding> question_vectors(vectors.begin() + 1, vectors.end());

    auto candidates = retrieve_candidate_documents(index, vectors.front().values, out.trace.metadata, cfg.K);

    struct Slot {
        DocumentTrace trace;
        std::vector<IntermediateAnswer> answers;
        std::string fatal;
    };
    std::vector<Slot> slots(candidates.size());
    parallel_for(candidates.size(), cfg.max_concurrency, [&](std::size_t i) {
        auto& slot = slots[i];
        slot.trace.doc_id = candidates[i];
        try {
            auto chunks = gather_doc_chunks(index, candidates[i], question_vectors, cfg.k);
            slot.trace.chunk_count = chunks.size();
            slot.trace.relevance =
                score_document_relevance(plan, chunks, *providers.reranker, &run, cfg.rerank_input_budget);
            slot.trace.passed = !cfg.use_relevance_filter || slot.trace.relevance >= cfg.tau;
            if (!slot.trace.passed) return;
            try {
                slot.answers = answer_intermediate(candidates[i], plan, chunks, *providers.chat, cfg.context_budget, &run);
                slot.trace.answered = true;
            } catch (const StructuredOutputError& e) {
                slot.trace.error = e.what();
                run.add("pipeline.document_failures");
                logger()->warn("document {} failed: {}", candidates[i], e.what());
            }
        } catch (const std::exception& e) {
            slot.fatal = e.what();
        }
    });

    std::vector<std::size_t> answered;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        out.trace.documents.push_back(slots[i].trace);
        if (!slots[i].trace.passed) out.trace.filtered.push_back(slots[i].trace.doc_id);
        if (slots[i].trace.answered) answered.push_back(i);
    }
    for (const auto& s : slots) {
        if (!s.fatal.empty()) fail("document " + s.trace.doc_id + ": " + s.fatal);
    }

    std::stable_sort(answered.begin(), answered.end(), [&](std::size_t a, std::size_t b) {
        if (slots[a].trace.relevance != slots[b].trace.relevance) {
            return slots[a].trace.relevance > slots[b].trace.relevance;
        }
        return slots[a].trace.doc_id < slots[b].trace.doc_id;
    });
    std::vector<IntermediateAnswer> intermediate;
    for (auto i : answered) {
        intermediate.insert(intermediate.end(), slots[i].answers.begin(), slots[i].answers.end());
    }

    try {
        auto final_answer = aggregate_answers(query, plan, intermediate, *providers.chat, &run);
        out.answer_text = std::move(final_answer.answer_text);
        out.relevant_documents = std::move(final_answer.relevant_documents);
        out.trace.warnings.insert(out.trace.warnings.end(), final_answer.trace.warnings.begin(),
                                  final_answer.trace.warnings.end());
    } catch (const std::exception& e) {
        fail(std::string("aggregation failed: ") + e.what());
    }
    finish();
    return out;
}

FinalAnswer run_naive_rag(const std::string& query, const CorpusIndex& index, const NaiveConfig& cfg,
                          const ProviderSet& providers, Ledger* ledger) {
    cfg.validate();
    if (text::trim(query).empty()) throw std::invalid_argument("query is empty");
    Ledger run;
    FinalAnswer out;
    out.question = query;
    out.trace.mode = cfg.rerank ? "naive+rerank" : "naive";
    auto finish = [&] {
        out.trace.token_ledger = run.to_json();
        if (ledger) ledger->merge(run);
    };

    try {
        if (cfg.use_metadata_filter) out.trace.metadata = extract_metadata(query, *providers.chat, &run);
        auto query_vector = providers.embedder->embed({query}, &run).front();
        auto depth = cfg.rerank ? cfg.k * cfg.rerank_factor : cfg.k;
        std::vector<Neighbor> retrieved;
        if (index.chunks.vectors.size() > 0) {
            retrieved = index.chunks.vectors.knn(query_vector.values, depth, index.filter_predicate(out.trace.metadata));
        }
        run.add("naive.retrieved", static_cast<std::int64_t>(retrieved.size()));
        for (const auto& n : retrieved) out.trace.retrieved_chunks.push_back(n.ref);

        std::vector<const Chunk*> sent;
        if (cfg.rerank && !retrieved.empty()) {
            std::vector<std::string> passages;
            for (const auto& n : retrieved) passages.push_back(index.chunks.find(n.ref)->text);
            auto scores = providers.reranker->score(query, passages, &run);
            std::vector<std::size_t> order(retrieved.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
            order.resize(std::min(order.size(), cfg.k));
            for (auto i : order) sent.push_back(index.chunks.find(retrieved[i].ref));
        } else {
            for (const auto& n : retrieved) sent.push_back(index.chunks.find(n.ref));
        }
        run.add("naive.sent", static_cast<std::int64_t>(sent.size()));
        for (const auto* c : sent) out.trace.sent_chunks.push_back(c->chunk_id);

        if (sent.empty()) {
            out.answer_text = std::string(kNoEvidenceAnswer);
            finish();
            return out;
        }

        std::vector<std::string> documents;
        std::map<std::string, std::size_t> position;
        std::string context;
        json passages = json::array();
        for (const auto* c : sent) {
            auto [it, inserted] = position.emplace(c->doc_id, documents.size() + 1);
            if (inserted) documents.push_back(c->doc_id);
            context += "[Document " + std::to_string(it->second) + "] (" + c->doc_id + ")\n" + c->text + "\n\n";
            passages.push_back({{"index", it->second}, {"doc_id", c->doc_id}, {"text", c->text}});
        }
        std::map<std::string, std::string> vars{{"question", query}, {"context", context}};
        ChatRequest req;
        req.role = prompts::role::kNaiveAnswer;
        req.user_prompt = text::render(prompts::kNaiveAnswer, vars);
        vars["passages_json"] = passages.dump();
        req.vars = std::move(vars);
        resolve_citations(providers.chat->complete_json(req, &run), documents, out);
    } catch (const std::exception& e) {
        finish();
        throw PipelineError(std::string("naive RAG failed: ") + e.what(), out);
    }
    finish();
    return out;
}

}  // namespace plurihop
