#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "plurihop/evalkit.hpp"
#include "plurihop/log.hpp"
#include "plurihop/parallel.hpp"
#include "plurihop/text.hpp"

namespace plurihop {

namespace {

std::string base_name(std::string_view name) {
    std::filesystem::path p{std::string(text::trim(name))};
    auto ext = text::to_lower_ascii(p.extension().string());
    auto stem = (ext == ".pdf" || ext == ".txt" || ext == ".md") ? p.stem().string() : p.filename().string();
    return text::to_lower_ascii(stem);
}

}  // namespace

RocAnalysis analyze_roc(std::vector<ScoredPair> pairs) {
    std::size_t positives = 0;
    for (const auto& p : pairs) positives += p.relevant ? 1 : 0;
    std::size_t negatives = pairs.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw std::invalid_argument(
            fmt::format("ROC needs relevant and irrelevant pairs (got {} relevant, {} irrelevant)", positives,
                        negatives));
    }

    RocAnalysis r;
    std::set<double> observed;
    for (const auto& p : pairs) observed.insert(p.score);
    std::vector<double> taus{*observed.begin() - kRocEpsilon};
    taus.insert(taus.end(), observed.begin(), observed.end());
    taus.push_back(*observed.rbegin() + kRocEpsilon);

    for (double tau : taus) {
        std::size_t tp = 0, fp = 0;
        for (const auto& p : pairs) {
            if (p.score >= tau) (p.relevant ? tp : fp) += 1;
        }
        r.points.push_back({tau, static_cast<double>(tp) / static_cast<double>(positives),
                            static_cast<double>(fp) / static_cast<double>(negatives)});
    }

    // Points run from (1,1) to (0,0) as tau rises; integrate tpr over fpr.
    for (std::size_t i = 1; i < r.points.size(); ++i) {
        const auto& a = r.points[i - 1];
        const auto& b = r.points[i];
        r.auc += (a.fpr - b.fpr) * (a.tpr + b.tpr) / 2.0;
    }

    r.relevant_histogram.assign(10, 0);
    r.irrelevant_histogram.assign(10, 0);
    for (const auto& p : pairs) {
        auto bin = static_cast<std::size_t>(std::clamp(std::floor(p.score * 10.0), 0.0, 9.0));
        (p.relevant ? r.relevant_histogram : r.irrelevant_histogram)[bin] += 1;
    }

    double lo = *observed.begin();
    double hi = *observed.rbegin();
    r.bottom_decile_cutoff = lo + (hi - lo) / 10.0;
    std::size_t rel_low = 0, irr_low = 0;
    for (const auto& p : pairs) {
        if (p.score < r.bottom_decile_cutoff) (p.relevant ? rel_low : irr_low) += 1;
    }
    r.relevant_in_bottom_decile = static_cast<double>(rel_low) / static_cast<double>(positives);
    r.irrelevant_in_bottom_decile = static_cast<double>(irr_low) / static_cast<double>(negatives);
    r.pairs = std::move(pairs);
    return r;
}

std::string RocAnalysis::points_csv() const {
    std::string out = "tau,tpr,fpr\n";
    for (const auto& p : points) out += fmt::format("{:.9g},{:.6f},{:.6f}\n", p.tau, p.tpr, p.fpr);
    return out;
}

std::string RocAnalysis::histogram_csv() const {
    std::string out = "bin_low,bin_high,relevant,irrelevant\n";
    for (std::size_t b = 0; b < 10; ++b) {
        out += fmt::format("{:.1f},{:.1f},{},{}\n", b / 10.0, (b + 1) / 10.0, relevant_histogram.at(b),
                           irrelevant_histogram.at(b));
    }
    return out;
}

nlohmann::ordered_json RocAnalysis::summary_json() const {
    std::size_t relevant = 0;
    for (const auto& p : pairs) relevant += p.relevant ? 1 : 0;
    return {{"pairs", pairs.size()},
            {"relevant_pairs", relevant},
            {"irrelevant_pairs", pairs.size() - relevant},
            {"auc", auc},
            {"bottom_decile_cutoff", bottom_decile_cutoff},
            {"irrelevant_in_bottom_decile", irrelevant_in_bottom_decile},
            {"relevant_in_bottom_decile", relevant_in_bottom_decile},
            {"relevant_histogram", relevant_histogram},
            {"irrelevant_histogram", irrelevant_histogram}};
}

RocAnalysis filter_roc(const std::vector<QARecord>& dataset, const CorpusIndex& index, const PipelineConfig& cfg,
                       const ProviderSet& providers, Ledger* ledger) {
    cfg.validate();
    std::vector<std::string> doc_ids;
    for (const auto& [id, _] : index.documents) doc_ids.push_back(id);

    std::vector<std::vector<ScoredPair>> per_question(dataset.size());
    for (std::size_t q = 0; q < dataset.size(); ++q) {
        const auto& rec = dataset[q];
        if (!rec.gold_documents) {
            logger()->warn("question {} has no gold documents; left out of the ROC", q + 1);
            continue;
        }
        std::set<std::string> gold;
        for (const auto& g : *rec.gold_documents) gold.insert(base_name(g));

        auto plan = decompose_query(rec.question, *providers.chat, cfg.decomposer, ledger);
        auto question_vectors = providers.embedder->embed(plan.intermediate_questions, ledger);

        auto& out = per_question[q];
        out.resize(doc_ids.size());
        parallel_for(doc_ids.size(), cfg.max_concurrency, [&](std::size_t d) {
            const auto& id = doc_ids[d];
            const auto& info = index.documents.at(id);
            auto chunks = gather_doc_chunks(index, id, question_vectors, cfg.k);
            out[d].question = q;
            out[d].doc_id = id;
            out[d].score = score_document_relevance(plan, chunks, *providers.reranker, ledger, cfg.rerank_input_budget);
            out[d].relevant = gold.count(base_name(id)) > 0 || gold.count(base_name(info.filename)) > 0;
        });
    }

    std::vector<ScoredPair> pairs;
    for (auto& v : per_question) pairs.insert(pairs.end(), v.begin(), v.end());
    return analyze_roc(std::move(pairs));
}

}  // namespace plurihop
