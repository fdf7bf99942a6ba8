#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "plurihop/evalkit.hpp"
#include "plurihop/log.hpp"

namespace plurihop {

std::map<std::size_t, double> repetitiveness_from_vectors(const std::vector<std::vector<double>>& vectors,
                                                          const std::vector<std::size_t>& ks) {
    if (ks.empty()) throw std::invalid_argument("no k values given");
    auto kmax = *std::max_element(ks.begin(), ks.end());
    if (*std::min_element(ks.begin(), ks.end()) == 0) throw std::invalid_argument("k must be at least 1");
    if (vectors.size() < kmax + 1) {
        throw std::invalid_argument("r@" + std::to_string(kmax) + " needs at least " + std::to_string(kmax + 1) +
                                    " chunks, got " + std::to_string(vectors.size()));
    }

    std::vector<std::vector<double>> unit;
    unit.reserve(vectors.size());
    for (const auto& v : vectors) {
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n == 0.0) throw std::domain_error("zero vector in repetitiveness input");
        std::vector<double> u(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) u[i] = v[i] / n;
        unit.push_back(std::move(u));
    }

    std::map<std::size_t, double> sums;
    for (auto k : ks) sums[k] = 0.0;
    std::vector<double> sims;
    for (std::size_t i = 0; i < unit.size(); ++i) {
        sims.clear();
        for (std::size_t j = 0; j < unit.size(); ++j) {
            if (j == i) continue;
            if (unit[j].size() != unit[i].size()) throw std::domain_error("vector dimension mismatch");
            double dot = 0.0;
            for (std::size_t d = 0; d < unit[i].size(); ++d) dot += unit[i][d] * unit[j][d];
            sims.push_back(dot);
        }
        std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(kmax), sims.end(),
                          std::greater<>());
        double running = 0.0;
        std::size_t taken = 0;
        std::vector<std::size_t> sorted_ks(ks.begin(), ks.end());
        std::sort(sorted_ks.begin(), sorted_ks.end());
        for (auto k : sorted_ks) {
            for (; taken < k; ++taken) running += sims[taken];
            sums[k] += running / static_cast<double>(k);
        }
    }
    for (auto& [k, s] : sums) s /= static_cast<double>(unit.size());
    return sums;
}

RepetitivenessResult repetitiveness_at_k(const Corpus& corpus, const std::vector<std::size_t>& ks,
                                         std::size_t sample_n, const ChunkingConfig& chunking, Embedder& embedder,
                                         std::uint64_t seed, Ledger* ledger, EmbeddingCache* cache) {
    chunking.validate();
    if (sample_n == 0) throw std::invalid_argument("sample size must be at least 1");

    std::vector<std::size_t> order(corpus.documents.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    if (order.size() > sample_n) order.resize(sample_n);
    std::sort(order.begin(), order.end());
    if (order.size() < sample_n) {
        logger()->warn("corpus has {} documents; sampling all of them instead of {}", order.size(), sample_n);
    }

    RepetitivenessResult result;
    std::vector<std::string> texts;
    for (auto i : order) {
        const auto& doc = corpus.documents[i];
        result.sampled_doc_ids.push_back(doc.doc_id);
        for (auto& c : chunk_document(doc, chunking)) texts.push_back(std::move(c.text));
    }
    result.documents_sampled = order.size();
    result.chunk_count = texts.size();

    auto embeddings = embed_cached(embedder, texts, cache, ledger);
    std::vector<std::vector<double>> vectors;
    vectors.reserve(embeddings.size());
    for (auto& e : embeddings) vectors.push_back(std::move(e.values));
    result.r_at_k = repetitiveness_from_vectors(vectors, ks);
    return result;
}

}  // namespace plurihop
