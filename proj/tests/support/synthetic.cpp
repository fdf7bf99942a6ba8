#include "synthetic.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

namespace plurihop::testing {

namespace {

const std::vector<std::pair<std::string, std::string>> kParks = {
    {"Nordfeld", "NF"}, {"Waldhof", "WH"}, {"Seeblick", "SB"}};

const char* kInspectionProcedure =
    "The inspection follows the maintenance manual of the manufacturer. The nacelle, the drive train and the "
    "rotor were examined while the turbine was stopped and locked. The gearbox inspection documents pitting "
    "on all stages with an endoscope. All blades are inspected from a rope access position. Findings are "
    "classified according to the company guideline for rotor blades and drive trains.";
const char* kSafetyNotes =
    "Safety notes: the turbine was secured against restart during the whole inspection. Work at height was "
    "carried out by two certified technicians. The tower ladder, the fall protection system and the service "
    "lift were checked before use. Weather conditions were suitable for rope access work.";
const char* kLabMethod =
    "The oil sample was taken from the gearbox sump during operation and sent to the laboratory. The analysis "
    "covers wear metals, additives, contamination and viscosity. Limit values follow the recommendation of "
    "the gearbox manufacturer. Results above the limit require a resample within three months.";
const char* kLabClosing =
    "The laboratory is accredited for lubricant analysis. Measurement uncertainty is stated in the appendix of "
    "the laboratory certificate. This report was generated automatically from the laboratory database.";

struct Fact {
    std::string doc_id;
    std::string windpark;
    std::string kind;  // gearbox | blade | iron | water
    std::string severity;
    bool above = false;
    std::string sentence;
};

std::string date(std::mt19937_64& rng, int year) {
    std::uniform_int_distribution<int> month(1, 12), day(1, 28);
    return fmt::format("{}-{:02}-{:02}", year, month(rng), day(rng));
}

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& items) {
    std::uniform_int_distribution<std::size_t> d(0, items.size() - 1);
    return items[d(rng)];
}

SyntheticDoc inspection(std::mt19937_64& rng, const std::string& park, const std::string& tid, int year,
                        std::vector<Fact>& facts) {
    SyntheticDoc doc{fmt::format("insp_{}_{}", tid, year), park, tid, "inspection", year, {}};
    auto d = date(rng, year);
    std::string p1 = fmt::format("Inspection report for turbine {} in windpark {}.\nInspection date: {}.\n{}\n", tid,
                                 park, d, kInspectionProcedure);
    auto severity = pick(rng, std::vector<std::string>{"no", "light", "light", "moderate", "severe"});
    std::string gearbox = severity == "no"
                              ? fmt::format("On {} the gearbox of turbine {} ({}) showed no findings.", d, tid, park)
                              : fmt::format("On {} the gearbox of turbine {} ({}) showed {} pitting.", d, tid, park,
                                            severity);
    p1 += gearbox + "\n";
    if (severity != "no") facts.push_back({doc.doc_id, park, "gearbox", severity, true, gearbox});

    std::string p2 = std::string(kSafetyNotes) + "\n";
    std::bernoulli_distribution damaged(0.55);
    if (damaged(rng)) {
        auto kind = pick(rng, std::vector<std::string>{"erosion", "crack", "lightning"});
        auto rating = pick(rng, std::vector<std::string>{"minor", "major", "critical"});
        std::uniform_int_distribution<int> blade(1, 3);
        auto s = fmt::format("On {} blade B{} of turbine {} ({}) had {} damage rated {}.", d, blade(rng), tid, park,
                             kind, rating);
        p2 += s + "\n";
        facts.push_back({doc.doc_id, park, "blade", rating, true, s});
    } else {
        p2 += fmt::format("No damage was visible on the blades of turbine {}.\n", tid);
    }
    p2 += fmt::format("The tower flange bolts of turbine {} were checked and found in order.\n", tid);
    doc.pages = {p1, p2};
    return doc;
}

SyntheticDoc oil(std::mt19937_64& rng, const std::string& park, const std::string& tid, int year,
                 std::vector<Fact>& facts, const std::string& suffix = "") {
    SyntheticDoc doc{fmt::format("oil_{}_{}{}", tid, year, suffix), park, tid, "oil", year, {}};
    auto d = date(rng, year);
    std::uniform_int_distribution<int> iron(12, 70), water(120, 820);
    int fe = iron(rng), h2o = water(rng);
    bool fe_above = fe > 40, water_above = h2o > 500;
    auto fe_s = fmt::format("On {} oil of turbine {} ({}) had iron content {} ppm, {} the limit.", d, tid, park, fe,
                            fe_above ? "above" : "within");
    auto w_s = fmt::format("On {} oil of turbine {} ({}) had water content {} ppm, {} the limit.", d, tid, park, h2o,
                           water_above ? "above" : "within");
    if (fe_above) facts.push_back({doc.doc_id, park, "iron", "", true, fe_s});
    if (water_above) facts.push_back({doc.doc_id, park, "water", "", true, w_s});
    std::string p1 = fmt::format("Oil analysis report for turbine {} in windpark {}.\nSample date: {}.\n{}\n{}\n{}\n{}\n",
                                 tid, park, d, kLabMethod, fe_s, w_s, kLabClosing);
    doc.pages = {p1};
    return doc;
}

SyntheticQuestion make_question(const std::string& question, const std::vector<Fact>& facts,
                                const std::function<bool(const Fact&)>& keep) {
    SyntheticQuestion q{question, "", {}};
    for (const auto& f : facts) {
        if (!keep(f)) continue;
        if (!q.reference_answer.empty()) q.reference_answer += "\n";
        q.reference_answer += f.sentence;
        auto file = f.doc_id + ".txt";
        if (q.gold_documents.empty() || q.gold_documents.back() != file) q.gold_documents.push_back(file);
    }
    return q;
}

}  // namespace

void SyntheticCorpus::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& d : docs) {
        std::string text;
        for (std::size_t i = 0; i < d.pages.size(); ++i) {
            if (i) text += '\f';
            text += d.pages[i];
        }
        std::ofstream(dir / (d.doc_id + ".txt"), std::ios::binary) << text;
        nlohmann::json meta{{"plant_id", d.turbine}, {"windpark", d.windpark}, {"type", d.type}, {"year", d.year}};
        std::ofstream(dir / (d.doc_id + ".meta.json"), std::ios::binary) << meta.dump();
    }
}

std::string SyntheticCorpus::dataset_jsonl() const {
    std::string out;
    for (const auto& q : questions) {
        out += nlohmann::json{{"question", q.question},
                              {"reference_answer", q.reference_answer},
                              {"gold_documents", q.gold_documents}}
                   .dump() +
               "\n";
    }
    return out;
}

SyntheticCorpus windfarm_corpus(std::uint64_t seed, int turbines_per_park) {
    std::mt19937_64 rng(seed);
    SyntheticCorpus c;
    std::vector<Fact> facts;
    for (const auto& [park, prefix] : kParks) {
        for (int t = 1; t <= turbines_per_park; ++t) {
            auto tid = fmt::format("{}{:02}", prefix, t);
            for (int year = 2020; year <= 2024; ++year) {
                c.docs.push_back(inspection(rng, park, tid, year, facts));
                c.docs.push_back(oil(rng, park, tid, year, facts));
            }
        }
    }
    for (const auto& [park, _] : kParks) {
        c.questions.push_back(make_question("Which gearbox pitting was found in windpark " + park + "?", facts,
                                            [&](const Fact& f) { return f.windpark == park && f.kind == "gearbox"; }));
    }
    for (const auto& [park, _] : kParks) {
        c.questions.push_back(make_question("Which blade damage was found in windpark " + park + "?", facts,
                                            [&](const Fact& f) { return f.windpark == park && f.kind == "blade"; }));
    }
    for (const auto& [park, _] : kParks) {
        c.questions.push_back(make_question(
            "Which oil samples in windpark " + park + " had an iron content above the limit?", facts,
            [&](const Fact& f) { return f.windpark == park && f.kind == "iron"; }));
    }
    for (const auto& [park, _] : kParks) {
        c.questions.push_back(make_question(
            "Which oil samples in windpark " + park + " had a water content above the limit?", facts,
            [&](const Fact& f) { return f.windpark == park && f.kind == "water"; }));
    }
    return c;
}

SyntheticCorpus distractor_corpus(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SyntheticCorpus c;
    std::vector<Fact> facts;
    std::vector<Fact> ignored;
    const std::vector<std::pair<std::string, std::string>> focus = {{"Nordfeld", "NF01"}, {"Seeblick", "SB04"}};
    const std::vector<std::pair<std::string, std::string>> others = {
        {"Nordfeld", "NF02"}, {"Nordfeld", "NF03"}, {"Waldhof", "WH01"}, {"Waldhof", "WH02"}, {"Seeblick", "SB01"}};

    for (const auto& [park, tid] : focus) {
        SyntheticQuestion q{"What did the oil analyses of turbine " + tid + " report?", "", {}};
        for (int i = 0; i < 10; ++i) {
            int year = 2015 + i;
            auto before = facts.size();
            auto doc = oil(rng, park, tid, year, facts);
            q.gold_documents.push_back(doc.doc_id + ".txt");
            for (auto j = before; j < facts.size(); ++j) {
                q.reference_answer += (q.reference_answer.empty() ? "" : "\n") + facts[j].sentence;
            }
            c.docs.push_back(std::move(doc));
            c.docs.push_back(inspection(rng, park, tid, year, ignored));
        }
        c.questions.push_back(std::move(q));
    }
    for (int i = 0; i < 20; ++i) {
        const auto& [park, tid] = others[static_cast<std::size_t>(i) % others.size()];
        c.docs.push_back(oil(rng, park, tid, 2015 + i / 2, ignored, i % 2 ? "b" : ""));
    }
    return c;
}

}  // namespace plurihop::testing
