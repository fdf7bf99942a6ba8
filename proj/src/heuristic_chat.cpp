#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include <json.hpp>

#include "plurihop/evalkit.hpp"
#include "plurihop/pipeline.hpp"
#include "plurihop/prompts.hpp"
#include "plurihop/providers.hpp"
#include "plurihop/text.hpp"

namespace plurihop {

using nlohmann::json;

namespace {

constexpr std::string_view kNotMentioned = "Not mentioned in this document.";
constexpr std::string_view kNothingFound = "No relevant information was found in the provided documents.";

std::string stem(std::string t) {
    if (t.size() > 3 && t.back() == 's' && t[t.size() - 2] != 's') t.pop_back();
    return t;
}

// Words that describe the request rather than its subject.
bool is_request_word(const std::string& t) {
    static const std::set<std::string> words = {"finding", "findings", "found", "report", "reported", "reports",
                                                "mentioned", "recorded", "observed", "documented", "detected",
                                                "described", "information", "result", "results"};
    return words.count(t) > 0;
}

bool has_digit(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

// What a question is looking for: anchors (ids, years, proper names) that
// the context must mention, and topic words of which half must appear in a
// sentence. A word written right before an anchor ("turbine T03") names the
// anchor's type and is not a topic word.
struct Profile {
    std::set<std::string> anchors;
    std::set<std::string> topic;
};

Profile profile(std::string_view question) {
    Profile p;
    std::set<std::string> proper;
    static const std::regex word(R"([A-Za-z][A-Za-z0-9\-]*)");
    std::string q(question);
    bool first = true;
    for (auto it = std::sregex_iterator(q.begin(), q.end(), word); it != std::sregex_iterator(); ++it) {
        auto w = it->str();
        auto pos = static_cast<std::size_t>(it->position());
        bool sentence_start = first || (pos >= 2 && (q[pos - 2] == '.' || q[pos - 2] == '?'));
        first = false;
        if (!sentence_start && std::isupper(static_cast<unsigned char>(w[0])) && !has_digit(w)) {
            auto lower = text::to_lower_ascii(w);
            if (!text::is_stopword(lower)) proper.insert(lower);
        }
    }
    auto tokens = text::tokenize(question);
    auto is_anchor = [&](const std::string& t) { return has_digit(t) || proper.count(t) > 0; };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (text::is_stopword(t)) continue;
        if (is_anchor(t)) {
            p.anchors.insert(t);
        } else if ((i + 1 < tokens.size() && is_anchor(tokens[i + 1])) || is_request_word(t)) {
            continue;
        } else {
            p.topic.insert(stem(t));
        }
    }
    return p;
}

std::set<std::string> token_set(std::string_view s) {
    std::set<std::string> tokens;
    for (const auto& t : text::tokenize(s)) tokens.insert(stem(t));
    return tokens;
}

bool mentions_anchors(const Profile& p, std::string_view context) {
    auto tokens = token_set(context);
    return std::all_of(p.anchors.begin(), p.anchors.end(),
                       [&](const std::string& a) { return tokens.count(stem(a)) > 0; });
}

bool on_topic(const Profile& p, std::string_view sentence) {
    auto tokens = token_set(sentence);
    std::size_t hits = 0;
    for (const auto& t : p.topic) hits += tokens.count(t);
    return hits >= std::max<std::size_t>(1, (p.topic.size() + 1) / 2);
}

std::vector<std::string> sentences_of(std::string_view context) {
    std::vector<std::string> out;
    for (auto& s : text::split_sentences(context)) {
        if (s.find_first_not_of("-=* ") == std::string::npos) continue;
        if (s.back() != '.' && s.back() != '!' && s.back() != '?') s += '.';
        out.push_back(std::move(s));
    }
    return out;
}

std::string select_sentences(const Profile& p, std::string_view context) {
    if (!mentions_anchors(p, context)) return {};
    std::vector<std::string> picked;
    for (auto& s : sentences_of(context)) {
        if (on_topic(p, s) && std::find(picked.begin(), picked.end(), s) == picked.end()) picked.push_back(s);
    }
    return text::join(picked, " ");
}

const std::string& var(const ChatRequest& req, const std::string& key) {
    auto it = req.vars.find(key);
    if (it == req.vars.end()) {
        throw ProviderError("heuristic chat: prompt '" + req.role + "' lacks template variable '" + key + "'");
    }
    return it->second;
}

std::vector<std::string> string_list(const std::string& raw) {
    auto j = json::parse(raw, nullptr, false);
    std::vector<std::string> out;
    if (j.is_array()) {
        for (const auto& v : j) out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else if (!raw.empty()) {
        out.push_back(raw);
    }
    return out;
}

// Answers a question from labelled passages, citing each fact. Facts found
// in several passages carry every citation. Passages that do not mention
// the question's anchors are skipped when `check_anchors` is set.
json cited_answer(const Profile& p, const std::vector<std::pair<std::size_t, std::string>>& passages,
                  bool check_anchors) {
    std::vector<std::string> facts;
    std::map<std::string, std::set<std::size_t>> cites;
    for (const auto& [index, body] : passages) {
        if (check_anchors && !mentions_anchors(p, body)) continue;
        for (auto& s : sentences_of(body)) {
            if (s == kNotMentioned || !on_topic(p, s)) continue;
            if (!cites.count(s)) facts.push_back(s);
            cites[s].insert(index);
        }
    }
    if (facts.empty()) return {{"answer", kNothingFound}, {"relevant_documents", json::array()}};
    std::set<std::size_t> used;
    std::vector<std::string> parts;
    for (const auto& f : facts) {
        std::string line = f;
        for (auto i : cites[f]) {
            line += " [Document " + std::to_string(i) + "]";
            used.insert(i);
        }
        parts.push_back(std::move(line));
    }
    return {{"answer", text::join(parts, "\n")}, {"relevant_documents", std::vector<std::size_t>(used.begin(), used.end())}};
}

json decompose(const ChatRequest& req) {
    const auto& query = var(req, "query");
    auto words = text::content_tokens(query);
    std::string summary = "Report on " + text::join(words, " ") + ".";
    return {{"hypothetical_summary", summary}, {"questions", {query}}};
}

json extract_metadata(const ChatRequest& req) {
    auto q = req.vars.count("query") ? var(req, "query") : var(req, "prompt");
    json out = json::object();

    static const std::regex id(R"(\b(?=[A-Za-z0-9]*[0-9])(?=[A-Za-z0-9]*[A-Za-z])[A-Za-z0-9]{2,}\b)");
    std::vector<std::string> plants;
    for (auto it = std::sregex_iterator(q.begin(), q.end(), id); it != std::sregex_iterator(); ++it) {
        auto s = it->str();
        // Ordinals and units ("3rd", "10kW") are not identifiers.
        static const std::regex not_id(R"(^[0-9]+(st|nd|rd|th|kw|mw|kv|m|km|h|s|x)$)", std::regex::icase);
        if (std::regex_match(s, not_id)) continue;
        if (std::find(plants.begin(), plants.end(), s) == plants.end()) plants.push_back(s);
    }
    if (!plants.empty()) out["plant_id"] = plants;

    // Capitalized names after "windpark(s)" or "in", joined by "and" or commas.
    static const std::regex park(
        R"(\b(?:[Ww]indparks?|in)\s+((?:[Ww]indparks?\s+)?[A-Z][\w\-]*(?:(?:\s*,\s*|\s+and\s+)[A-Z][\w\-]*)*))");
    std::vector<std::string> parks;
    for (auto it = std::sregex_iterator(q.begin(), q.end(), park); it != std::sregex_iterator(); ++it) {
        static const std::regex name(R"([A-Z][\w\-]*)");
        auto group = (*it)[1].str();
        for (auto n = std::sregex_iterator(group.begin(), group.end(), name); n != std::sregex_iterator(); ++n) {
            auto s = n->str();
            if (has_digit(s) || text::to_lower_ascii(s).rfind("windpark", 0) == 0) continue;
            if (std::find(parks.begin(), parks.end(), s) == parks.end()) parks.push_back(s);
        }
    }
    if (!parks.empty()) out["windpark"] = parks;
    return out;
}

json answer_document(const ChatRequest& req) {
    auto questions = string_list(var(req, "questions"));
    const auto& context = var(req, "context");
    json answers = json::array();
    for (const auto& q : questions) {
        auto a = select_sentences(profile(q), context);
        answers.push_back(a.empty() ? std::string(kNotMentioned) : a);
    }
    return {{"answers", answers}};
}

json merge_page_groups(const ChatRequest& req) {
    auto questions = string_list(var(req, "questions"));
    auto groups = json::parse(var(req, "answers"), nullptr, false);
    json answers = json::array();
    for (std::size_t q = 0; q < questions.size(); ++q) {
        std::vector<std::string> parts;
        if (groups.is_array()) {
            for (const auto& g : groups) {
                if (!g.is_array() || q >= g.size() || !g[q].is_string()) continue;
                auto a = g[q].get<std::string>();
                if (a != kNotMentioned && std::find(parts.begin(), parts.end(), a) == parts.end()) parts.push_back(a);
            }
        }
        answers.push_back(parts.empty() ? std::string(kNotMentioned) : text::join(parts, " "));
    }
    return {{"answers", answers}};
}

json aggregate(const ChatRequest& req) {
    auto docs = json::parse(var(req, "document_answers_json"), nullptr, false);
    std::vector<std::pair<std::size_t, std::string>> passages;
    if (docs.is_array()) {
        for (const auto& d : docs) {
            std::string body;
            for (const auto& qa : d.value("answers", json::array())) body += qa.value("answer", "") + "\n";
            passages.emplace_back(d.value("index", std::size_t{0}), body);
        }
    }
    return cited_answer(profile(var(req, "original_question")), passages, false);
}

json naive_answer(const ChatRequest& req) {
    auto list = json::parse(var(req, "passages_json"), nullptr, false);
    std::vector<std::pair<std::size_t, std::string>> passages;
    if (list.is_array()) {
        for (const auto& p : list) passages.emplace_back(p.value("index", std::size_t{0}), p.value("text", ""));
    }
    return cited_answer(profile(var(req, "question")), passages, true);
}

std::string summarize(const ChatRequest& req) {
    auto sentences = sentences_of(var(req, "context"));
    std::string out;
    for (const auto& s : sentences) {
        if (!out.empty() && out.size() + s.size() > 600) break;
        if (!out.empty()) out += ' ';
        out += s;
        if (out.size() > 300) break;
    }
    return out;
}

bool is_refusal(std::string_view answer) {
    auto lower = text::to_lower_ascii(answer);
    for (std::string_view marker : {"no relevant", "could not find", "couldn't find", "cannot be answered",
                                    "not mentioned", "no information"}) {
        if (lower.find(marker) != std::string::npos) return true;
    }
    return false;
}

json split_statements(const ChatRequest& req) {
    auto answer = var(req, "answer");
    json out = json::object();
    if (is_refusal(answer) && answer.size() < 200) return out;
    static const std::regex citation(R"(\s*\[(?:Document\s*<?\s*\d+\s*>?|[^\[\]\n]+\.pdf)\])", std::regex::icase);
    answer = std::regex_replace(answer, citation, "");
    static const std::regex pair(R"(^([^:]{1,40}):\s+(.+?)\.?$)");
    std::size_t n = 0;
    for (const auto& s : sentences_of(answer)) {
        if (is_refusal(s)) continue;
        std::smatch m;
        if (std::regex_match(s, m, pair)) {
            out[std::to_string(++n)] = {{std::string(text::trim(m[1].str())), std::string(text::trim(m[2].str()))}};
        } else {
            out[std::to_string(++n)] = s;
        }
    }
    return out;
}

// Key-value statements hold when the value's token sequence occurs in the
// reference; plain statements when all their content words do.
bool statement_holds(const std::string& statement, const std::vector<std::string>& reference_tokens,
                     const std::set<std::string>& reference_set) {
    auto j = json::parse(statement, nullptr, false);
    if (j.is_object() && j.size() == 1) {
        auto value = j.begin()->is_string() ? j.begin()->get<std::string>() : j.begin()->dump();
        auto needle = text::tokenize(value);
        if (needle.empty()) return false;
        return std::search(reference_tokens.begin(), reference_tokens.end(), needle.begin(), needle.end()) !=
               reference_tokens.end();
    }
    auto tokens = text::content_tokens(statement);
    return !tokens.empty() && std::all_of(tokens.begin(), tokens.end(), [&](const std::string& t) {
        return reference_set.count(stem(t)) > 0;
    });
}

json judge_statements(const ChatRequest& req) {
    auto statements = string_list(var(req, "statements_json"));
    auto reference_tokens = text::tokenize(var(req, "reference_text"));
    std::set<std::string> reference_set;
    for (const auto& t : reference_tokens) reference_set.insert(stem(t));
    json out = json::object();
    std::size_t inferred = 0;
    for (std::size_t i = 0; i < statements.size(); ++i) {
        bool ok = statement_holds(statements[i], reference_tokens, reference_set);
        out[std::to_string(i + 1)] = ok;
        inferred += ok ? 1 : 0;
    }
    out["inferred_statements"] = inferred;
    return out;
}

json training_example(const ChatRequest& req) {
    const auto& question = var(req, "question");
    auto sentences = sentences_of(var(req, "context"));
    if (sentences.empty()) {
        return {{"reasoning", "The document is empty."}, {"hypothetical_summary", ""}, {"questions", json::array()}};
    }
    auto p = profile(question);
    std::string evidence;
    for (const auto& s : sentences) {
        if (on_topic(p, s)) {
            evidence = s;
            break;
        }
    }
    std::string reasoning = evidence.empty()
                                ? "The document does not state the answer directly; its header identifies the subject."
                                : "The relevant passage is: " + evidence;
    std::vector<std::string> topic(p.topic.begin(), p.topic.end());
    json questions = json::array();
    questions.push_back("Which turbine, windpark and date does this document concern?");
    if (!topic.empty()) questions.push_back("What does the document report about " + text::join(topic, ", ") + "?");
    return {{"reasoning", reasoning}, {"hypothetical_summary", sentences.front()}, {"questions", questions}};
}

}  // namespace

ChatReply HeuristicChat::do_complete(const ChatRequest& req) {
    namespace r = prompts::role;
    std::string text;
    if (req.role == r::kDecompose) {
        text = decompose(req).dump();
    } else if (req.role == r::kExtractMetadata) {
        text = extract_metadata(req).dump();
    } else if (req.role == r::kAnswerDocument) {
        text = answer_document(req).dump();
    } else if (req.role == r::kMergePageGroups) {
        text = merge_page_groups(req).dump();
    } else if (req.role == r::kAggregate) {
        text = aggregate(req).dump();
    } else if (req.role == r::kNaiveAnswer) {
        text = naive_answer(req).dump();
    } else if (req.role == r::kSummarize) {
        text = summarize(req);
    } else if (req.role == r::kSplitStatements) {
        text = split_statements(req).dump();
    } else if (req.role == r::kJudgeStatements) {
        text = judge_statements(req).dump();
    } else if (req.role == r::kFileReferences) {
        text = json{{"filenames", find_file_references(var(req, "text"))}}.dump();
    } else if (req.role == r::kTrainingExample) {
        text = training_example(req).dump();
    } else {
        throw ProviderError("heuristic chat has no behaviour for prompt role '" + req.role + "'");
    }
    ChatReply reply;
    reply.text = std::move(text);
    reply.prompt_tokens = estimate_tokens(req.system_prompt) + estimate_tokens(req.user_prompt);
    reply.completion_tokens = estimate_tokens(reply.text);
    return reply;
}

}  // namespace plurihop
