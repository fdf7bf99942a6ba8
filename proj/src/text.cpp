#include "plurihop/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

#include <openssl/evp.h>

namespace plurihop::text {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead & 0xE0) == 0xC0) return 2;
    if ((lead & 0xF0) == 0xE0) return 3;
    if ((lead & 0xF8) == 0xF0) return 4;
    return 1;
}

}  // namespace

std::vector<std::size_t> codepoint_offsets(std::string_view s) {
    std::vector<std::size_t> offsets;
    offsets.reserve(s.size() + 1);
    std::size_t i = 0;
    while (i < s.size()) {
        offsets.push_back(i);
        auto len = utf8_length(static_cast<unsigned char>(s[i]));
        bool valid = i + len <= s.size();
        for (std::size_t j = 1; valid && j < len; ++j) {
            valid = (static_cast<unsigned char>(s[i + j]) & 0xC0) == 0x80;
        }
        i += valid ? len : 1;
    }
    offsets.push_back(s.size());
    return offsets;
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return out;
}

std::string_view trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : s) {
        if (is_word_byte(c)) {
            current += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

bool is_stopword(std::string_view t) {
    static const std::unordered_set<std::string_view> words = {
        "a",     "an",    "and",   "are",   "as",    "at",    "be",    "by",
        "did",   "do",    "does",  "for",   "from",  "had",   "has",   "have",
        "in",    "is",    "it",    "its",   "of",    "on",    "or",    "that",
        "the",   "their", "there", "these", "this",  "those", "to",    "was",
        "were",  "what",  "when",  "where", "which", "who",   "whom",  "why",
        "with",  "how",   "all",   "any",   "list",  "give",  "our",   "your",
        "can",   "been",  "into",  "over",  "than",  "then",  "so",    "if",
        "not",   "no",    "yes",   "about", "document", "documents"};
    return words.contains(t);
}

std::vector<std::string> content_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (auto& t : tokenize(s)) {
        if (is_stopword(t)) continue;
        if (seen.insert(t).second) out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::string> split_sentences(std::string_view s) {
    std::vector<std::string> out;
    auto flush = [&](std::size_t begin, std::size_t end) {
        auto piece = trim(s.substr(begin, end - begin));
        if (!piece.empty()) out.emplace_back(piece);
    };
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '\n') {
            flush(start, i);
            start = i + 1;
        } else if (c == '.' || c == '!' || c == '?') {
            bool boundary = i + 1 == s.size() ||
                            std::isspace(static_cast<unsigned char>(s[i + 1])) != 0;
            if (boundary) {
                flush(start, i);
                start = i + 1;
            }
        }
    }
    flush(start, s.size());
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

}  // namespace plurihop::text
