#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace plurihop::text {

/// Byte offsets of every UTF-8 code point start in `s`, plus a final entry
/// equal to `s.size()`. Malformed bytes count as one code point each.
std::vector<std::size_t> codepoint_offsets(std::string_view s);

std::string to_lower_ascii(std::string_view s);
std::string_view trim(std::string_view s);

/// Lowercased alphanumeric word tokens. Bytes >= 0x80 are treated as word
/// characters so non-ASCII words stay whole.
std::vector<std::string> tokenize(std::string_view s);

bool is_stopword(std::string_view lowered_token);

/// Tokens of `s` minus stopwords, deduplicated, in first-occurrence order.
std::vector<std::string> content_tokens(std::string_view s);

/// Sentence split on '.', '!', '?' followed by whitespace or end, and on
/// newlines. Pieces are trimmed; empty pieces dropped.
std::vector<std::string> split_sentences(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Replaces `{name}` placeholders whose name is a key in `vars`; every other
/// brace sequence is left untouched.
template <typename Map>
std::string render(std::string_view tmpl, const Map& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                std::string key(tmpl.substr(i + 1, close - i - 1));
                if (auto it = vars.find(key); it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

}  // namespace plurihop::text
