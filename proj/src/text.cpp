#include "nqs/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <random>

namespace nqs::text {

const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = {
        "a",     "an",    "the",   "and",  "or",    "but",   "if",    "then",  "of",
        "to",    "in",    "on",    "at",   "by",    "for",   "with",  "from",  "as",
        "is",    "are",   "was",   "were", "be",    "been",  "it",    "its",   "this",
        "that",  "these", "those", "i",    "you",   "we",    "they",  "he",    "she",
        "me",    "my",    "your",  "our",  "do",    "does",  "did",   "what",  "which",
        "who",   "how",   "why",   "when", "where", "can",   "will",  "would", "should",
        "not",   "no",    "so",    "about", "into", "there", "their", "have",  "has",
    };
    return words;
}

namespace {

bool is_word_byte(unsigned char c) {
    return std::isalnum(c) != 0 || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view input) {
    const auto& stop = stopwords();
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && stop.find(current) == stop.end()) {
            tokens.push_back(current);
        }
        current.clear();
    };
    for (const char ch : input) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_word_byte(c)) {
            current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

std::unordered_set<std::string> token_set(std::string_view input) {
    auto tokens = tokenize(input);
    return {tokens.begin(), tokens.end()};
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && is_space(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && is_space(static_cast<unsigned char>(s[end - 1]))) --end;
    return std::string(s.substr(begin, end - begin));
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto nl = s.find('\n', start);
        auto line = s.substr(start, nl == std::string_view::npos ? s.size() - start : nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return lines;
}

std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    std::string current;
    for (const char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch)) != 0) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

std::string truncate_utf8(std::string_view s, std::size_t max_bytes) {
    if (s.size() <= max_bytes) return std::string(s);
    std::size_t cut = max_bytes;
    // Back off over continuation bytes (10xxxxxx).
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    return std::string(s.substr(0, cut));
}

std::string fingerprint(std::string_view data) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const char ch : data) {
        hash ^= static_cast<unsigned char>(ch);
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

std::string random_id(std::size_t bytes) {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes * 2);
    std::uint64_t pool = 0;
    for (std::size_t i = 0; i < bytes; ++i) {
        if (i % 8 == 0) pool = rng();
        const auto byte = static_cast<unsigned>(pool & 0xFF);
        pool >>= 8;
        out.push_back(kHex[byte >> 4]);
        out.push_back(kHex[byte & 0xF]);
    }
    return out;
}

}  // namespace nqs::text
