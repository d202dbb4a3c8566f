#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace nqs::text {

// Fixed English function-word list shared by retrieval and intent analysis.
const std::unordered_set<std::string>& stopwords();

// Lowercase, split on non-alphanumeric ASCII, drop stopwords. Bytes >= 0x80
// are treated as word characters so UTF-8 words stay intact.
std::vector<std::string> tokenize(std::string_view input);

std::unordered_set<std::string> token_set(std::string_view input);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);

// Truncate to at most max_bytes without cutting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

// FNV-1a 64-bit, hex encoded (16 chars).
std::string fingerprint(std::string_view data);

// Random lowercase hex identifier of the given byte length.
std::string random_id(std::size_t bytes = 12);

}  // namespace nqs::text
