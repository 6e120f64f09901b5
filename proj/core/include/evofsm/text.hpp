#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace evofsm::text {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

inline std::string hash_hex(std::string_view data) { return hex64(fnv1a64(data)); }

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);

/// Cuts `s` to at most `max_bytes` without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

/// Lowercased alphanumeric word tokens.
std::vector<std::string> word_tokens(std::string_view s);

/// Answer normalization for exact-match scoring: lowercase, drop punctuation,
/// drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view s);

bool contains(std::string_view haystack, std::string_view needle);

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace evofsm::text
