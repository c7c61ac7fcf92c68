#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rolefuse::text {

/// Unicode NFC normalization of a UTF-8 string. Throws DataError on
/// invalid UTF-8.
std::string nfc(std::string_view utf8);

/// Full Unicode case folding (used for case-insensitive comparisons).
std::string fold_case(std::string_view utf8);

/// Splits a UTF-8 string into its code points, each as a UTF-8 substring.
/// Invalid bytes are returned as single-byte units.
std::vector<std::string_view> code_points(std::string_view utf8);

bool is_valid_utf8(std::string_view utf8);

}  // namespace rolefuse::text
