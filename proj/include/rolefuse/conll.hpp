#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rolefuse/dataset.hpp"
#include "rolefuse/role.hpp"

namespace rolefuse::conll {

/// A token and its byte range [begin, end) in the source text.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Whitespace split, then leading and trailing punctuation detached one
/// character per token. Punctuation inside a word ("COVID-19", "don't") stays.
std::vector<Token> tokenize_with_spans(std::string_view text);

std::vector<std::string> tokenize(std::string_view text);

bool is_punctuation_token(std::string_view token);

/// Tag names: "O", or "B-"/"I-" followed by a role tag name (HERO, ...).
struct BioTag {
  enum class Kind : unsigned char { kOutside, kBegin, kInside };
  Kind kind = Kind::kOutside;
  Role role = Role::kOther;

  friend bool operator==(const BioTag&, const BioTag&) = default;
};

std::optional<BioTag> parse_tag(std::string_view tag);
std::string format_tag(BioTag tag);

/// The 9 tags in canonical order: O, B-HERO, I-HERO, ..., B-OTHER, I-OTHER.
const std::vector<std::string>& canonical_tags();

struct TaggedSequence {
  std::string meme_id;
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  /// Optional pre-annotation columns, one row per token (empty when absent).
  std::vector<std::vector<std::string>> columns;

  friend bool operator==(const TaggedSequence&, const TaggedSequence&) = default;
};

enum class BioMode { kAllTokens, kEntitiesOnly };

std::optional<BioMode> parse_mode(std::string_view name);

TaggedSequence to_bio(const MemeRecord& record, BioMode mode);

struct EntitySpan {
  std::vector<std::string> tokens;
  Role role = Role::kOther;
  std::size_t begin = 0;
};

/// Throws DataError naming the first position that breaks BIO well-formedness.
void validate_bio(const std::vector<std::string>& tags);

std::vector<EntitySpan> from_bio(const TaggedSequence& seq);

void write_conll(std::ostream& out, const std::vector<TaggedSequence>& seqs);
std::vector<TaggedSequence> read_conll(std::istream& in);

void save_conll(const std::filesystem::path& path, const std::vector<TaggedSequence>& seqs);
std::vector<TaggedSequence> load_conll(const std::filesystem::path& path);

}  // namespace rolefuse::conll
