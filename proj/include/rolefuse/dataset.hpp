#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rolefuse/role.hpp"

namespace rolefuse {

struct Annotation {
  std::string entity;
  Role role = Role::kOther;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// One meme: OCR text, image reference and its annotated entities. Annotations
/// are kept in role order, then in file order within a role.
struct MemeRecord {
  std::string id;
  std::string image_ref;
  std::string ocr_text;
  std::vector<Annotation> annotations;
  /// Id of the meme this record was derived from (augmented copies); empty
  /// for original memes.
  std::string source_id;

  friend bool operator==(const MemeRecord&, const MemeRecord&) = default;
};

/// One classification example: an entity in the context of its meme.
struct EntityInstance {
  std::string meme_id;
  std::string entity_name;
  std::string ocr_text;
  std::string image_ref;
  Role role = Role::kOther;
  /// Meme whose image this instance uses. Equals meme_id for originals.
  std::string source_id;
  bool augmented = false;

  friend bool operator==(const EntityInstance&, const EntityInstance&) = default;
};

struct RoleCounts {
  std::array<std::size_t, kNumRoles> counts{};
  std::size_t total = 0;

  std::size_t operator[](Role r) const { return counts[index(r)]; }
  /// round(100 * count / total); 0 when total is 0.
  long percent(Role r) const;

  friend bool operator==(const RoleCounts&, const RoleCounts&) = default;
};

/// Parses a JSON-lines dataset. Each record is NFC-normalized and validated;
/// throws DataError with the offending line number.
std::vector<MemeRecord> parse_dataset(std::istream& in, std::ostream* warnings = nullptr);

std::vector<MemeRecord> load_dataset(const std::filesystem::path& path,
                                     std::ostream* warnings = nullptr);

void write_dataset(std::ostream& out, const std::vector<MemeRecord>& records);

void save_dataset(const std::filesystem::path& path, const std::vector<MemeRecord>& records);

/// Checks record-level invariants: nonempty entity names, no entity under two
/// roles, no duplicates, unique ids across the list.
void validate_records(const std::vector<MemeRecord>& records);

std::vector<EntityInstance> flatten_to_instances(const std::vector<MemeRecord>& records);

RoleCounts class_distribution(const std::vector<EntityInstance>& instances);

}  // namespace rolefuse
