#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace rolefuse {

using Vector = std::vector<double>;

/// Id-keyed table of fixed-dimension vectors. Stored as f32 on disk (EMB1)
/// and as double in memory. Entries iterate in sorted-id order.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }

  /// Throws DataError on a wrong length, duplicate id or non-finite value.
  void insert(std::string id, Vector values);

  /// Throws MissingIdError naming the id.
  const Vector& lookup(const std::string& id) const;

  const std::map<std::string, Vector>& entries() const { return entries_; }

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  std::size_t dim_;
  std::map<std::string, Vector> entries_;
};

inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

/// EMB1 layout, little-endian: "EMB1", u32 version, u32 dim, u64 count, then
/// per entry u32 id length, id bytes, dim x f32.
void write_table(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable read_table(std::istream& in);

void write_table(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_table(const std::filesystem::path& path);

const Vector& lookup(const EmbeddingTable& table, const std::string& id);

Vector concat(std::span<const double> first, std::span<const double> second);

}  // namespace rolefuse
