#include "rolefuse/embeddings.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "rolefuse/binary_io.hpp"
#include "rolefuse/error.hpp"

namespace rolefuse {

namespace {
constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
}

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw DataError("embedding dimension must be positive");
}

void EmbeddingTable::insert(std::string id, Vector values) {
  if (values.size() != dim_) {
    throw DataError("embedding '" + id + "' has length " + std::to_string(values.size()) +
                    ", table dim is " + std::to_string(dim_));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("embedding '" + id + "' has a non-finite component");
  }
  if (entries_.count(id)) throw DataError("duplicate embedding id '" + id + "'");
  entries_.emplace(std::move(id), std::move(values));
}

const Vector& EmbeddingTable::lookup(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw MissingIdError(id);
  return it->second;
}

void write_table(std::ostream& out, const EmbeddingTable& table) {
  out.write(kMagic, 4);
  binary::put_uint<std::uint32_t>(out, kEmbeddingFormatVersion);
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
  binary::put_uint<std::uint64_t>(out, table.size());
  for (const auto& [id, values] : table.entries()) {
    if (id.size() > std::numeric_limits<std::uint32_t>::max()) throw DataError("id too long");
    binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (double v : values) {
      const auto f = static_cast<float>(v);
      if (!std::isfinite(f)) throw DataError("embedding '" + id + "' overflows f32");
      binary::put_f32(out, f);
    }
  }
  if (!out) throw DataError("write failure while writing embedding table");
}

EmbeddingTable read_table(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw DataError("truncated file while reading magic");
  if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
    throw DataError("bad magic: not an EMB1 embedding table");
  }
  const auto version = binary::get_uint<std::uint32_t>(in, "version");
  if (version != kEmbeddingFormatVersion) {
    throw DataError("unsupported EMB1 version " + std::to_string(version));
  }
  const auto dim = binary::get_uint<std::uint32_t>(in, "dim");
  const auto count = binary::get_uint<std::uint64_t>(in, "count");
  EmbeddingTable table(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = binary::get_uint<std::uint32_t>(in, "id length");
    std::string id = binary::get_bytes(in, len, "id");
    Vector values(dim);
    for (auto& v : values) {
      const float f = binary::get_f32(in, "vector");
      if (!std::isfinite(f)) throw DataError("non-finite value in embedding '" + id + "'");
      v = f;
    }
    table.insert(std::move(id), std::move(values));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("trailing bytes after " + std::to_string(count) + " embeddings");
  }
  return table;
}

void write_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_table(out, table);
}

EmbeddingTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding table '" + path.string() + "'");
  try {
    return read_table(in);
  } catch (const MissingIdError&) {
    throw;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

const Vector& lookup(const EmbeddingTable& table, const std::string& id) { return table.lookup(id); }

Vector concat(std::span<const double> first, std::span<const double> second) {
  Vector out;
  out.reserve(first.size() + second.size());
  out.insert(out.end(), first.begin(), first.end());
  out.insert(out.end(), second.begin(), second.end());
  return out;
}

}  // namespace rolefuse
