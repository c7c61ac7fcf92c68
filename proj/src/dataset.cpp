#include "rolefuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "rolefuse/error.hpp"
#include "rolefuse/text.hpp"

namespace rolefuse {

namespace {

using nlohmann::json;

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::string string_field(const json& obj, const char* key, std::size_t line, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw DataError(at_line(line) + "missing required key '" + key + "'");
    return {};
  }
  if (!it->is_string()) throw DataError(at_line(line) + "key '" + key + "' must be a string");
  return text::nfc(it->get<std::string>());
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; });
}

void validate_annotations(const MemeRecord& record, const std::string& where) {
  std::map<std::string, Role> seen;
  for (const auto& a : record.annotations) {
    if (blank(a.entity)) throw DataError(where + "empty entity name in meme '" + record.id + "'");
    auto [it, inserted] = seen.emplace(a.entity, a.role);
    if (inserted) continue;
    if (it->second == a.role) {
      throw DataError(where + "entity '" + a.entity + "' listed twice under role " +
                      std::string(role_name(a.role)) + " in meme '" + record.id + "'");
    }
    throw DataError(where + "entity '" + a.entity + "' listed under two roles (" +
                    std::string(role_name(it->second)) + ", " + std::string(role_name(a.role)) +
                    ") in meme '" + record.id + "'");
  }
}

}  // namespace

long RoleCounts::percent(Role r) const {
  if (total == 0) return 0;
  return std::lround(100.0 * static_cast<double>(counts[index(r)]) / static_cast<double>(total));
}

std::vector<MemeRecord> parse_dataset(std::istream& in, std::ostream* warnings) {
  static const std::set<std::string> kKnownKeys = {"id",     "image", "text",  "hero",
                                                   "villain", "victim", "other", "source"};
  std::vector<MemeRecord> records;
  std::unordered_set<std::string> ids;
  std::set<std::string> warned;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(at_line(line_no) + "invalid JSON: " + e.what());
    }
    if (!obj.is_object()) throw DataError(at_line(line_no) + "record must be a JSON object");

    MemeRecord rec;
    rec.id = string_field(obj, "id", line_no, true);
    if (rec.id.empty()) throw DataError(at_line(line_no) + "empty id");
    rec.image_ref = string_field(obj, "image", line_no, false);
    rec.ocr_text = string_field(obj, "text", line_no, false);
    rec.source_id = string_field(obj, "source", line_no, false);
    for (Role r : kAllRoles) {
      const std::string key(role_name(r));
      auto it = obj.find(key);
      if (it == obj.end() || it->is_null()) continue;
      if (!it->is_array()) throw DataError(at_line(line_no) + "key '" + key + "' must be an array");
      for (const auto& v : *it) {
        if (!v.is_string()) {
          throw DataError(at_line(line_no) + "entries of '" + key + "' must be strings");
        }
        rec.annotations.push_back({text::nfc(v.get<std::string>()), r});
      }
    }
    for (const auto& [key, value] : obj.items()) {
      if (kKnownKeys.count(key) || !warnings || !warned.insert(key).second) continue;
      *warnings << "warning: " << at_line(line_no) << "ignoring unknown key '" << key << "'\n";
    }
    validate_annotations(rec, at_line(line_no));
    if (!ids.insert(rec.id).second) {
      throw DataError(at_line(line_no) + "duplicate meme id '" + rec.id + "'");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<MemeRecord> load_dataset(const std::filesystem::path& path, std::ostream* warnings) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  try {
    return parse_dataset(in, warnings);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, const std::vector<MemeRecord>& records) {
  for (const auto& rec : records) {
    json obj = json::object();
    obj["id"] = rec.id;
    obj["image"] = rec.image_ref;
    obj["text"] = rec.ocr_text;
    for (Role r : kAllRoles) {
      json names = json::array();
      for (const auto& a : rec.annotations) {
        if (a.role == r) names.push_back(a.entity);
      }
      obj[std::string(role_name(r))] = std::move(names);
    }
    if (!rec.source_id.empty()) obj["source"] = rec.source_id;
    out << obj.dump() << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const std::vector<MemeRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset '" + path.string() + "'");
  write_dataset(out, records);
}

void validate_records(const std::vector<MemeRecord>& records) {
  std::unordered_set<std::string> ids;
  for (const auto& rec : records) {
    if (rec.id.empty()) throw DataError("empty meme id");
    validate_annotations(rec, "");
    if (!ids.insert(rec.id).second) throw DataError("duplicate meme id '" + rec.id + "'");
  }
}

std::vector<EntityInstance> flatten_to_instances(const std::vector<MemeRecord>& records) {
  std::vector<EntityInstance> out;
  for (const auto& rec : records) {
    // Annotations are role-ordered on load; a stable sort keeps that true
    // for records built in memory.
    std::vector<const Annotation*> ordered;
    ordered.reserve(rec.annotations.size());
    for (const auto& a : rec.annotations) ordered.push_back(&a);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const Annotation* a, const Annotation* b) { return a->role < b->role; });
    for (const Annotation* a : ordered) {
      EntityInstance inst;
      inst.meme_id = rec.id;
      inst.entity_name = a->entity;
      inst.ocr_text = rec.ocr_text;
      inst.image_ref = rec.image_ref;
      inst.role = a->role;
      inst.source_id = rec.source_id.empty() ? rec.id : rec.source_id;
      inst.augmented = !rec.source_id.empty();
      out.push_back(std::move(inst));
    }
  }
  return out;
}

RoleCounts class_distribution(const std::vector<EntityInstance>& instances) {
  RoleCounts rc;
  for (const auto& inst : instances) ++rc.counts[index(inst.role)];
  rc.total = instances.size();
  return rc;
}

}  // namespace rolefuse
