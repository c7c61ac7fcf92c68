#include "rolefuse/conll.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>

#include "rolefuse/error.hpp"
#include "rolefuse/text.hpp"

namespace rolefuse::conll {

namespace {

// Punctuation detached from word edges. Multi-byte entries are UTF-8.
constexpr std::array<std::string_view, 45> kPunctuation = {
    "!", "\"", "#", "$", "%", "&", "'", "(", ")", "*", "+", ",", "-", ".", "/",
    ":", ";", "<", "=", ">", "?", "@", "[", "\\", "]", "^", "_", "`", "{", "|",
    "}", "~",
    "\xE2\x80\x9C",  // left double quotation mark
    "\xE2\x80\x9D",  // right double quotation mark
    "\xE2\x80\x98",  // left single quotation mark
    "\xE2\x80\x99",  // right single quotation mark
    "\xE2\x80\xA6",  // horizontal ellipsis
    "\xE2\x80\x93",  // en dash
    "\xE2\x80\x94",  // em dash
    "\xC2\xAB",      // left guillemet
    "\xC2\xBB",      // right guillemet
    "\xC2\xA1",      // inverted exclamation mark
    "\xC2\xBF",      // inverted question mark
    "\xE2\x80\xA2",  // bullet
    "\xC2\xB7",      // middle dot
};

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Length of the punctuation mark starting at s[pos], or 0.
std::size_t punct_prefix(std::string_view s, std::size_t pos) {
  for (std::string_view p : kPunctuation) {
    if (s.substr(pos, p.size()) == p) return p.size();
  }
  return 0;
}

// Length of the punctuation mark ending at s[end), or 0.
std::size_t punct_suffix(std::string_view s, std::size_t end) {
  for (std::string_view p : kPunctuation) {
    if (p.size() <= end && s.substr(end - p.size(), p.size()) == p) return p.size();
  }
  return 0;
}

void split_chunk(std::string_view text, std::size_t begin, std::size_t end,
                 std::vector<Token>& out) {
  std::vector<Token> trailing;
  while (begin < end) {
    std::size_t n = punct_prefix(text.substr(0, end), begin);
    if (n == 0) break;
    out.push_back({std::string(text.substr(begin, n)), begin, begin + n});
    begin += n;
  }
  while (end > begin) {
    std::size_t n = punct_suffix(text.substr(0, end), end);
    if (n == 0 || end - n < begin) break;
    trailing.push_back({std::string(text.substr(end - n, n)), end - n, end});
    end -= n;
  }
  if (begin < end) out.push_back({std::string(text.substr(begin, end - begin)), begin, end});
  out.insert(out.end(), trailing.rbegin(), trailing.rend());
}

std::vector<std::string> folded(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(text::fold_case(t));
  return out;
}

void append_span(TaggedSequence& seq, const std::vector<std::string>& tokens, Role role) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    seq.tokens.push_back(tokens[i]);
    seq.tags.push_back(format_tag({i == 0 ? BioTag::Kind::kBegin : BioTag::Kind::kInside, role}));
  }
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

constexpr std::string_view kIdHeader = "# meme_id = ";

}  // namespace

std::vector<Token> tokenize_with_spans(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (start < i) split_chunk(text, start, i, out);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize_with_spans(text)) out.push_back(std::move(t.text));
  return out;
}

bool is_punctuation_token(std::string_view token) {
  return !token.empty() && punct_prefix(token, 0) == token.size();
}

std::optional<BioTag> parse_tag(std::string_view tag) {
  if (tag == "O") return BioTag{};
  if (tag.size() < 3 || tag[1] != '-') return std::nullopt;
  BioTag out;
  if (tag[0] == 'B') {
    out.kind = BioTag::Kind::kBegin;
  } else if (tag[0] == 'I') {
    out.kind = BioTag::Kind::kInside;
  } else {
    return std::nullopt;
  }
  auto role = parse_role_tag_name(tag.substr(2));
  if (!role) return std::nullopt;
  out.role = *role;
  return out;
}

std::string format_tag(BioTag tag) {
  switch (tag.kind) {
    case BioTag::Kind::kOutside:
      return "O";
    case BioTag::Kind::kBegin:
      return "B-" + std::string(role_tag_name(tag.role));
    case BioTag::Kind::kInside:
      return "I-" + std::string(role_tag_name(tag.role));
  }
  return "O";
}

const std::vector<std::string>& canonical_tags() {
  static const std::vector<std::string> tags = [] {
    std::vector<std::string> t{"O"};
    for (Role r : kAllRoles) {
      t.push_back(format_tag({BioTag::Kind::kBegin, r}));
      t.push_back(format_tag({BioTag::Kind::kInside, r}));
    }
    return t;
  }();
  return tags;
}

std::optional<BioMode> parse_mode(std::string_view name) {
  if (name == "all_tokens") return BioMode::kAllTokens;
  if (name == "entities_only") return BioMode::kEntitiesOnly;
  return std::nullopt;
}

TaggedSequence to_bio(const MemeRecord& record, BioMode mode) {
  TaggedSequence seq;
  seq.meme_id = record.id;

  struct Entity {
    std::size_t order;
    std::vector<std::string> tokens;
    std::vector<std::string> folded;
    Role role;
  };
  std::vector<Entity> entities;
  for (std::size_t i = 0; i < record.annotations.size(); ++i) {
    const auto& a = record.annotations[i];
    auto toks = tokenize(a.entity);
    auto f = folded(toks);
    entities.push_back({i, std::move(toks), std::move(f), a.role});
  }
  std::stable_sort(entities.begin(), entities.end(),
                   [](const Entity& a, const Entity& b) { return a.role < b.role; });

  if (mode == BioMode::kEntitiesOnly) {
    for (const auto& e : entities) append_span(seq, e.tokens, e.role);
    return seq;
  }

  seq.tokens = tokenize(record.ocr_text);
  const auto text_folded = folded(seq.tokens);
  const std::size_t n = seq.tokens.size();
  seq.tags.assign(n, "O");
  std::vector<bool> taken(n, false);

  auto first_free_match = [&](const Entity& e) -> std::optional<std::size_t> {
    const std::size_t len = e.folded.size();
    if (len == 0 || len > n) return std::nullopt;
    for (std::size_t p = 0; p + len <= n; ++p) {
      bool ok = true;
      for (std::size_t k = 0; k < len && ok; ++k) {
        ok = !taken[p + k] && text_folded[p + k] == e.folded[k];
      }
      if (ok) return p;
    }
    return std::nullopt;
  };

  // Greedy: the longest entity with an available match is placed first,
  // ties by earlier text position, then by annotation order.
  std::vector<bool> placed(entities.size(), false);
  while (true) {
    std::optional<std::size_t> best;
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i < entities.size(); ++i) {
      if (placed[i]) continue;
      auto pos = first_free_match(entities[i]);
      if (!pos) continue;
      if (!best) {
        best = i;
        best_pos = *pos;
        continue;
      }
      const auto& cur = entities[*best];
      const auto& cand = entities[i];
      if (cand.folded.size() > cur.folded.size() ||
          (cand.folded.size() == cur.folded.size() && *pos < best_pos)) {
        best = i;
        best_pos = *pos;
      }
    }
    if (!best) break;
    const auto& e = entities[*best];
    for (std::size_t k = 0; k < e.folded.size(); ++k) {
      taken[best_pos + k] = true;
      seq.tags[best_pos + k] =
          format_tag({k == 0 ? BioTag::Kind::kBegin : BioTag::Kind::kInside, e.role});
    }
    placed[*best] = true;
  }
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (!placed[i]) append_span(seq, entities[i].tokens, entities[i].role);
  }
  return seq;
}

void validate_bio(const std::vector<std::string>& tags) {
  std::optional<BioTag> prev;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    auto tag = parse_tag(tags[i]);
    if (!tag) {
      throw DataError("malformed BIO at position " + std::to_string(i) + ": unknown tag '" +
                      tags[i] + "'");
    }
    if (tag->kind == BioTag::Kind::kInside) {
      const bool continues = prev && prev->kind != BioTag::Kind::kOutside && prev->role == tag->role;
      if (!continues) {
        throw DataError("malformed BIO at position " + std::to_string(i) + ": '" + tags[i] +
                        "' does not continue a span of the same role");
      }
    }
    prev = tag;
  }
}

std::vector<EntitySpan> from_bio(const TaggedSequence& seq) {
  if (seq.tokens.size() != seq.tags.size()) {
    throw DataError("sequence '" + seq.meme_id + "': " + std::to_string(seq.tokens.size()) +
                    " tokens but " + std::to_string(seq.tags.size()) + " tags");
  }
  validate_bio(seq.tags);
  std::vector<EntitySpan> spans;
  for (std::size_t i = 0; i < seq.tags.size(); ++i) {
    auto tag = *parse_tag(seq.tags[i]);
    if (tag.kind == BioTag::Kind::kBegin) {
      spans.push_back({{seq.tokens[i]}, tag.role, i});
    } else if (tag.kind == BioTag::Kind::kInside) {
      spans.back().tokens.push_back(seq.tokens[i]);
    }
  }
  return spans;
}

void write_conll(std::ostream& out, const std::vector<TaggedSequence>& seqs) {
  for (const auto& seq : seqs) {
    if (seq.tokens.size() != seq.tags.size()) {
      throw DataError("sequence '" + seq.meme_id + "': token/tag length mismatch");
    }
    if (!seq.columns.empty() && seq.columns.size() != seq.tokens.size()) {
      throw DataError("sequence '" + seq.meme_id + "': column/token length mismatch");
    }
    out << kIdHeader << seq.meme_id << '\n';
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      out << seq.tokens[i];
      if (!seq.columns.empty()) {
        for (const auto& c : seq.columns[i]) out << '\t' << c;
      }
      out << '\t' << seq.tags[i] << '\n';
    }
    out << '\n';
  }
}

std::vector<TaggedSequence> read_conll(std::istream& in) {
  std::vector<TaggedSequence> seqs;
  TaggedSequence cur;
  bool open = false;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!open) return;
    if (!cur.columns.empty() &&
        std::all_of(cur.columns.begin(), cur.columns.end(),
                    [](const auto& c) { return c.empty(); })) {
      cur.columns.clear();
    }
    seqs.push_back(std::move(cur));
    cur = TaggedSequence{};
    open = false;
    width = 0;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("# ", 0) == 0) {
      if (open && !cur.tokens.empty()) {
        throw DataError("line " + std::to_string(line_no) + ": comment inside a sequence");
      }
      if (line.rfind(kIdHeader, 0) == 0) cur.meme_id = line.substr(kIdHeader.size());
      open = true;
      continue;
    }
    auto fields = split_tabs(line);
    if (fields.size() < 2) {
      throw DataError("line " + std::to_string(line_no) + ": expected token<TAB>tag");
    }
    if (width != 0 && fields.size() != width) {
      throw DataError("line " + std::to_string(line_no) + ": inconsistent column count");
    }
    width = fields.size();
    open = true;
    cur.tokens.push_back(fields.front());
    cur.tags.push_back(fields.back());
    cur.columns.emplace_back(fields.begin() + 1, fields.end() - 1);
  }
  flush();
  return seqs;
}

void save_conll(const std::filesystem::path& path, const std::vector<TaggedSequence>& seqs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_conll(out, seqs);
}

std::vector<TaggedSequence> load_conll(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return read_conll(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace rolefuse::conll
