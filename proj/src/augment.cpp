#include "rolefuse/augment.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_map>

#include "rolefuse/text.hpp"

namespace rolefuse::augment {

namespace detail {
extern const char* const kBundledLexicon;
extern const char* const kBundledStopwords;
}  // namespace detail

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Keeps a leading capital of the replaced word.
std::string match_case(std::string_view original, std::string replacement) {
  if (!original.empty() && original[0] >= 'A' && original[0] <= 'Z' && !replacement.empty() &&
      replacement[0] >= 'a' && replacement[0] <= 'z') {
    replacement[0] = static_cast<char>(replacement[0] - 'a' + 'A');
  }
  return replacement;
}

// Rebuilds `text` with tokens[i] replaced by replacements[i] where set.
std::string splice(std::string_view text, const std::vector<conll::Token>& tokens,
                   const std::vector<std::optional<std::string>>& replacements) {
  std::string out;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!replacements[i]) continue;
    out.append(text.substr(cursor, tokens[i].begin - cursor));
    out.append(*replacements[i]);
    cursor = tokens[i].end;
  }
  out.append(text.substr(cursor));
  return out;
}

}  // namespace

void SynonymLexicon::add(std::string_view token, const std::vector<std::string>& synonyms) {
  const std::string key = text::fold_case(trim(token));
  if (key.empty()) return;
  std::vector<std::string> kept;
  for (const auto& s : synonyms) {
    std::string syn = trim(s);
    if (syn.empty() || text::fold_case(syn) == key) continue;
    if (std::find(kept.begin(), kept.end(), syn) == kept.end()) kept.push_back(std::move(syn));
  }
  if (kept.empty()) return;
  auto& slot = entries_[key];
  for (auto& s : kept) {
    if (std::find(slot.begin(), slot.end(), s) == slot.end()) slot.push_back(std::move(s));
  }
}

SynonymLexicon SynonymLexicon::parse(std::istream& in) {
  SynonymLexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("lexicon line " + std::to_string(line_no) + ": expected token<TAB>synonyms");
    }
    std::vector<std::string> syns;
    std::stringstream ss(line.substr(tab + 1));
    std::string item;
    while (std::getline(ss, item, ',')) syns.push_back(text::nfc(item));
    lex.add(text::nfc(line.substr(0, tab)), syns);
  }
  return lex;
}

SynonymLexicon SynonymLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon '" + path.string() + "'");
  return parse(in);
}

const SynonymLexicon& SynonymLexicon::bundled() {
  static const SynonymLexicon lex = [] {
    std::istringstream in(detail::kBundledLexicon);
    return parse(in);
  }();
  return lex;
}

const std::vector<std::string>* SynonymLexicon::find(std::string_view folded_token) const {
  auto it = entries_.find(folded_token);
  return it == entries_.end() ? nullptr : &it->second;
}

const std::set<std::string, std::less<>>& default_stopwords() {
  static const std::set<std::string, std::less<>> words = [] {
    std::set<std::string, std::less<>> s;
    std::istringstream in(detail::kBundledStopwords);
    std::string w;
    while (in >> w) s.insert(w);
    return s;
  }();
  return words;
}

void AugmentPolicy::validate() const {
  if (!(p > 0.0 && p <= 1.0)) throw DataError("substitution probability must be in (0, 1]");
}

std::optional<Mode> parse_mode(std::string_view name) {
  if (name == "none") return Mode::kNone;
  if (name == "lexicon") return Mode::kLexicon;
  if (name == "contextual") return Mode::kContextual;
  if (name == "mix") return Mode::kMix;
  return std::nullopt;
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::kNone:
      return "none";
    case Mode::kLexicon:
      return "lexicon";
    case Mode::kContextual:
      return "contextual";
    case Mode::kMix:
      return "mix";
  }
  return "none";
}

std::vector<bool> protected_tokens(const std::vector<conll::Token>& tokens,
                                   std::string_view entity) {
  std::vector<bool> out(tokens.size(), false);
  std::vector<std::string> needle;
  for (const auto& t : conll::tokenize(entity)) needle.push_back(text::fold_case(t));
  if (needle.empty() || needle.size() > tokens.size()) return out;
  std::vector<std::string> hay;
  hay.reserve(tokens.size());
  for (const auto& t : tokens) hay.push_back(text::fold_case(t.text));
  for (std::size_t p = 0; p + needle.size() <= hay.size(); ++p) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(p))) {
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(p),
                out.begin() + static_cast<std::ptrdiff_t>(p + needle.size()), true);
    }
  }
  return out;
}

std::string substitute(std::string_view text, std::string_view entity, const SynonymLexicon& lexicon,
                       double p, Rng& rng) {
  const auto tokens = conll::tokenize_with_spans(text);
  const auto guarded = protected_tokens(tokens, entity);
  const auto& stop = default_stopwords();
  std::vector<std::optional<std::string>> replacements(tokens.size());
  bool changed = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (guarded[i] || conll::is_punctuation_token(tokens[i].text)) continue;
    const std::string folded = text::fold_case(tokens[i].text);
    if (stop.count(folded)) continue;
    const auto* syns = lexicon.find(folded);
    if (!syns) continue;
    if (rng.uniform() >= p) continue;
    const auto& pick = (*syns)[static_cast<std::size_t>(rng.below(syns->size()))];
    replacements[i] = match_case(tokens[i].text, pick);
    changed = true;
  }
  if (!changed) return std::string(text);
  return splice(text, tokens, replacements);
}

std::string contextual_substitute(std::string_view text, std::string_view entity,
                                  SubstitutionProvider& provider, double p, std::uint64_t seed) {
  const auto tokens = conll::tokenize_with_spans(text);
  const auto guarded = protected_tokens(tokens, entity);
  std::optional<std::pair<std::size_t, std::size_t>> span;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!guarded[i]) continue;
    std::size_t j = i;
    while (j + 1 < tokens.size() && guarded[j + 1]) ++j;
    span = std::make_pair(tokens[i].begin, tokens[j].end);
    break;
  }
  const std::string response = provider.request(text, span, p, seed);
  const auto out_tokens = conll::tokenize_with_spans(response);
  if (out_tokens.size() != tokens.size()) {
    throw ProviderError("substitution provider changed the token count (" +
                        std::to_string(tokens.size()) + " -> " +
                        std::to_string(out_tokens.size()) + ")");
  }
  std::vector<std::optional<std::string>> restore(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (guarded[i] && out_tokens[i].text != tokens[i].text) restore[i] = tokens[i].text;
  }
  return splice(response, out_tokens, restore);
}

std::vector<EntityInstance> balance(const std::vector<EntityInstance>& instances,
                                    const SynonymLexicon& lexicon, const AugmentPolicy& policy,
                                    Mode mode, SubstitutionProvider* provider) {
  policy.validate();
  if ((mode == Mode::kContextual || mode == Mode::kMix) && provider == nullptr) {
    throw ProviderError("augmentation mode '" + std::string(mode_name(mode)) +
                        "' needs a substitution provider");
  }
  std::vector<EntityInstance> out = instances;
  if (mode == Mode::kNone) return out;
  std::unordered_map<std::string, std::size_t> ordinal;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& src = instances[i];
    const std::size_t entity_no = ordinal[src.meme_id]++;
    const std::size_t copies = policy.copies[index(src.role)];
    for (std::size_t k = 0; k < copies; ++k) {
      const std::uint64_t seed = mix_seed(policy.seed, i, k);
      const bool use_lexicon = mode == Mode::kLexicon || (mode == Mode::kMix && k % 2 == 0);
      EntityInstance copy = src;
      if (use_lexicon) {
        Rng rng(seed);
        copy.ocr_text = substitute(src.ocr_text, src.entity_name, lexicon, policy.p, rng);
      } else {
        copy.ocr_text =
            contextual_substitute(src.ocr_text, src.entity_name, *provider, policy.p, seed);
      }
      copy.meme_id = src.meme_id + "#e" + std::to_string(entity_no) + "#aug" + std::to_string(k + 1);
      copy.source_id = src.source_id.empty() ? src.meme_id : src.source_id;
      copy.augmented = true;
      out.push_back(std::move(copy));
    }
  }
  return out;
}

std::vector<MemeRecord> copies_as_records(const std::vector<EntityInstance>& instances) {
  std::vector<MemeRecord> out;
  for (const auto& inst : instances) {
    if (!inst.augmented) continue;
    MemeRecord rec;
    rec.id = inst.meme_id;
    rec.image_ref = inst.image_ref;
    rec.ocr_text = inst.ocr_text;
    rec.annotations.push_back({inst.entity_name, inst.role});
    rec.source_id = inst.source_id;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace rolefuse::augment
