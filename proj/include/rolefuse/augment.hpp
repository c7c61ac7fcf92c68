#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rolefuse/conll.hpp"
#include "rolefuse/dataset.hpp"
#include "rolefuse/error.hpp"
#include "rolefuse/rng.hpp"

namespace rolefuse::augment {

/// Case-folded token -> synonyms.
class SynonymLexicon {
 public:
  /// Adds synonyms for `token`. Synonyms equal to the token are dropped; a
  /// token left with no synonyms is not added.
  void add(std::string_view token, const std::vector<std::string>& synonyms);

  /// Lines "token<TAB>syn1,syn2,..."; '#' starts a comment line.
  static SynonymLexicon parse(std::istream& in);
  static SynonymLexicon load(const std::filesystem::path& path);
  /// The small lexicon compiled into the library.
  static const SynonymLexicon& bundled();

  const std::vector<std::string>* find(std::string_view folded_token) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::map<std::string, std::vector<std::string>, std::less<>> entries_;
};

const std::set<std::string, std::less<>>& default_stopwords();

struct AugmentPolicy {
  /// Extra copies per original instance, indexed by role.
  std::array<std::size_t, kNumRoles> copies{6, 2, 3, 0};
  double p = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Mode { kNone, kLexicon, kContextual, kMix };

std::optional<Mode> parse_mode(std::string_view name);
std::string_view mode_name(Mode m);

/// Indices of tokens covered by any case-insensitive occurrence of the
/// entity's token sequence.
std::vector<bool> protected_tokens(const std::vector<conll::Token>& tokens, std::string_view entity);

/// Replaces each eligible token with a uniformly chosen synonym with
/// probability p. Eligible: not punctuation, not a stopword, outside the
/// entity span, present in the lexicon.
std::string substitute(std::string_view text, std::string_view entity, const SynonymLexicon& lexicon,
                       double p, Rng& rng);

class ProviderError : public Error {
 public:
  using Error::Error;
};

/// External contextual substitution engine.
class SubstitutionProvider {
 public:
  virtual ~SubstitutionProvider() = default;
  /// `protected_span` is a [begin, end) byte range or nullopt.
  virtual std::string request(std::string_view text,
                              std::optional<std::pair<std::size_t, std::size_t>> protected_span,
                              double p, std::uint64_t seed) = 0;
};

/// Spawns `/bin/sh -c command` and talks line-delimited JSON over its
/// standard input/output: request {text, protected_span, p, seed}, response
/// {text}.
class ProcessProvider : public SubstitutionProvider {
 public:
  explicit ProcessProvider(const std::string& command);
  ~ProcessProvider() override;
  ProcessProvider(const ProcessProvider&) = delete;
  ProcessProvider& operator=(const ProcessProvider&) = delete;

  std::string request(std::string_view text,
                      std::optional<std::pair<std::size_t, std::size_t>> protected_span, double p,
                      std::uint64_t seed) override;

 private:
  std::string read_line();

  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

/// Delegates to the provider, then restores every token of the entity span
/// from the input. Throws ProviderError if the provider changed the token
/// count.
std::string contextual_substitute(std::string_view text, std::string_view entity,
                                  SubstitutionProvider& provider, double p, std::uint64_t seed);

/// Originals in input order, followed by policy.copies[role] augmented copies
/// of each instance. Copy k of instance i uses seed mix_seed(policy.seed, i, k).
/// Mix mode uses the lexicon for even k and the provider for odd k.
std::vector<EntityInstance> balance(const std::vector<EntityInstance>& instances,
                                    const SynonymLexicon& lexicon, const AugmentPolicy& policy,
                                    Mode mode = Mode::kLexicon,
                                    SubstitutionProvider* provider = nullptr);

/// Augmented instances as single-entity meme records (for re-embedding).
std::vector<MemeRecord> copies_as_records(const std::vector<EntityInstance>& instances);

}  // namespace rolefuse::augment
