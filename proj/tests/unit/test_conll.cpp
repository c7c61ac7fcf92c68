#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "rolefuse/conll.hpp"
#include "rolefuse/error.hpp"
#include "rolefuse/text.hpp"
#include "synthetic.hpp"

using namespace rolefuse;
using namespace rolefuse::conll;
using Strings = std::vector<std::string>;

namespace {

MemeRecord meme(std::string text, std::vector<Annotation> ann) {
  MemeRecord r;
  r.id = "m";
  r.ocr_text = std::move(text);
  r.annotations = std::move(ann);
  return r;
}

Strings folded(const Strings& toks) {
  Strings out;
  for (const auto& t : toks) out.push_back(text::fold_case(t));
  return out;
}

}  // namespace

TEST_CASE("tokenize splits off punctuation") {
  CHECK(tokenize("Who did this?") == Strings{"Who", "did", "this", "?"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("COVID-19 vaccine") == Strings{"COVID-19", "vaccine"});
  CHECK(tokenize("  (wait...)  don't!") == Strings{"(", "wait", ".", ".", ".", ")", "don't", "!"});
  CHECK(tokenize("\xE2\x80\x9Chi\xE2\x80\x9D") == Strings{"\xE2\x80\x9C", "hi", "\xE2\x80\x9D"});
}

TEST_CASE("token spans point back into the text") {
  const std::string s = "Stop, Putin!";
  for (const auto& t : tokenize_with_spans(s)) CHECK(s.substr(t.begin, t.end - t.begin) == t.text);
}

TEST_CASE("tags parse and format") {
  for (const auto& t : canonical_tags()) CHECK(format_tag(*parse_tag(t)) == t);
  CHECK(canonical_tags().size() == 9);
  CHECK(canonical_tags()[1] == "B-HERO");
  CHECK_FALSE(parse_tag("B-FRIEND").has_value());
  CHECK_FALSE(parse_tag("X-HERO").has_value());
}

TEST_CASE("explicit entity tagged in place") {
  const auto seq = to_bio(meme("Joe Biden wins again", {{"joe biden", Role::kHero}}),
                          BioMode::kAllTokens);
  CHECK(seq.tokens == Strings{"Joe", "Biden", "wins", "again"});
  CHECK(seq.tags == Strings{"B-HERO", "I-HERO", "O", "O"});
}

TEST_CASE("implicit entity is appended without a delimiter") {
  const auto seq =
      to_bio(meme("stay home", {{"World Health Organization", Role::kVillain}}), BioMode::kAllTokens);
  CHECK(seq.tokens == Strings{"stay", "home", "World", "Health", "Organization"});
  CHECK(seq.tags == Strings{"O", "O", "B-VILLAIN", "I-VILLAIN", "I-VILLAIN"});
}

TEST_CASE("no entities gives all O") {
  const auto seq = to_bio(meme("nothing here", {}), BioMode::kAllTokens);
  CHECK(seq.tags == Strings{"O", "O"});
  CHECK(to_bio(meme("", {}), BioMode::kAllTokens).tokens.empty());
}

TEST_CASE("longest match wins and only the first occurrence is tagged") {
  const auto seq = to_bio(meme("Trump says Donald Trump is Trump",
                               {{"Trump", Role::kOther}, {"Donald Trump", Role::kHero}}),
                          BioMode::kAllTokens);
  CHECK(seq.tags == Strings{"B-OTHER", "O", "B-HERO", "I-HERO", "O", "O"});
}

TEST_CASE("entities_only concatenates spans") {
  const auto seq =
      to_bio(meme("Biden and Trump", {{"Biden", Role::kHero}, {"Donald Trump", Role::kVillain}}),
             BioMode::kEntitiesOnly);
  CHECK(seq.tokens == Strings{"Biden", "Donald", "Trump"});
  CHECK(seq.tags == Strings{"B-HERO", "B-VILLAIN", "I-VILLAIN"});
}

TEST_CASE("from_bio returns maximal spans") {
  TaggedSequence s;
  s.tokens = {"a", "b", "c", "d", "e"};
  s.tags = {"B-HERO", "I-HERO", "O", "B-OTHER", "B-OTHER"};
  const auto spans = from_bio(s);
  REQUIRE(spans.size() == 3);
  CHECK(spans[0].tokens == Strings{"a", "b"});
  CHECK(spans[0].role == Role::kHero);
  CHECK(spans[2].begin == 4);
  s.tags = {"O", "O", "O", "O", "O"};
  CHECK(from_bio(s).empty());
}

TEST_CASE("malformed BIO reports the position") {
  auto message = [](const Strings& tags) {
    try {
      validate_bio(tags);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message({"O", "I-HERO"}).find("position 1") != std::string::npos);
  CHECK(message({"B-HERO", "I-VICTIM"}).find("position 1") != std::string::npos);
  CHECK(message({"B-HERO", "I-HERO", "I-HERO"}).empty());
  CHECK(message({"B-HERO", "BOGUS"}).find("position 1") != std::string::npos);
}

TEST_CASE("round trip over a synthetic corpus") {
  for (const auto mode : {BioMode::kAllTokens, BioMode::kEntitiesOnly}) {
    for (const auto& rec : testing::bio_corpus(200, 21)) {
      const auto seq = to_bio(rec, mode);
      validate_bio(seq.tags);
      std::vector<std::pair<Strings, Role>> got, want;
      for (const auto& s : from_bio(seq)) got.emplace_back(folded(s.tokens), s.role);
      std::size_t entity_tokens = 0;
      for (const auto& a : rec.annotations) {
        want.emplace_back(folded(tokenize(a.entity)), a.role);
        entity_tokens += tokenize(a.entity).size();
      }
      std::sort(got.begin(), got.end());
      std::sort(want.begin(), want.end());
      CHECK(got == want);
      if (mode == BioMode::kEntitiesOnly) CHECK(seq.tokens.size() == entity_tokens);
    }
  }
}

TEST_CASE("CoNLL files round trip bit-exactly") {
  std::vector<TaggedSequence> seqs;
  for (const auto& rec : testing::bio_corpus(30, 4)) seqs.push_back(to_bio(rec, BioMode::kAllTokens));
  seqs[2].columns.assign(seqs[2].tokens.size(), Strings{"NN"});
  std::ostringstream first;
  write_conll(first, seqs);
  std::istringstream in(first.str());
  const auto back = read_conll(in);
  CHECK(back == seqs);
  std::ostringstream second;
  write_conll(second, back);
  CHECK(second.str() == first.str());
}

TEST_CASE("CoNLL lines are token TAB tag") {
  TaggedSequence s;
  s.meme_id = "x";
  s.tokens = {"Hi", "Putin"};
  s.tags = {"O", "B-VILLAIN"};
  std::ostringstream out;
  write_conll(out, {s});
  CHECK(out.str().find("Hi\tO\nPutin\tB-VILLAIN\n\n") != std::string::npos);
}

TEST_CASE("reader rejects ragged rows") {
  std::istringstream a("a\tNN\tO\nb\tB-HERO\n\n");
  CHECK_THROWS_AS(read_conll(a), DataError);
}
