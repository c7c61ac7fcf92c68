#include <doctest.h>

#include <sstream>

#include "rolefuse/augment.hpp"
#include "rolefuse/conll.hpp"
#include "rolefuse/error.hpp"
#include "rolefuse/rng.hpp"
#include "rolefuse/text.hpp"
#include "synthetic.hpp"

using namespace rolefuse;
using namespace rolefuse::augment;

namespace {

SynonymLexicon lexicon(const std::string& tsv) {
  std::istringstream in(tsv);
  return SynonymLexicon::parse(in);
}

// Folded tokens covered by the entity, in order.
std::vector<std::string> entity_tokens(const std::string& text, const std::string& entity) {
  const auto toks = conll::tokenize_with_spans(text);
  const auto guard = protected_tokens(toks, entity);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (guard[i]) out.push_back(text::fold_case(toks[i].text));
  }
  return out;
}

EntityInstance instance(std::string id, std::string entity, std::string text, Role role) {
  EntityInstance e;
  e.meme_id = std::move(id);
  e.entity_name = std::move(entity);
  e.ocr_text = std::move(text);
  e.role = role;
  e.source_id = e.meme_id;
  return e;
}

}  // namespace

TEST_CASE("lexicon parsing") {
  const auto lex = lexicon("# comment\nBad\tevil, wicked\nbad\tawful\nsame\tsame\n\n");
  REQUIRE(lex.find("bad") != nullptr);
  CHECK(*lex.find("bad") == std::vector<std::string>{"evil", "wicked", "awful"});
  CHECK(lex.find("same") == nullptr);
  CHECK_THROWS_AS(lexicon("no tab here\n"), DataError);
  CHECK(SynonymLexicon::bundled().size() > 20);
  CHECK(default_stopwords().count("the") == 1);
}

TEST_CASE("empty lexicon leaves text unchanged") {
  Rng rng(1);
  CHECK(substitute("bad man", "man", SynonymLexicon{}, 1.0, rng) == "bad man");
}

TEST_CASE("forced substitution") {
  Rng rng(1);
  const auto lex = lexicon("bad\tevil\nman\tguy\n");
  CHECK(substitute("bad man", "man", lex, 1.0, rng) == "evil man");
  CHECK(substitute("Bad man!", "man", lex, 1.0, rng) == "Evil man!");
  CHECK(substitute("the bad", "x", lexicon("the\ta\nbad\tevil\n"), 1.0, rng) == "the evil");
}

TEST_CASE("entity span never changes over random draws") {
  Rng rng(2024);
  const auto& lex = SynonymLexicon::bundled();
  const auto recs = testing::bio_corpus(100, 9);
  for (int draw = 0; draw < 1000; ++draw) {
    const auto& rec = recs[rng.below(recs.size())];
    const auto& ent = rec.annotations[rng.below(rec.annotations.size())].entity;
    const std::string text = rec.ocr_text + " bad good people funny";
    const auto out = substitute(text, ent, lex, rng.uniform(0.05, 1.0), rng);
    CHECK(entity_tokens(out, ent) == entity_tokens(text, ent));
    CHECK(conll::tokenize(out).size() == conll::tokenize(text).size());
  }
}

TEST_CASE("substitution is deterministic given the rng") {
  const auto& lex = SynonymLexicon::bundled();
  Rng a(5), b(5);
  const std::string text = "the bad people say good things about the evil liar";
  CHECK(substitute(text, "people", lex, 0.5, a) == substitute(text, "people", lex, 0.5, b));
}

TEST_CASE("balance counts follow the policy") {
  const auto recs = testing::corpus_with_counts({475, 2427, 910, 13702}, 3);
  const auto inst = flatten_to_instances(recs);
  AugmentPolicy policy;
  const auto out = balance(inst, SynonymLexicon::bundled(), policy);
  const auto rc = class_distribution(out);
  CHECK(rc[Role::kHero] == 3325);
  CHECK(rc[Role::kVillain] == 7281);
  CHECK(rc[Role::kVictim] == 3640);
  CHECK(rc[Role::kOther] == 13702);
  CHECK(std::equal(inst.begin(), inst.end(), out.begin()));
  policy.copies = {0, 0, 0, 0};
  CHECK(balance(inst, SynonymLexicon::bundled(), policy) == inst);
}

TEST_CASE("augmented copies carry provenance and reproduce") {
  std::vector<EntityInstance> inst = {instance("m1", "Biden", "bad Biden says good things", Role::kHero),
                                      instance("m1", "Trump", "bad Biden says good things", Role::kOther)};
  AugmentPolicy policy;
  policy.seed = 9;
  const auto a = balance(inst, SynonymLexicon::bundled(), policy);
  const auto b = balance(inst, SynonymLexicon::bundled(), policy);
  CHECK(a == b);
  REQUIRE(a.size() == 8);
  CHECK(a[2].meme_id == "m1#e0#aug1");
  CHECK(a[7].meme_id == "m1#e0#aug6");
  CHECK(a[2].source_id == "m1");
  CHECK(a[2].augmented);
  CHECK(a[2].role == Role::kHero);
  const auto recs = copies_as_records(a);
  CHECK(recs.size() == 6);
  CHECK(recs[0].source_id == "m1");
  AugmentPolicy bad;
  bad.p = 0.0;
  CHECK_THROWS_AS(balance(inst, SynonymLexicon::bundled(), bad), DataError);
}

TEST_CASE("contextual modes need a provider") {
  const std::vector<EntityInstance> inst = {instance("m", "x", "x y", Role::kHero)};
  CHECK_THROWS_AS(balance(inst, SynonymLexicon{}, AugmentPolicy{}, Mode::kContextual), ProviderError);
}

TEST_CASE("provider: echo leaves text unchanged") {
  ProcessProvider p(std::string(FAKE_PROVIDER) + " echo");
  CHECK(contextual_substitute("bad man walks", "man", p, 0.3, 1) == "bad man walks");
}

TEST_CASE("provider: replacements only outside the entity") {
  ProcessProvider p(std::string(FAKE_PROVIDER) + " fixed");
  CHECK(contextual_substitute("bad man walks home", "man", p, 0.3, 1) == "zzz man zzz zzz");
  ProcessProvider rogue(std::string(FAKE_PROVIDER) + " rogue");
  CHECK(contextual_substitute("bad man walks", "man", rogue, 0.3, 1) == "zzz man zzz");
  CHECK(contextual_substitute("Joe Biden and joe biden", "joe biden", rogue, 0.3, 1) ==
        "Joe Biden zzz joe biden");
}

TEST_CASE("provider: entity span survives a rogue provider over a corpus") {
  ProcessProvider rogue(std::string(FAKE_PROVIDER) + " rogue");
  for (const auto& rec : testing::bio_corpus(60, 13)) {
    for (const auto& a : rec.annotations) {
      const auto out = contextual_substitute(rec.ocr_text, a.entity, rogue, 0.3, 0);
      CHECK(entity_tokens(out, a.entity) == entity_tokens(rec.ocr_text, a.entity));
    }
  }
}

TEST_CASE("provider failures are errors, never silent fallbacks") {
  ProcessProvider err(std::string(FAKE_PROVIDER) + " error");
  CHECK_THROWS_AS(contextual_substitute("a b", "a", err, 0.3, 1), ProviderError);
  ProcessProvider garbage(std::string(FAKE_PROVIDER) + " garbage");
  CHECK_THROWS_AS(contextual_substitute("a b", "a", garbage, 0.3, 1), ProviderError);
  ProcessProvider crash(std::string(FAKE_PROVIDER) + " crash");
  CHECK_THROWS_AS(contextual_substitute("a b", "a", crash, 0.3, 1), ProviderError);
  ProcessProvider drop(std::string(FAKE_PROVIDER) + " drop");
  CHECK_THROWS_AS(contextual_substitute("a b c", "a", drop, 0.3, 1), ProviderError);
  ProcessProvider missing("/nonexistent/provider/binary");
  CHECK_THROWS_AS(contextual_substitute("a b", "a", missing, 0.3, 1), ProviderError);
}

TEST_CASE("mix mode alternates engines per copy") {
  const std::vector<EntityInstance> inst = {instance("m", "man", "bad man walks", Role::kHero)};
  ProcessProvider p(std::string(FAKE_PROVIDER) + " fixed");
  AugmentPolicy policy;
  policy.p = 1.0;
  policy.copies = {4, 0, 0, 0};
  const auto out = balance(inst, lexicon("bad\tevil\n"), policy, Mode::kMix, &p);
  REQUIRE(out.size() == 5);
  CHECK(out[1].ocr_text == "evil man walks");
  CHECK(out[2].ocr_text == "zzz man zzz");
  CHECK(out[3].ocr_text == "evil man walks");
}
