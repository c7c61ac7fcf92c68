#include <doctest.h>

#include <sstream>

#include "rolefuse/dataset.hpp"
#include "rolefuse/error.hpp"
#include "synthetic.hpp"

using namespace rolefuse;

namespace {

std::vector<MemeRecord> parse(const std::string& s, std::ostream* warn = nullptr) {
  std::istringstream in(s);
  return parse_dataset(in, warn);
}

}  // namespace

TEST_CASE("parse a record with all roles") {
  const auto recs = parse(
      R"({"id":"m1","image":"m1.png","text":"Putin vs Zelensky","hero":["Zelensky"],"villain":["Putin"],"victim":[],"other":["NATO"]})"
      "\n\n");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].id == "m1");
  CHECK(recs[0].image_ref == "m1.png");
  REQUIRE(recs[0].annotations.size() == 3);
  CHECK(recs[0].annotations[0] == Annotation{"Zelensky", Role::kHero});
  CHECK(recs[0].annotations[2] == Annotation{"NATO", Role::kOther});
}

TEST_CASE("unknown keys warn once and are ignored") {
  std::ostringstream warn;
  const auto recs = parse(
      "{\"id\":\"a\",\"text\":\"x\",\"mood\":1}\n{\"id\":\"b\",\"text\":\"y\",\"mood\":2}\n", &warn);
  CHECK(recs.size() == 2);
  const auto w = warn.str();
  CHECK(w.find("mood") != std::string::npos);
  CHECK(w.find("mood", w.find("mood") + 1) == std::string::npos);
}

TEST_CASE("text is NFC normalized on load") {
  const auto recs = parse("{\"id\":\"a\",\"text\":\"Cafe\\u0301\",\"hero\":[\"Cafe\\u0301\"]}\n");
  CHECK(recs[0].ocr_text == "Caf\xC3\xA9");
  CHECK(recs[0].annotations[0].entity == "Caf\xC3\xA9");
}

TEST_CASE("malformed records are rejected with the line number") {
  auto fails_with = [](const std::string& s, const std::string& needle) {
    try {
      parse(s);
    } catch (const DataError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with("{\"id\":\"a\"}\n{oops\n", "line 2"));
  CHECK(fails_with("{\"text\":\"x\"}\n", "id"));
  CHECK(fails_with("{\"id\":\"a\"}\n{\"id\":\"a\"}\n", "duplicate"));
  CHECK(fails_with("{\"id\":\"a\",\"hero\":[\"x\"],\"villain\":[\"x\"]}\n", "two roles"));
  CHECK(fails_with("{\"id\":\"a\",\"hero\":\"x\"}\n", "array"));
  CHECK(fails_with("{\"id\":\"a\",\"hero\":[\"  \"]}\n", "empty entity"));
}

TEST_CASE("missing dataset file names the path") {
  try {
    load_dataset("/definitely/not/here.jsonl");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("/definitely/not/here.jsonl") != std::string::npos);
  }
}

TEST_CASE("write then parse is the identity") {
  const auto recs = testing::bio_corpus(40, 3);
  std::ostringstream out;
  write_dataset(out, recs);
  CHECK(parse(out.str()) == recs);
}

TEST_CASE("flatten yields one instance per annotation in record then role order") {
  const auto recs = parse(
      R"({"id":"m1","image":"i1","text":"t1","hero":["a"],"villain":["b","c"]})"
      "\n"
      R"({"id":"m2","image":"i2","text":"t2","hero":["d"],"other":["e"]})"
      "\n");
  const auto inst = flatten_to_instances(recs);
  REQUIRE(inst.size() == 5);
  CHECK(inst[0].entity_name == "a");
  CHECK(inst[1].entity_name == "b");
  CHECK(inst[2].role == Role::kVillain);
  CHECK(inst[3].entity_name == "d");
  CHECK(inst[4].role == Role::kOther);
  CHECK(inst[3].source_id == "m2");
  CHECK(inst[3].ocr_text == "t2");
  CHECK_FALSE(inst[3].augmented);
}

TEST_CASE("class distribution of the test split") {
  const auto recs = testing::corpus_with_counts({52, 350, 114, 1917}, 11);
  const auto rc = class_distribution(flatten_to_instances(recs));
  CHECK(rc[Role::kHero] == 52);
  CHECK(rc[Role::kVillain] == 350);
  CHECK(rc[Role::kVictim] == 114);
  CHECK(rc[Role::kOther] == 1917);
  CHECK(rc.total == 2433);
}

TEST_CASE("train split flattens to 17514 instances; percentages follow the counts") {
  const auto recs = testing::corpus_with_counts({475, 2427, 910, 13702}, 12);
  const auto inst = flatten_to_instances(recs);
  CHECK(inst.size() == 17514);
  const auto rc = class_distribution(inst);
  CHECK(rc.percent(Role::kOther) == 78);
  CHECK(rc.percent(Role::kVillain) == 14);
}
