#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rolefuse/cli.hpp"
#include "rolefuse/conll.hpp"
#include "rolefuse/dataset.hpp"
#include "rolefuse/embeddings.hpp"
#include "synthetic.hpp"

using namespace rolefuse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small dataset plus matching embedding files.
struct Workspace {
  fs::path dir;
  fs::path data, entity, text, image;
};

Workspace workspace(const std::string& name, std::array<std::size_t, kNumRoles> counts = {6, 6, 6, 6}) {
  Workspace w;
  w.dir = testing::scratch_dir(name);
  const auto recs = testing::corpus_with_counts(counts, 1);
  w.data = w.dir / "data.jsonl";
  save_dataset(w.data, recs);
  const auto tri = testing::random_triplet(recs, 4, 6, 4, 2);
  w.entity = w.dir / "entity.emb";
  w.text = w.dir / "text.emb";
  w.image = w.dir / "image.emb";
  write_table(w.entity, tri.entity);
  write_table(w.text, tri.text);
  write_table(w.image, tri.image);
  return w;
}

std::vector<std::string> tiny_model_flags() {
  return {"--hidden", "6", "--blocks", "2", "--rank1", "2", "--rank2", "2", "--rank3", "2",
          "--output-dim", "4", "--slots", "2", "--attention-dim", "4"};
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"distribution"}).code == cli::kUsage);
  CHECK(run({"convert", "--data", "x", "--out", "y", "--mode", "sideways"}).code == cli::kUsage);
  CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("missing dataset exits 2 naming the path") {
  const auto r = run({"distribution", "--data", "/no/such/memes.jsonl"});
  CHECK(r.code == cli::kDataError);
  CHECK(r.err.find("/no/such/memes.jsonl") != std::string::npos);
}

TEST_CASE("distribution of the test split") {
  const auto dir = testing::scratch_dir("cli-dist");
  save_dataset(dir / "test.jsonl", testing::corpus_with_counts({52, 350, 114, 1917}, 4));
  const auto r = run({"distribution", "--data", (dir / "test.jsonl").string()});
  CHECK(r.code == 0);
  for (const char* n : {"52", "350", "114", "1917", "2433"}) CHECK(r.out.find(n) != std::string::npos);
  const auto j = run({"distribution", "--data", (dir / "test.jsonl").string(), "--json"});
  const auto parsed = json::parse(j.out);
  CHECK(parsed["counts"]["villain"] == 350);
  CHECK(parsed["percent"]["other"] == 79);
}

TEST_CASE("config file supplies options, flags override, unknown keys fail") {
  auto w = workspace("cli-config");
  const auto cfg = w.dir / "cfg.json";
  std::ofstream(cfg) << json{{"data", w.data.string()}, {"mode", "entities_only"}}.dump();
  CHECK(run({"convert", "--config", cfg.string(), "--out", (w.dir / "a.conll").string()}).code == 0);
  const auto a = conll::load_conll(w.dir / "a.conll");
  CHECK(a[0].tokens.size() == a[0].tags.size());
  CHECK(std::none_of(a[0].tags.begin(), a[0].tags.end(), [](const std::string& t) { return t == "O"; }));
  CHECK(run({"convert", "--config", cfg.string(), "--mode", "all_tokens", "--out",
             (w.dir / "b.conll").string()})
            .code == 0);
  const auto b = conll::load_conll(w.dir / "b.conll");
  CHECK(std::any_of(b[0].tags.begin(), b[0].tags.end(), [](const std::string& t) { return t == "O"; }));

  std::ofstream(w.dir / "bad.json") << json{{"data", w.data.string()}, {"colour", "blue"}}.dump();
  const auto r = run({"convert", "--config", (w.dir / "bad.json").string(), "--out", "x"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("colour") != std::string::npos);
}

TEST_CASE("seed comes from the environment unless given") {
  auto w = workspace("cli-seed");
  const auto out = w.dir / "aug.jsonl";
  ::setenv("ROLEFUSE_SEED", "77", 1);
  CHECK(run({"augment", "--data", w.data.string(), "--out", out.string()}).code == 0);
  CHECK(json::parse(slurp(out.string() + ".manifest.json"))["seed"] == 77);
  CHECK(run({"augment", "--data", w.data.string(), "--out", out.string(), "--seed", "5"}).code == 0);
  CHECK(json::parse(slurp(out.string() + ".manifest.json"))["seed"] == 5);
  ::setenv("ROLEFUSE_SEED", "not-a-number", 1);
  CHECK(run({"augment", "--data", w.data.string(), "--out", out.string()}).code == cli::kUsage);
  ::unsetenv("ROLEFUSE_SEED");
}

TEST_CASE("augment writes originals plus copies") {
  auto w = workspace("cli-augment");
  const auto out = w.dir / "aug.jsonl";
  CHECK(run({"augment", "--data", w.data.string(), "--out", out.string(), "--policy", "1,0,2,0"}).code == 0);
  const auto recs = load_dataset(out);
  const auto rc = class_distribution(flatten_to_instances(recs));
  CHECK(rc[Role::kHero] == 12);
  CHECK(rc[Role::kVictim] == 18);
  CHECK(rc[Role::kOther] == 6);
  CHECK(run({"augment", "--data", w.data.string(), "--out", out.string(), "--policy", "1,2"}).code ==
        cli::kUsage);
  const auto r = run({"augment", "--data", w.data.string(), "--out", out.string(), "--mode",
                      "contextual", "--provider", std::string(FAKE_PROVIDER) + " error"});
  CHECK(r.code == cli::kDataError);
}

TEST_CASE("CRF train and tag through the CLI") {
  auto w = workspace("cli-crf");
  const auto conll_path = w.dir / "train.conll";
  REQUIRE(run({"convert", "--data", w.data.string(), "--out", conll_path.string()}).code == 0);
  const auto model = w.dir / "crf.json";
  REQUIRE(run({"train-crf", "--train", conll_path.string(), "--model", model.string(), "--max-iter", "30"}).code == 0);
  const auto tagged = w.dir / "tagged.conll";
  REQUIRE(run({"tag", "--model", model.string(), "--input", conll_path.string(), "--out", tagged.string()}).code == 0);
  const auto r = run({"evaluate", "--format", "conll", "--gold", conll_path.string(), "--pred",
                      tagged.string(), "--json"});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out)["accuracy"].get<double>() > 0.5);
  CHECK(fs::exists(model.string() + ".manifest.json"));
}

TEST_CASE("fusion pipeline, evaluate and manifests") {
  auto w = workspace("cli-fusion");
  const auto model = w.dir / "model.bin";
  std::vector<std::string> train = {"train-fusion", "--data", w.data.string(), "--entity-emb",
                                    w.entity.string(), "--text-emb", w.text.string(), "--image-emb",
                                    w.image.string(), "--setting", "entity+text_image", "--attention",
                                    "--model", model.string(), "--seed", "3", "--json",
                                    "--epochs", "2", "--lr", "0.01"};
  for (const auto& f : tiny_model_flags()) train.push_back(f);
  const auto t1 = run(train);
  REQUIRE(t1.code == 0);
  const auto t2 = run(train);
  CHECK(t1.out == t2.out);
  const auto manifest = json::parse(slurp(model.string() + ".manifest.json"));
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["command"] == "train-fusion");
  CHECK(manifest["options"]["setting"] == "entity+text_image");
  CHECK(manifest.contains("version"));

  const auto preds = w.dir / "preds.jsonl";
  REQUIRE(run({"predict", "--model", model.string(), "--data", w.data.string(), "--entity-emb",
               w.entity.string(), "--text-emb", w.text.string(), "--image-emb", w.image.string(),
               "--out", preds.string()})
              .code == 0);
  const auto report_path = w.dir / "report.json";
  const auto ev = run({"evaluate", "--gold", w.data.string(), "--pred", preds.string(), "--out",
                       report_path.string(), "--json"});
  REQUIRE(ev.code == 0);
  const auto rep = json::parse(ev.out);
  std::size_t sum = 0;
  for (const auto& row : rep["confusion"])
    for (const auto& v : row) sum += v.get<std::size_t>();
  CHECK(sum == 24);
  CHECK(json::parse(slurp(report_path)) == rep);

  // Text-only checkpoint fed without the text table.
  const auto missing = run({"predict", "--model", model.string(), "--data", w.data.string(),
                            "--entity-emb", w.entity.string(), "--out", preds.string()});
  CHECK(missing.code == cli::kDataError);
}

TEST_CASE("evaluate with mismatched files exits 2") {
  auto w = workspace("cli-mismatch");
  const auto preds = w.dir / "preds.jsonl";
  std::ofstream(preds) << R"({"meme_id":"meme_0","entity":"nobody","role":"hero"})" << '\n';
  CHECK(run({"evaluate", "--gold", w.data.string(), "--pred", preds.string()}).code == cli::kDataError);
  std::ofstream(preds) << "not json\n";
  CHECK(run({"evaluate", "--gold", w.data.string(), "--pred", preds.string()}).code == cli::kDataError);
}

TEST_CASE("majority baseline through evaluate") {
  const auto dir = testing::scratch_dir("cli-majority");
  save_dataset(dir / "train.jsonl", testing::corpus_with_counts({475, 2427, 910, 13702}, 5));
  save_dataset(dir / "test.jsonl", testing::corpus_with_counts({52, 350, 114, 1917}, 6));
  const auto r = run({"evaluate", "--gold", (dir / "test.jsonl").string(), "--majority-train",
                      (dir / "train.jsonl").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("0.79") != std::string::npos);
}

TEST_CASE("divergent training exits 3") {
  auto w = workspace("cli-diverge");
  std::vector<std::string> train = {"train-fusion", "--data", w.data.string(), "--entity-emb",
                                    w.entity.string(), "--text-emb", w.text.string(), "--model",
                                    (w.dir / "m.bin").string()};
  for (const auto& f : tiny_model_flags()) train.push_back(f);
  train.push_back("--lr");
  train.push_back("1e15");
  train.push_back("--epochs");
  train.push_back("30");
  CHECK(run(train).code == cli::kNumericError);
}

TEST_CASE("svm baseline writes predictions") {
  auto w = workspace("cli-svm");
  const auto out = w.dir / "svm.jsonl";
  CHECK(run({"train-svm", "--data", w.data.string(), "--image-emb", w.image.string(), "--test",
             w.data.string(), "--out", out.string()})
            .code == 0);
  CHECK(run({"evaluate", "--gold", w.data.string(), "--pred", out.string()}).code == 0);
}
