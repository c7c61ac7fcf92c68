#include "rolefuse/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rolefuse/augment.hpp"
#include "rolefuse/conll.hpp"
#include "rolefuse/crf.hpp"
#include "rolefuse/dataset.hpp"
#include "rolefuse/embeddings.hpp"
#include "rolefuse/error.hpp"
#include "rolefuse/eval.hpp"
#include "rolefuse/fusion.hpp"
#include "rolefuse/svm.hpp"
#include "rolefuse/text.hpp"

#ifndef ROLEFUSE_VERSION
#define ROLEFUSE_VERSION "unknown"
#endif

namespace rolefuse::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class UsageError : public Error {
 public:
  using Error::Error;
};

// Options every subcommand shares.
struct Common {
  std::string config;
  bool json = false;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c, bool with_seed) {
  sub->add_option("--config", c.config, "JSON file of option values (flags override it)");
  sub->add_flag("--json", c.json, "Print machine-readable JSON to standard output");
  if (with_seed) {
    c.seed_opt = sub->add_option("--seed", c.seed, "Random seed (default: $ROLEFUSE_SEED or 0)");
  }
}

std::string config_scalar(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw UsageError("config key '" + key + "' must be a string, number or boolean");
}

// Fills options not given on the command line from the JSON config file.
// Unknown keys are rejected.
void apply_config(CLI::App* sub, const Common& c) {
  if (c.config.empty()) return;
  std::ifstream in(c.config);
  if (!in) throw DataError("cannot open config file '" + c.config + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("config file '" + c.config + "': " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "config") throw UsageError("config files cannot nest --config");
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("unknown config key '" + key + "' for " + sub->get_name());
    if (opt->count() > 0) continue;
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(config_scalar(v, key));
    } else {
      opt->add_result(config_scalar(value, key));
    }
    opt->run_callback();
  }
}

void resolve_seed(Common& c) {
  if (c.seed_opt == nullptr || c.seed_opt->count() > 0) return;
  if (const char* env = std::getenv("ROLEFUSE_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw UsageError(std::string("ROLEFUSE_SEED is not an unsigned integer: '") + env + "'");
    }
  }
}

json option_snapshot(const CLI::App* sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      j[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void write_manifest(const fs::path& output, const std::string& command, const CLI::App* sub,
                    const std::vector<std::string>& args, const Common& c, const json& metrics,
                    const std::vector<fs::path>& outputs) {
  json files = json::array();
  for (const auto& p : outputs) files.push_back(p.string());
  json m{{"tool", "rolefuse"},
         {"version", ROLEFUSE_VERSION},
         {"command", command},
         {"argv", args},
         {"options", option_snapshot(sub)},
         {"seed", c.seed},
         {"outputs", std::move(files)},
         {"metrics", metrics}};
  const fs::path path = output.string() + ".manifest.json";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  out << m.dump(2) << '\n';
}

std::array<std::size_t, kNumRoles> parse_policy(const std::string& text) {
  std::array<std::size_t, kNumRoles> copies{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= kNumRoles) throw UsageError("--policy takes four comma-separated counts");
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      copies[i++] = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw UsageError("--policy entry '" + item + "' is not a nonnegative integer");
    }
  }
  if (i != kNumRoles) throw UsageError("--policy takes four comma-separated counts");
  return copies;
}

std::optional<EmbeddingTable> maybe_table(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return read_table(fs::path(path));
}

json counts_json(const RoleCounts& rc) {
  json counts = json::object();
  json percent = json::object();
  for (Role r : kAllRoles) {
    counts[std::string(role_name(r))] = rc[r];
    percent[std::string(role_name(r))] = rc.percent(r);
  }
  return json{{"counts", counts}, {"percent", percent}, {"total", rc.total}};
}

std::string counts_table(const RoleCounts& rc) {
  std::ostringstream out;
  out << "role        count  percent\n";
  for (Role r : kAllRoles) {
    out << std::left << std::setw(10) << role_name(r) << std::right << std::setw(7) << rc[r]
        << std::setw(9) << rc.percent(r) << '\n';
  }
  out << std::left << std::setw(10) << "total" << std::right << std::setw(7) << rc.total << '\n';
  return out.str();
}

// Predictions file: one JSON object per line with meme_id, entity, role.
struct Prediction {
  std::string meme_id;
  std::string entity;
  Role role;
  std::array<double, kNumRoles> probabilities{};
};

void write_predictions(const fs::path& path, const std::vector<Prediction>& preds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions '" + path.string() + "'");
  for (const auto& p : preds) {
    json j{{"meme_id", p.meme_id},
           {"entity", p.entity},
           {"role", role_name(p.role)},
           {"probabilities", p.probabilities}};
    out << j.dump() << '\n';
  }
}

std::map<std::pair<std::string, std::string>, Role> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions '" + path.string() + "'");
  std::map<std::pair<std::string, std::string>, Role> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + e.what());
    }
    if (!j.is_object() || !j.contains("meme_id") || !j.contains("entity") || !j.contains("role") ||
        !j["meme_id"].is_string() || !j["entity"].is_string() || !j["role"].is_string()) {
      throw DataError(where + "expected string keys meme_id, entity, role");
    }
    auto role = parse_role(j["role"].get<std::string>());
    if (!role) throw DataError(where + "unknown role " + j["role"].dump());
    auto key = std::make_pair(j["meme_id"].get<std::string>(), j["entity"].get<std::string>());
    if (!out.emplace(key, *role).second) {
      throw DataError(where + "duplicate prediction for (" + key.first + ", " + key.second + ")");
    }
  }
  return out;
}

void emit_report(std::ostream& out, const eval::EvalReport& rep, bool as_json) {
  if (as_json) {
    out << rep.to_json().dump(2) << '\n';
  } else {
    out << rep.to_table();
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entity role labeling for memes", "rolefuse"};
  app.set_version_flag("--version", ROLEFUSE_VERSION);
  app.require_subcommand(1, 1);

  // distribution
  Common dist_c;
  std::string dist_data, dist_out;
  auto* dist = app.add_subcommand("distribution", "Role counts of a dataset");
  add_common(dist, dist_c, false);
  dist->add_option("--data", dist_data, "Dataset (JSON lines)")->required();
  dist->add_option("--out", dist_out, "Also write the counts as JSON here");

  // convert
  Common conv_c;
  std::string conv_data, conv_out, conv_mode = "all_tokens";
  auto* conv = app.add_subcommand("convert", "Dataset to CoNLL BIO sequences");
  add_common(conv, conv_c, false);
  conv->add_option("--data", conv_data, "Dataset (JSON lines)")->required();
  conv->add_option("--mode", conv_mode, "all_tokens or entities_only")
      ->check(CLI::IsMember({"all_tokens", "entities_only"}));
  conv->add_option("--out", conv_out, "Output CoNLL file")->required();

  // train-crf
  Common tcrf_c;
  std::string tcrf_train, tcrf_model, tcrf_names;
  double tcrf_l2 = 1.0;
  int tcrf_iters = 200;
  std::size_t tcrf_min_count = 2;
  auto* tcrf = app.add_subcommand("train-crf", "Train a linear-chain CRF tagger");
  add_common(tcrf, tcrf_c, true);
  tcrf->add_option("--train", tcrf_train, "Training CoNLL file")->required();
  tcrf->add_option("--model", tcrf_model, "Output model (JSON)")->required();
  tcrf->add_option("--l2", tcrf_l2, "L2 strength")->capture_default_str();
  tcrf->add_option("--max-iter", tcrf_iters, "Maximum ascent iterations")->capture_default_str();
  tcrf->add_option("--names", tcrf_names, "Name list, one entry per line");
  tcrf->add_option("--vocab-min-count", tcrf_min_count, "Vocabulary count cutoff")
      ->capture_default_str();

  // tag
  Common tag_c;
  std::string tag_model, tag_input, tag_out;
  auto* tag = app.add_subcommand("tag", "Tag CoNLL sequences with a trained CRF");
  add_common(tag, tag_c, false);
  tag->add_option("--model", tag_model, "CRF model (JSON)")->required();
  tag->add_option("--input", tag_input, "Input CoNLL file")->required();
  tag->add_option("--out", tag_out, "Output CoNLL file")->required();

  // train-fusion
  Common tf_c;
  std::string tf_data, tf_entity, tf_text, tf_image, tf_model, tf_setting = "entity+text";
  std::string tf_augment = "none", tf_lexicon, tf_provider, tf_policy = "6,2,3,0";
  double tf_p = 0.3;
  fusion::TrainConfig tf_cfg;
  bool tf_attention = false, tf_normalize = false;
  auto* tf = app.add_subcommand("train-fusion", "Train the block fusion classifier");
  add_common(tf, tf_c, true);
  tf->add_option("--data", tf_data, "Training dataset (JSON lines)")->required();
  tf->add_option("--entity-emb", tf_entity, "Entity embeddings (EMB1)")->required();
  tf->add_option("--text-emb", tf_text, "Text embeddings (EMB1)");
  tf->add_option("--image-emb", tf_image, "Image embeddings (EMB1)");
  tf->add_option("--setting", tf_setting, "entity+text, entity+image or entity+text_image")
      ->check(CLI::IsMember({"entity+text", "entity+image", "entity+text_image"}))
      ->capture_default_str();
  tf->add_flag("--attention", tf_attention, "Attend over the context before fusion");
  tf->add_flag("--normalize", tf_normalize, "Per-block signed sqrt + L2 normalization");
  tf->add_option("--augment", tf_augment, "none, lexicon, contextual or mix")
      ->check(CLI::IsMember({"none", "lexicon", "contextual", "mix"}))
      ->capture_default_str();
  tf->add_option("--lexicon", tf_lexicon, "Synonym lexicon TSV (default: bundled)");
  tf->add_option("--provider", tf_provider, "Substitution provider command");
  tf->add_option("--policy", tf_policy, "Copies per role: hero,villain,victim,other")
      ->capture_default_str();
  tf->add_option("--p", tf_p, "Substitution probability")->capture_default_str();
  tf->add_option("--epochs", tf_cfg.epochs, "Training epochs")->capture_default_str();
  tf->add_option("--lr", tf_cfg.learning_rate, "Learning rate")->capture_default_str();
  tf->add_option("--batch-size", tf_cfg.batch_size, "Minibatch size")->capture_default_str();
  tf->add_option("--max-text-length", tf_cfg.max_text_length, "Text encoder token limit (recorded in the checkpoint)")->capture_default_str();
  tf->add_option("--hidden", tf_cfg.block.hidden, "Projected entity and context size")->capture_default_str();
  tf->add_option("--blocks", tf_cfg.block.blocks, "Number of fusion blocks")->capture_default_str();
  tf->add_option("--rank1", tf_cfg.block.rank1, "Core rank on the entity side")->capture_default_str();
  tf->add_option("--rank2", tf_cfg.block.rank2, "Core rank on the context side")->capture_default_str();
  tf->add_option("--rank3", tf_cfg.block.rank3, "Core output rank")->capture_default_str();
  tf->add_option("--output-dim", tf_cfg.block.output, "Fused vector size")->capture_default_str();
  tf->add_option("--dropout", tf_cfg.block.dropout, "Dropout rate on the fused vector")->capture_default_str();
  tf->add_option("--slots", tf_cfg.block.slots, "Context slots for attention")->capture_default_str();
  tf->add_option("--attention-dim", tf_cfg.block.attention_dim, "Attention key size")->capture_default_str();
  tf->add_option("--model", tf_model, "Output checkpoint (binary + .json)")->required();

  // predict
  Common pr_c;
  std::string pr_model, pr_data, pr_entity, pr_text, pr_image, pr_out;
  auto* pr = app.add_subcommand("predict", "Predict roles with a fusion checkpoint");
  add_common(pr, pr_c, false);
  pr->add_option("--model", pr_model, "Fusion checkpoint")->required();
  pr->add_option("--data", pr_data, "Dataset (JSON lines)")->required();
  pr->add_option("--entity-emb", pr_entity, "Entity embeddings (EMB1)")->required();
  pr->add_option("--text-emb", pr_text, "Text embeddings (EMB1)");
  pr->add_option("--image-emb", pr_image, "Image embeddings (EMB1)");
  pr->add_option("--out", pr_out, "Predictions (JSON lines)")->required();

  // evaluate
  Common ev_c;
  std::string ev_gold, ev_pred, ev_format = "instances", ev_out, ev_majority;
  auto* ev = app.add_subcommand("evaluate", "Score predictions against gold labels");
  add_common(ev, ev_c, false);
  ev->add_option("--gold", ev_gold, "Gold dataset (instances) or CoNLL file")->required();
  ev->add_option("--pred", ev_pred, "Predictions (JSON lines) or tagged CoNLL file");
  ev->add_option("--format", ev_format, "instances or conll")
      ->check(CLI::IsMember({"instances", "conll"}))
      ->capture_default_str();
  ev->add_option("--majority-train", ev_majority,
                 "Score the majority baseline of this training dataset instead of --pred");
  ev->add_option("--out", ev_out, "Write the JSON report here");

  // augment
  Common au_c;
  std::string au_data, au_out, au_mode = "lexicon", au_lexicon, au_provider, au_policy = "6,2,3,0";
  double au_p = 0.3;
  auto* au = app.add_subcommand("augment", "Class-balancing text augmentation");
  add_common(au, au_c, true);
  au->add_option("--data", au_data, "Dataset (JSON lines)")->required();
  au->add_option("--out", au_out, "Output dataset: originals plus augmented copies")->required();
  au->add_option("--mode", au_mode, "lexicon, contextual or mix")
      ->check(CLI::IsMember({"lexicon", "contextual", "mix"}))
      ->capture_default_str();
  au->add_option("--lexicon", au_lexicon, "Synonym lexicon TSV (default: bundled)");
  au->add_option("--provider", au_provider, "Substitution provider command");
  au->add_option("--policy", au_policy, "Copies per role: hero,villain,victim,other")
      ->capture_default_str();
  au->add_option("--p", au_p, "Substitution probability")->capture_default_str();

  // train-svm
  Common sv_c;
  std::string sv_data, sv_image, sv_test, sv_out;
  svm::SvmOptions sv_opts;
  auto* sv = app.add_subcommand("train-svm", "Image-only linear SVM baseline");
  add_common(sv, sv_c, true);
  sv->add_option("--data", sv_data, "Training dataset (JSON lines)")->required();
  sv->add_option("--image-emb", sv_image, "Image embeddings (EMB1)")->required();
  sv->add_option("--test", sv_test, "Dataset to predict")->required();
  sv->add_option("--out", sv_out, "Predictions (JSON lines)")->required();
  sv->add_option("--c", sv_opts.c, "Inverse regularization")->capture_default_str();
  sv->add_option("--epochs", sv_opts.epochs, "Subgradient iterations")->capture_default_str();

  // Required options may come from a config file, so they are checked after
  // the file is merged.
  std::map<const CLI::App*, std::vector<CLI::Option*>> required;
  for (CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; })) {
    for (CLI::Option* opt : sub->get_options()) {
      if (!opt->get_required()) continue;
      opt->required(false);
      required[sub].push_back(opt);
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    std::map<CLI::App*, Common*> commons = {{dist, &dist_c}, {conv, &conv_c}, {tcrf, &tcrf_c},
                                            {tag, &tag_c},   {tf, &tf_c},     {pr, &pr_c},
                                            {ev, &ev_c},     {au, &au_c},     {sv, &sv_c}};
    Common& common = *commons.at(sub);
    apply_config(sub, common);
    for (const CLI::Option* opt : required[sub]) {
      if (opt->count() == 0) throw UsageError(opt->get_name() + " is required");
    }
    resolve_seed(common);

    if (sub == dist) {
      const auto rc = class_distribution(flatten_to_instances(load_dataset(dist_data, &err)));
      const json j = counts_json(rc);
      if (dist_c.json) {
        out << j.dump(2) << '\n';
      } else {
        out << counts_table(rc);
      }
      if (!dist_out.empty()) {
        std::ofstream f(dist_out);
        if (!f) throw DataError("cannot write '" + dist_out + "'");
        f << j.dump(2) << '\n';
        write_manifest(dist_out, name, sub, args, common, j, {dist_out});
      }
      return kOk;
    }

    if (sub == conv) {
      const auto records = load_dataset(conv_data, &err);
      const auto mode = *conll::parse_mode(conv_mode);
      std::vector<conll::TaggedSequence> seqs;
      std::size_t tokens = 0;
      for (const auto& r : records) {
        seqs.push_back(conll::to_bio(r, mode));
        tokens += seqs.back().tokens.size();
      }
      conll::save_conll(conv_out, seqs);
      const json metrics{{"sequences", seqs.size()}, {"tokens", tokens}};
      write_manifest(conv_out, name, sub, args, common, metrics, {conv_out});
      if (conv_c.json) out << metrics.dump(2) << '\n';
      return kOk;
    }

    if (sub == tcrf) {
      const auto data = conll::load_conll(tcrf_train);
      crf::FeatureSet features;
      features.vocab_min_count = tcrf_min_count;
      if (!tcrf_names.empty()) {
        std::ifstream in(tcrf_names);
        if (!in) throw DataError("cannot open name list '" + tcrf_names + "'");
        std::string line;
        while (std::getline(in, line)) {
          for (const auto& tok : conll::tokenize(line)) features.names.insert(text::fold_case(tok));
        }
      }
      crf::TrainOptions opts;
      opts.l2 = tcrf_l2;
      opts.max_iterations = tcrf_iters;
      opts.seed = common.seed;
      auto result = crf::train_crf(data, std::move(features), opts);
      crf::save_model(tcrf_model, result.model);
      const json metrics{{"objective", result.objective_trace.back()},
                         {"iterations", result.objective_trace.size() - 1},
                         {"features", result.model.num_features()},
                         {"labels", result.model.num_labels()}};
      write_manifest(tcrf_model, name, sub, args, common, metrics, {tcrf_model});
      if (tcrf_c.json) out << metrics.dump(2) << '\n';
      return kOk;
    }

    if (sub == tag) {
      const auto model = crf::load_model(tag_model);
      auto seqs = conll::load_conll(tag_input);
      for (auto& s : seqs) s.tags = crf::viterbi(model, s.tokens, s.columns);
      conll::save_conll(tag_out, seqs);
      const json metrics{{"sequences", seqs.size()}};
      write_manifest(tag_out, name, sub, args, common, metrics, {tag_out});
      if (tag_c.json) out << metrics.dump(2) << '\n';
      return kOk;
    }

    if (sub == tf) {
      tf_cfg.seed = common.seed;
      tf_cfg.setting = *fusion::parse_setting(tf_setting);
      tf_cfg.block.attention = tf_attention;
      tf_cfg.block.normalize = tf_normalize;
      tf_cfg.validate();
      auto instances = flatten_to_instances(load_dataset(tf_data, &err));
      const auto mode = *augment::parse_mode(tf_augment);
      if (mode != augment::Mode::kNone) {
        augment::AugmentPolicy policy;
        policy.copies = parse_policy(tf_policy);
        policy.p = tf_p;
        policy.seed = common.seed;
        const auto lexicon = tf_lexicon.empty() ? augment::SynonymLexicon::bundled()
                                                : augment::SynonymLexicon::load(tf_lexicon);
        std::unique_ptr<augment::ProcessProvider> provider;
        if (!tf_provider.empty()) provider = std::make_unique<augment::ProcessProvider>(tf_provider);
        instances = augment::balance(instances, lexicon, policy, mode, provider.get());
      }
      const auto entity = read_table(fs::path(tf_entity));
      const auto text = maybe_table(tf_text);
      const auto image = maybe_table(tf_image);
      const fusion::FusionTables tables{&entity, text ? &*text : nullptr, image ? &*image : nullptr};
      const auto inputs = fusion::resolve_inputs(instances, tables, tf_cfg.setting);
      auto result = fusion::train_fusion(tf_cfg, inputs);
      const double acc = fusion::accuracy(result.model, inputs);
      const json metrics{{"loss_trace", result.loss_trace},
                         {"train_accuracy", acc},
                         {"instances", instances.size()},
                         {"class_distribution", counts_json(class_distribution(instances))}};
      json meta{{"config", tf_cfg},
                {"epoch", result.loss_trace.size() - 1},
                {"loss_trace", result.loss_trace},
                {"augment", tf_augment}};
      fusion::save_checkpoint(tf_model, result.model, meta);
      write_manifest(tf_model, name, sub, args, common, metrics,
                     {tf_model, fs::path(tf_model + ".json")});
      if (tf_c.json) out << metrics.dump(2) << '\n';
      return kOk;
    }

    if (sub == pr) {
      json meta;
      const auto model = fusion::load_checkpoint(pr_model, &meta);
      fusion::TrainConfig cfg;
      try {
        cfg = meta.at("config").get<fusion::TrainConfig>();
      } catch (const json::exception& e) {
        throw DataError("checkpoint metadata lacks a training config: " + std::string(e.what()));
      }
      const auto instances = flatten_to_instances(load_dataset(pr_data, &err));
      const auto entity = read_table(fs::path(pr_entity));
      const auto text = maybe_table(pr_text);
      const auto image = maybe_table(pr_image);
      const fusion::FusionTables tables{&entity, text ? &*text : nullptr, image ? &*image : nullptr};
      const auto inputs = fusion::resolve_inputs(instances, tables, cfg.setting);
      std::vector<Prediction> preds;
      for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto probs = fusion::block_fusion_forward(
            model, inputs.entities.row(static_cast<Eigen::Index>(i)).transpose(),
            inputs.contexts.row(static_cast<Eigen::Index>(i)).transpose());
        preds.push_back({instances[i].meme_id, instances[i].entity_name, fusion::argmax_role(probs),
                         probs});
      }
      write_predictions(pr_out, preds);
      const json metrics{{"predictions", preds.size()}};
      write_manifest(pr_out, name, sub, args, common, metrics, {pr_out});
      if (pr_c.json) out << metrics.dump(2) << '\n';
      return kOk;
    }

    if (sub == ev) {
      eval::EvalReport report;
      if (ev_format == "conll") {
        if (ev_pred.empty()) throw UsageError("--pred is required with --format conll");
        const auto gold = conll::load_conll(ev_gold);
        const auto pred = conll::load_conll(ev_pred);
        if (gold.size() != pred.size()) {
          throw DataError("gold and predicted CoNLL files hold different sequence counts");
        }
        std::vector<std::vector<std::string>> g, p;
        for (std::size_t i = 0; i < gold.size(); ++i) {
          if (gold[i].meme_id != pred[i].meme_id || gold[i].tokens != pred[i].tokens) {
            throw DataError("sequence " + std::to_string(i) + " differs between gold and prediction");
          }
          g.push_back(gold[i].tags);
          p.push_back(pred[i].tags);
        }
        report = eval::sequence_evaluate(g, p);
      } else {
        const auto gold = flatten_to_instances(load_dataset(ev_gold, &err));
        std::vector<Role> g, p;
        if (!ev_majority.empty()) {
          const auto baseline = eval::majority_baseline(
              class_distribution(flatten_to_instances(load_dataset(ev_majority, &err))));
          for (const auto& inst : gold) {
            g.push_back(inst.role);
            p.push_back(baseline());
          }
        } else {
          if (ev_pred.empty()) throw UsageError("--pred or --majority-train is required");
          const auto preds = read_predictions(ev_pred);
          if (preds.size() != gold.size()) {
            throw DataError("prediction count " + std::to_string(preds.size()) +
                            " does not match gold instance count " + std::to_string(gold.size()));
          }
          for (const auto& inst : gold) {
            auto it = preds.find({inst.meme_id, inst.entity_name});
            if (it == preds.end()) {
              throw DataError("no prediction for (" + inst.meme_id + ", " + inst.entity_name + ")");
            }
            g.push_back(inst.role);
            p.push_back(it->second);
          }
        }
        report = eval::evaluate(g, p);
      }
      emit_report(out, report, ev_c.json);
      if (!ev_out.empty()) {
        std::ofstream f(ev_out);
        if (!f) throw DataError("cannot write '" + ev_out + "'");
        f << report.to_json().dump(2) << '\n';
        write_manifest(ev_out, name, sub, args, common, report.to_json(), {ev_out});
      }
      return kOk;
    }

    if (sub == au) {
      const auto records = load_dataset(au_data, &err);
      augment::AugmentPolicy policy;
      policy.copies = parse_policy(au_policy);
      policy.p = au_p;
      policy.seed = common.seed;
      const auto lexicon = au_lexicon.empty() ? augment::SynonymLexicon::bundled()
                                              : augment::SynonymLexicon::load(au_lexicon);
      std::unique_ptr<augment::ProcessProvider> provider;
      if (!au_provider.empty()) provider = std::make_unique<augment::ProcessProvider>(au_provider);
      const auto mode = *augment::parse_mode(au_mode);
      const auto augmented =
          augment::balance(flatten_to_instances(records), lexicon, policy, mode, provider.get());
      auto all = records;
      auto copies = augment::copies_as_records(augmented);
      all.insert(all.end(), copies.begin(), copies.end());
      save_dataset(au_out, all);
      const json metrics{{"original_instances", augmented.size() - copies.size()},
                         {"augmented_copies", copies.size()},
                         {"class_distribution", counts_json(class_distribution(augmented))}};
      write_manifest(au_out, name, sub, args, common, metrics, {au_out});
      if (au_c.json) out << metrics.dump(2) << '\n';
      return kOk;
    }

    if (sub == sv) {
      sv_opts.seed = common.seed;
      const auto train = flatten_to_instances(load_dataset(sv_data, &err));
      const auto test = flatten_to_instances(load_dataset(sv_test, &err));
      const auto image = read_table(fs::path(sv_image));
      auto features = [&](const std::vector<EntityInstance>& insts) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(insts.size()), static_cast<Eigen::Index>(image.dim()));
        for (std::size_t i = 0; i < insts.size(); ++i) {
          const auto& v = image.lookup(insts[i].source_id);
          for (std::size_t k = 0; k < v.size(); ++k) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[k];
          }
        }
        return x;
      };
      std::vector<Role> labels;
      for (const auto& inst : train) labels.push_back(inst.role);
      const auto model = svm::train_linear_svm(features(train), labels, sv_opts);
      const auto xt = features(test);
      std::vector<Prediction> preds;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const Eigen::VectorXd x = xt.row(static_cast<Eigen::Index>(i)).transpose();
        preds.push_back({test[i].meme_id, test[i].entity_name, model.predict(x), {}});
      }
      write_predictions(sv_out, preds);
      const json metrics{{"train_instances", train.size()}, {"predictions", preds.size()}};
      write_manifest(sv_out, name, sub, args, common, metrics, {sv_out});
      if (sv_c.json) out << metrics.dump(2) << '\n';
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "rolefuse " << name << ": " << e.what() << '\n';
    return kUsage;
  } catch (const CLI::ParseError& e) {
    err << "rolefuse " << name << ": " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "rolefuse " << name << ": numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const Error& e) {
    err << "rolefuse " << name << ": " << e.what() << '\n';
    return kDataError;
  } catch (const nlohmann::json::exception& e) {
    err << "rolefuse " << name << ": " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace rolefuse::cli
