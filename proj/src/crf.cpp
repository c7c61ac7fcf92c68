#include "rolefuse/crf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>
#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "rolefuse/error.hpp"
#include "rolefuse/text.hpp"

namespace rolefuse::crf {

using Eigen::MatrixXd;
using nlohmann::json;

namespace {

constexpr int kModelVersion = 1;

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

UChar32 decode(std::string_view cp) {
  const auto* s = reinterpret_cast<const uint8_t*>(cp.data());
  int32_t i = 0;
  UChar32 c;
  U8_NEXT(s, i, static_cast<int32_t>(cp.size()), c);
  return c;
}

void check_lattice(const MatrixXd& emissions, const MatrixXd& transitions) {
  if (emissions.rows() == 0) throw DataError("CRF lattice over an empty sequence");
  if (transitions.rows() != emissions.cols() || transitions.cols() != emissions.cols()) {
    throw DataError("CRF transition matrix does not match the label count");
  }
}

}  // namespace

void to_json(json& j, const FeatureSet& fs) {
  j = json{{"identity", fs.identity},
           {"lowercase", fs.lowercase},
           {"length_bucket", fs.length_bucket},
           {"trigrams", fs.trigrams},
           {"digit", fs.digit},
           {"special", fs.special},
           {"shape", fs.shape},
           {"vocabulary", fs.vocabulary},
           {"name_list", fs.name_list},
           {"neighbors", fs.neighbors},
           {"columns", fs.columns},
           {"vocab_min_count", fs.vocab_min_count},
           {"vocab", fs.vocab},
           {"names", fs.names}};
}

void from_json(const json& j, FeatureSet& fs) {
  j.at("identity").get_to(fs.identity);
  j.at("lowercase").get_to(fs.lowercase);
  j.at("length_bucket").get_to(fs.length_bucket);
  j.at("trigrams").get_to(fs.trigrams);
  j.at("digit").get_to(fs.digit);
  j.at("special").get_to(fs.special);
  j.at("shape").get_to(fs.shape);
  j.at("vocabulary").get_to(fs.vocabulary);
  j.at("name_list").get_to(fs.name_list);
  j.at("neighbors").get_to(fs.neighbors);
  j.at("columns").get_to(fs.columns);
  j.at("vocab_min_count").get_to(fs.vocab_min_count);
  j.at("vocab").get_to(fs.vocab);
  j.at("names").get_to(fs.names);
}

std::string length_bucket(std::string_view token) {
  const std::size_t n = text::code_points(token).size();
  if (n <= 3) return std::to_string(n);
  if (n <= 6) return "4-6";
  return "7+";
}

std::string token_shape(std::string_view token) {
  std::string shape;
  for (std::string_view cp : text::code_points(token)) {
    const UChar32 c = decode(cp);
    if (c >= 0 && u_isupper(c)) {
      shape += 'X';
    } else if (c >= 0 && u_islower(c)) {
      shape += 'x';
    } else if (c >= 0 && u_isdigit(c)) {
      shape += 'd';
    } else {
      shape += cp;
    }
  }
  return shape;
}

std::vector<std::string> extract_features(const FeatureSet& fs, std::span<const std::string> tokens,
                                          std::size_t position,
                                          std::span<const std::string> columns) {
  if (position >= tokens.size()) throw DataError("feature position out of range");
  const std::string& tok = tokens[position];
  const std::string lower = text::fold_case(tok);
  std::vector<std::string> f{"bias"};
  if (fs.identity) f.push_back("w=" + tok);
  if (fs.lowercase) f.push_back("lw=" + lower);
  if (fs.length_bucket) f.push_back("len=" + length_bucket(tok));
  if (fs.trigrams) {
    const auto cps = text::code_points(lower);
    for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
      f.push_back("tri=" + std::string(cps[i]) + std::string(cps[i + 1]) + std::string(cps[i + 2]));
    }
  }
  bool has_digit = false;
  bool has_special = false;
  for (std::string_view cp : text::code_points(tok)) {
    const UChar32 c = decode(cp);
    if (c >= 0 && u_isdigit(c)) has_digit = true;
    if (c < 0 || !u_isalnum(c)) has_special = true;
  }
  if (fs.digit) f.push_back(has_digit ? "digit=1" : "digit=0");
  if (fs.special) f.push_back(has_special ? "special=1" : "special=0");
  if (fs.shape) f.push_back("shape=" + token_shape(tok));
  if (fs.vocabulary) f.push_back(fs.vocab.count(lower) ? "invocab=1" : "invocab=0");
  if (fs.name_list) f.push_back(fs.names.count(lower) ? "inname=1" : "inname=0");
  if (fs.neighbors) {
    f.push_back("prev_w=" + (position == 0 ? std::string("<BOS>") : tokens[position - 1]));
    f.push_back("next_w=" +
                (position + 1 == tokens.size() ? std::string("<EOS>") : tokens[position + 1]));
  }
  if (fs.columns) {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      f.push_back("col" + std::to_string(k) + "=" + columns[k]);
    }
  }
  std::sort(f.begin(), f.end());
  f.erase(std::unique(f.begin(), f.end()), f.end());
  return f;
}

void build_vocabulary(FeatureSet& fs, const std::vector<conll::TaggedSequence>& data) {
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : data) {
    for (const auto& tok : seq.tokens) ++counts[text::fold_case(tok)];
  }
  fs.vocab.clear();
  for (const auto& [tok, n] : counts) {
    if (n >= fs.vocab_min_count) fs.vocab.insert(tok);
  }
}

MatrixXd forward_scores(const MatrixXd& emissions, const MatrixXd& transitions) {
  check_lattice(emissions, transitions);
  const Eigen::Index n = emissions.rows();
  const Eigen::Index labels = emissions.cols();
  MatrixXd alpha(n, labels);
  alpha.row(0) = emissions.row(0);
  Eigen::VectorXd tmp(labels);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index y = 0; y < labels; ++y) {
      tmp = alpha.row(t - 1).transpose() + transitions.col(y);
      alpha(t, y) = emissions(t, y) + log_sum_exp(tmp);
    }
  }
  return alpha;
}

MatrixXd backward_scores(const MatrixXd& emissions, const MatrixXd& transitions) {
  check_lattice(emissions, transitions);
  const Eigen::Index n = emissions.rows();
  const Eigen::Index labels = emissions.cols();
  MatrixXd beta = MatrixXd::Zero(n, labels);
  Eigen::VectorXd tmp(labels);
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    for (Eigen::Index y = 0; y < labels; ++y) {
      tmp = transitions.row(y).transpose() + emissions.row(t + 1).transpose() +
            beta.row(t + 1).transpose();
      beta(t, y) = log_sum_exp(tmp);
    }
  }
  return beta;
}

double log_partition(const MatrixXd& emissions, const MatrixXd& transitions) {
  MatrixXd alpha = forward_scores(emissions, transitions);
  return log_sum_exp(alpha.row(alpha.rows() - 1).transpose());
}

double log_partition_backward(const MatrixXd& emissions, const MatrixXd& transitions) {
  MatrixXd beta = backward_scores(emissions, transitions);
  return log_sum_exp((emissions.row(0) + beta.row(0)).transpose());
}

MatrixXd marginals(const MatrixXd& emissions, const MatrixXd& transitions) {
  MatrixXd alpha = forward_scores(emissions, transitions);
  MatrixXd beta = backward_scores(emissions, transitions);
  const double log_z = log_sum_exp(alpha.row(alpha.rows() - 1).transpose());
  return (alpha + beta).array().unaryExpr([log_z](double v) { return std::exp(v - log_z); });
}

double path_score(const MatrixXd& emissions, const MatrixXd& transitions, std::span<const int> path) {
  if (static_cast<Eigen::Index>(path.size()) != emissions.rows()) {
    throw DataError("path length does not match the sequence");
  }
  double s = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    s += emissions(static_cast<Eigen::Index>(t), path[t]);
    if (t > 0) s += transitions(path[t - 1], path[t]);
  }
  return s;
}

std::vector<int> viterbi_path(const MatrixXd& emissions, const MatrixXd& transitions) {
  check_lattice(emissions, transitions);
  const Eigen::Index n = emissions.rows();
  const Eigen::Index labels = emissions.cols();
  MatrixXd best(n, labels);
  Eigen::MatrixXi back = Eigen::MatrixXi::Zero(n, labels);
  best.row(0) = emissions.row(0);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index y = 0; y < labels; ++y) {
      int arg = 0;
      double top = best(t - 1, 0) + transitions(0, y);
      for (Eigen::Index p = 1; p < labels; ++p) {
        const double v = best(t - 1, p) + transitions(p, y);
        if (v > top) {
          top = v;
          arg = static_cast<int>(p);
        }
      }
      best(t, y) = top + emissions(t, y);
      back(t, y) = arg;
    }
  }
  std::vector<int> path(static_cast<std::size_t>(n));
  int last = 0;
  for (Eigen::Index y = 1; y < labels; ++y) {
    if (best(n - 1, y) > best(n - 1, last)) last = static_cast<int>(y);
  }
  path.back() = last;
  for (Eigen::Index t = n - 1; t > 0; --t) {
    path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
  }
  return path;
}

CrfModel::CrfModel(std::vector<std::string> labels, FeatureSet features,
                   std::vector<std::string> feature_names, double l2)
    : labels_(std::move(labels)),
      features_(std::move(features)),
      feature_names_(std::move(feature_names)),
      l2_(l2) {
  if (labels_.empty()) throw DataError("CRF model needs at least one label");
  if (!(l2_ >= 0.0)) throw DataError("CRF L2 strength must be >= 0");
  for (std::size_t i = 0; i < feature_names_.size(); ++i) {
    if (!feature_index_.emplace(feature_names_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate CRF feature '" + feature_names_[i] + "'");
    }
  }
  const auto l = static_cast<Eigen::Index>(labels_.size());
  emission_ = MatrixXd::Zero(static_cast<Eigen::Index>(feature_names_.size()), l);
  transition_ = MatrixXd::Zero(l, l);
}

int CrfModel::feature_id(std::string_view name) const {
  auto it = feature_index_.find(std::string(name));
  return it == feature_index_.end() ? -1 : it->second;
}

int CrfModel::label_id(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  return it == labels_.end() ? -1 : static_cast<int>(it - labels_.begin());
}

CompiledSequence CrfModel::compile(std::span<const std::string> tokens,
                                   const std::vector<std::vector<std::string>>& columns) const {
  CompiledSequence out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    std::span<const std::string> cols;
    if (t < columns.size()) cols = columns[t];
    for (const auto& name : extract_features(features_, tokens, t, cols)) {
      const int id = feature_id(name);
      if (id >= 0) out[t].push_back(id);
    }
  }
  return out;
}

MatrixXd CrfModel::emissions(const CompiledSequence& seq) const {
  MatrixXd e = MatrixXd::Zero(static_cast<Eigen::Index>(seq.size()), emission_.cols());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    for (int f : seq[t]) e.row(static_cast<Eigen::Index>(t)) += emission_.row(f);
  }
  return e;
}

json CrfModel::to_json() const {
  json emission = json::array();
  for (Eigen::Index f = 0; f < emission_.rows(); ++f) {
    std::vector<double> row;
    for (Eigen::Index y = 0; y < emission_.cols(); ++y) row.push_back(emission_(f, y));
    emission.push_back(row);
  }
  json transition = json::array();
  for (Eigen::Index p = 0; p < transition_.rows(); ++p) {
    std::vector<double> row;
    for (Eigen::Index y = 0; y < transition_.cols(); ++y) row.push_back(transition_(p, y));
    transition.push_back(row);
  }
  return json{{"format", "rolefuse-crf"},
              {"version", kModelVersion},
              {"labels", labels_},
              {"l2", l2_},
              {"feature_set", features_},
              {"features", feature_names_},
              {"emission", std::move(emission)},
              {"transition", std::move(transition)}};
}

CrfModel CrfModel::from_json(const json& j) {
  try {
    if (j.at("format") != "rolefuse-crf") throw DataError("not a CRF model file");
    if (j.at("version").get<int>() != kModelVersion) {
      throw DataError("unsupported CRF model version " + j.at("version").dump());
    }
    CrfModel model(j.at("labels").get<std::vector<std::string>>(),
                   j.at("feature_set").get<FeatureSet>(),
                   j.at("features").get<std::vector<std::string>>(), j.at("l2").get<double>());
    const auto& emission = j.at("emission");
    if (emission.size() != model.num_features()) throw DataError("emission row count mismatch");
    for (std::size_t f = 0; f < emission.size(); ++f) {
      const auto row = emission[f].get<std::vector<double>>();
      if (row.size() != model.num_labels()) throw DataError("emission column count mismatch");
      for (std::size_t y = 0; y < row.size(); ++y) {
        model.emission_(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(y)) = row[y];
      }
    }
    const auto& transition = j.at("transition");
    if (transition.size() != model.num_labels()) throw DataError("transition shape mismatch");
    for (std::size_t p = 0; p < transition.size(); ++p) {
      const auto row = transition[p].get<std::vector<double>>();
      if (row.size() != model.num_labels()) throw DataError("transition shape mismatch");
      for (std::size_t y = 0; y < row.size(); ++y) {
        model.transition_(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(y)) = row[y];
      }
    }
    if (!model.emission_.allFinite() || !model.transition_.allFinite()) {
      throw DataError("CRF model contains non-finite weights");
    }
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed CRF model: ") + e.what());
  }
}

double log_partition(const CrfModel& model, std::span<const std::string> tokens,
                     const std::vector<std::vector<std::string>>& columns) {
  if (tokens.empty()) throw DataError("log_partition of an empty sequence");
  return log_partition(model.emissions(model.compile(tokens, columns)),
                       model.transition_weights());
}

std::vector<std::string> viterbi(const CrfModel& model, std::span<const std::string> tokens,
                                 const std::vector<std::vector<std::string>>& columns) {
  if (tokens.empty()) return {};
  const auto path =
      viterbi_path(model.emissions(model.compile(tokens, columns)), model.transition_weights());
  std::vector<std::string> tags;
  tags.reserve(path.size());
  for (int y : path) tags.push_back(model.labels()[static_cast<std::size_t>(y)]);
  return tags;
}

Objective objective(const CrfModel& model, const std::vector<Example>& data) {
  const MatrixXd& w = model.emission_weights();
  const MatrixXd& a = model.transition_weights();
  Objective obj;
  obj.emission_grad = MatrixXd::Zero(w.rows(), w.cols());
  obj.transition_grad = MatrixXd::Zero(a.rows(), a.cols());
  double loglik = 0.0;
  for (const auto& ex : data) {
    if (ex.features.empty()) continue;
    const MatrixXd e = model.emissions(ex.features);
    const MatrixXd alpha = forward_scores(e, a);
    const MatrixXd beta = backward_scores(e, a);
    const Eigen::Index n = e.rows();
    const double log_z = log_sum_exp(alpha.row(n - 1).transpose());
    loglik += path_score(e, a, ex.labels) - log_z;
    for (Eigen::Index t = 0; t < n; ++t) {
      const auto& feats = ex.features[static_cast<std::size_t>(t)];
      const int gold = ex.labels[static_cast<std::size_t>(t)];
      Eigen::RowVectorXd mu =
          (alpha.row(t) + beta.row(t)).array().unaryExpr([log_z](double v) {
            return std::exp(v - log_z);
          });
      for (int f : feats) {
        obj.emission_grad.row(f) -= mu;
        obj.emission_grad(f, gold) += 1.0;
      }
      if (t == 0) continue;
      obj.transition_grad(ex.labels[static_cast<std::size_t>(t - 1)], gold) += 1.0;
      for (Eigen::Index p = 0; p < a.rows(); ++p) {
        for (Eigen::Index y = 0; y < a.cols(); ++y) {
          obj.transition_grad(p, y) -=
              std::exp(alpha(t - 1, p) + a(p, y) + e(t, y) + beta(t, y) - log_z);
        }
      }
    }
  }
  const double l2 = model.l2();
  obj.value = loglik - 0.5 * l2 * (w.squaredNorm() + a.squaredNorm());
  obj.emission_grad -= l2 * w;
  obj.transition_grad -= l2 * a;
  return obj;
}

TrainResult train_crf(const std::vector<conll::TaggedSequence>& data, FeatureSet features,
                      const TrainOptions& options) {
  if (data.empty()) throw DataError("train_crf needs at least one sequence");
  if (!(options.l2 >= 0.0)) throw DataError("L2 strength must be >= 0");

  std::set<std::string> seen_tags;
  for (const auto& seq : data) {
    if (seq.tokens.size() != seq.tags.size()) {
      throw DataError("sequence '" + seq.meme_id + "': token/tag length mismatch");
    }
    seen_tags.insert(seq.tags.begin(), seq.tags.end());
  }
  const auto& canon = conll::canonical_tags();
  std::vector<std::string> labels;
  if (std::all_of(seen_tags.begin(), seen_tags.end(), [&](const std::string& t) {
        return std::find(canon.begin(), canon.end(), t) != canon.end();
      })) {
    labels = canon;
  } else {
    labels.assign(seen_tags.begin(), seen_tags.end());
  }

  if (features.vocabulary) build_vocabulary(features, data);
  std::set<std::string> names;
  for (const auto& seq : data) {
    for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
      std::span<const std::string> cols;
      if (t < seq.columns.size()) cols = seq.columns[t];
      for (auto& f : extract_features(features, seq.tokens, t, cols)) names.insert(std::move(f));
    }
  }
  CrfModel model(labels, std::move(features), {names.begin(), names.end()}, options.l2);

  std::vector<Example> examples;
  examples.reserve(data.size());
  for (const auto& seq : data) {
    Example ex;
    ex.features = model.compile(seq.tokens, seq.columns);
    for (const auto& tag : seq.tags) ex.labels.push_back(model.label_id(tag));
    examples.push_back(std::move(ex));
  }

  TrainResult result{std::move(model), {}};
  CrfModel& m = result.model;
  Objective cur = objective(m, examples);
  if (!std::isfinite(cur.value)) {
    throw NumericError("CRF objective is non-finite at initialization (value " +
                       std::to_string(cur.value) + ")");
  }
  result.objective_trace.push_back(cur.value);

  double step = 1.0;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const double g2 = cur.emission_grad.squaredNorm() + cur.transition_grad.squaredNorm();
    if (!std::isfinite(g2)) {
      throw NumericError("CRF gradient is non-finite at iteration " + std::to_string(iter));
    }
    if (std::sqrt(g2) < options.gradient_tolerance) break;
    const MatrixXd w0 = m.emission_weights();
    const MatrixXd a0 = m.transition_weights();
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      m.emission_weights() = w0 + step * cur.emission_grad;
      m.transition_weights() = a0 + step * cur.transition_grad;
      Objective next = objective(m, examples);
      if (std::isfinite(next.value) && next.value >= cur.value + 1e-4 * step * g2) {
        cur = std::move(next);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      m.emission_weights() = w0;
      m.transition_weights() = a0;
      break;
    }
    result.objective_trace.push_back(cur.value);
    step *= 2.0;
  }
  return result;
}

void save_model(const std::filesystem::path& path, const CrfModel& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CRF model '" + path.string() + "'");
  out << model.to_json().dump(1) << '\n';
}

CrfModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CRF model '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("CRF model '" + path.string() + "': " + e.what());
  }
  return CrfModel::from_json(j);
}

}  // namespace rolefuse::crf
