#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "rolefuse/conll.hpp"

namespace rolefuse::crf {

/// Enabled feature templates plus the word lists some of them consult. The
/// template set is fixed once a model is trained.
struct FeatureSet {
  bool identity = true;
  bool lowercase = true;
  bool length_bucket = true;
  bool trigrams = true;
  bool digit = true;
  bool special = true;
  bool shape = true;
  bool vocabulary = true;
  bool name_list = true;
  bool neighbors = true;
  bool columns = true;

  /// Case-folded tokens seen at least `vocab_min_count` times in training.
  std::set<std::string> vocab;
  std::size_t vocab_min_count = 2;
  /// Case-folded name list (one entry per token).
  std::set<std::string> names;

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

void to_json(nlohmann::json& j, const FeatureSet& fs);
void from_json(const nlohmann::json& j, FeatureSet& fs);

/// "1", "2", "3", "4-6" or "7+" by code-point count.
std::string length_bucket(std::string_view token);

/// Upper-case letters become X, lower-case x, digits d; anything else is kept.
std::string token_shape(std::string_view token);

/// Feature strings firing at `position`, sorted and unique. `columns` holds
/// optional pre-annotations for that position.
std::vector<std::string> extract_features(const FeatureSet& fs, std::span<const std::string> tokens,
                                          std::size_t position,
                                          std::span<const std::string> columns = {});

/// Fills fs.vocab from the training tokens using fs.vocab_min_count.
void build_vocabulary(FeatureSet& fs, const std::vector<conll::TaggedSequence>& data);

// Lattice algorithms over an n x L emission score matrix and an L x L
// transition matrix (row = previous label).

/// alpha(t, y) = log of the summed scores of all prefixes ending in y at t.
Eigen::MatrixXd forward_scores(const Eigen::MatrixXd& emissions, const Eigen::MatrixXd& transitions);
/// beta(t, y) = log of the summed scores of all suffixes after t given y at t.
Eigen::MatrixXd backward_scores(const Eigen::MatrixXd& emissions, const Eigen::MatrixXd& transitions);

double log_partition(const Eigen::MatrixXd& emissions, const Eigen::MatrixXd& transitions);
double log_partition_backward(const Eigen::MatrixXd& emissions,
                              const Eigen::MatrixXd& transitions);

/// Per-position posterior label marginals (n x L).
Eigen::MatrixXd marginals(const Eigen::MatrixXd& emissions, const Eigen::MatrixXd& transitions);

double path_score(const Eigen::MatrixXd& emissions, const Eigen::MatrixXd& transitions,
                  std::span<const int> path);

/// Highest-scoring label path; ties go to the smaller label index.
std::vector<int> viterbi_path(const Eigen::MatrixXd& emissions, const Eigen::MatrixXd& transitions);

/// Feature ids per position, compiled against a model's feature index.
using CompiledSequence = std::vector<std::vector<int>>;

class CrfModel {
 public:
  CrfModel() = default;
  CrfModel(std::vector<std::string> labels, FeatureSet features,
           std::vector<std::string> feature_names, double l2);

  const std::vector<std::string>& labels() const { return labels_; }
  const FeatureSet& feature_set() const { return features_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  double l2() const { return l2_; }
  std::size_t num_labels() const { return labels_.size(); }
  std::size_t num_features() const { return feature_names_.size(); }

  /// num_features x num_labels.
  Eigen::MatrixXd& emission_weights() { return emission_; }
  const Eigen::MatrixXd& emission_weights() const { return emission_; }
  /// num_labels x num_labels, row = previous label.
  Eigen::MatrixXd& transition_weights() { return transition_; }
  const Eigen::MatrixXd& transition_weights() const { return transition_; }

  int feature_id(std::string_view name) const;
  int label_id(std::string_view label) const;

  CompiledSequence compile(std::span<const std::string> tokens,
                           const std::vector<std::vector<std::string>>& columns = {}) const;
  Eigen::MatrixXd emissions(const CompiledSequence& seq) const;

  nlohmann::json to_json() const;
  static CrfModel from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> labels_;
  FeatureSet features_;
  std::vector<std::string> feature_names_;
  std::unordered_map<std::string, int> feature_index_;
  Eigen::MatrixXd emission_;
  Eigen::MatrixXd transition_;
  double l2_ = 1.0;
};

/// log Z for a token sequence. Throws DataError on an empty sequence.
double log_partition(const CrfModel& model, std::span<const std::string> tokens,
                     const std::vector<std::vector<std::string>>& columns = {});

std::vector<std::string> viterbi(const CrfModel& model, std::span<const std::string> tokens,
                                 const std::vector<std::vector<std::string>>& columns = {});

struct TrainOptions {
  double l2 = 1.0;
  int max_iterations = 200;
  std::uint64_t seed = 0;
  /// Stops once the gradient norm falls below this value.
  double gradient_tolerance = 1e-5;
};

struct Example {
  CompiledSequence features;
  std::vector<int> labels;
};

/// Regularized conditional log-likelihood and its gradient with respect to
/// (emission, transition) weights.
struct Objective {
  double value = 0.0;
  Eigen::MatrixXd emission_grad;
  Eigen::MatrixXd transition_grad;
};

Objective objective(const CrfModel& model, const std::vector<Example>& data);

struct TrainResult {
  CrfModel model;
  /// Objective after each accepted step, starting with the initial value.
  std::vector<double> objective_trace;
};

/// Full-batch gradient ascent with backtracking line search.
TrainResult train_crf(const std::vector<conll::TaggedSequence>& data, FeatureSet features,
                      const TrainOptions& options);

void save_model(const std::filesystem::path& path, const CrfModel& model);
CrfModel load_model(const std::filesystem::path& path);

}  // namespace rolefuse::crf
