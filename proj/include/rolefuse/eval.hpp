#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rolefuse/dataset.hpp"
#include "rolefuse/role.hpp"

namespace rolefuse::eval {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  ///< gold count
};

/// Confusion matrix (gold rows, predicted columns) and derived scores. The
/// first four classes are the roles; token-level reports add "O" as a fifth
/// class that counts toward accuracy but not toward the macro averages. A
/// zero denominator scores 0.
struct EvalReport {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t total = 0;
  double accuracy = 0.0;
  std::array<ClassScores, kNumRoles> per_role{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;

  nlohmann::json to_json() const;
  /// Aligned text table, columns Acc P R F1, two decimals.
  std::string to_table() const;
};

/// Builds a report from a square confusion matrix whose first four classes
/// are the roles in Role order.
EvalReport report_from_confusion(std::vector<std::string> classes,
                                 std::vector<std::vector<std::size_t>> confusion);

/// Throws DataError on a length mismatch or empty input.
EvalReport evaluate(const std::vector<Role>& gold, const std::vector<Role>& pred);

/// Token-level scores over BIO tags mapped to roles (B-X, I-X -> X).
EvalReport sequence_evaluate(const std::vector<std::vector<std::string>>& gold,
                             const std::vector<std::vector<std::string>>& pred);

/// Always predicts the most frequent training role (ties: earlier role).
class MajorityBaseline {
 public:
  explicit MajorityBaseline(Role role) : role_(role) {}
  Role operator()() const { return role_; }
  Role role() const { return role_; }

 private:
  Role role_;
};

MajorityBaseline majority_baseline(const RoleCounts& train_counts);

/// Gold labels for a split given only its role counts, in role order.
std::vector<Role> labels_from_counts(const RoleCounts& counts);

}  // namespace rolefuse::eval
