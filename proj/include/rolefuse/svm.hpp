#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "rolefuse/role.hpp"

namespace rolefuse::svm {

struct SvmOptions {
  double c = 1.0;  ///< inverse regularization strength, as in libsvm
  int epochs = 200;
  std::uint64_t seed = 0;
};

/// One-vs-rest linear max-margin classifier over the four roles.
struct LinearSvm {
  Eigen::MatrixXd weights;  ///< 4 x dim
  Eigen::VectorXd bias;     ///< 4
  /// Roles seen in training; absent roles are never predicted.
  std::array<bool, kNumRoles> present{};
  /// Per role: objective after each iteration, starting with the initial one.
  std::array<std::vector<double>, kNumRoles> objective_trace;

  std::array<double, kNumRoles> margins(const Eigen::VectorXd& x) const;
  /// Largest margin among present roles; ties go to the earlier role.
  Role predict(const Eigen::VectorXd& x) const;
};

/// lambda/2 |w|^2 + mean hinge loss, lambda = 1 / (C n). Labels are +1/-1.
double hinge_objective(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& x,
                       const std::vector<double>& y, double lambda);

/// Rows of `features` are examples. Throws DataError when fewer than two
/// roles are present.
LinearSvm train_linear_svm(const Eigen::MatrixXd& features, const std::vector<Role>& labels,
                           const SvmOptions& options);

}  // namespace rolefuse::svm
