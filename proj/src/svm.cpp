#include "rolefuse/svm.hpp"

#include <cmath>
#include <limits>

#include "rolefuse/error.hpp"

namespace rolefuse::svm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::array<double, kNumRoles> LinearSvm::margins(const VectorXd& x) const {
  std::array<double, kNumRoles> m{};
  for (std::size_t r = 0; r < kNumRoles; ++r) {
    m[r] = present[r] ? weights.row(static_cast<Index>(r)).dot(x) + bias(static_cast<Index>(r))
                      : -std::numeric_limits<double>::infinity();
  }
  return m;
}

Role LinearSvm::predict(const VectorXd& x) const {
  const auto m = margins(x);
  std::size_t best = 0;
  for (std::size_t r = 1; r < kNumRoles; ++r) {
    if (m[r] > m[best]) best = r;
  }
  return kAllRoles[best];
}

double hinge_objective(const VectorXd& w, double b, const MatrixXd& x, const std::vector<double>& y,
                       double lambda) {
  const VectorXd scores = x * w;
  double hinge = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    hinge += std::max(0.0, 1.0 - y[static_cast<std::size_t>(i)] * (scores(i) + b));
  }
  return 0.5 * lambda * w.squaredNorm() + hinge / static_cast<double>(x.rows());
}

namespace {

// Full-batch subgradient descent with step eta0 / sqrt(t). A step that would
// raise the objective is halved until it does not; if none helps the iterate
// stays, so the objective trace never increases.
void train_binary(const MatrixXd& x, const std::vector<double>& y, double lambda, int epochs,
                  VectorXd& w, double& b, std::vector<double>& trace) {
  const Index n = x.rows();
  w = VectorXd::Zero(x.cols());
  b = 0.0;
  const double mean_sq = x.rowwise().squaredNorm().mean();
  const double eta0 = 1.0 / (1.0 + mean_sq);
  double current = hinge_objective(w, b, x, y, lambda);
  trace.assign(1, current);
  for (int t = 1; t <= epochs; ++t) {
    const VectorXd scores = x * w;
    VectorXd gw = lambda * w;
    double gb = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double yi = y[static_cast<std::size_t>(i)];
      if (yi * (scores(i) + b) < 1.0) {
        gw -= (yi / static_cast<double>(n)) * x.row(i).transpose();
        gb -= yi / static_cast<double>(n);
      }
    }
    double eta = eta0 / std::sqrt(static_cast<double>(t));
    for (int halvings = 0; halvings < 30; ++halvings, eta *= 0.5) {
      const VectorXd w_next = w - eta * gw;
      const double b_next = b - eta * gb;
      const double next = hinge_objective(w_next, b_next, x, y, lambda);
      if (next <= current) {
        w = w_next;
        b = b_next;
        current = next;
        break;
      }
    }
    trace.push_back(current);
  }
}

}  // namespace

LinearSvm train_linear_svm(const MatrixXd& features, const std::vector<Role>& labels,
                           const SvmOptions& options) {
  if (features.rows() == 0) throw DataError("train_linear_svm needs at least one example");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DataError("feature/label count mismatch");
  }
  if (!(options.c > 0.0)) throw DataError("SVM C must be positive");
  if (!features.allFinite()) throw DataError("non-finite SVM feature");
  LinearSvm model;
  for (Role r : labels) model.present[index(r)] = true;
  int classes = 0;
  for (bool p : model.present) classes += p;
  if (classes < 2) throw DataError("train_linear_svm needs at least two classes");

  model.weights = MatrixXd::Zero(static_cast<Index>(kNumRoles), features.cols());
  model.bias = VectorXd::Zero(static_cast<Index>(kNumRoles));
  const double lambda = 1.0 / (options.c * static_cast<double>(features.rows()));
  for (Role r : kAllRoles) {
    const std::size_t ri = index(r);
    if (!model.present[ri]) continue;
    std::vector<double> y;
    y.reserve(labels.size());
    for (Role l : labels) y.push_back(l == r ? 1.0 : -1.0);
    VectorXd w;
    double b = 0.0;
    train_binary(features, y, lambda, options.epochs, w, b, model.objective_trace[ri]);
    model.weights.row(static_cast<Index>(ri)) = w.transpose();
    model.bias(static_cast<Index>(ri)) = b;
  }
  return model;
}

}  // namespace rolefuse::svm
