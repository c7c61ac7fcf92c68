#pragma once

// Reference implementations written independently of the library, used to
// check it.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "rolefuse/role.hpp"

namespace rolefuse::testing {

/// y_k = sum_ij x_i W_ijk z_j with W stored flat, index (i*J + j)*K + k.
inline std::vector<double> bilinear_reference(const std::vector<double>& w, std::size_t I,
                                              std::size_t J, std::size_t K,
                                              const std::vector<double>& x,
                                              const std::vector<double>& z) {
  std::vector<double> y(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
      for (std::size_t j = 0; j < J; ++j) acc += x[i] * w[(i * J + j) * K + k] * z[j];
    }
    y[k] = acc;
  }
  return y;
}

/// Every label path of length n over L labels, in lexicographic order.
inline void for_each_path(std::size_t n, std::size_t labels,
                          const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> path(n, 0);
  while (true) {
    fn(path);
    std::size_t pos = n;
    while (pos > 0) {
      --pos;
      if (++path[pos] < static_cast<int>(labels)) break;
      path[pos] = 0;
      if (pos == 0) return;
    }
    if (n == 0) return;
  }
}

inline double brute_path_score(const Eigen::MatrixXd& em, const Eigen::MatrixXd& tr,
                               const std::vector<int>& path) {
  double s = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    s += em(static_cast<Eigen::Index>(t), path[t]);
    if (t > 0) s += tr(path[t - 1], path[t]);
  }
  return s;
}

/// Z by summing exp(score) over all paths.
inline double brute_partition(const Eigen::MatrixXd& em, const Eigen::MatrixXd& tr) {
  double z = 0.0;
  for_each_path(static_cast<std::size_t>(em.rows()), static_cast<std::size_t>(em.cols()),
                [&](const std::vector<int>& p) { z += std::exp(brute_path_score(em, tr, p)); });
  return z;
}

/// Best score and the first path (lexicographically) achieving it.
inline std::pair<double, std::vector<int>> brute_best(const Eigen::MatrixXd& em,
                                                      const Eigen::MatrixXd& tr) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> arg;
  for_each_path(static_cast<std::size_t>(em.rows()), static_cast<std::size_t>(em.cols()),
                [&](const std::vector<int>& p) {
                  const double s = brute_path_score(em, tr, p);
                  if (s > best) {
                    best = s;
                    arg = p;
                  }
                });
  return {best, arg};
}

/// Per-class scores counted straight from label pairs.
struct MetricOracle {
  double accuracy = 0.0;
  std::array<double, kNumRoles> precision{};
  std::array<double, kNumRoles> recall{};
  std::array<double, kNumRoles> f1{};
  double macro_f1 = 0.0;
};

inline MetricOracle metric_oracle(const std::vector<Role>& gold, const std::vector<Role>& pred) {
  MetricOracle m;
  double correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == pred[i] ? 1 : 0;
  m.accuracy = correct / static_cast<double>(gold.size());
  for (Role r : kAllRoles) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (pred[i] == r && gold[i] == r) tp += 1;
      if (pred[i] == r && gold[i] != r) fp += 1;
      if (pred[i] != r && gold[i] == r) fn += 1;
    }
    const auto k = index(r);
    m.precision[k] = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    m.recall[k] = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.f1[k] = m.precision[k] + m.recall[k] > 0
                  ? 2 * m.precision[k] * m.recall[k] / (m.precision[k] + m.recall[k])
                  : 0.0;
    m.macro_f1 += m.f1[k] / kNumRoles;
  }
  return m;
}

/// Central difference of f at every coordinate of `x`.
inline Eigen::VectorXd numeric_gradient(const std::function<double()>& f, double* x, Eigen::Index n,
                                        double h = 1e-5) {
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-10});
  return (a - b).norm() / scale;
}

}  // namespace rolefuse::testing
