#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rolefuse::fusion {

/// Dense I x J x K interaction tensor: y_k = sum_ij T(i, j, k) x1_i x2_j.
class BilinearTensor {
 public:
  BilinearTensor(std::size_t i, std::size_t j, std::size_t k);

  std::size_t dim1() const { return i_; }
  std::size_t dim2() const { return j_; }
  std::size_t dim3() const { return k_; }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * j_ + j) * k_ + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * j_ + j) * k_ + k];
  }

  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t i_, j_, k_;
  std::vector<double> data_;
};

/// Reference triple loop. Throws DataError on a shape mismatch.
std::vector<double> bilinear_contract(const BilinearTensor& t, std::span<const double> x1,
                                      std::span<const double> x2);

}  // namespace rolefuse::fusion
