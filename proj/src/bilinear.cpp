#include "rolefuse/bilinear.hpp"

#include <string>

#include "rolefuse/error.hpp"

namespace rolefuse::fusion {

BilinearTensor::BilinearTensor(std::size_t i, std::size_t j, std::size_t k)
    : i_(i), j_(j), k_(k), data_(i * j * k, 0.0) {}

std::vector<double> bilinear_contract(const BilinearTensor& t, std::span<const double> x1,
                                      std::span<const double> x2) {
  if (x1.size() != t.dim1() || x2.size() != t.dim2()) {
    throw DataError("bilinear_contract: inputs of size " + std::to_string(x1.size()) + " and " +
                    std::to_string(x2.size()) + " do not match a " + std::to_string(t.dim1()) +
                    "x" + std::to_string(t.dim2()) + "x" + std::to_string(t.dim3()) + " tensor");
  }
  std::vector<double> y(t.dim3(), 0.0);
  for (std::size_t k = 0; k < t.dim3(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.dim1(); ++i) {
      for (std::size_t j = 0; j < t.dim2(); ++j) acc += t(i, j, k) * x1[i] * x2[j];
    }
    y[k] = acc;
  }
  return y;
}

}  // namespace rolefuse::fusion
