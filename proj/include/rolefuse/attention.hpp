#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace rolefuse::fusion {

/// Scaled dot-product attention of an entity query over a context vector cut
/// into `slots` equal slices.
struct AttentionParams {
  Eigen::MatrixXd query;  ///< entity_dim x attention_dim
  Eigen::MatrixXd key;    ///< slot_dim x attention_dim
  Eigen::MatrixXd value;  ///< slot_dim x attention_dim
  std::size_t slots = 1;

  std::size_t attention_dim() const { return static_cast<std::size_t>(query.cols()); }
  std::size_t slot_dim() const { return static_cast<std::size_t>(key.rows()); }
};

struct AttentionOutput {
  Eigen::VectorXd output;   ///< attention_dim
  Eigen::VectorXd weights;  ///< one per slot, sums to 1
};

/// Throws DataError when the context length is not slots * slot_dim or the
/// entity length does not match the query projection.
AttentionOutput attend(const AttentionParams& params, const Eigen::VectorXd& entity,
                       const Eigen::VectorXd& context);

struct AttentionGrad {
  Eigen::MatrixXd query;
  Eigen::MatrixXd key;
  Eigen::MatrixXd value;
};

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
void attend_backward(const AttentionParams& params, const Eigen::VectorXd& entity,
                     const Eigen::VectorXd& context, const AttentionOutput& forward,
                     const Eigen::VectorXd& output_grad, AttentionGrad& grad);

}  // namespace rolefuse::fusion
