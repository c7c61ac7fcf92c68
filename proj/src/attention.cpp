#include "rolefuse/attention.hpp"

#include <cmath>
#include <string>

#include "rolefuse/error.hpp"

namespace rolefuse::fusion {

namespace {

void check_shapes(const AttentionParams& p, const Eigen::VectorXd& entity,
                  const Eigen::VectorXd& context) {
  if (p.slots == 0) throw DataError("attention needs at least one slot");
  if (static_cast<std::size_t>(context.size()) % p.slots != 0) {
    throw DataError("context length " + std::to_string(context.size()) +
                    " is not divisible by the slot count " + std::to_string(p.slots));
  }
  if (static_cast<std::size_t>(context.size()) / p.slots != p.slot_dim()) {
    throw DataError("context slot size does not match the key projection");
  }
  if (entity.size() != p.query.rows()) {
    throw DataError("entity length does not match the query projection");
  }
}

}  // namespace

AttentionOutput attend(const AttentionParams& p, const Eigen::VectorXd& entity,
                       const Eigen::VectorXd& context) {
  check_shapes(p, entity, context);
  const auto slot_dim = static_cast<Eigen::Index>(p.slot_dim());
  const auto slots = static_cast<Eigen::Index>(p.slots);
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.attention_dim()));
  const Eigen::VectorXd q = p.query.transpose() * entity;

  Eigen::VectorXd scores(slots);
  for (Eigen::Index s = 0; s < slots; ++s) {
    const auto slice = context.segment(s * slot_dim, slot_dim);
    scores(s) = scale * q.dot(p.key.transpose() * slice);
  }
  AttentionOutput out;
  out.weights = (scores.array() - scores.maxCoeff()).exp();
  out.weights /= out.weights.sum();
  out.output = Eigen::VectorXd::Zero(p.value.cols());
  for (Eigen::Index s = 0; s < slots; ++s) {
    out.output += out.weights(s) * (p.value.transpose() * context.segment(s * slot_dim, slot_dim));
  }
  return out;
}

void attend_backward(const AttentionParams& p, const Eigen::VectorXd& entity,
                     const Eigen::VectorXd& context, const AttentionOutput& fwd,
                     const Eigen::VectorXd& output_grad, AttentionGrad& grad) {
  const auto slot_dim = static_cast<Eigen::Index>(p.slot_dim());
  const auto slots = static_cast<Eigen::Index>(p.slots);
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.attention_dim()));
  const Eigen::VectorXd q = p.query.transpose() * entity;

  Eigen::VectorXd weight_grad(slots);
  for (Eigen::Index s = 0; s < slots; ++s) {
    const auto slice = context.segment(s * slot_dim, slot_dim);
    const Eigen::VectorXd v = p.value.transpose() * slice;
    weight_grad(s) = v.dot(output_grad);
    grad.value.noalias() += fwd.weights(s) * slice * output_grad.transpose();
  }
  // Softmax backward.
  const double mean = fwd.weights.dot(weight_grad);
  const Eigen::VectorXd score_grad = fwd.weights.array() * (weight_grad.array() - mean);

  Eigen::VectorXd q_grad = Eigen::VectorXd::Zero(q.size());
  for (Eigen::Index s = 0; s < slots; ++s) {
    const auto slice = context.segment(s * slot_dim, slot_dim);
    const Eigen::VectorXd k = p.key.transpose() * slice;
    q_grad += scale * score_grad(s) * k;
    grad.key.noalias() += (scale * score_grad(s)) * slice * q.transpose();
  }
  grad.query.noalias() += entity * q_grad.transpose();
}

}  // namespace rolefuse::fusion
