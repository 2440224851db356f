#pragma once

// Task heads over pooled prototypes and the training objectives:
// cross-entropy, Cox negative log partial likelihood, prototype supervision,
// and their weighted sum.

#include "hpdp/numerics.hpp"

#include <span>
#include <vector>

namespace hpdp {

struct SurvivalRecord {
  double time = 1.0;  // > 0
  bool event = true;  // false = censored
  friend bool operator==(const SurvivalRecord&, const SurvivalRecord&) = default;
};

template <typename S>
struct TaskHead {
  Mat<S> weights;  // D x C_out
  Mat<S> bias;     // 1 x C_out
};

// Mean over prototype rows, then the linear head. Returns 1 x C_out.
template <typename S>
Mat<S> pool_and_predict(const Mat<S>& m_final, const TaskHead<S>& head) {
  require_shape(m_final.rows() >= 1, "pool_and_predict: no prototype rows");
  return linear(m_final.colwise().mean(), head.weights, head.bias);
}

template <typename S>
struct HeadGrads {
  Mat<S> dm;  // K x D
  TaskHead<S> d_head;
};

template <typename S>
HeadGrads<S> pool_and_predict_backward(const Mat<S>& m_final, const TaskHead<S>& head, const Mat<S>& d_out) {
  const Mat<S> pooled = m_final.colwise().mean();
  auto lg = linear_backward(pooled, head.weights, d_out);
  HeadGrads<S> g;
  g.dm = lg.dx.replicate(m_final.rows(), 1) / S(m_final.rows());
  g.d_head = {std::move(lg.dw), std::move(lg.db)};
  return g;
}

// Mean over rows of -log softmax(logits)[label].
double cross_entropy(const MatrixXd& logits, std::span<const int> labels);
// d(cross_entropy)/d(logits), already divided by the batch size.
MatrixXd cross_entropy_grad(const MatrixXd& logits, std::span<const int> labels);

inline constexpr double kCoxEps = 1e-8;

struct CoxResult {
  double loss = 0.0;
  bool no_events = false;  // loss and gradient are zero in that case
  VectorXd grad;           // d loss / d risks
};

// -(1/B) sum_{i: event} [h_i - log(sum_{j: t_j >= t_i} exp(h_j) + eps)]
CoxResult cox_nll(std::span<const double> risks, std::span<const SurvivalRecord> records, double eps = kCoxEps);

inline constexpr double kProtoTau = 0.07;

struct ProtoResult {
  double loss = 0.0;
  MatrixXd d_prior;  // gradient w.r.t. the learnable experts
};

// Cross-entropy of each expert against its own teacher over the cosine
// similarity matrix / tau.
ProtoResult proto_supervision(const MatrixXd& p_prior, const MatrixXd& p_teacher, double tau);

struct LossBreakdown {
  double task_loss = 0.0;
  double proto_loss = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

inline double total_loss(double task, double proto, double lambda) {
  if (lambda < 0.0) throw ConfigError("total_loss: lambda must be >= 0");
  return task + lambda * proto;
}

inline LossBreakdown make_breakdown(double task, double proto, double lambda) {
  return {task, proto, total_loss(task, proto, lambda), lambda};
}

}  // namespace hpdp
