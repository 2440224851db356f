#include "hpdp/heads_losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hpdp {

namespace {

void check_labels(const MatrixXd& logits, std::span<const int> labels) {
  require_shape(static_cast<Eigen::Index>(labels.size()) == logits.rows(),
                "cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(logits.rows()) +
                    " rows");
  for (int y : labels)
    if (y < 0 || y >= logits.cols())
      throw InputError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(logits.cols()) + ")");
}

}  // namespace

double cross_entropy(const MatrixXd& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  if (logits.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff();
    const double lse = peak + std::log((logits.row(r).array() - peak).exp().sum());
    total += lse - logits(r, labels[r]);
  }
  return total / static_cast<double>(logits.rows());
}

MatrixXd cross_entropy_grad(const MatrixXd& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  MatrixXd g = softmax_rows(logits, 1.0);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) g(r, labels[r]) -= 1.0;
  return g / static_cast<double>(std::max<Eigen::Index>(1, logits.rows()));
}

CoxResult cox_nll(std::span<const double> risks, std::span<const SurvivalRecord> records, double eps) {
  const std::size_t b = risks.size();
  require_shape(records.size() == b, "cox_nll: risks and records differ in length");
  if (b == 0) throw InputError("cox_nll: empty batch");
  if (eps < 0.0) throw ConfigError("cox_nll: eps must be >= 0");

  CoxResult res;
  res.grad = VectorXd::Zero(static_cast<Eigen::Index>(b));
  if (std::none_of(records.begin(), records.end(), [](const SurvivalRecord& r) { return r.event; })) {
    res.no_events = true;
    return res;
  }

  const double peak = *std::max_element(risks.begin(), risks.end());
  const double eps_scaled = eps * std::exp(-peak);

  // Descending time; a tie group shares one risk-set sum that includes all members.
  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return records[i].time > records[j].time; });

  std::vector<double> denom(b, 0.0);  // per subject: sum over its risk set of exp(h - peak), + eps
  double running = 0.0;
  for (std::size_t g = 0; g < b;) {
    std::size_t e = g;
    while (e < b && records[order[e]].time == records[order[g]].time) running += std::exp(risks[order[e++]] - peak);
    for (std::size_t q = g; q < e; ++q) denom[order[q]] = running + eps_scaled;
    g = e;
  }

  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    if (records[i].event) loss -= (risks[i] - peak) - std::log(denom[i]);
  res.loss = loss / static_cast<double>(b);

  // Subject k belongs to the risk set of every event i with t_i <= t_k.
  // Sweep ascending time, accumulating 1/denom over events seen so far.
  double inv_sum = 0.0;
  for (std::size_t g = b; g > 0;) {
    std::size_t s = g;
    const double t = records[order[g - 1]].time;
    while (s > 0 && records[order[s - 1]].time == t) {
      if (records[order[s - 1]].event) inv_sum += 1.0 / denom[order[s - 1]];
      --s;
    }
    for (std::size_t q = s; q < g; ++q) {
      const std::size_t k = order[q];
      const double own = records[k].event ? 1.0 : 0.0;
      res.grad(static_cast<Eigen::Index>(k)) = -(own - std::exp(risks[k] - peak) * inv_sum) / static_cast<double>(b);
    }
    g = s;
  }
  return res;
}

ProtoResult proto_supervision(const MatrixXd& p_prior, const MatrixXd& p_teacher, double tau) {
  if (!(tau > 0.0)) throw ConfigError("proto_supervision: tau must be positive");
  require_shape(p_prior.rows() == p_teacher.rows() && p_prior.cols() == p_teacher.cols(),
                "proto_supervision: experts " + shape_str(p_prior.rows(), p_prior.cols()) + " vs teachers " +
                    shape_str(p_teacher.rows(), p_teacher.cols()));
  const Eigen::Index k = p_prior.rows();
  const MatrixXd sim = cosine_sim_matrix(p_prior, p_teacher);
  const MatrixXd probs = softmax_rows(sim, tau);

  ProtoResult res;
  double loss = 0.0;
  for (Eigen::Index r = 0; r < k; ++r) {
    const RowVectorXd z = sim.row(r) / tau;
    const double peak = z.maxCoeff();
    loss -= z(r) - (peak + std::log((z.array() - peak).exp().sum()));
  }
  res.loss = loss / static_cast<double>(k);

  const MatrixXd d_sim = (probs - MatrixXd::Identity(k, k)) / (tau * static_cast<double>(k));
  res.d_prior = cosine_sim_matrix_backward(p_prior, p_teacher, d_sim).da;
  return res;
}

}  // namespace hpdp
