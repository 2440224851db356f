#pragma once

// Dual-path prototype routing and attentive aggregation.
//
//   prior path     A_prior = softmax(cos(H, P_prior) / tau_cos)     (N x K_sup)
//   adaptive path  A_adapt = softmax(H P_adapt^T / tau_dot)          (N x K_free)
//   aggregation    M       = [A_prior, A_adapt]^T H                  ((K_sup+K_free) x D)
//
// A_total rows sum to 2 when both paths are present; M is the raw weighted
// sum of instances, so its scale grows with the bag size.

#include "hpdp/numerics.hpp"

namespace hpdp {

template <typename S>
struct ExpertBank {
  Mat<S> p_prior;  // K_sup x D
  Mat<S> p_adapt;  // K_free x D, may have zero rows
  S tau_cos = S(0.1);
  S tau_dot = S(1);

  Eigen::Index k_sup() const { return p_prior.rows(); }
  Eigen::Index k_free() const { return p_adapt.rows(); }
  Eigen::Index k_total() const { return p_prior.rows() + p_adapt.rows(); }
};

template <typename S>
struct AttentionMap {
  Mat<S> a_prior;
  Mat<S> a_adapt;
  Mat<S> a_total;
};

template <typename S>
void validate(const ExpertBank<S>& bank, Eigen::Index d) {
  if (bank.k_sup() < 1) throw ConfigError("ExpertBank: K_sup must be >= 1");
  if (!(bank.tau_cos > S(0)) || !(bank.tau_dot > S(0)))
    throw ConfigError("ExpertBank: temperatures must be positive");
  require_shape(bank.p_prior.cols() == d, "ExpertBank: prior experts have " + std::to_string(bank.p_prior.cols()) +
                                              " columns, features have " + std::to_string(d));
  require_shape(bank.k_free() == 0 || bank.p_adapt.cols() == d, "ExpertBank: adaptive expert width mismatch");
}

template <typename S>
Mat<S> route_prior(const Mat<S>& h, const ExpertBank<S>& bank) {
  validate(bank, h.cols());
  return softmax_rows(cosine_sim_matrix(h, bank.p_prior), bank.tau_cos);
}

template <typename S>
Mat<S> route_adaptive(const Mat<S>& h, const ExpertBank<S>& bank) {
  validate(bank, h.cols());
  if (bank.k_free() == 0) return Mat<S>(h.rows(), 0);
  return softmax_rows(h * bank.p_adapt.transpose(), bank.tau_dot);
}

template <typename S>
AttentionMap<S> route(const Mat<S>& h, const ExpertBank<S>& bank) {
  AttentionMap<S> att;
  att.a_prior = route_prior(h, bank);
  att.a_adapt = route_adaptive(h, bank);
  att.a_total.resize(h.rows(), bank.k_total());
  att.a_total.leftCols(bank.k_sup()) = att.a_prior;
  if (bank.k_free() > 0) att.a_total.rightCols(bank.k_free()) = att.a_adapt;
  return att;
}

// M = A_total^T H
template <typename S>
Mat<S> aggregate(const AttentionMap<S>& att, const Mat<S>& h) {
  require_shape(att.a_total.rows() == h.rows(), "aggregate: attention has " + std::to_string(att.a_total.rows()) +
                                                    " rows, H has " + std::to_string(h.rows()));
  return att.a_total.transpose() * h;
}

template <typename S>
struct MapsGrads {
  Mat<S> dh;
  Mat<S> d_prior;
  Mat<S> d_adapt;
};

// Backward through routing and aggregation for upstream dM.
template <typename S>
MapsGrads<S> maps_backward(const Mat<S>& h, const ExpertBank<S>& bank, const AttentionMap<S>& att, const Mat<S>& dm) {
  const Eigen::Index ks = bank.k_sup();
  const Eigen::Index kf = bank.k_free();
  MapsGrads<S> g;
  // direct path through M = A^T H
  g.dh = att.a_total * dm;
  const Mat<S> da = h * dm.transpose();  // N x (ks + kf)

  const Mat<S> d_cos = softmax_rows_backward(att.a_prior, da.leftCols(ks), bank.tau_cos);
  const auto cg = cosine_sim_matrix_backward(h, bank.p_prior, d_cos);
  g.dh += cg.da;
  g.d_prior = cg.db;

  if (kf > 0) {
    const Mat<S> d_dot = softmax_rows_backward(att.a_adapt, da.rightCols(kf), bank.tau_dot);
    g.dh += d_dot * bank.p_adapt;
    g.d_adapt = d_dot.transpose() * h;
  } else {
    g.d_adapt = Mat<S>(0, h.cols());
  }
  return g;
}

}  // namespace hpdp
