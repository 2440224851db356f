#pragma once

// The full per-bag pipeline and its hand-written backward pass.
//
//   F = X + relu(X W1 + b1) W2 + b2               residual MLP projector
//   H = F + SPE(coords)                            (toggle spe)
//   M = A_total^T H  |  mean_rows(H)               (toggle maps)
//   M_final = HCMA(M, text)                        (toggle hcma)
//           | M + (text W_t + b_t)                 (text without hcma)
//           | M
//   out = mean_rows(M_final) W_head + b_head
//
// Only the arrays used by the enabled components are part of ModelParams.

#include "hpdp/config.hpp"
#include "hpdp/hcma.hpp"
#include "hpdp/heads_losses.hpp"
#include "hpdp/maps.hpp"
#include "hpdp/synthdata.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hpdp {

struct ModelParams {
  Toggles active;

  MatrixXd proj_w1, proj_b1, proj_w2, proj_b2;
  MatrixXd prior, adapt;
  FilmGenerator<double> film;
  LayerNormParams<double> ln_mod, ln_out;
  MhaWeights<double> mha;
  MatrixXd text_w, text_b;
  TaskHead<double> head;

  bool has_experts() const { return active.maps; }
  bool has_alignment() const { return active.hcma; }
  bool has_text_fusion() const { return active.text && !active.hcma; }

  // (name, array) for every active array in a fixed order.
  std::vector<std::pair<std::string, MatrixXd*>> arrays();
  std::vector<std::pair<std::string, const MatrixXd*>> arrays() const;

  template <class F>
  void for_each(F&& f) {
    for (auto& [n, m] : arrays()) f(n, *m);
  }
  template <class F>
  void for_each(F&& f) const {
    for (const auto& [n, m] : arrays()) f(n, *m);
  }

  Eigen::Index parameter_count() const;
  ModelParams zeros_like() const;
  // this += scale * other
  void add_scaled(const ModelParams& other, double scale);
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&);
};

// Scalar shapes the model needs beyond TrainConfig.
struct ModelShape {
  int input_dim = 32;
  int out_dim = 2;  // classes, or 1 for survival
};

// Rows L2-normalized; the form in which teachers anchor the experts.
MatrixXd normalized_teachers(const MatrixXd& teachers);

// Seeded initialization (stream "init" of cfg.seed). Teachers are required
// when maps is enabled and must be k_sup x dim.
ModelParams init_params(const TrainConfig& cfg, const ModelShape& shape, const MatrixXd& teachers);

struct BagCache {
  MatrixXd x, hidden_pre, hidden, h;
  AttentionMap<double> att;
  MatrixXd m;
  FilmCache<double> film;
  FilmParams<double> film_params;
  ModulateCache<double> mod;
  MatrixXd h_mod;
  PropagateCache<double> prop;
  MatrixXd text;
  MatrixXd m_final;
};

// Returns 1 x out_dim (class logits or a single risk score).
MatrixXd forward(const ModelParams& p, const TrainConfig& cfg, const Bag& bag, BagCache* cache = nullptr);

// Accumulates d(out)-weighted parameter gradients into `grads`.
void backward(const ModelParams& p, const TrainConfig& cfg, const BagCache& cache, const MatrixXd& d_out,
              ModelParams& grads);

struct ObjectiveResult {
  LossBreakdown loss;
  ModelParams grads;
  bool no_events = false;
};

// Task loss over `bags` (mean cross-entropy or Cox partial likelihood) plus
// lambda * prototype supervision, with gradients. Bags are processed in
// parallel; reductions run in bag order.
ObjectiveResult objective(const ModelParams& p, const TrainConfig& cfg, const MatrixXd& teachers_unit,
                          std::span<const Bag* const> bags, bool with_grad = true);

// Forward passes only, one output row per bag.
MatrixXd predict(const ModelParams& p, const TrainConfig& cfg, std::span<const Bag* const> bags,
                 std::vector<AttentionMap<double>>* attention = nullptr);

std::vector<const Bag*> bag_pointers(const std::vector<Bag>& bags);

}  // namespace hpdp
