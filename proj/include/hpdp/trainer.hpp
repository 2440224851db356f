#pragma once

#include "hpdp/gradcheck.hpp"
#include "hpdp/metrics.hpp"
#include "hpdp/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hpdp {

struct OptimizerState {
  ModelParams m;
  ModelParams v;
  long long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState for_params(const ModelParams& p);
};

// Adam with decoupled weight decay: params *= (1 - lr*wd), then the
// bias-corrected moment update. Throws NumericalError on a non-finite gradient.
void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr, double weight_decay);

// Cosine interpolation from lr_init (epoch 0) to lr_final (epoch max_epochs-1).
double lr_schedule(int epoch, const TrainConfig& cfg);

struct Checkpoint {
  TrainConfig config;
  ModelShape shape;
  ModelParams params;
  MatrixXd teachers;  // raw K-means centroids; empty when maps is off
  int epoch = 0;
  double best_val = 0.0;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.config == b.config && a.shape.input_dim == b.shape.input_dim && a.shape.out_dim == b.shape.out_dim &&
           a.params == b.params && a.teachers.rows() == b.teachers.rows() &&
           a.teachers.cols() == b.teachers.cols() && a.teachers == b.teachers && a.epoch == b.epoch &&
           a.best_val == b.best_val;
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double task_loss = 0.0;
  double proto_loss = 0.0;
  double val_metric = 0.0;
  double lr = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool diverged = false;
  std::string message;
};

// Train/val/test split of a cohort, seeded from the "split" stream of cfg.seed.
CohortSplit split_for(const std::vector<Bag>& cohort, const TrainConfig& cfg);

// K-means teachers over the pooled training instances ("priors" stream);
// empty when maps is off.
MatrixXd fit_teachers(const std::vector<Bag>& train_set, const TrainConfig& cfg);

ModelShape shape_for(const TrainConfig& cfg, const std::vector<Bag>& cohort);

// Builds the model from cfg (teachers required when maps is on) and runs the
// epoch loop with validation-based early stopping.
TrainResult train(const std::vector<Bag>& train_set, const std::vector<Bag>& val_set, const TrainConfig& cfg,
                  const MatrixXd& teachers);

// Same loop from explicit initial parameters.
TrainResult train_from(const std::vector<Bag>& train_set, const std::vector<Bag>& val_set, const TrainConfig& cfg,
                       const ModelShape& shape, ModelParams init, const MatrixXd& teachers);

struct Evaluation {
  MetricReport report;
  MatrixXd outputs;  // logits or risks, one row per bag
  std::vector<AttentionMap<double>> attention;
};

Evaluation evaluate(const Checkpoint& ckpt, const std::vector<Bag>& cohort, int threads = 1,
                    bool keep_attention = false);

// Validation score used for model selection: AUC or C-index; nullopt if undefined.
std::optional<double> selection_metric(const MetricReport& r);

// Full-pipeline gradient check on a small seeded batch (3 bags by default) at
// random initialization, covering every active parameter group.
GradCheckReport full_model_grad_check(const TrainConfig& cfg, std::uint64_t seed, int n_bags = 3,
                                      const GradCheckOptions& opt = {});

}  // namespace hpdp
