#include "hpdp/trainer.hpp"

#include "hpdp/priors.hpp"
#include "hpdp/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace hpdp {

OptimizerState OptimizerState::for_params(const ModelParams& p) {
  OptimizerState s;
  s.m = p.zeros_like();
  s.v = p.zeros_like();
  return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& st, double lr, double weight_decay) {
  if (!grads.all_finite()) throw NumericalError("adam_step: non-finite gradient");
  auto p = params.arrays();
  const auto g = grads.arrays();
  auto m = st.m.arrays();
  auto v = st.v.arrays();
  require_shape(p.size() == g.size() && p.size() == m.size() && p.size() == v.size(),
                "adam_step: parameter, gradient and moment layouts differ");
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    MatrixXd& w = *p[i].second;
    const MatrixXd& gi = *g[i].second;
    MatrixXd& mi = *m[i].second;
    MatrixXd& vi = *v[i].second;
    mi = st.beta1 * mi + (1.0 - st.beta1) * gi;
    vi = st.beta2 * vi + (1.0 - st.beta2) * gi.cwiseAbs2();
    w *= 1.0 - lr * weight_decay;
    w.array() -= lr * (mi.array() / bc1) / ((vi.array() / bc2).sqrt() + st.eps);
  }
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (cfg.max_epochs <= 1) return cfg.lr_init;
  const double progress = std::clamp(double(epoch) / double(cfg.max_epochs - 1), 0.0, 1.0);
  return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

CohortSplit split_for(const std::vector<Bag>& cohort, const TrainConfig& cfg) {
  return split_cohort(cohort, kDefaultSplit, stream_seed(cfg.seed, "split"));
}

MatrixXd fit_teachers(const std::vector<Bag>& train_set, const TrainConfig& cfg) {
  if (!cfg.toggles.maps) return MatrixXd();
  return kmeans(pooled_instances(train_set), cfg.k_sup, stream_seed(cfg.seed, "priors")).teachers;
}

ModelShape shape_for(const TrainConfig& cfg, const std::vector<Bag>& cohort) {
  if (cohort.empty()) throw InputError("empty cohort");
  ModelShape s;
  s.input_dim = static_cast<int>(cohort.front().features.cols());
  if (cfg.task == Task::Survival) {
    s.out_dim = 1;
  } else {
    int max_label = 0;
    for (const auto& b : cohort) max_label = std::max(max_label, b.label);
    s.out_dim = std::max(2, max_label + 1);
  }
  return s;
}

std::optional<double> selection_metric(const MetricReport& r) { return r.task == "survival" ? r.c_index : r.auc; }

namespace {

std::vector<std::vector<const Bag*>> make_batches(const std::vector<Bag>& train_set, const TrainConfig& cfg,
                                                  int epoch) {
  std::vector<const Bag*> order = bag_pointers(train_set);
  std::vector<std::vector<const Bag*>> batches;
  std::size_t size = 0;
  if (cfg.task == Task::Classification) {
    size = static_cast<std::size_t>(cfg.accumulation);
  } else {
    size = cfg.cox_batch == 0 ? order.size() : static_cast<std::size_t>(cfg.cox_batch);
  }
  if (size < order.size()) {
    std::mt19937_64 rng(child_seed(stream_seed(cfg.seed, "shuffle"), static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
  }
  for (std::size_t i = 0; i < order.size(); i += size)
    batches.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + size));
  return batches;
}

}  // namespace

TrainResult train(const std::vector<Bag>& train_set, const std::vector<Bag>& val_set, const TrainConfig& cfg,
                  const MatrixXd& teachers) {
  cfg.validate();
  const ModelShape shape = shape_for(cfg, train_set);
  return train_from(train_set, val_set, cfg, shape, init_params(cfg, shape, teachers), teachers);
}

TrainResult train_from(const std::vector<Bag>& train_set, const std::vector<Bag>& val_set, const TrainConfig& cfg,
                       const ModelShape& shape, ModelParams params, const MatrixXd& teachers) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw InputError("train: training and validation cohorts must be nonempty");
  const MatrixXd teachers_unit = cfg.toggles.maps ? normalized_teachers(teachers) : MatrixXd();

  OptimizerState opt = OptimizerState::for_params(params);
  TrainResult res;
  res.best = {cfg, shape, params, cfg.toggles.maps ? teachers : MatrixXd(), -1,
              -std::numeric_limits<double>::infinity()};
  res.best_epoch = -1;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    double weight = 0.0;
    try {
      for (const auto& batch : make_batches(train_set, cfg, epoch)) {
        ObjectiveResult obj = objective(params, cfg, teachers_unit, batch);
        if (!std::isfinite(obj.loss.total)) throw NumericalError("non-finite loss");
        adam_step(params, obj.grads, opt, lr, cfg.weight_decay);
        const double w = double(batch.size());
        rec.train_loss += w * obj.loss.total;
        rec.task_loss += w * obj.loss.task_loss;
        rec.proto_loss += w * obj.loss.proto_loss;
        weight += w;
      }
    } catch (const NumericalError& e) {
      res.diverged = true;
      res.message = "epoch " + std::to_string(epoch) + ": " + e.what() + "; keeping last good checkpoint";
      break;
    }
    rec.train_loss /= weight;
    rec.task_loss /= weight;
    rec.proto_loss /= weight;

    Checkpoint current{cfg, shape, params, res.best.teachers, epoch, 0.0};
    const auto val = selection_metric(evaluate(current, val_set, cfg.threads).report);
    rec.val_metric = val.value_or(std::numeric_limits<double>::quiet_NaN());
    res.history.push_back(rec);

    if (val && *val > res.best.best_val) {
      current.best_val = *val;
      res.best = std::move(current);
      res.best_epoch = epoch;
    } else if (res.best_epoch < 0 && epoch == 0) {
      // undefined metric on the first epoch: still keep a usable checkpoint
      res.best = std::move(current);
      res.best_epoch = 0;
    }
    if (epoch - res.best_epoch >= cfg.patience) break;
  }
  if (res.best_epoch < 0) res.best.epoch = 0;
  return res;
}

Evaluation evaluate(const Checkpoint& ckpt, const std::vector<Bag>& cohort, int threads, bool keep_attention) {
  if (cohort.empty()) throw InputError("evaluate: empty cohort");
  for (const auto& b : cohort)
    if (b.features.cols() != ckpt.shape.input_dim || b.text.cols() != ckpt.config.dim)
      throw InputError("evaluate: cohort dimensionality (" + std::to_string(b.features.cols()) +
                       ") does not match checkpoint (" + std::to_string(ckpt.shape.input_dim) + ")");
  TrainConfig cfg = ckpt.config;
  cfg.threads = threads;
  const auto ptrs = bag_pointers(cohort);

  Evaluation ev;
  ev.outputs = predict(ckpt.params, cfg, ptrs,
                       keep_attention && ckpt.config.toggles.maps ? &ev.attention : nullptr);
  MetricReport& r = ev.report;
  r.task = to_string(cfg.task);
  r.n = cohort.size();
  if (cfg.task == Task::Classification) {
    const MatrixXd probs = softmax_rows(ev.outputs, 1.0);
    std::vector<int> labels(cohort.size()), pred(cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      labels[i] = cohort[i].label;
      Eigen::Index arg;
      probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
      pred[i] = static_cast<int>(arg);
    }
    const AccF1 af = f1_and_acc(pred, labels, static_cast<int>(probs.cols()));
    r.acc = af.acc;
    r.f1_macro = af.f1_macro;
    r.auc = auc_ovr_macro(probs, labels);
  } else {
    std::vector<double> risks(cohort.size());
    std::vector<SurvivalRecord> recs(cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      risks[i] = ev.outputs(static_cast<Eigen::Index>(i), 0);
      recs[i] = cohort[i].survival;
    }
    r.c_index = c_index(risks, recs);
    const auto [low, high] = split_by_median_risk(risks, recs);
    if (!low.empty() && !high.empty()) r.logrank_p = logrank(low, high).p_value;
  }
  return ev;
}

GradCheckReport full_model_grad_check(const TrainConfig& cfg_in, std::uint64_t seed, int n_bags,
                                      const GradCheckOptions& opt) {
  TrainConfig cfg = cfg_in;
  cfg.seed = seed;
  cfg.validate();
  GeneratorConfig gen;
  gen.n_bags = n_bags;
  gen.instances_min = 6;
  gen.instances_max = 10;
  gen.dim = cfg.dim;
  gen.seed = seed;
  const std::vector<Bag> bags = generate_cohort(gen);
  const ModelShape shape = shape_for(cfg, bags);
  const MatrixXd teachers =
      cfg.toggles.maps ? kmeans(pooled_instances(bags), cfg.k_sup, stream_seed(seed, "priors")).teachers : MatrixXd();
  const MatrixXd teachers_unit = cfg.toggles.maps ? normalized_teachers(teachers) : MatrixXd();
  ModelParams params = init_params(cfg, shape, teachers);
  // Move off the zero-initialized FiLM heads and identity affines so every
  // path carries a generic gradient.
  std::mt19937_64 rng(stream_seed(seed, "gradcheck"));
  std::normal_distribution<double> n01(0.0, 0.1);
  params.for_each([&](const std::string&, MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += n01(rng);
  });
  const auto ptrs = bag_pointers(bags);
  const ObjectiveResult analytic = objective(params, cfg, teachers_unit, ptrs);
  std::function<double(const ModelParams&)> loss = [&](const ModelParams& p) {
    return objective(p, cfg, teachers_unit, ptrs, false).loss.total;
  };
  GradCheckOptions o = opt;
  o.seed = child_seed(seed, 1);
  return grad_check<ModelParams>("full_model", loss, params, analytic.grads, o);
}

}  // namespace hpdp
