#include "hpdp/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hpdp;

namespace {

TrainConfig tiny_config(Task task = Task::Classification) {
  TrainConfig c;
  c.dim = 8;
  c.k_sup = 3;
  c.k_free = 2;
  c.task = task;
  c.max_epochs = 6;
  c.patience = 6;
  c.lr_init = 3e-3;
  c.lr_final = 1e-3;
  c.seed = 5;
  return c;
}

std::vector<Bag> tiny_cohort(std::uint64_t seed = 1, int n = 60) {
  GeneratorConfig g;
  g.n_bags = n;
  g.instances_min = 6;
  g.instances_max = 10;
  g.dim = 8;
  g.seed = seed;
  return generate_cohort(g);
}

ModelParams scalar_params(double w) {
  ModelParams p;
  p.active = {false, false, false, false};
  p.proj_w1 = MatrixXd::Constant(1, 1, w);
  for (MatrixXd* m : {&p.proj_b1, &p.proj_w2, &p.proj_b2}) *m = MatrixXd(0, 0);
  p.prior = p.adapt = MatrixXd(0, 0);
  p.head = {MatrixXd(0, 0), MatrixXd(0, 0)};
  return p;
}

}  // namespace

TEST(Adam, ZeroGradientKeepsParams) {
  ModelParams p = scalar_params(1.7);
  auto st = OptimizerState::for_params(p);
  adam_step(p, p.zeros_like(), st, 0.1, 0.0);
  EXPECT_EQ(p.proj_w1(0, 0), 1.7);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ModelParams p = scalar_params(1.0);
  auto st = OptimizerState::for_params(p);
  adam_step(p, scalar_params(1.0), st, 0.1, 0.0);
  EXPECT_NEAR(p.proj_w1(0, 0), 0.9, 1e-8);
  EXPECT_NEAR(p.proj_w1(0, 0), 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, TwoStepsOnQuadraticMatchHandRecurrence) {
  const double lr = 0.05, wd = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ModelParams p = scalar_params(2.0);
  auto st = OptimizerState::for_params(p);
  double w = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = w;  // f(w) = w^2 / 2
    adam_step(p, scalar_params(p.proj_w1(0, 0)), st, lr, wd);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    w *= 1 - lr * wd;
    w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(p.proj_w1(0, 0), w, 1e-12);
  }
}

TEST(Adam, NonFiniteGradientThrows) {
  ModelParams p = scalar_params(1.0);
  auto st = OptimizerState::for_params(p);
  EXPECT_THROW(adam_step(p, scalar_params(std::nan("")), st, 0.1, 0.0), NumericalError);
}

TEST(LrSchedule, EndpointsAndMidpoint) {
  TrainConfig c;
  c.max_epochs = 201;
  EXPECT_DOUBLE_EQ(lr_schedule(0, c), 3e-4);
  EXPECT_NEAR(lr_schedule(200, c), 1e-4, 1e-6);
  EXPECT_NEAR(lr_schedule(100, c), 2e-4, 1e-15);
  for (int e = 1; e <= 200; ++e) EXPECT_LE(lr_schedule(e, c), lr_schedule(e - 1, c));
}

TEST(Train, FrozenModelStopsAfterPatience) {
  TrainConfig cfg = tiny_config();
  cfg.lr_init = cfg.lr_final = 0.0;
  cfg.patience = 1;
  const auto cohort = tiny_cohort();
  const auto split = split_for(cohort, cfg);
  const auto res = train(split.train, split.val, cfg, fit_teachers(split.train, cfg));
  EXPECT_EQ(res.history.size(), 2u);
  EXPECT_EQ(res.best_epoch, 0);
  EXPECT_FALSE(res.diverged);
}

TEST(Train, NeverExceedsBestEpochPlusPatience) {
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 12;
  cfg.patience = 2;
  const auto split = split_for(tiny_cohort(2), cfg);
  const auto res = train(split.train, split.val, cfg, fit_teachers(split.train, cfg));
  EXPECT_LE(static_cast<int>(res.history.size()) - 1, res.best_epoch + cfg.patience);
  EXPECT_EQ(res.best.epoch, res.best_epoch);
  for (const auto& r : res.history) EXPECT_TRUE(std::isfinite(r.train_loss));
}

TEST(Train, SeededRunIsBitIdentical) {
  for (Task task : {Task::Classification, Task::Survival}) {
    const TrainConfig cfg = tiny_config(task);
    const auto split = split_for(tiny_cohort(3), cfg);
    const MatrixXd teachers = fit_teachers(split.train, cfg);
    const auto a = train(split.train, split.val, cfg, teachers);
    const auto b = train(split.train, split.val, cfg, teachers);
    EXPECT_EQ(a.history, b.history);
    EXPECT_EQ(a.best, b.best);
  }
}

TEST(Train, DivergenceKeepsLastGoodCheckpoint) {
  TrainConfig cfg = tiny_config();
  cfg.lr_init = cfg.lr_final = 1e300;
  cfg.weight_decay = 0.0;
  const auto split = split_for(tiny_cohort(4), cfg);
  const MatrixXd teachers = fit_teachers(split.train, cfg);
  const auto res = train(split.train, split.val, cfg, teachers);
  EXPECT_TRUE(res.diverged);
  EXPECT_FALSE(res.message.empty());
  EXPECT_TRUE(res.best.params.all_finite());
  EXPECT_EQ(res.best.params, init_params(cfg, shape_for(cfg, split.train), teachers));
}

TEST(Train, RejectsEmptyCohorts) {
  const TrainConfig cfg = tiny_config();
  const auto cohort = tiny_cohort();
  EXPECT_THROW(train(cohort, {}, cfg, fit_teachers(cohort, cfg)), InputError);
}

TEST(Evaluate, TrainedBeatsInitOnTrainingSet) {
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 15;
  cfg.patience = 15;
  const auto split = split_for(tiny_cohort(5, 120), cfg);
  const MatrixXd teachers = fit_teachers(split.train, cfg);
  const auto res = train(split.train, split.val, cfg, teachers);
  const Checkpoint init{cfg, shape_for(cfg, split.train), init_params(cfg, shape_for(cfg, split.train), teachers),
                        teachers, 0, 0.0};
  EXPECT_GE(*evaluate(res.best, split.train).report.auc, *evaluate(init, split.train).report.auc);
}

TEST(Evaluate, DeterministicAndTaskGated) {
  for (Task task : {Task::Classification, Task::Survival}) {
    const TrainConfig cfg = tiny_config(task);
    const auto split = split_for(tiny_cohort(6), cfg);
    const auto res = train(split.train, split.val, cfg, fit_teachers(split.train, cfg));
    const auto a = evaluate(res.best, split.test);
    EXPECT_EQ(a.report, evaluate(res.best, split.test).report);
    EXPECT_EQ(a.report, evaluate(res.best, split.test, 4).report);
    EXPECT_EQ(a.report.n, split.test.size());
    if (task == Task::Survival) {
      EXPECT_TRUE(a.report.c_index.has_value());
      EXPECT_FALSE(a.report.auc.has_value());
      EXPECT_FALSE(a.report.acc.has_value());
      EXPECT_EQ(a.report.task, "survival");
    } else {
      EXPECT_TRUE(a.report.auc.has_value());
      EXPECT_TRUE(a.report.f1_macro.has_value());
      EXPECT_FALSE(a.report.c_index.has_value());
    }
  }
}

TEST(Evaluate, AttentionRowsOnRequest) {
  const TrainConfig cfg = tiny_config();
  const auto split = split_for(tiny_cohort(7), cfg);
  const auto res = train(split.train, split.val, cfg, fit_teachers(split.train, cfg));
  const auto ev = evaluate(res.best, split.test, 1, true);
  ASSERT_EQ(ev.attention.size(), split.test.size());
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    EXPECT_EQ(ev.attention[i].a_prior.rows(), split.test[i].size());
    EXPECT_EQ(ev.attention[i].a_prior.cols(), cfg.k_sup);
  }
}

TEST(Evaluate, DimensionMismatchIsInputError) {
  const TrainConfig cfg = tiny_config();
  const auto split = split_for(tiny_cohort(8), cfg);
  const auto res = train(split.train, split.val, cfg, fit_teachers(split.train, cfg));
  GeneratorConfig g;
  g.n_bags = 3;
  g.dim = 12;
  EXPECT_THROW(evaluate(res.best, generate_cohort(g)), InputError);
}
