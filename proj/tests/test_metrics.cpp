#include "hpdp/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "support/oracles.hpp"

using namespace hpdp;

namespace {

// Macro F1 from an explicit confusion matrix.
double confusion_macro_f1(const std::vector<int>& pred, const std::vector<int>& y, int c) {
  std::vector<std::vector<int>> cm(c, std::vector<int>(c, 0));
  for (std::size_t i = 0; i < y.size(); ++i) ++cm[y[i]][pred[i]];
  double sum = 0.0;
  for (int k = 0; k < c; ++k) {
    int tp = cm[k][k], fp = 0, fn = 0;
    for (int j = 0; j < c; ++j)
      if (j != k) {
        fp += cm[j][k];
        fn += cm[k][j];
      }
    sum += tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return sum / c;
}

std::vector<SurvivalRecord> recs(std::vector<double> t, std::vector<int> e) {
  std::vector<SurvivalRecord> out;
  for (std::size_t i = 0; i < t.size(); ++i) out.push_back({t[i], e[i] != 0});
  return out;
}

}  // namespace

TEST(Auc, Examples) {
  const std::vector<int> y{1, 1, 0, 0};
  EXPECT_EQ(*auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y), 1.0);
  EXPECT_EQ(*auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, y), 0.5);
  EXPECT_EQ(*auc(std::vector<double>{0.8, 0.3, 0.5, 0.1}, y), 0.75);
  EXPECT_FALSE(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}).has_value());
}

TEST(Auc, MatchesPairCountingAndMonotoneTransforms) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> n_pick(2, 50), level(0, 9);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 200; ++t) {
    const int n = n_pick(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = level(rng) / 10.0;
      y[i] = coin(rng);
    }
    y[0] = 1;
    y[1] = 0;
    const double a = *auc(s, y);
    EXPECT_NEAR(a, oracle::auc(s, y), 1e-14);
    std::vector<double> ex(n), aff(n);
    for (int i = 0; i < n; ++i) {
      ex[i] = std::exp(s[i]);
      aff[i] = 3.0 * s[i] - 2.0;
    }
    EXPECT_EQ(*auc(ex, y), a);
    EXPECT_EQ(*auc(aff, y), a);
  }
}

TEST(Auc, OneVsRestMacro) {
  MatrixXd p(4, 3);
  p << 0.8, 0.1, 0.1, 0.2, 0.7, 0.1, 0.1, 0.2, 0.7, 0.6, 0.3, 0.1;
  const std::vector<int> y{0, 1, 2, 0};
  EXPECT_EQ(*auc_ovr_macro(p, y), 1.0);
  // class 2 never appears and is skipped; class 1 scores 3 of 4 pairs
  const std::vector<int> y2{0, 1, 1, 0};
  EXPECT_EQ(*auc_ovr_macro(p, y2), (1.0 + 0.75) / 2.0);
}

TEST(CIndex, Examples) {
  const auto r = recs({1, 2, 3}, {1, 1, 1});
  EXPECT_EQ(*c_index(std::vector<double>{3, 2, 1}, r), 1.0);
  EXPECT_EQ(*c_index(std::vector<double>{1, 2, 3}, r), 0.0);
  EXPECT_EQ(*c_index(std::vector<double>{5, 5}, recs({1, 2}, {1, 1})), 0.5);
  EXPECT_FALSE(c_index(std::vector<double>{1, 2}, recs({1, 2}, {0, 0})).has_value());
}

TEST(CIndex, MatchesOracleAndMonotoneTransforms) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 100; ++t) {
    const auto r = oracle::random_records(rng, 25);
    std::vector<double> risk(25), ex(25);
    for (int i = 0; i < 25; ++i) {
      risk[i] = std::round(4.0 * n01(rng)) / 4.0;
      ex[i] = std::exp(risk[i]);
    }
    const auto c = c_index(risk, r);
    if (!c) continue;
    EXPECT_NEAR(*c, oracle::c_index(risk, r), 1e-14);
    EXPECT_EQ(*c_index(ex, r), *c);
  }
}

TEST(F1Acc, Examples) {
  const std::vector<int> y{0, 1, 2, 1};
  const auto same = f1_and_acc(y, y);
  EXPECT_EQ(same.acc, 1.0);
  EXPECT_EQ(same.f1_macro, 1.0);

  const auto zero = f1_and_acc(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 0, 1, 1}, 2);
  EXPECT_EQ(zero.acc, 0.5);
  EXPECT_NEAR(zero.f1_macro, 1.0 / 3.0, 1e-15);

  const std::vector<int> labels{0, 0, 1, 1, 2, 2}, pred{0, 0, 1, 2, 2, 2};
  const auto three = f1_and_acc(pred, labels, 3);
  EXPECT_NEAR(three.acc, 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(three.f1_macro, confusion_macro_f1(pred, labels, 3), 1e-15);
}

TEST(KaplanMeier, Examples) {
  const auto all_censored = km_curve(recs({1, 2, 3}, {0, 0, 0}));
  for (const auto& p : all_censored) EXPECT_EQ(p.survival, 1.0);

  const auto single = km_curve(recs({2}, {1}));
  ASSERT_EQ(single.size(), 2u);
  EXPECT_EQ(single[0].time, 0.0);
  EXPECT_EQ(single[0].survival, 1.0);
  EXPECT_EQ(single[1].time, 2.0);
  EXPECT_EQ(single[1].survival, 0.0);

  // The censored subject at t=2 leaves one at risk at t=3, so S drops to 0 there.
  const auto km = km_curve(recs({1, 2, 3}, {1, 0, 1}));
  ASSERT_EQ(km.size(), 3u);
  EXPECT_NEAR(km[1].survival, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(km[2].time, 3.0);
  EXPECT_EQ(km[2].survival, 0.0);
}

TEST(KaplanMeier, NonIncreasingWithinUnitInterval) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto km = km_curve(oracle::random_records(rng, 30, false));
    for (std::size_t i = 0; i < km.size(); ++i) {
      EXPECT_GE(km[i].survival, 0.0);
      EXPECT_LE(km[i].survival, 1.0);
      if (i > 0) {
        EXPECT_LE(km[i].survival, km[i - 1].survival);
        EXPECT_GT(km[i].time, km[i - 1].time);
      }
    }
  }
}

TEST(LogRank, IdenticalGroups) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto g = oracle::random_records(rng, 15, false);
    const auto r = logrank(g, g);
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
  }
  const auto none = recs({1, 2}, {0, 0});
  EXPECT_EQ(logrank(none, none).p_value, 1.0);
}

TEST(LogRank, MatchesReferenceTables) {
  // statistics and p-values from a reference survival package
  const auto toy = logrank(recs({1, 3}, {1, 1}), recs({2}, {1}));
  EXPECT_NEAR(toy.observed_a, 2.0, 1e-15);
  EXPECT_NEAR(toy.expected_a, 2.0 / 3.0 + 0.5 + 1.0, 1e-12);
  EXPECT_NEAR(toy.statistic, 0.05882352941176472, 1e-12);
  EXPECT_NEAR(toy.p_value, 0.8083651559145103, 1e-10);

  const auto split = logrank(recs({1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}), recs({10, 10, 10, 10, 10}, {0, 0, 0, 0, 0}));
  EXPECT_NEAR(split.statistic, 9.0, 1e-12);
  EXPECT_NEAR(split.p_value, 0.002699796063260207, 1e-10);
  EXPECT_LT(split.p_value, 0.05);

  const auto mixed = logrank(recs({2, 4, 4, 5, 7}, {1, 1, 0, 1, 1}), recs({3, 6, 6, 8, 9}, {1, 0, 1, 1, 0}));
  EXPECT_NEAR(mixed.statistic, 2.110725379133931, 1e-12);
  EXPECT_NEAR(mixed.p_value, 0.14626996907918732, 1e-10);
}

TEST(ChiSquare, SurvivalFunction) {
  EXPECT_NEAR(chi_square_sf(3.841458820694124, 1), 0.05, 1e-10);
  EXPECT_NEAR(chi_square_sf(0.5, 1), 0.47950012218695337, 1e-10);
  EXPECT_NEAR(chi_square_sf(10, 1), 0.001565402258002549, 1e-10);
  EXPECT_NEAR(chi_square_sf(2.5, 3), 0.4752910833430205, 1e-10);
  EXPECT_EQ(chi_square_sf(0.0, 1), 1.0);
  EXPECT_NEAR(gamma_q(1.0, 2.0), std::exp(-2.0), 1e-12);
}

TEST(MedianSplit, LowRiskAtOrBelowMedian) {
  const std::vector<double> risk{0.1, 0.9, 0.5, 0.3};
  const auto r = recs({1, 2, 3, 4}, {1, 1, 1, 1});
  const auto [low, high] = split_by_median_risk(risk, r);
  ASSERT_EQ(low.size(), 2u);
  ASSERT_EQ(high.size(), 2u);
  EXPECT_EQ(low[0].time, 1.0);
  EXPECT_EQ(low[1].time, 4.0);
  EXPECT_EQ(high[0].time, 2.0);
}
