#include "hpdp/gradcheck.hpp"
#include "hpdp/maps.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support/random_matrix.hpp"

using namespace hpdp;
using hpdp::test_support::randn;

namespace {

ExpertBank<double> random_bank(std::mt19937_64& rng, Eigen::Index d, Eigen::Index ks, Eigen::Index kf) {
  ExpertBank<double> b;
  b.p_prior = randn(ks, d, rng);
  b.p_adapt = randn(kf, d, rng, 1.0 / std::sqrt(double(d)));
  b.tau_cos = 0.1;
  b.tau_dot = std::sqrt(double(d));
  return b;
}

}  // namespace

TEST(RoutePrior, ParallelInstanceConcentrates) {
  ExpertBank<double> b;
  b.p_prior = MatrixXd::Identity(3, 3);
  b.p_adapt = MatrixXd(0, 3);
  b.tau_cos = 0.05;
  const MatrixXd h = (MatrixXd(1, 3) << 0, 4, 0).finished();
  EXPECT_GT(route_prior(h, b)(0, 1), 0.999);
}

TEST(RoutePrior, IdenticalExpertsGiveUniformRows) {
  std::mt19937_64 rng(1);
  ExpertBank<double> b;
  b.p_prior = randn(1, 6, rng).replicate(4, 1);
  const MatrixXd a = route_prior(randn(5, 6, rng), b);
  EXPECT_LT((a.array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(RouteAdaptive, Examples) {
  std::mt19937_64 rng(2);
  ExpertBank<double> b = random_bank(rng, 4, 2, 3);
  EXPECT_LT((route_adaptive<double>(MatrixXd::Zero(2, 4), b).array() - 1.0 / 3.0).abs().maxCoeff(), 1e-15);

  ExpertBank<double> e;
  e.p_prior = MatrixXd::Identity(2, 2);
  e.p_adapt = MatrixXd::Identity(2, 2);
  e.tau_dot = 1.0;
  const MatrixXd a = route_adaptive((MatrixXd(1, 2) << 2, 0).finished(), e);
  EXPECT_NEAR(a(0, 0), 0.88080, 1e-5);
  EXPECT_NEAR(a(0, 1), 0.11920, 1e-5);
}

TEST(Aggregate, Examples) {
  std::mt19937_64 rng(3);
  const ExpertBank<double> b = random_bank(rng, 4, 3, 2);
  // Routing rows are distributions over experts, so a lone instance lands on
  // each expert row scaled by its routing weight; the prior rows add back to it.
  const MatrixXd one = randn(1, 4, rng);
  const auto att1 = route(one, b);
  const MatrixXd m = aggregate(att1, one);
  for (Eigen::Index k = 0; k < m.rows(); ++k)
    EXPECT_LT((m.row(k) - att1.a_total(0, k) * one.row(0)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((m.topRows(3).colwise().sum() - one.row(0)).cwiseAbs().maxCoeff(), 1e-14);

  const MatrixXd h = randn(5, 4, rng);
  AttentionMap<double> hot;
  hot.a_total = MatrixXd::Zero(5, 3);
  hot.a_total.col(0).setOnes();
  const MatrixXd mh = aggregate(hot, h);
  EXPECT_LT((mh.row(0) - h.colwise().sum()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(mh.bottomRows(2), MatrixXd::Zero(2, 4));

  AttentionMap<double> half;
  half.a_total = MatrixXd::Constant(2, 2, 0.5);
  const MatrixXd h2 = (MatrixXd(2, 2) << 2, 0, 0, 2).finished();
  EXPECT_EQ(aggregate(half, h2), MatrixXd::Ones(2, 2));
}

TEST(Maps, RejectsBadBanks) {
  ExpertBank<double> b;
  b.p_prior = MatrixXd(0, 4);
  EXPECT_THROW(route_prior<double>(MatrixXd::Ones(2, 4), b), ConfigError);
  b.p_prior = MatrixXd::Ones(2, 3);
  EXPECT_THROW(route_prior<double>(MatrixXd::Ones(2, 4), b), ShapeError);
  b.p_prior = MatrixXd::Ones(2, 4);
  b.tau_cos = 0.0;
  EXPECT_THROW(route_prior<double>(MatrixXd::Ones(2, 4), b), ConfigError);
}

TEST(Maps, RowStochasticRouting) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const ExpertBank<double> b = random_bank(rng, 8, 4, 4);
    const MatrixXd h = randn(30, 8, rng, std::pow(10.0, t % 5 - 2));
    const auto att = route(h, b);
    EXPECT_LT((att.a_prior.rowwise().sum().array() - 1).abs().maxCoeff(), 1e-12);
    EXPECT_LT((att.a_adapt.rowwise().sum().array() - 1).abs().maxCoeff(), 1e-12);
    EXPECT_LT((att.a_total.rowwise().sum().array() - 2).abs().maxCoeff(), 1e-12);
  }
}

TEST(Maps, PermutationInvariance) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const ExpertBank<double> b = random_bank(rng, 8, 4, 3);
    const MatrixXd h = randn(25, 8, rng);
    std::vector<Eigen::Index> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatrixXd hp(25, 8);
    for (Eigen::Index i = 0; i < 25; ++i) hp.row(i) = h.row(perm[static_cast<std::size_t>(i)]);
    const MatrixXd m = aggregate(route(h, b), h);
    const MatrixXd mp = aggregate(route(hp, b), hp);
    EXPECT_LT((m - mp).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Maps, PriorRoutingScaleInvariance) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> logc(-5, 5);
  const ExpertBank<double> b = random_bank(rng, 8, 4, 0);
  const MatrixXd h = randn(12, 8, rng);
  VectorXd c(12);
  for (Eigen::Index i = 0; i < 12; ++i) c(i) = std::exp(logc(rng));
  const MatrixXd scaled = c.asDiagonal() * h;
  EXPECT_LT((route_prior(scaled, b) - route_prior(h, b)).cwiseAbs().maxCoeff(), 1e-12);
}

class MapsGrad : public ::testing::TestWithParam<int> {};

TEST_P(MapsGrad, RoutingAndAggregation) {
  std::mt19937_64 rng(GetParam());
  const Eigen::Index d = 8;
  const ExpertBank<double> base = random_bank(rng, d, 3, 2);
  const MatrixXd r = randn(5, d, rng);
  NamedArrays p;
  p.add("h", randn(7, d, rng));
  p.add("p_prior", base.p_prior);
  p.add("p_adapt", base.p_adapt);
  auto bank = [&](const NamedArrays& a) {
    ExpertBank<double> b = base;
    b.p_prior = a[1];
    b.p_adapt = a[2];
    return b;
  };
  std::function<double(const NamedArrays&)> f = [&](const NamedArrays& a) {
    return aggregate(route(a[0], bank(a)), a[0]).cwiseProduct(r).sum();
  };
  const auto b = bank(p);
  const auto att = route(p[0], b);
  const auto g = maps_backward(p[0], b, att, r);
  NamedArrays ga;
  ga.add("h", g.dh);
  ga.add("p_prior", g.d_prior);
  ga.add("p_adapt", g.d_adapt);
  EXPECT_LT(grad_check<NamedArrays>("maps", f, p, ga).max_rel_err, 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Seeds, MapsGrad, ::testing::Range(0, 5));
