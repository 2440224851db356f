#pragma once

// Evaluation metrics: accuracy, macro F1, ROC AUC, Harrell's C-index,
// Kaplan-Meier curves and the two-group log-rank test.

#include "hpdp/heads_losses.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace hpdp {

// Mann-Whitney AUC with ties counted 0.5. nullopt unless both classes appear.
std::optional<double> auc(std::span<const double> scores, std::span<const int> labels);

// One-vs-rest macro AUC over the columns of a probability matrix. Classes
// without both positives and negatives are skipped; nullopt if none remain.
std::optional<double> auc_ovr_macro(const MatrixXd& probs, std::span<const int> labels);

// Higher risk means shorter expected survival. nullopt with no comparable pair.
std::optional<double> c_index(std::span<const double> risks, std::span<const SurvivalRecord> records);

struct AccF1 {
  double acc = 0.0;
  double f1_macro = 0.0;
};

// Classes are 0 .. n_classes-1; n_classes <= 0 infers max id + 1.
AccF1 f1_and_acc(std::span<const int> pred, std::span<const int> labels, int n_classes = 0);

struct KmPoint {
  double time = 0.0;
  double survival = 1.0;
};

// Product-limit estimate. Starts with (0, 1); one point per distinct event time.
std::vector<KmPoint> km_curve(std::span<const SurvivalRecord> records);

struct LogRankResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double observed_a = 0.0;
  double expected_a = 0.0;
  double variance = 0.0;
};

LogRankResult logrank(std::span<const SurvivalRecord> group_a, std::span<const SurvivalRecord> group_b);

// Upper regularized incomplete gamma Q(a, x).
double gamma_q(double a, double x);
double chi_square_sf(double statistic, double dof);

// Splits subjects at the median risk: first = low risk (risk <= median), second = high risk.
std::pair<std::vector<SurvivalRecord>, std::vector<SurvivalRecord>> split_by_median_risk(
    std::span<const double> risks, std::span<const SurvivalRecord> records);

struct MetricReport {
  std::string task;  // "classification" or "survival"
  std::optional<double> acc;
  std::optional<double> f1_macro;
  std::optional<double> auc;
  std::optional<double> c_index;
  std::optional<double> logrank_p;
  std::size_t n = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

}  // namespace hpdp
