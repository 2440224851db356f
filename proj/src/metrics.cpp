#include "hpdp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace hpdp {

std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  require_shape(scores.size() == labels.size(), "auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks (1-based) over tie groups; every rank is a multiple of 0.5.
  double pos_rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t g = 0; g < n;) {
    std::size_t e = g;
    while (e < n && scores[order[e]] == scores[order[g]]) ++e;
    const double avg_rank = 0.5 * static_cast<double>(g + 1 + e);
    for (std::size_t q = g; q < e; ++q)
      if (labels[order[q]] == 1) {
        pos_rank_sum += avg_rank;
        n_pos += 1.0;
      }
    g = e;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

std::optional<double> auc_ovr_macro(const MatrixXd& probs, std::span<const int> labels) {
  require_shape(probs.rows() == static_cast<Eigen::Index>(labels.size()), "auc_ovr_macro: row count mismatch");
  if (probs.cols() == 2) {
    std::vector<double> s(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) s[i] = probs(i, 1);
    std::vector<int> y(labels.begin(), labels.end());
    return auc(s, y);
  }
  double total = 0.0;
  int used = 0;
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    std::vector<double> s(probs.rows());
    std::vector<int> y(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      s[i] = probs(i, c);
      y[i] = labels[i] == c ? 1 : 0;
    }
    if (auto a = auc(s, y)) {
      total += *a;
      ++used;
    }
  }
  if (used == 0) return std::nullopt;
  return total / used;
}

std::optional<double> c_index(std::span<const double> risks, std::span<const SurvivalRecord> records) {
  require_shape(risks.size() == records.size(), "c_index: risks and records differ in length");
  const std::size_t n = risks.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });

  // Twice the concordance score keeps the running sum integral.
  long long doubled = 0;
  long long comparable = 0;
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t i = order[a];
    if (!records[i].event) continue;
    for (std::size_t b = a + 1; b < n; ++b) {
      const std::size_t j = order[b];
      if (!(records[i].time < records[j].time)) continue;
      ++comparable;
      if (risks[i] > risks[j])
        doubled += 2;
      else if (risks[i] == risks[j])
        doubled += 1;
    }
  }
  if (comparable == 0) return std::nullopt;
  return static_cast<double>(doubled) / (2.0 * static_cast<double>(comparable));
}

AccF1 f1_and_acc(std::span<const int> pred, std::span<const int> labels, int n_classes) {
  require_shape(pred.size() == labels.size(), "f1_and_acc: length mismatch");
  if (pred.empty()) throw InputError("f1_and_acc: empty input");
  if (n_classes <= 0) {
    n_classes = 1 + std::max(*std::max_element(pred.begin(), pred.end()),
                             *std::max_element(labels.begin(), labels.end()));
  }
  std::vector<double> tp(n_classes, 0.0), fp(n_classes, 0.0), fn(n_classes, 0.0);
  double correct = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= n_classes || labels[i] < 0 || labels[i] >= n_classes)
      throw InputError("f1_and_acc: class id outside [0, " + std::to_string(n_classes) + ")");
    if (pred[i] == labels[i]) {
      tp[labels[i]] += 1.0;
      correct += 1.0;
    } else {
      fp[pred[i]] += 1.0;
      fn[labels[i]] += 1.0;
    }
  }
  double f1_sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    f1_sum += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  }
  return {correct / static_cast<double>(pred.size()), f1_sum / n_classes};
}

std::vector<KmPoint> km_curve(std::span<const SurvivalRecord> records) {
  if (records.empty()) throw InputError("km_curve: no subjects");
  std::map<double, std::pair<int, int>> at;  // time -> (events, total leaving)
  for (const auto& r : records) {
    auto& slot = at[r.time];
    slot.first += r.event ? 1 : 0;
    slot.second += 1;
  }
  std::vector<KmPoint> curve{{0.0, 1.0}};
  double surv = 1.0;
  double at_risk = static_cast<double>(records.size());
  for (const auto& [t, counts] : at) {
    if (counts.first > 0) {
      surv *= 1.0 - counts.first / at_risk;
      curve.push_back({t, surv});
    }
    at_risk -= counts.second;
  }
  return curve;
}

LogRankResult logrank(std::span<const SurvivalRecord> group_a, std::span<const SurvivalRecord> group_b) {
  if (group_a.empty() || group_b.empty()) throw InputError("logrank: both groups must be nonempty");
  struct Tally {
    double events_a = 0, events_b = 0, leave_a = 0, leave_b = 0;
  };
  std::map<double, Tally> at;
  for (const auto& r : group_a) {
    at[r.time].leave_a += 1;
    if (r.event) at[r.time].events_a += 1;
  }
  for (const auto& r : group_b) {
    at[r.time].leave_b += 1;
    if (r.event) at[r.time].events_b += 1;
  }

  LogRankResult res;
  double n_a = static_cast<double>(group_a.size());
  double n_b = static_cast<double>(group_b.size());
  for (const auto& [t, tl] : at) {
    const double d = tl.events_a + tl.events_b;
    const double n = n_a + n_b;
    if (d > 0.0) {
      res.observed_a += tl.events_a;
      res.expected_a += d * n_a / n;
      if (n > 1.0) res.variance += d * (n_a / n) * (n_b / n) * (n - d) / (n - 1.0);
    }
    n_a -= tl.leave_a;
    n_b -= tl.leave_b;
  }
  if (res.variance <= 0.0) return res;  // no information: statistic 0, p = 1
  const double diff = res.observed_a - res.expected_a;
  res.statistic = diff * diff / res.variance;
  res.p_value = chi_square_sf(res.statistic, 1.0);
  return res;
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw ConfigError("gamma_q: need a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);
  constexpr int kMaxIter = 1000;
  constexpr double kTiny = 1e-300;
  constexpr double kRelTol = 1e-15;
  if (x < a + 1.0) {
    // series for P(a, x)
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < kMaxIter; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * kRelTol) break;
    }
    return std::clamp(1.0 - sum * std::exp(log_prefactor), 0.0, 1.0);
  }
  // modified Lentz continued fraction for Q(a, x)
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kRelTol) break;
  }
  return std::clamp(std::exp(log_prefactor) * h, 0.0, 1.0);
}

double chi_square_sf(double statistic, double dof) {
  if (statistic <= 0.0) return 1.0;
  return gamma_q(0.5 * dof, 0.5 * statistic);
}

std::pair<std::vector<SurvivalRecord>, std::vector<SurvivalRecord>> split_by_median_risk(
    std::span<const double> risks, std::span<const SurvivalRecord> records) {
  require_shape(risks.size() == records.size(), "split_by_median_risk: length mismatch");
  if (risks.empty()) throw InputError("split_by_median_risk: no subjects");
  std::vector<double> sorted(risks.begin(), risks.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  std::pair<std::vector<SurvivalRecord>, std::vector<SurvivalRecord>> groups;
  for (std::size_t i = 0; i < n; ++i) (risks[i] <= median ? groups.first : groups.second).push_back(records[i]);
  return groups;
}

}  // namespace hpdp
