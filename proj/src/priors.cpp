#include "hpdp/priors.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace hpdp {

namespace {

VectorXd squared_dist_to(const MatrixXd& points, const RowVectorXd& c) {
  return (points.rowwise() - c).rowwise().squaredNorm();
}

MatrixXd kmeanspp_init(const MatrixXd& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  MatrixXd centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> uniform(0, n - 1);
  centroids.row(0) = points.row(uniform(rng));
  VectorXd best = squared_dist_to(points, centroids.row(0));
  for (int c = 1; c < k; ++c) {
    const double total = best.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= best(i);
        if (target < 0.0 && best(i) > 0.0) {
          pick = i;
          break;
        }
      }
      // Rounding can leave the walk on a zero-weight point; redraw among positive ones.
      while (best(pick) == 0.0) pick = uniform(rng);
    } else {
      // Every point coincides with an existing centroid; the empty-cluster repair sorts it out.
      pick = uniform(rng);
    }
    centroids.row(c) = points.row(pick);
    best = best.cwiseMin(squared_dist_to(points, centroids.row(c)));
  }
  return centroids;
}

// Moves the centroid of every empty cluster onto the point farthest from its
// current centroid, then reassigns. Returns true if anything changed.
bool repair_empty(const MatrixXd& points, MatrixXd& centroids, std::vector<int>& assign) {
  const int k = static_cast<int>(centroids.rows());
  bool changed = false;
  for (int pass = 0; pass < k; ++pass) {
    std::vector<int> counts(k, 0);
    for (int a : assign) ++counts[a];
    int empty = -1;
    for (int c = 0; c < k; ++c)
      if (counts[c] == 0) {
        empty = c;
        break;
      }
    if (empty < 0) break;

    Eigen::Index far = 0;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      if (counts[assign[i]] <= 1) continue;  // never strip a singleton cluster
      const double d = (points.row(i) - centroids.row(assign[i])).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    centroids.row(empty) = points.row(far);
    assign = assign_nearest(points, centroids);
    // Duplicate points can tie with an older centroid; keep the reseeded one populated.
    if (std::find(assign.begin(), assign.end(), empty) == assign.end()) assign[far] = empty;
    changed = true;
  }
  return changed;
}

struct Run {
  MatrixXd centroids;
  std::vector<int> assign;
  std::vector<double> trace;
  int iterations = 0;
};

Run lloyd(const MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& opt) {
  std::mt19937_64 rng(seed);
  Run run;
  run.centroids = kmeanspp_init(points, k, rng);
  run.assign = assign_nearest(points, run.centroids);
  repair_empty(points, run.centroids, run.assign);
  run.trace.push_back(inertia_of(points, run.centroids, run.assign));

  for (int it = 0; it < opt.max_iters; ++it) {
    MatrixXd next = MatrixXd::Zero(k, points.cols());
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      next.row(run.assign[i]) += points.row(i);
      ++counts[run.assign[i]];
    }
    for (int c = 0; c < k; ++c) next.row(c) /= static_cast<double>(counts[c]);

    const double shift = (next - run.centroids).cwiseAbs().maxCoeff();
    run.centroids = std::move(next);
    run.assign = assign_nearest(points, run.centroids);
    repair_empty(points, run.centroids, run.assign);
    run.trace.push_back(inertia_of(points, run.centroids, run.assign));
    run.iterations = it + 1;
    if (shift < opt.tol) break;
  }
  return run;
}

}  // namespace

std::vector<int> assign_nearest(const MatrixXd& points, const MatrixXd& centroids) {
  require_shape(points.cols() == centroids.cols(), "assign_nearest: dimension mismatch");
  std::vector<int> ids(points.rows(), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        ids[i] = static_cast<int>(c);
      }
    }
  }
  return ids;
}

double inertia_of(const MatrixXd& points, const MatrixXd& centroids, const std::vector<int>& assignments) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    total += (points.row(i) - centroids.row(assignments[i])).squaredNorm();
  return total;
}

PrototypeBank kmeans(const MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& opt) {
  if (k < 1) throw ConfigError("kmeans: K must be >= 1");
  if (points.rows() < k)
    throw InputError("kmeans: need at least K=" + std::to_string(k) + " points, got " +
                     std::to_string(points.rows()));
  if (opt.max_iters < 1) throw ConfigError("kmeans: max_iters must be >= 1");
  if (opt.tol < 0.0) throw ConfigError("kmeans: tol must be >= 0");
  if (opt.restarts < 1) throw ConfigError("kmeans: restarts must be >= 1");
  if (!points.allFinite()) throw InputError("kmeans: non-finite input");

  PrototypeBank bank;
  bool have = false;
  for (int r = 0; r < opt.restarts; ++r) {
    Run run = lloyd(points, k, seed + static_cast<std::uint64_t>(r) * 0x9E3779B97F4A7C15ULL, opt);
    const double inertia = run.trace.back();
    // strict < keeps the lowest restart on ties
    if (!have || inertia < bank.inertia) {
      bank.teachers = std::move(run.centroids);
      bank.assignments = std::move(run.assign);
      bank.inertia = inertia;
      bank.inertia_trace = std::move(run.trace);
      bank.iterations = run.iterations;
      have = true;
    }
  }
  return bank;
}

}  // namespace hpdp
