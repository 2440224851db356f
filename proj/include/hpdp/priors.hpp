#pragma once

// K-means prototypes over a pooled instance population. The centroids serve
// as frozen teacher prototypes that anchor the prior experts.

#include "hpdp/common.hpp"

#include <cstdint>
#include <vector>

namespace hpdp {

struct PrototypeBank {
  MatrixXd teachers;         // K x D centroids (raw, not normalized)
  double inertia = 0.0;      // sum of squared distances to the assigned centroid
  std::vector<int> assignments;
  std::vector<double> inertia_trace;  // inertia after every assignment step of the kept restart
  int iterations = 0;
};

struct KMeansOptions {
  int max_iters = 100;
  double tol = 1e-6;
  int restarts = 10;
};

// Nearest centroid by squared Euclidean distance; ties go to the lowest id.
std::vector<int> assign_nearest(const MatrixXd& points, const MatrixXd& centroids);

// Lloyd iterations from k-means++ seeding, best of `opt.restarts` by inertia.
PrototypeBank kmeans(const MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& opt = {});

double inertia_of(const MatrixXd& points, const MatrixXd& centroids, const std::vector<int>& assignments);

}  // namespace hpdp
