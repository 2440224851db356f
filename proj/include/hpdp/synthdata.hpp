#pragma once

// Seeded synthetic cohorts: bags of instances drawn around phenotype
// archetypes, laid out as phenotype-pure spatial blobs on a patch grid, with
// class labels set by the tumor fraction interval, exponential survival times
// whose hazard grows with tumor fraction, and class-correlated text vectors.
//
// Phenotype 0 is the "tumor" phenotype.

#include "hpdp/heads_losses.hpp"
#include "hpdp/spe.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <json.hpp>

namespace hpdp {

struct GeneratorConfig {
  int n_bags = 200;
  int instances_min = 32;
  int instances_max = 64;
  int dim = 32;
  int n_phenotypes = 4;
  // One interval per class.
  std::vector<std::pair<double, double>> tumor_fraction_ranges{{0.05, 0.35}, {0.55, 0.85}};
  int grid_extent = 50;
  double hazard_base = 0.1;
  double hazard_tumor_coeff = 1.5;
  double censor_rate = 0.3;
  double noise_sigma = 0.3;
  double text_noise_sigma = 0.3;
  bool scatter = false;  // spatially random coordinates instead of blobs
  std::uint64_t seed = 0;

  int n_classes() const { return static_cast<int>(tumor_fraction_ranges.size()); }
  // Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, GeneratorConfig& c);

struct Bag {
  MatrixXd features;  // N x D
  std::vector<Coord> coords;
  int label = 0;
  SurvivalRecord survival;
  MatrixXd text;           // 1 x D
  std::vector<int> truth;  // phenotype id per instance; tests only
  double tumor_fraction = 0.0;

  Eigen::Index size() const { return features.rows(); }
  friend bool operator==(const Bag&, const Bag&) = default;
};

struct Archetypes {
  MatrixXd phenotypes;  // n_phenotypes x D, unit rows
  MatrixXd classes;     // n_classes x D, unit rows
};

Archetypes make_archetypes(const GeneratorConfig& cfg);

std::vector<Bag> generate_cohort(const GeneratorConfig& cfg, int threads = 1);

struct CohortSplit {
  std::vector<Bag> train, val, test;
};

// Seeded shuffle, then contiguous train/val/test blocks of rounded sizes.
CohortSplit split_cohort(const std::vector<Bag>& cohort, const std::array<double, 3>& ratios, std::uint64_t seed);

inline constexpr std::array<double, 3> kDefaultSplit{0.64, 0.16, 0.20};

// Pooled instance features of every bag, stacked in bag order.
MatrixXd pooled_instances(const std::vector<Bag>& bags);

// On-disk cohort: <dir>/cohort.json plus <dir>/bags/*.bin.
void write_cohort(const std::filesystem::path& dir, const std::vector<Bag>& cohort, const GeneratorConfig& cfg);
struct LoadedCohort {
  std::vector<Bag> bags;
  GeneratorConfig config;
};
LoadedCohort read_cohort(const std::filesystem::path& dir);

}  // namespace hpdp
