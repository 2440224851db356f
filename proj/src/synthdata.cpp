#include "hpdp/synthdata.hpp"

#include "hpdp/io.hpp"
#include "hpdp/parallel.hpp"
#include "hpdp/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace hpdp {

using nlohmann::json;

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (n_bags < 1) fail("n_bags must be ≥ 1");
  if (instances_min < 1) fail("instances_min must be ≥ 1");
  if (instances_max < instances_min) fail("instances_max must be ≥ instances_min");
  if (dim < 4 || dim % 4 != 0) fail("dim must be a positive multiple of 4");
  if (n_phenotypes < 2) fail("n_phenotypes must be ≥ 2");
  if (tumor_fraction_ranges.empty()) fail("tumor_fraction_ranges must list at least one class");
  for (const auto& [lo, hi] : tumor_fraction_ranges)
    if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi)) fail("tumor_fraction_ranges entries must satisfy 0 ≤ lo ≤ hi ≤ 1");
  if (grid_extent < 1) fail("grid_extent must be ≥ 1");
  if (static_cast<long long>(grid_extent) * grid_extent < instances_max)
    fail("grid_extent² must be ≥ instances_max (one instance per grid cell)");
  if (!(hazard_base > 0.0)) fail("hazard_base must be > 0");
  if (!std::isfinite(hazard_tumor_coeff)) fail("hazard_tumor_coeff must be finite");
  if (!(censor_rate >= 0.0 && censor_rate < 1.0)) fail("censor_rate must lie in [0, 1)");
  if (!(noise_sigma > 0.0)) fail("noise_sigma must be > 0");
  if (!(text_noise_sigma > 0.0)) fail("text_noise_sigma must be > 0");
}

void to_json(json& j, const GeneratorConfig& c) {
  json ranges = json::array();
  for (const auto& [lo, hi] : c.tumor_fraction_ranges) ranges.push_back({lo, hi});
  j = json{{"n_bags", c.n_bags},
           {"instances_min", c.instances_min},
           {"instances_max", c.instances_max},
           {"dim", c.dim},
           {"n_phenotypes", c.n_phenotypes},
           {"tumor_fraction_ranges", ranges},
           {"grid_extent", c.grid_extent},
           {"hazard_base", c.hazard_base},
           {"hazard_tumor_coeff", c.hazard_tumor_coeff},
           {"censor_rate", c.censor_rate},
           {"noise_sigma", c.noise_sigma},
           {"text_noise_sigma", c.text_noise_sigma},
           {"scatter", c.scatter},
           {"seed", c.seed}};
}

void from_json(const json& j, GeneratorConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception&) {
      throw ConfigError(std::string("invalid value for ") + key);
    }
  };
  get("n_bags", c.n_bags);
  get("instances_min", c.instances_min);
  get("instances_max", c.instances_max);
  get("dim", c.dim);
  get("n_phenotypes", c.n_phenotypes);
  get("grid_extent", c.grid_extent);
  get("hazard_base", c.hazard_base);
  get("hazard_tumor_coeff", c.hazard_tumor_coeff);
  get("censor_rate", c.censor_rate);
  get("noise_sigma", c.noise_sigma);
  get("text_noise_sigma", c.text_noise_sigma);
  get("scatter", c.scatter);
  get("seed", c.seed);
  if (j.contains("tumor_fraction_ranges")) {
    c.tumor_fraction_ranges.clear();
    for (const auto& r : j.at("tumor_fraction_ranges")) {
      if (!r.is_array() || r.size() != 2) throw ConfigError("invalid value for tumor_fraction_ranges");
      c.tumor_fraction_ranges.emplace_back(r[0].get<double>(), r[1].get<double>());
    }
  }
}

namespace {

MatrixXd unit_gaussian_rows(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
    m.row(r).normalize();
  }
  return m;
}

// Fills `count` free cells nearest (Chebyshev rings) to a random center.
void place_blob(int count, int extent, std::vector<char>& occupied, std::mt19937_64& rng, std::vector<Coord>& out) {
  std::uniform_int_distribution<int> cell(0, extent - 1);
  const int cx = cell(rng);
  const int cy = cell(rng);
  int placed = 0;
  for (int r = 0; placed < count && r < 2 * extent; ++r) {
    for (int dy = -r; dy <= r && placed < count; ++dy)
      for (int dx = -r; dx <= r && placed < count; ++dx) {
        if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
        const int x = cx + dx;
        const int y = cy + dy;
        if (x < 0 || y < 0 || x >= extent || y >= extent) continue;
        char& slot = occupied[static_cast<std::size_t>(y) * extent + x];
        if (slot) continue;
        slot = 1;
        out.push_back({double(x), double(y)});
        ++placed;
      }
  }
}

Bag make_bag(const GeneratorConfig& cfg, const Archetypes& arch, int index) {
  std::mt19937_64 rng(child_seed(stream_seed(cfg.seed, "bags"), static_cast<std::uint64_t>(index)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Bag bag;
  bag.label = index % cfg.n_classes();
  const auto [lo, hi] = cfg.tumor_fraction_ranges[bag.label];
  bag.tumor_fraction = lo + (hi - lo) * unit(rng);
  const int n = std::uniform_int_distribution<int>(cfg.instances_min, cfg.instances_max)(rng);
  const int n_tumor = static_cast<int>(std::lround(bag.tumor_fraction * n));

  std::vector<int> phenos(n, 0);
  std::uniform_int_distribution<int> other(1, cfg.n_phenotypes - 1);
  for (int i = n_tumor; i < n; ++i) phenos[i] = other(rng);
  std::sort(phenos.begin(), phenos.end());

  // Coordinates, grouped by phenotype so each phenotype forms one blob.
  const int extent = cfg.grid_extent;
  std::vector<Coord> coords;
  coords.reserve(n);
  std::vector<char> occupied(static_cast<std::size_t>(extent) * extent, 0);
  if (cfg.scatter) {
    std::uniform_int_distribution<int> cell(0, extent - 1);
    while (static_cast<int>(coords.size()) < n) {
      const int x = cell(rng), y = cell(rng);
      char& slot = occupied[static_cast<std::size_t>(y) * extent + x];
      if (slot) continue;
      slot = 1;
      coords.push_back({double(x), double(y)});
    }
  } else {
    for (int i = 0; i < n;) {
      int j = i;
      while (j < n && phenos[j] == phenos[i]) ++j;
      place_blob(j - i, extent, occupied, rng, coords);
      i = j;
    }
  }

  // Instance order is shuffled so nothing downstream can rely on grouping.
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  bag.features.resize(n, cfg.dim);
  bag.coords.resize(n);
  bag.truth.resize(n);
  for (int i = 0; i < n; ++i) {
    const int src = perm[i];
    bag.truth[i] = phenos[src];
    bag.coords[i] = coords[src];
    for (int c = 0; c < cfg.dim; ++c) bag.features(i, c) = arch.phenotypes(phenos[src], c) + cfg.noise_sigma * normal(rng);
  }

  const double rate = cfg.hazard_base * std::exp(cfg.hazard_tumor_coeff * bag.tumor_fraction);
  const double event_time = std::exponential_distribution<double>(rate)(rng);
  if (unit(rng) < cfg.censor_rate) {
    bag.survival = {event_time * (1.0 - unit(rng)), false};  // uniform on (0, event_time]
  } else {
    bag.survival = {event_time, true};
  }

  bag.text.resize(1, cfg.dim);
  for (int c = 0; c < cfg.dim; ++c) bag.text(0, c) = arch.classes(bag.label, c) + cfg.text_noise_sigma * normal(rng);
  return bag;
}

}  // namespace

Archetypes make_archetypes(const GeneratorConfig& cfg) {
  std::mt19937_64 rng(stream_seed(cfg.seed, "archetypes"));
  Archetypes a;
  a.phenotypes = unit_gaussian_rows(cfg.n_phenotypes, cfg.dim, rng);
  a.classes = unit_gaussian_rows(cfg.n_classes(), cfg.dim, rng);
  return a;
}

std::vector<Bag> generate_cohort(const GeneratorConfig& cfg, int threads) {
  cfg.validate();
  const Archetypes arch = make_archetypes(cfg);
  std::vector<Bag> cohort(cfg.n_bags);
  parallel_for(cohort.size(), threads, [&](std::size_t i) { cohort[i] = make_bag(cfg, arch, static_cast<int>(i)); });
  return cohort;
}

CohortSplit split_cohort(const std::vector<Bag>& cohort, const std::array<double, 3>& ratios, std::uint64_t seed) {
  for (double r : ratios)
    if (!(r > 0.0)) throw ConfigError("split ratios must all be positive");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  const std::size_t n = cohort.size();
  const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw InputError("split of " + std::to_string(n) + " bags leaves an empty partition");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(stream_seed(seed, "split")));
  CohortSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? s.train : (i < n_train + n_val ? s.val : s.test);
    dst.push_back(cohort[order[i]]);
  }
  return s;
}

MatrixXd pooled_instances(const std::vector<Bag>& bags) {
  Eigen::Index rows = 0;
  for (const auto& b : bags) rows += b.size();
  if (bags.empty()) return MatrixXd(0, 0);
  MatrixXd out(rows, bags.front().features.cols());
  Eigen::Index at = 0;
  for (const auto& b : bags) {
    out.middleRows(at, b.size()) = b.features;
    at += b.size();
  }
  return out;
}

namespace {

std::string bag_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "bag_%05zu", i);
  return buf;
}

MatrixXd coords_matrix(const std::vector<Coord>& coords) {
  MatrixXd m(static_cast<Eigen::Index>(coords.size()), 2);
  for (std::size_t i = 0; i < coords.size(); ++i) m.row(static_cast<Eigen::Index>(i)) << coords[i].x, coords[i].y;
  return m;
}

}  // namespace

void write_cohort(const std::filesystem::path& dir, const std::vector<Bag>& cohort, const GeneratorConfig& cfg) {
  std::filesystem::create_directories(dir / "bags");
  json bags = json::array();
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const Bag& b = cohort[i];
    const std::string name = bag_name(i);
    const std::string feat_rel = "bags/" + name + ".features.bin";
    const std::string coord_rel = "bags/" + name + ".coords.bin";
    io::write_matrix(dir / feat_rel, b.features);
    io::write_matrix(dir / coord_rel, coords_matrix(b.coords));
    std::vector<double> text(b.text.data(), b.text.data() + b.text.size());
    bags.push_back({{"id", name},
                    {"label", b.label},
                    {"time", b.survival.time},
                    {"event", b.survival.event ? 1 : 0},
                    {"tumor_fraction", b.tumor_fraction},
                    {"features", feat_rel},
                    {"coords", coord_rel},
                    {"text", text},
                    {"truth", b.truth}});
  }
  json manifest{{"format", "HPDPCOHORT1"},
                {"dim", cfg.dim},
                {"n_classes", cfg.n_classes()},
                {"generator", cfg},
                {"bags", bags}};
  io::write_file_atomic(dir / "cohort.json", manifest.dump(1) + "\n");
}

LoadedCohort read_cohort(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "cohort.json";
  json manifest;
  try {
    manifest = json::parse(io::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw InputError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "HPDPCOHORT1") throw InputError(manifest_path.string() + ": unknown format");

  LoadedCohort out;
  out.config = manifest.at("generator").get<GeneratorConfig>();
  const int dim = manifest.at("dim").get<int>();
  try {
    for (const auto& e : manifest.at("bags")) {
      Bag b;
      b.features = io::read_matrix(dir / e.at("features").get<std::string>());
      const MatrixXd c = io::read_matrix(dir / e.at("coords").get<std::string>());
      if (b.features.cols() != dim || c.rows() != b.features.rows() || c.cols() != 2)
        throw InputError(manifest_path.string() + ": array shapes inconsistent for " + e.at("id").get<std::string>());
      b.coords.resize(c.rows());
      for (Eigen::Index i = 0; i < c.rows(); ++i) b.coords[i] = {c(i, 0), c(i, 1)};
      b.label = e.at("label").get<int>();
      b.survival = {e.at("time").get<double>(), e.at("event").get<int>() != 0};
      b.tumor_fraction = e.value("tumor_fraction", 0.0);
      const auto text = e.at("text").get<std::vector<double>>();
      if (static_cast<int>(text.size()) != dim) throw InputError(manifest_path.string() + ": text width mismatch");
      b.text = Eigen::Map<const MatrixXd>(text.data(), 1, dim);
      b.truth = e.value("truth", std::vector<int>{});
      out.bags.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw InputError(manifest_path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace hpdp
