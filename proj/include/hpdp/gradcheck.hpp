#pragma once

// Central-difference verification of analytic gradients.
//
// A parameter container is anything with
//   template <class F> void for_each(F&& f);        // f(const std::string&, MatrixXd&)
//   template <class F> void for_each(F&& f) const;  // f(const std::string&, const MatrixXd&)
// ModelParams and NamedArrays both qualify.

#include "hpdp/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace hpdp {

struct GradCheckReport {
  std::string op_name;
  double max_rel_err = 0.0;
  // (array index in for_each order, linear index inside that array)
  std::pair<std::size_t, Eigen::Index> worst_index{0, 0};
  std::string worst_array;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double step = 1e-6;
  std::size_t samples = 200;
  std::uint64_t seed = 0;
};

// Ordered list of named dense arrays.
struct NamedArrays {
  std::vector<std::pair<std::string, MatrixXd>> items;

  MatrixXd& add(std::string name, MatrixXd value) {
    items.emplace_back(std::move(name), std::move(value));
    return items.back().second;
  }
  MatrixXd& operator[](std::size_t i) { return items[i].second; }
  const MatrixXd& operator[](std::size_t i) const { return items[i].second; }

  template <class F>
  void for_each(F&& f) {
    for (auto& [name, m] : items) f(name, m);
  }
  template <class F>
  void for_each(F&& f) const {
    for (const auto& [name, m] : items) f(name, m);
  }
};

template <typename Params>
GradCheckReport grad_check(const std::string& op_name, const std::function<double(const Params&)>& loss_fn,
                           Params params, const Params& analytic, const GradCheckOptions& opt = {}) {
  if (!(opt.step >= 1e-7 && opt.step <= 1e-4))
    throw ConfigError("grad_check: step must lie in [1e-7, 1e-4]");

  std::vector<std::string> names;
  std::vector<MatrixXd*> arrays;
  params.for_each([&](const std::string& n, MatrixXd& m) {
    names.push_back(n);
    arrays.push_back(&m);
  });
  std::vector<const MatrixXd*> grads;
  analytic.for_each([&](const std::string&, const MatrixXd& m) { grads.push_back(&m); });
  if (grads.size() != arrays.size()) throw ShapeError("grad_check: gradient layout differs from parameters");

  std::vector<Eigen::Index> offsets{0};
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (grads[i]->rows() != arrays[i]->rows() || grads[i]->cols() != arrays[i]->cols())
      throw ShapeError("grad_check: gradient shape mismatch for " + names[i]);
    offsets.push_back(offsets.back() + arrays[i]->size());
  }
  const Eigen::Index total = offsets.back();

  // Coordinates to probe: everything when small, else one per array plus uniform draws.
  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  if (static_cast<std::size_t>(total) <= opt.samples) {
    for (std::size_t a = 0; a < arrays.size(); ++a)
      for (Eigen::Index j = 0; j < arrays[a]->size(); ++j) coords.emplace_back(a, j);
  } else {
    std::mt19937_64 rng(opt.seed);
    for (std::size_t a = 0; a < arrays.size() && coords.size() < opt.samples; ++a) {
      if (arrays[a]->size() == 0) continue;
      std::uniform_int_distribution<Eigen::Index> pick(0, arrays[a]->size() - 1);
      coords.emplace_back(a, pick(rng));
    }
    std::uniform_int_distribution<Eigen::Index> flat(0, total - 1);
    while (coords.size() < opt.samples) {
      const Eigen::Index f = flat(rng);
      const auto a = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), f) -
                                              offsets.begin() - 1);
      coords.emplace_back(a, f - offsets[a]);
    }
  }

  auto eval = [&](const char* where) {
    const double v = loss_fn(params);
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "grad_check(" << op_name << "): non-finite loss at " << where;
      throw NumericalError(msg.str());
    }
    return v;
  };
  eval("base point");

  GradCheckReport report;
  report.op_name = op_name;
  for (const auto& [a, j] : coords) {
    double& x = arrays[a]->data()[j];
    const double saved = x;
    x = saved + opt.step;
    const double plus = eval("+step");
    x = saved - opt.step;
    const double minus = eval("-step");
    x = saved;
    const double numeric = (plus - minus) / (2.0 * opt.step);
    const double err = std::abs(grads[a]->data()[j] - numeric) / std::max(1.0, std::abs(numeric));
    if (report.checked == 0 || err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_index = {a, j};
      report.worst_array = names[a];
    }
    ++report.checked;
  }
  return report;
}

}  // namespace hpdp
