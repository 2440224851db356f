#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace hpdp {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;
using RowVectorXd = RowVec<double>;

// Invalid hyperparameter or structural setting (temperature <= 0, D % 4 != 0, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operand shapes that do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad data: out-of-range labels, too few points, unreadable files.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A verification step found a numerical problem (NaN loss, failed gradient check).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace hpdp
