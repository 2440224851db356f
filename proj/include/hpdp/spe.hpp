#pragma once

// Sinusoidal encoding of 2-D patch grid coordinates.
//
// For an embedding width D (a multiple of 4) each axis gets D/2 entries laid
// out as interleaved (sin, cos) pairs over frequency index j = 0 .. D/4-1 with
// angular rate 10000^(-4j/D). The x block comes first, then the y block.

#include "hpdp/common.hpp"

#include <cmath>
#include <span>

namespace hpdp {

struct Coord {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

inline void require_spe_width(Eigen::Index d) {
  if (d <= 0 || d % 4 != 0)
    throw ConfigError("spatial encoding width D=" + std::to_string(d) + " must be a positive multiple of 4");
}

template <typename Scalar = double>
RowVec<Scalar> encode_position(const Coord& c, Eigen::Index d) {
  require_spe_width(d);
  const Eigen::Index quarter = d / 4;
  RowVec<Scalar> out(d);
  for (Eigen::Index j = 0; j < quarter; ++j) {
    const Scalar rate = std::pow(Scalar(10000), -Scalar(4 * j) / Scalar(d));
    out(2 * j) = std::sin(Scalar(c.x) * rate);
    out(2 * j + 1) = std::cos(Scalar(c.x) * rate);
    out(d / 2 + 2 * j) = std::sin(Scalar(c.y) * rate);
    out(d / 2 + 2 * j + 1) = std::cos(Scalar(c.y) * rate);
  }
  return out;
}

template <typename Scalar = double>
Mat<Scalar> encode_positions(std::span<const Coord> coords, Eigen::Index d) {
  Mat<Scalar> out(static_cast<Eigen::Index>(coords.size()), d);
  for (std::size_t i = 0; i < coords.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = encode_position<Scalar>(coords[i], d);
  return out;
}

// H = F + S
template <typename D1, typename D2>
Mat<typename D1::Scalar> fuse(const Eigen::MatrixBase<D1>& features, const Eigen::MatrixBase<D2>& embeddings) {
  require_shape(features.rows() == embeddings.rows() && features.cols() == embeddings.cols(),
                "fuse: features " + shape_str(features.rows(), features.cols()) + " vs embeddings " +
                    shape_str(embeddings.rows(), embeddings.cols()));
  return features + embeddings;
}

}  // namespace hpdp
