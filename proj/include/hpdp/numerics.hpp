#pragma once

// Dense kernels used by every stage of the pipeline. Each forward kernel has a
// matching *_backward that returns the vector-Jacobian product for an upstream
// gradient of the same shape as the forward output. Biases and layer-norm
// affines are 1 x D row matrices broadcast over rows.

#include "hpdp/common.hpp"

#include <cmath>
#include <vector>

namespace hpdp {

// Added to row norms in cosine similarity so zero rows map to zero similarity.
inline constexpr double kNormGuard = 1e-12;

// ---------------------------------------------------------------------------
// softmax over each row of logits / temperature

template <typename Derived>
Mat<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits,
                                           typename Derived::Scalar temperature) {
  using S = typename Derived::Scalar;
  if (!(temperature > S(0))) throw ConfigError("softmax_rows: temperature must be positive");
  Mat<S> out = logits / temperature;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const S peak = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// d(logits) given the softmax output and d(output).
template <typename D1, typename D2>
Mat<typename D1::Scalar> softmax_rows_backward(const Eigen::MatrixBase<D1>& probs,
                                               const Eigen::MatrixBase<D2>& d_probs,
                                               typename D1::Scalar temperature) {
  using S = typename D1::Scalar;
  require_shape(probs.rows() == d_probs.rows() && probs.cols() == d_probs.cols(),
                "softmax_rows_backward: gradient shape mismatch");
  const Vec<S> inner = probs.cwiseProduct(d_probs).rowwise().sum();
  Mat<S> d_logits = probs.cwiseProduct(d_probs - inner.replicate(1, probs.cols()));
  return d_logits / temperature;
}

// ---------------------------------------------------------------------------
// layer normalization over the columns of each row (population variance)

template <typename S>
struct LayerNormCache {
  Mat<S> normalized;  // (x - mean) * inv_std, before the affine
  Vec<S> inv_std;
};

template <typename S>
struct LayerNormGrads {
  Mat<S> dx;
  Mat<S> dgain;
  Mat<S> dbias;
};

template <typename Derived, typename G, typename B>
Mat<typename Derived::Scalar> layer_norm(const Eigen::MatrixBase<Derived>& x,
                                         const Eigen::MatrixBase<G>& gain,
                                         const Eigen::MatrixBase<B>& bias,
                                         typename Derived::Scalar eps,
                                         LayerNormCache<typename Derived::Scalar>* cache = nullptr) {
  using S = typename Derived::Scalar;
  const Eigen::Index d = x.cols();
  require_shape(gain.rows() == 1 && gain.cols() == d && bias.rows() == 1 && bias.cols() == d,
                "layer_norm: gain/bias must be 1x" + std::to_string(d));
  if (!(eps > S(0))) throw ConfigError("layer_norm: eps must be positive");

  Mat<S> normalized(x.rows(), d);
  Vec<S> inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S mean = x.row(r).mean();
    const RowVec<S> centered = x.row(r).array() - mean;
    const S var = centered.squaredNorm() / S(d);
    inv_std(r) = S(1) / std::sqrt(var + eps);
    normalized.row(r) = centered * inv_std(r);
  }
  Mat<S> out = normalized.array().rowwise() * gain.row(0).array();
  out.rowwise() += bias.row(0);
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename S, typename G, typename D2>
LayerNormGrads<S> layer_norm_backward(const LayerNormCache<S>& cache,
                                      const Eigen::MatrixBase<G>& gain,
                                      const Eigen::MatrixBase<D2>& dy) {
  const Mat<S>& xhat = cache.normalized;
  require_shape(dy.rows() == xhat.rows() && dy.cols() == xhat.cols(),
                "layer_norm_backward: gradient shape mismatch");
  const S d = S(xhat.cols());
  LayerNormGrads<S> g;
  g.dbias = dy.colwise().sum();
  g.dgain = dy.cwiseProduct(xhat).colwise().sum();
  const Mat<S> dxhat = dy.array().rowwise() * gain.row(0).array();
  g.dx.resize(xhat.rows(), xhat.cols());
  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
    const S mean_dxhat = dxhat.row(r).sum() / d;
    const S mean_proj = dxhat.row(r).dot(xhat.row(r)) / d;
    g.dx.row(r) = cache.inv_std(r) *
                  (dxhat.row(r).array() - mean_dxhat - xhat.row(r).array() * mean_proj).matrix();
  }
  return g;
}

// ---------------------------------------------------------------------------
// pairwise cosine similarity between the rows of a (N x D) and b (K x D)

template <typename Derived>
Mat<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& m) {
  using S = typename Derived::Scalar;
  const Vec<S> norms = m.rowwise().norm().array().max(S(kNormGuard));
  return norms.cwiseInverse().asDiagonal() * m;
}

template <typename D1, typename D2>
Mat<typename D1::Scalar> cosine_sim_matrix(const Eigen::MatrixBase<D1>& a, const Eigen::MatrixBase<D2>& b) {
  require_shape(a.cols() == b.cols(), "cosine_sim_matrix: column counts differ (" +
                                          std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
  return normalize_rows(a) * normalize_rows(b).transpose();
}

// Backward of u = m / max(|m|, guard), applied row by row.
template <typename D1, typename D2>
Mat<typename D1::Scalar> normalize_rows_backward(const Eigen::MatrixBase<D1>& m, const Eigen::MatrixBase<D2>& du) {
  using S = typename D1::Scalar;
  Mat<S> dm(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const S n = m.row(r).norm();
    if (n > S(kNormGuard)) {
      dm.row(r) = (du.row(r) - m.row(r) * (m.row(r).dot(du.row(r)) / (n * n))) / n;
    } else {
      dm.row(r) = du.row(r) / S(kNormGuard);
    }
  }
  return dm;
}

template <typename S>
struct CosineGrads {
  Mat<S> da;
  Mat<S> db;
};

template <typename D1, typename D2, typename D3>
CosineGrads<typename D1::Scalar> cosine_sim_matrix_backward(const Eigen::MatrixBase<D1>& a,
                                                            const Eigen::MatrixBase<D2>& b,
                                                            const Eigen::MatrixBase<D3>& d_sim) {
  using S = typename D1::Scalar;
  require_shape(d_sim.rows() == a.rows() && d_sim.cols() == b.rows(),
                "cosine_sim_matrix_backward: gradient shape mismatch");
  const Mat<S> an = normalize_rows(a);
  const Mat<S> bn = normalize_rows(b);
  return {normalize_rows_backward(a, d_sim * bn), normalize_rows_backward(b, d_sim.transpose() * an)};
}

// ---------------------------------------------------------------------------
// affine map x W + b

template <typename D1, typename D2, typename D3>
Mat<typename D1::Scalar> linear(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& w,
                                const Eigen::MatrixBase<D3>& b) {
  using S = typename D1::Scalar;
  require_shape(x.cols() == w.rows(),
                "linear: input " + shape_str(x.rows(), x.cols()) + " vs weight " + shape_str(w.rows(), w.cols()));
  require_shape(b.rows() == 1 && b.cols() == w.cols(), "linear: bias must be 1x" + std::to_string(w.cols()));
  Mat<S> out = x * w;
  out.rowwise() += b.row(0);
  return out;
}

template <typename S>
struct LinearGrads {
  Mat<S> dx;
  Mat<S> dw;
  Mat<S> db;
};

template <typename D1, typename D2, typename D3>
LinearGrads<typename D1::Scalar> linear_backward(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& w,
                                                 const Eigen::MatrixBase<D3>& dy) {
  return {dy * w.transpose(), x.transpose() * dy, dy.colwise().sum()};
}

template <typename Derived>
Mat<typename Derived::Scalar> relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

// Subgradient 0 at the kink.
template <typename D1, typename D2>
Mat<typename D1::Scalar> relu_backward(const Eigen::MatrixBase<D1>& pre, const Eigen::MatrixBase<D2>& dy) {
  using S = typename D1::Scalar;
  return (pre.array() > S(0)).select(dy.array(), S(0)).matrix();
}

// ---------------------------------------------------------------------------
// multi-head attention with separate Q/K/V/output projections

template <typename S>
struct MhaWeights {
  Mat<S> wq, wk, wv, wo;  // D x D
  Mat<S> bq, bk, bv, bo;  // 1 x D

  static MhaWeights zeros(Eigen::Index d) {
    return {Mat<S>::Zero(d, d), Mat<S>::Zero(d, d), Mat<S>::Zero(d, d), Mat<S>::Zero(d, d),
            Mat<S>::Zero(1, d), Mat<S>::Zero(1, d), Mat<S>::Zero(1, d), Mat<S>::Zero(1, d)};
  }
};

template <typename S>
struct MhaCache {
  Mat<S> query_in, key_in, value_in;
  Mat<S> q, k, v;
  std::vector<Mat<S>> probs;  // one (Lq x Lk) attention matrix per head
  Mat<S> concat;
  int n_heads = 1;
};

template <typename S>
struct MhaGrads {
  Mat<S> d_query, d_key, d_value;
  MhaWeights<S> dw;
};

template <typename S>
Mat<S> multi_head_attention(const Mat<S>& query, const Mat<S>& key, const Mat<S>& value,
                            const MhaWeights<S>& w, int n_heads, MhaCache<S>* cache = nullptr) {
  const Eigen::Index d = query.cols();
  if (n_heads < 1 || d % n_heads != 0)
    throw ConfigError("multi_head_attention: D=" + std::to_string(d) + " not divisible by n_heads=" +
                      std::to_string(n_heads));
  require_shape(key.cols() == d && value.cols() == d && key.rows() == value.rows(),
                "multi_head_attention: key/value shape mismatch");
  require_shape(w.wq.rows() == d && w.wq.cols() == d, "multi_head_attention: projection must be DxD");

  const Eigen::Index dh = d / n_heads;
  const S scale = S(1) / std::sqrt(S(dh));
  Mat<S> q = linear(query, w.wq, w.bq);
  Mat<S> k = linear(key, w.wk, w.bk);
  Mat<S> v = linear(value, w.wv, w.bv);

  Mat<S> concat(query.rows(), d);
  std::vector<Mat<S>> probs;
  probs.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    const auto cols = Eigen::seqN(h * dh, dh);
    Mat<S> p = softmax_rows(q(Eigen::all, cols) * k(Eigen::all, cols).transpose() * scale, S(1));
    concat(Eigen::all, cols) = p * v(Eigen::all, cols);
    probs.push_back(std::move(p));
  }
  Mat<S> out = linear(concat, w.wo, w.bo);
  if (cache) {
    cache->query_in = query;
    cache->key_in = key;
    cache->value_in = value;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->concat = std::move(concat);
    cache->n_heads = n_heads;
  }
  return out;
}

template <typename S>
MhaGrads<S> multi_head_attention_backward(const MhaCache<S>& c, const MhaWeights<S>& w, const Mat<S>& d_out) {
  const Eigen::Index d = c.q.cols();
  const Eigen::Index dh = d / c.n_heads;
  const S scale = S(1) / std::sqrt(S(dh));

  MhaGrads<S> g;
  const auto out_g = linear_backward(c.concat, w.wo, d_out);
  g.dw.wo = out_g.dw;
  g.dw.bo = out_g.db;

  Mat<S> dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (int h = 0; h < c.n_heads; ++h) {
    const auto cols = Eigen::seqN(h * dh, dh);
    const Mat<S>& p = c.probs[h];
    const Mat<S> d_head = out_g.dx(Eigen::all, cols);
    dv(Eigen::all, cols) = p.transpose() * d_head;
    const Mat<S> d_scores = softmax_rows_backward(p, d_head * c.v(Eigen::all, cols).transpose(), S(1)) * scale;
    dq(Eigen::all, cols) = d_scores * c.k(Eigen::all, cols);
    dk(Eigen::all, cols) = d_scores.transpose() * c.q(Eigen::all, cols);
  }

  auto qg = linear_backward(c.query_in, w.wq, dq);
  auto kg = linear_backward(c.key_in, w.wk, dk);
  auto vg = linear_backward(c.value_in, w.wv, dv);
  g.d_query = std::move(qg.dx);
  g.d_key = std::move(kg.dx);
  g.d_value = std::move(vg.dx);
  g.dw.wq = std::move(qg.dw);
  g.dw.bq = std::move(qg.db);
  g.dw.wk = std::move(kg.dw);
  g.dw.bk = std::move(kg.db);
  g.dw.wv = std::move(vg.dw);
  g.dw.bv = std::move(vg.db);
  return g;
}

}  // namespace hpdp
