#pragma once

// Text-conditioned alignment of aggregated prototypes.
//
// Stage 1 (modulation):  H_mod   = LN_mod(M + (gamma(t) * M + beta(t)))
// Stage 2 (propagation): M_final = LN_out(M + MHA(Q=M, K=H_mod, V=H_mod))
//
// gamma/beta come from a one-hidden-layer generator (ReLU, width D) with two
// linear heads.

#include "hpdp/numerics.hpp"

namespace hpdp {

inline constexpr double kLayerNormEps = 1e-5;

template <typename S>
struct LayerNormParams {
  Mat<S> gain;  // 1 x D
  Mat<S> bias;  // 1 x D

  static LayerNormParams identity(Eigen::Index d) { return {Mat<S>::Ones(1, d), Mat<S>::Zero(1, d)}; }
};

template <typename S>
struct FilmGenerator {
  Mat<S> w_hidden, b_hidden;
  Mat<S> w_gamma, b_gamma;
  Mat<S> w_beta, b_beta;

  static FilmGenerator zeros(Eigen::Index d) {
    return {Mat<S>::Zero(d, d), Mat<S>::Zero(1, d), Mat<S>::Zero(d, d),
            Mat<S>::Zero(1, d), Mat<S>::Zero(d, d), Mat<S>::Zero(1, d)};
  }
};

template <typename S>
struct FilmParams {
  Mat<S> gamma;  // 1 x D
  Mat<S> beta;   // 1 x D
};

template <typename S>
struct FilmCache {
  Mat<S> text;
  Mat<S> hidden_pre;
  Mat<S> hidden;
};

// text is 1 x D
template <typename S>
FilmParams<S> generate_film_params(const Mat<S>& text, const FilmGenerator<S>& gen, FilmCache<S>* cache = nullptr) {
  require_shape(text.rows() == 1, "generate_film_params: text embedding must be a single row");
  Mat<S> pre = linear(text, gen.w_hidden, gen.b_hidden);
  Mat<S> hid = relu(pre);
  FilmParams<S> film{linear(hid, gen.w_gamma, gen.b_gamma), linear(hid, gen.w_beta, gen.b_beta)};
  if (cache) *cache = {text, std::move(pre), std::move(hid)};
  return film;
}

template <typename S>
struct FilmGeneratorGrads {
  Mat<S> d_text;
  FilmGenerator<S> d_gen;
};

template <typename S>
FilmGeneratorGrads<S> generate_film_params_backward(const FilmCache<S>& c, const FilmGenerator<S>& gen,
                                                     const Mat<S>& d_gamma, const Mat<S>& d_beta) {
  const auto gg = linear_backward(c.hidden, gen.w_gamma, d_gamma);
  const auto gb = linear_backward(c.hidden, gen.w_beta, d_beta);
  const Mat<S> d_pre = relu_backward(c.hidden_pre, gg.dx + gb.dx);
  auto gh = linear_backward(c.text, gen.w_hidden, d_pre);
  FilmGeneratorGrads<S> g;
  g.d_text = std::move(gh.dx);
  g.d_gen = {std::move(gh.dw), std::move(gh.db), gg.dw, gg.db, gb.dw, gb.db};
  return g;
}

template <typename S>
struct ModulateCache {
  Mat<S> m;
  Mat<S> gamma;
  LayerNormCache<S> ln;
};

template <typename S>
Mat<S> modulate(const Mat<S>& m, const FilmParams<S>& film, const LayerNormParams<S>& ln,
                ModulateCache<S>* cache = nullptr) {
  require_shape(film.gamma.cols() == m.cols() && film.beta.cols() == m.cols(),
                "modulate: FiLM parameters must have width " + std::to_string(m.cols()));
  Mat<S> pre = m.array().rowwise() * (film.gamma.row(0).array() + S(1));
  pre.rowwise() += film.beta.row(0);
  if (cache) {
    cache->m = m;
    cache->gamma = film.gamma;
  }
  return layer_norm(pre, ln.gain, ln.bias, S(kLayerNormEps), cache ? &cache->ln : nullptr);
}

template <typename S>
struct ModulateGrads {
  Mat<S> dm;
  Mat<S> d_gamma;
  Mat<S> d_beta;
  Mat<S> d_gain;
  Mat<S> d_bias;
};

template <typename S>
ModulateGrads<S> modulate_backward(const ModulateCache<S>& c, const LayerNormParams<S>& ln, const Mat<S>& d_out) {
  auto lg = layer_norm_backward(c.ln, ln.gain, d_out);
  ModulateGrads<S> g;
  g.dm = lg.dx.array().rowwise() * (c.gamma.row(0).array() + S(1));
  g.d_gamma = lg.dx.cwiseProduct(c.m).colwise().sum();
  g.d_beta = lg.dx.colwise().sum();
  g.d_gain = std::move(lg.dgain);
  g.d_bias = std::move(lg.dbias);
  return g;
}

template <typename S>
struct PropagateCache {
  MhaCache<S> mha;
  LayerNormCache<S> ln;
};

template <typename S>
Mat<S> propagate(const Mat<S>& m, const Mat<S>& h_mod, const MhaWeights<S>& mha, int n_heads,
                 const LayerNormParams<S>& ln, PropagateCache<S>* cache = nullptr) {
  require_shape(m.rows() == h_mod.rows() && m.cols() == h_mod.cols(), "propagate: M and H_mod shapes differ");
  Mat<S> x = m + multi_head_attention(m, h_mod, h_mod, mha, n_heads, cache ? &cache->mha : nullptr);
  return layer_norm(x, ln.gain, ln.bias, S(kLayerNormEps), cache ? &cache->ln : nullptr);
}

template <typename S>
struct PropagateGrads {
  Mat<S> dm;
  Mat<S> dh_mod;
  MhaWeights<S> d_mha;
  Mat<S> d_gain;
  Mat<S> d_bias;
};

template <typename S>
PropagateGrads<S> propagate_backward(const PropagateCache<S>& c, const MhaWeights<S>& mha,
                                     const LayerNormParams<S>& ln, const Mat<S>& d_out) {
  auto lg = layer_norm_backward(c.ln, ln.gain, d_out);
  auto ag = multi_head_attention_backward(c.mha, mha, lg.dx);
  PropagateGrads<S> g;
  g.dm = lg.dx + ag.d_query;
  g.dh_mod = ag.d_key + ag.d_value;
  g.d_mha = std::move(ag.dw);
  g.d_gain = std::move(lg.dgain);
  g.d_bias = std::move(lg.dbias);
  return g;
}

}  // namespace hpdp
