#include "hpdp/model.hpp"

#include "hpdp/parallel.hpp"
#include "hpdp/random.hpp"

#include <random>

namespace hpdp {

namespace {

template <class Self, class Ptr>
std::vector<std::pair<std::string, Ptr>> collect(Self& s) {
  std::vector<std::pair<std::string, Ptr>> out;
  auto add = [&](const char* name, auto& m) { out.emplace_back(name, &m); };
  add("projector.w1", s.proj_w1);
  add("projector.b1", s.proj_b1);
  add("projector.w2", s.proj_w2);
  add("projector.b2", s.proj_b2);
  if (s.active.maps) {
    add("experts.prior", s.prior);
    if (s.adapt.rows() > 0) add("experts.adapt", s.adapt);
  }
  if (s.active.hcma) {
    add("film.w_hidden", s.film.w_hidden);
    add("film.b_hidden", s.film.b_hidden);
    add("film.w_gamma", s.film.w_gamma);
    add("film.b_gamma", s.film.b_gamma);
    add("film.w_beta", s.film.w_beta);
    add("film.b_beta", s.film.b_beta);
    add("ln_mod.gain", s.ln_mod.gain);
    add("ln_mod.bias", s.ln_mod.bias);
    add("mha.wq", s.mha.wq);
    add("mha.bq", s.mha.bq);
    add("mha.wk", s.mha.wk);
    add("mha.bk", s.mha.bk);
    add("mha.wv", s.mha.wv);
    add("mha.bv", s.mha.bv);
    add("mha.wo", s.mha.wo);
    add("mha.bo", s.mha.bo);
    add("ln_out.gain", s.ln_out.gain);
    add("ln_out.bias", s.ln_out.bias);
  } else if (s.active.text) {
    add("text.w", s.text_w);
    add("text.b", s.text_b);
  }
  add("head.w", s.head.weights);
  add("head.b", s.head.bias);
  return out;
}

MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  MatrixXd m(rows, cols);
  // row-major fill keeps the draw order independent of Eigen's storage order
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

ExpertBank<double> bank_of(const ModelParams& p, const TrainConfig& cfg) {
  return {p.prior, p.adapt, cfg.tau_cos, cfg.effective_tau_dot()};
}

}  // namespace

std::vector<std::pair<std::string, MatrixXd*>> ModelParams::arrays() {
  return collect<ModelParams, MatrixXd*>(*this);
}

std::vector<std::pair<std::string, const MatrixXd*>> ModelParams::arrays() const {
  return collect<const ModelParams, const MatrixXd*>(*this);
}

Eigen::Index ModelParams::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& [name, m] : arrays()) n += m->size();
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& [name, m] : z.arrays()) m->setZero();
  return z;
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
  auto mine = arrays();
  const auto theirs = other.arrays();
  require_shape(mine.size() == theirs.size(), "ModelParams::add_scaled: layouts differ");
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i].second += scale * *theirs[i].second;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, m] : arrays())
    if (!m->allFinite()) return false;
  return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.active == b.active)) return false;
  const auto xa = a.arrays();
  const auto xb = b.arrays();
  if (xa.size() != xb.size()) return false;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    if (xa[i].first != xb[i].first) return false;
    const MatrixXd& ma = *xa[i].second;
    const MatrixXd& mb = *xb[i].second;
    if (ma.rows() != mb.rows() || ma.cols() != mb.cols() || ma != mb) return false;
  }
  return true;
}

MatrixXd normalized_teachers(const MatrixXd& teachers) { return normalize_rows(teachers); }

ModelParams init_params(const TrainConfig& cfg, const ModelShape& shape, const MatrixXd& teachers) {
  cfg.validate();
  const Eigen::Index d = cfg.dim;
  if (shape.input_dim != cfg.dim)
    throw ConfigError("residual projector needs input features of width dim=" + std::to_string(cfg.dim) + ", got " +
                      std::to_string(shape.input_dim));
  std::mt19937_64 rng(stream_seed(cfg.seed, "init"));
  const double s = 1.0 / std::sqrt(double(d));

  ModelParams p;
  p.active = cfg.toggles;
  p.proj_w1 = gaussian(shape.input_dim, d, 1.0 / std::sqrt(double(shape.input_dim)), rng);
  p.proj_b1 = MatrixXd::Zero(1, d);
  p.proj_w2 = gaussian(d, d, 0.1 * s, rng);
  p.proj_b2 = MatrixXd::Zero(1, d);

  if (cfg.toggles.maps) {
    require_shape(teachers.rows() == cfg.k_sup && teachers.cols() == d,
                  "init_params: teachers must be " + shape_str(cfg.k_sup, d) + ", got " +
                      shape_str(teachers.rows(), teachers.cols()));
    p.prior = normalized_teachers(teachers) + gaussian(cfg.k_sup, d, cfg.expert_init_noise, rng);
    p.adapt = gaussian(cfg.k_free, d, s, rng);
  } else {
    p.prior = MatrixXd(0, d);
    p.adapt = MatrixXd(0, d);
  }

  if (cfg.toggles.hcma) {
    p.film = FilmGenerator<double>::zeros(d);
    p.film.w_hidden = gaussian(d, d, s, rng);
    p.ln_mod = LayerNormParams<double>::identity(d);
    p.ln_out = LayerNormParams<double>::identity(d);
    p.mha = MhaWeights<double>::zeros(d);
    p.mha.wq = gaussian(d, d, s, rng);
    p.mha.wk = gaussian(d, d, s, rng);
    p.mha.wv = gaussian(d, d, s, rng);
    p.mha.wo = gaussian(d, d, s, rng);
  } else {
    p.film = FilmGenerator<double>::zeros(0);
    p.ln_mod = p.ln_out = LayerNormParams<double>::identity(0);
    p.mha = MhaWeights<double>::zeros(0);
  }
  if (cfg.toggles.text && !cfg.toggles.hcma) {
    p.text_w = gaussian(d, d, s, rng);
    p.text_b = MatrixXd::Zero(1, d);
  } else {
    p.text_w = MatrixXd(0, 0);
    p.text_b = MatrixXd(0, 0);
  }
  p.head = {gaussian(d, shape.out_dim, s, rng), MatrixXd::Zero(1, shape.out_dim)};
  return p;
}

MatrixXd forward(const ModelParams& p, const TrainConfig& cfg, const Bag& bag, BagCache* cache) {
  require_shape(bag.features.cols() == p.proj_w1.rows(),
                "forward: bag features have width " + std::to_string(bag.features.cols()) + ", model expects " +
                    std::to_string(p.proj_w1.rows()));
  require_shape(bag.size() >= 1, "forward: empty bag");
  BagCache local;
  BagCache& c = cache ? *cache : local;

  c.x = bag.features;
  c.hidden_pre = linear(c.x, p.proj_w1, p.proj_b1);
  c.hidden = relu(c.hidden_pre);
  c.h = c.x + linear(c.hidden, p.proj_w2, p.proj_b2);
  if (p.active.spe) c.h = fuse(c.h, encode_positions(std::span<const Coord>(bag.coords), c.h.cols()));

  if (p.active.maps) {
    const ExpertBank<double> bank = bank_of(p, cfg);
    c.att = route(c.h, bank);
    c.m = aggregate(c.att, c.h);
  } else {
    c.m = c.h.colwise().mean();
  }

  if (p.active.hcma) {
    c.text = bag.text;
    c.film_params = generate_film_params(c.text, p.film, &c.film);
    c.h_mod = modulate(c.m, c.film_params, p.ln_mod, &c.mod);
    c.m_final = propagate(c.m, c.h_mod, p.mha, cfg.n_heads, p.ln_out, &c.prop);
  } else if (p.active.text) {
    c.text = bag.text;
    c.m_final = c.m;
    c.m_final.rowwise() += linear(c.text, p.text_w, p.text_b).row(0);
  } else {
    c.m_final = c.m;
  }
  return pool_and_predict(c.m_final, p.head);
}

void backward(const ModelParams& p, const TrainConfig& cfg, const BagCache& c, const MatrixXd& d_out,
              ModelParams& g) {
  const auto hg = pool_and_predict_backward(c.m_final, p.head, d_out);
  g.head.weights += hg.d_head.weights;
  g.head.bias += hg.d_head.bias;

  MatrixXd dm;
  if (p.active.hcma) {
    const auto pg = propagate_backward(c.prop, p.mha, p.ln_out, hg.dm);
    const auto mg = modulate_backward(c.mod, p.ln_mod, pg.dh_mod);
    const auto fg = generate_film_params_backward(c.film, p.film, mg.d_gamma, mg.d_beta);
    dm = pg.dm + mg.dm;
    g.ln_out.gain += pg.d_gain;
    g.ln_out.bias += pg.d_bias;
    g.ln_mod.gain += mg.d_gain;
    g.ln_mod.bias += mg.d_bias;
    g.mha.wq += pg.d_mha.wq;
    g.mha.wk += pg.d_mha.wk;
    g.mha.wv += pg.d_mha.wv;
    g.mha.wo += pg.d_mha.wo;
    g.mha.bq += pg.d_mha.bq;
    g.mha.bk += pg.d_mha.bk;
    g.mha.bv += pg.d_mha.bv;
    g.mha.bo += pg.d_mha.bo;
    g.film.w_hidden += fg.d_gen.w_hidden;
    g.film.b_hidden += fg.d_gen.b_hidden;
    g.film.w_gamma += fg.d_gen.w_gamma;
    g.film.b_gamma += fg.d_gen.b_gamma;
    g.film.w_beta += fg.d_gen.w_beta;
    g.film.b_beta += fg.d_gen.b_beta;
  } else if (p.active.text) {
    dm = hg.dm;
    const MatrixXd d_shift = hg.dm.colwise().sum();
    const auto tg = linear_backward(c.text, p.text_w, d_shift);
    g.text_w += tg.dw;
    g.text_b += tg.db;
  } else {
    dm = hg.dm;
  }

  MatrixXd dh;
  if (p.active.maps) {
    const auto mg = maps_backward(c.h, bank_of(p, cfg), c.att, dm);
    dh = mg.dh;
    g.prior += mg.d_prior;
    if (g.adapt.rows() > 0) g.adapt += mg.d_adapt;
  } else {
    dh = dm.replicate(c.h.rows(), 1) / double(c.h.rows());
  }

  // H = X + relu(X W1 + b1) W2 + b2 (+ fixed spatial term)
  const auto l2 = linear_backward(c.hidden, p.proj_w2, dh);
  g.proj_w2 += l2.dw;
  g.proj_b2 += l2.db;
  const auto l1 = linear_backward(c.x, p.proj_w1, relu_backward(c.hidden_pre, l2.dx));
  g.proj_w1 += l1.dw;
  g.proj_b1 += l1.db;
}

std::vector<const Bag*> bag_pointers(const std::vector<Bag>& bags) {
  std::vector<const Bag*> out;
  out.reserve(bags.size());
  for (const auto& b : bags) out.push_back(&b);
  return out;
}

ObjectiveResult objective(const ModelParams& p, const TrainConfig& cfg, const MatrixXd& teachers_unit,
                          std::span<const Bag* const> bags, bool with_grad) {
  if (bags.empty()) throw InputError("objective: empty batch");
  const std::size_t n = bags.size();
  std::vector<BagCache> caches(n);
  std::vector<MatrixXd> outs(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) { outs[i] = forward(p, cfg, *bags[i], &caches[i]); });

  MatrixXd out(static_cast<Eigen::Index>(n), outs.front().cols());
  for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = outs[i].row(0);

  ObjectiveResult res;
  MatrixXd d_out;
  double task = 0.0;
  if (cfg.task == Task::Classification) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = bags[i]->label;
    task = cross_entropy(out, labels);
    if (with_grad) d_out = cross_entropy_grad(out, labels);
  } else {
    std::vector<double> risks(n);
    std::vector<SurvivalRecord> recs(n);
    for (std::size_t i = 0; i < n; ++i) {
      risks[i] = out(static_cast<Eigen::Index>(i), 0);
      recs[i] = bags[i]->survival;
    }
    const CoxResult cox = cox_nll(risks, recs, cfg.cox_eps);
    task = cox.loss;
    res.no_events = cox.no_events;
    if (with_grad) d_out = cox.grad;
  }

  double proto = 0.0;
  ProtoResult pr;
  if (p.active.maps) {
    pr = proto_supervision(p.prior, teachers_unit, cfg.tau_proto);
    proto = pr.loss;
  }
  res.loss = make_breakdown(task, proto, cfg.lambda);

  if (with_grad) {
    std::vector<ModelParams> per_bag(n);
    const ModelParams zero = p.zeros_like();
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      per_bag[i] = zero;
      backward(p, cfg, caches[i], d_out.row(static_cast<Eigen::Index>(i)), per_bag[i]);
    });
    res.grads = zero;
    for (const auto& g : per_bag) res.grads.add_scaled(g, 1.0);
    if (p.active.maps) res.grads.prior += cfg.lambda * pr.d_prior;
  }
  return res;
}

MatrixXd predict(const ModelParams& p, const TrainConfig& cfg, std::span<const Bag* const> bags,
                 std::vector<AttentionMap<double>>* attention) {
  const std::size_t n = bags.size();
  std::vector<MatrixXd> outs(n);
  if (attention) attention->assign(n, {});
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    if (attention) {
      BagCache c;
      outs[i] = forward(p, cfg, *bags[i], &c);
      (*attention)[i] = std::move(c.att);
    } else {
      outs[i] = forward(p, cfg, *bags[i]);
    }
  });
  const Eigen::Index cols = n ? outs.front().cols() : 0;
  MatrixXd out(static_cast<Eigen::Index>(n), cols);
  for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = outs[i].row(0);
  return out;
}

}  // namespace hpdp
