#include "lgvc/losses.hpp"

#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace ag = lgvc::core::ag;

namespace lgvc::losses {

namespace {

double vec_norm(const Var& v) {
  double s = 0.0;
  for (double x : v->value.data) s += x * x;
  return std::sqrt(s);
}

// Scalar element (row, col) of a matrix node.
Var element(const Var& m, int row, int col) {
  core::Tensor mask(m->value.shape);
  mask[static_cast<std::int64_t>(row) * m->value.dim(1) + col] = 1.0;
  return ag::sum_all(ag::mul(m, core::leaf(std::move(mask))));
}

Var cosine(const Var& a, const Var& b) {
  return ag::dot(ag::l2_normalize_rows(a), ag::l2_normalize_rows(b));
}

// Row-concatenates two (n_i, d) matrices.
Var concat_rows(const Var& a, const Var& b) {
  const int d = a->value.dim(1);
  const int n = a->value.dim(0) + b->value.dim(0);
  return ag::reshape(ag::concat_flat({a, b}), {n, d});
}

Var dv_bound(const std::vector<Var>& joint_scores,
             const std::vector<Var>& marginal_scores) {
  return ag::sub(ag::mean_all(ag::concat_flat(joint_scores)),
                 ag::logmeanexp(ag::concat_flat(marginal_scores)));
}

}  // namespace

void LossConfig::validate() const {
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  if (w_rc < 0.0 || w_mi < 0.0 || w_td < 0.0)
    throw std::invalid_argument("loss weights must be nonnegative");
  if (grl_lambda < 0.0)
    throw std::invalid_argument("grl_lambda must be nonnegative");
  if (shuffles_per_video < 1)
    throw std::invalid_argument("shuffles_per_video must be >= 1");
}

Var feature_cells(const encoder::FeatureMap& fm) {
  const auto& sh = fm.values->value.shape;
  const int c = sh[0], n = sh[1] * sh[2] * sh[3];
  return ag::transpose2d(ag::reshape(fm.values, {c, n}));
}

Var info_nce(const Var& query, const Var& positive,
             const std::vector<Var>& negatives, double tau) {
  if (negatives.empty())
    throw std::invalid_argument("info_nce needs at least one negative");
  if (vec_norm(query) < 1e-12 || vec_norm(positive) < 1e-12)
    throw std::domain_error("zero-norm embedding in info_nce");
  for (const auto& n : negatives)
    if (vec_norm(n) < 1e-12)
      throw std::domain_error("zero-norm negative in info_nce");

  std::vector<Var> rows;
  rows.push_back(positive);
  rows.insert(rows.end(), negatives.begin(), negatives.end());
  Var keys = ag::l2_normalize_rows(ag::stack_rows(rows));
  Var q = ag::reshape(ag::l2_normalize_rows(query),
                      {1, query->value.dim(0)});
  Var logits = ag::scale(ag::matmul(q, ag::transpose2d(keys)), 1.0 / tau);
  return ag::neg(element(ag::log_softmax_rows(logits), 0, 0));
}

Var region_contrast(const Var& local_cells, const Var& global_cells,
                    const geometry::CorrespondenceMatrix& S,
                    const Var& negatives, double tau) {
  const int nc = local_cells->value.dim(0);
  const int nv = global_cells->value.dim(0);
  if (nc != S.n_local() || nv != S.n_global())
    throw std::invalid_argument("correspondence shape does not match cells");
  for (int i = 0; i < nc; ++i) {
    double row = 0.0;
    for (int j = 0; j < nv; ++j) row += S.at(i, j);
    if (row <= 1e-12)
      throw std::logic_error("correspondence row sums to zero");
  }

  Var keys = negatives ? concat_rows(global_cells, negatives) : global_cells;
  const int total = keys->value.dim(0);
  Var logits = ag::scale(ag::matmul(ag::l2_normalize_rows(local_cells),
                                    ag::transpose2d(ag::l2_normalize_rows(keys))),
                         1.0 / tau);
  Var logp = ag::log_softmax_rows(logits);
  // Soft targets: S over the same-video cells, zero over cross-video
  // negatives. Negatives only widen the denominator.
  core::Tensor w({nc, total});
  for (int i = 0; i < nc; ++i)
    for (int j = 0; j < nv; ++j)
      w[static_cast<std::int64_t>(i) * total + j] = S.at(i, j);
  return ag::scale(ag::sum_all(ag::mul(logp, core::leaf(std::move(w)))),
                   -1.0 / nc);
}

MIHead::MIHead(int feat_dim, int hidden, core::Rng& rng) {
  auto init = [&](std::vector<int> shape, double fan) {
    core::Tensor t(shape);
    const double std = std::sqrt(2.0 / fan);
    for (auto& v : t.data) v = std * rng.normal();
    return core::leaf(std::move(t), true);
  };
  w1 = init({hidden, 2 * feat_dim}, 2.0 * feat_dim);
  b1 = core::leaf(core::Tensor({hidden}), true);
  w2 = init({1, hidden}, 2.0 * hidden);
  b2 = core::leaf(core::Tensor({1}), true);
}

Var MIHead::score(const Var& a, const Var& b, bool freeze,
                  double grl_lambda) const {
  Var x = ag::concat_flat(
      {grl_lambda >= 0.0 ? ag::grl(a, grl_lambda) : a,
       grl_lambda >= 0.0 ? ag::grl(b, grl_lambda) : b});
  auto P = [&](const Var& p) { return freeze ? ag::detach(p) : p; };
  Var h = ag::relu(ag::linear(x, P(w1), P(b1)));
  return ag::linear(h, P(w2), P(b2));
}

Var mine_lowerbound(const MIHead& head,
                    const std::vector<std::pair<Var, Var>>& joint,
                    const std::vector<std::pair<Var, Var>>& marginal,
                    bool freeze, double grl_lambda) {
  if (joint.empty() || marginal.empty())
    throw std::invalid_argument("mine_lowerbound needs nonempty pair sets");
  std::vector<Var> js, ms;
  js.reserve(joint.size());
  ms.reserve(marginal.size());
  for (const auto& [a, b] : joint)
    js.push_back(head.score(a, b, freeze, grl_lambda));
  for (const auto& [a, b] : marginal)
    ms.push_back(head.score(a, b, freeze, grl_lambda));
  return dv_bound(js, ms);
}

ShortcutLoss shortcut_elimination_loss(
    const std::vector<MiBatchItem>& items,
    const std::vector<std::pair<Var, Var>>& local_global, const MIHead& head,
    double lambda) {
  std::vector<std::pair<Var, Var>> joint, marginal;
  for (size_t i = 0; i < items.size(); ++i)
    for (size_t j = i + 1; j < items.size(); ++j) {
      if (items[i].level == items[j].level) {
        if (items[i].video != items[j].video)
          joint.emplace_back(items[i].feature, items[j].feature);
      } else {
        marginal.emplace_back(items[i].feature, items[j].feature);
      }
    }

  ShortcutLoss out;
  if (joint.empty() || marginal.empty()) {
    std::cerr << "[losses] shortcut term skipped: batch has no usable "
                 "level-group pairs\n";
    out.skipped = true;
    out.adversarial = core::scalar(0.0);
    out.encoder_extra = core::scalar(0.0);
    return out;
  }

  Var bound = mine_lowerbound(head, joint, marginal, false, lambda);
  out.bound = bound->value[0];
  // Descending on -bound makes the critic ascend the bound while the
  // reversal layer scales/negates what reaches the encoder.
  out.adversarial = ag::neg(bound);

  if (local_global.size() >= 2) {
    // Frozen-critic bound on matched pairs; marginals from a cyclic shift of
    // the global features.
    std::vector<std::pair<Var, Var>> lg_marginal;
    for (size_t i = 0; i < local_global.size(); ++i)
      lg_marginal.emplace_back(local_global[i].first,
                               local_global[(i + 1) % local_global.size()].second);
    Var lg = mine_lowerbound(head, local_global, lg_marginal, true, -1.0);
    out.lg_bound = lg->value[0];
    out.encoder_extra = lg;
  } else {
    out.encoder_extra = core::scalar(0.0);
  }
  return out;
}

OrderHead::Kind OrderHead::parse_kind(const std::string& s) {
  if (s == "mlp") return Kind::kMlp;
  if (s == "recurrent" || s == "gru") return Kind::kRecurrent;
  if (s == "recurrent+mlp" || s == "gru+mlp") return Kind::kRecurrentMlp;
  throw std::invalid_argument("unknown order head kind: " + s);
}

OrderHead::OrderHead(Kind kind_, int feat_dim_, int k_, int hidden_,
                     core::Rng& rng)
    : kind(kind_), feat_dim(feat_dim_), k(k_), hidden(hidden_) {
  if (k < 2) throw std::invalid_argument("order head needs K >= 2 clips");
  auto init = [&](std::vector<int> shape, double fan) {
    core::Tensor t(shape);
    const double std = std::sqrt(1.0 / fan);
    for (auto& v : t.data) v = std * rng.normal();
    return core::leaf(std::move(t), true);
  };
  auto zeros = [&](int n) { return core::leaf(core::Tensor({n}), true); };
  if (kind != Kind::kMlp) {
    wz = init({feat_dim, feat_dim}, feat_dim);
    uz = init({feat_dim, feat_dim}, feat_dim);
    bz = zeros(feat_dim);
    wr = init({feat_dim, feat_dim}, feat_dim);
    ur = init({feat_dim, feat_dim}, feat_dim);
    br = zeros(feat_dim);
    wn = init({feat_dim, feat_dim}, feat_dim);
    un = init({feat_dim, feat_dim}, feat_dim);
    bn = zeros(feat_dim);
  }
  if (kind != Kind::kRecurrent) {
    const int in = kind == Kind::kMlp ? (k + 1) * feat_dim : 2 * feat_dim;
    w1 = init({hidden, in}, in);
    b1 = zeros(hidden);
    w2 = init({1, hidden}, hidden);
    b2 = zeros(1);
  }
}

std::vector<Var> OrderHead::params() const {
  std::vector<Var> out;
  for (const Var& v : {wz, uz, bz, wr, ur, br, wn, un, bn, w1, b1, w2, b2})
    if (v) out.push_back(v);
  return out;
}

Var OrderHead::score(const std::vector<Var>& seq, const Var& global_vec) const {
  if (static_cast<int>(seq.size()) != k)
    throw std::invalid_argument("sequence length does not match configured K");
  auto mlp = [&](const Var& x) {
    return ag::linear(ag::relu(ag::linear(x, w1, b1)), w2, b2);
  };
  if (kind == Kind::kMlp) {
    std::vector<Var> parts = seq;
    parts.push_back(global_vec);
    return mlp(ag::concat_flat(parts));
  }
  Var zero = core::leaf(core::Tensor({feat_dim}));
  Var h = zero;
  for (const Var& x : seq) {
    Var z = ag::sigmoid(ag::add(ag::linear(x, wz, bz), ag::linear(h, uz, zero)));
    Var r = ag::sigmoid(ag::add(ag::linear(x, wr, br), ag::linear(h, ur, zero)));
    Var n = ag::tanh_(
        ag::add(ag::linear(x, wn, bn), ag::linear(ag::mul(r, h), un, zero)));
    h = ag::add(ag::mul(ag::add_scalar(ag::neg(z), 1.0), h), ag::mul(z, n));
  }
  if (kind == Kind::kRecurrent) return cosine(h, global_vec);
  return mlp(ag::concat_flat({h, global_vec}));
}

Var temporal_dependency_bound(const OrderHead& head,
                              const std::vector<std::pair<Seq, Var>>& joint,
                              const std::vector<std::pair<Seq, Var>>& marginal) {
  if (joint.empty() || marginal.empty())
    throw std::invalid_argument("temporal dependency needs nonempty pair sets");
  std::vector<Var> js, ms;
  for (const auto& [seq, g] : joint) js.push_back(head.score(seq, g));
  for (const auto& [seq, g] : marginal) ms.push_back(head.score(seq, g));
  return dv_bound(js, ms);
}

std::vector<int> nonidentity_permutation(int k, core::Rng& rng) {
  if (k < 2)
    throw std::invalid_argument("permutation needs K >= 2");
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  const std::vector<int> id = perm;
  do {
    rng.shuffle(perm);
  } while (perm == id);
  return perm;
}

TotalLoss total_loss(const Var& contrast, const ShortcutLoss& mi,
                     const Var& td_bound, const LossConfig& cfg) {
  cfg.validate();
  auto check = [](const char* name, double v) {
    if (std::isnan(v) || std::isinf(v))
      throw std::runtime_error(std::string("non-finite loss term: ") + name +
                               " = " + std::to_string(v));
  };
  TotalLoss out;
  Var total = core::scalar(0.0);
  if (contrast && cfg.w_rc > 0.0) {
    out.contrast = contrast->value[0];
    check("contrast", out.contrast);
    total = ag::add(total, ag::scale(contrast, cfg.w_rc));
  }
  if (mi.adversarial && cfg.w_mi > 0.0 && !mi.skipped) {
    out.mi_head = mi.bound;
    out.mi_enc = mi.lg_bound;
    check("mi_bound", out.mi_head);
    check("mi_local_global", out.mi_enc);
    total = ag::add(
        total, ag::scale(ag::add(mi.adversarial, mi.encoder_extra), cfg.w_mi));
  }
  if (td_bound && cfg.w_td > 0.0) {
    out.td = td_bound->value[0];
    check("td_bound", out.td);
    total = ag::add(total, ag::scale(ag::neg(td_bound), cfg.w_td));
  }
  out.total = total;
  return out;
}

}  // namespace lgvc::losses
