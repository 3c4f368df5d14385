#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lgvc/core/autograd.hpp"
#include "lgvc/core/rng.hpp"
#include "lgvc/encoder.hpp"
#include "lgvc/geometry.hpp"

namespace lgvc::losses {

using core::Var;

struct LossConfig {
  double tau = 0.1;
  double w_rc = 1.0, w_mi = 1.0, w_td = 1.0;
  double grl_lambda = 1.0;
  int negative_cap = 1024;
  int shuffles_per_video = 1;
  bool use_nce = false;  // replaces region contrast with plain InfoNCE

  void validate() const;
};

/// Flattens a feature map to cell rows (N, C), N = t*h*w in (t,h,w) order —
/// the same flattening the correspondence matrix uses.
Var feature_cells(const encoder::FeatureMap& fm);

/// -log[ sim(q,pos) / (sim(q,pos) + sum sim(q,neg)) ], sim = exp(cos/tau).
Var info_nce(const Var& query, const Var& positive,
             const std::vector<Var>& negatives, double tau);

/// Soft region contrast: local/global cell rows already projected to a common
/// dim; `negatives` is an optional (N_neg, D) matrix of cross-video cells
/// (pass nullptr for none). Cross-video cells never receive positive weight.
Var region_contrast(const Var& local_cells, const Var& global_cells,
                    const geometry::CorrespondenceMatrix& S,
                    const Var& negatives, double tau);

/// 2-layer MLP critic over a concatenated feature pair.
struct MIHead {
  Var w1, b1, w2, b2;
  MIHead(int feat_dim, int hidden, core::Rng& rng);
  /// freeze: critic parameters detached (scores still differentiable w.r.t.
  /// the inputs). grl_lambda >= 0: gradient reversal applied to the inputs.
  Var score(const Var& a, const Var& b, bool freeze = false,
            double grl_lambda = -1.0) const;
  std::vector<Var> params() const { return {w1, b1, w2, b2}; }
};

/// Donsker-Varadhan bound: mean(G over joint) - log mean exp(G over marginal).
Var mine_lowerbound(const MIHead& head,
                    const std::vector<std::pair<Var, Var>>& joint,
                    const std::vector<std::pair<Var, Var>>& marginal,
                    bool freeze = false, double grl_lambda = -1.0);

struct MiBatchItem {
  int video = 0;
  int level = 0;
  Var feature;  // pooled video-mode feature
};

struct ShortcutLoss {
  Var adversarial;    // -bound with reversal: head maximizes, encoder minimizes
  Var encoder_extra;  // frozen-critic bound on local/global pairs
  bool skipped = false;
  double bound = 0.0;     // level-group bound value
  double lg_bound = 0.0;  // local-global bound value
};

/// Adversarial low-level MI term. Joint pairs: same level, different videos.
/// Marginal pairs: different levels. Fewer than one of either kind skips the
/// term with a warning.
ShortcutLoss shortcut_elimination_loss(
    const std::vector<MiBatchItem>& items,
    const std::vector<std::pair<Var, Var>>& local_global, const MIHead& head,
    double lambda);

struct OrderHead {
  enum class Kind { kMlp, kRecurrent, kRecurrentMlp };
  static Kind parse_kind(const std::string& s);

  OrderHead(Kind kind, int feat_dim, int k, int hidden, core::Rng& rng);
  /// Scalar order score of a clip-feature sequence against the video feature.
  Var score(const std::vector<Var>& seq, const Var& global_vec) const;
  std::vector<Var> params() const;

  Kind kind;
  int feat_dim, k, hidden;
  // mlp / recurrent+mlp readout
  Var w1, b1, w2, b2;
  // gated recurrent cell
  Var wz, uz, bz, wr, ur, br, wn, un, bn;
};

using Seq = std::vector<Var>;

/// DV bound with joint = (ordered sequence, global) and marginal =
/// (shuffled sequence, global). Maximized w.r.t. encoder and head (no
/// reversal); the trainer subtracts it from the total objective.
Var temporal_dependency_bound(const OrderHead& head,
                              const std::vector<std::pair<Seq, Var>>& joint,
                              const std::vector<std::pair<Seq, Var>>& marginal);

/// Uniform draw from S_k minus the identity.
std::vector<int> nonidentity_permutation(int k, core::Rng& rng);

struct TotalLoss {
  Var total;
  double contrast = 0.0, mi_head = 0.0, mi_enc = 0.0, td = 0.0;
};

/// w_rc*contrast + w_mi*(adversarial + frozen local-global) - w_td*td_bound.
/// Null terms are skipped; a NaN in any enabled term aborts the step.
TotalLoss total_loss(const Var& contrast, const ShortcutLoss& mi,
                     const Var& td_bound, const LossConfig& cfg);

}  // namespace lgvc::losses
