#include "lgvc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lgvc/geometry.hpp"

using lgvc::core::Var;
namespace ag = lgvc::core::ag;
namespace fs = std::filesystem;

namespace lgvc::trainer {

namespace {

// Row-concatenates (n_i, d) matrices.
Var concat_matrices(const std::vector<Var>& ms) {
  int rows = 0;
  const int d = ms[0]->value.dim(1);
  for (const auto& m : ms) rows += m->value.dim(0);
  return ag::reshape(ag::concat_flat(ms), {rows, d});
}

Var mean_of(const std::vector<Var>& xs) {
  return ag::mean_all(ag::concat_flat(xs));
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2)
    throw std::invalid_argument("batch_size must be >= 2 (batch negatives)");
  if (k_local < 1) throw std::invalid_argument("k_local must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (lr <= 0 || lr_decay <= 0)
    throw std::invalid_argument("learning rates must be positive");
  if (levels_per_iter < 1)
    throw std::invalid_argument("levels_per_iter must be >= 1");
  if (grl_warmup < 0.0 || grl_warmup > 1.0)
    throw std::invalid_argument("grl_warmup must be in [0, 1]");
  if (aug.grid.total_levels() < 1)
    throw std::invalid_argument("invalid intensity grid");
}

TrainingBatch build_batch(const std::vector<dataio::PretrainView>& data,
                          const TrainConfig& cfg,
                          const encoder::EncoderConfig& ecfg, core::Rng& rng) {
  cfg.validate();
  if (data.size() < 2)
    throw std::invalid_argument("build_batch needs at least 2 videos");

  TrainingBatch batch;
  batch.n_videos = std::min<int>(cfg.batch_size, static_cast<int>(data.size()));
  batch.k = cfg.k_local;
  const int views_per_video = batch.k + 1;
  const int total = batch.n_videos * views_per_video;

  // Levels first: group count is capped by the pairing capacity of the batch.
  int groups = std::min(cfg.levels_per_iter, total / 2);
  if (groups < cfg.levels_per_iter)
    std::cerr << "[trainer] reducing intensity groups from "
              << cfg.levels_per_iter << " to " << groups
              << " (batch has only " << total << " views)\n";
  std::vector<long> all_levels(cfg.aug.grid.total_levels());
  std::iota(all_levels.begin(), all_levels.end(), 0L);
  rng.shuffle(all_levels);
  all_levels.resize(groups);

  // Batch videos: sample without replacement.
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  batch.video_indices.assign(order.begin(), order.begin() + batch.n_videos);

  // Group assignment walks slots k-major so consecutive slots always come
  // from different videos; chunks of two go to each group in turn, which
  // guarantees >= 2 members from >= 2 videos per group.
  std::vector<int> group_of(total);
  {
    int i = 0;
    for (int k = 0; k < views_per_video; ++k)
      for (int v = 0; v < batch.n_videos; ++v) {
        group_of[v * views_per_video + k] = (i / 2) % groups;
        ++i;
      }
  }

  batch.views.resize(total);
  for (int v = 0; v < batch.n_videos; ++v) {
    const auto& src = data[batch.video_indices[v]];
    const auto g = dataaug::sample_global_crop(src.t, cfg.aug.weak_min, rng,
                                               ecfg.in_t);
    for (int k = 0; k < views_per_video; ++k) {
      View& view = batch.views[v * views_per_video + k];
      view.video = v;
      view.k = k;
      view.group = group_of[v * views_per_video + k];
      view.crop = k == 0 ? g
                         : dataaug::sample_local_crop(
                               k, batch.k, g, cfg.aug.clip_frames, src.t,
                               cfg.aug.local_area_min, cfg.aug.local_area_max,
                               rng);
      const dataaug::LevelId level =
          cfg.aug.grid.from_flat(all_levels[view.group]);
      view.low = dataaug::sample_lowlevel(cfg.aug.grid, level, rng);
      auto cropped = dataaug::apply_crop(*src.frames, view.crop, ecfg.in_t,
                                         ecfg.in_h, ecfg.in_w);
      view.clip = dataaug::apply_lowlevel(cropped, view.low, rng);
    }
    if (batch.k >= 2)
      batch.perms.push_back(losses::nonidentity_permutation(batch.k, rng));
  }
  return batch;
}

Models::Models(const encoder::EncoderConfig& ecfg, const TrainConfig& tcfg,
               core::Rng& rng)
    : enc(ecfg, rng),
      mi_head(ecfg.widths.back(), tcfg.mi_hidden, rng),
      order_head(losses::OrderHead::parse_kind(tcfg.order_head_kind),
                 ecfg.widths.back(), std::max(2, tcfg.k_local),
                 tcfg.order_hidden, rng) {}

std::vector<std::pair<std::string, core::Var>> Models::named_params() {
  std::vector<std::pair<std::string, core::Var>> out = enc.params();
  int i = 0;
  for (auto& p : mi_head.params())
    out.emplace_back("mi." + std::to_string(i++), p);
  i = 0;
  for (auto& p : order_head.params())
    out.emplace_back("ord." + std::to_string(i++), p);
  return out;
}

std::vector<core::Var> Models::param_list() {
  std::vector<core::Var> out;
  for (auto& [n, v] : named_params()) out.push_back(v);
  return out;
}

std::string StepMetrics::to_json() const {
  nlohmann::json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["l_rc"] = l_rc;
  j["l_mi_head"] = l_mi_head;
  j["l_mi_enc"] = l_mi_enc;
  j["l_td"] = l_td;
  j["total"] = total;
  j["lr"] = lr;
  return j.dump();
}

StepMetrics train_step(const TrainingBatch& batch, Models& models,
                       const losses::LossConfig& lcfg, core::Adam& opt,
                       core::Rng& rng) {
  lcfg.validate();
  auto& enc = models.enc;
  const auto clip_grid = enc.grid_shape(encoder::Mode::kClip);
  const auto video_grid = enc.grid_shape(encoder::Mode::kVideo);
  const int n = batch.n_videos, K = batch.k;

  std::vector<Var> pooled_global(n), global_cells(n);
  std::vector<std::vector<Var>> pooled_local(n);
  std::vector<std::vector<Var>> local_cells(n);
  for (int v = 0; v < n; ++v) {
    auto fm_v = enc.encode(batch.view(v, 0).clip, encoder::Mode::kVideo);
    pooled_global[v] = encoder::Encoder::pool(fm_v);
    global_cells[v] = enc.project(losses::feature_cells(fm_v));
    for (int k = 1; k <= K; ++k) {
      auto fm_c = enc.encode(batch.view(v, k).clip, encoder::Mode::kClip);
      pooled_local[v].push_back(encoder::Encoder::pool(fm_c));
      local_cells[v].push_back(enc.project(losses::feature_cells(fm_c)));
    }
  }

  // Contrastive term: soft region contrast, or plain InfoNCE on pooled
  // projections for the ablation baseline.
  std::vector<Var> contrast_terms;
  if (lcfg.use_nce) {
    std::vector<Var> proj_global(n);
    for (int v = 0; v < n; ++v)
      proj_global[v] = enc.project(pooled_global[v]);
    for (int v = 0; v < n; ++v)
      for (int k = 0; k < K; ++k) {
        std::vector<Var> negs;
        for (int w = 0; w < n; ++w)
          if (w != v) negs.push_back(proj_global[w]);
        contrast_terms.push_back(losses::info_nce(
            enc.project(pooled_local[v][k]), proj_global[v], negs, lcfg.tau));
      }
  } else {
    for (int v = 0; v < n; ++v) {
      std::vector<Var> other;
      for (int w = 0; w < n; ++w)
        if (w != v) other.push_back(global_cells[w]);
      Var negs = concat_matrices(other);
      if (negs->value.dim(0) > lcfg.negative_cap) {
        std::vector<int> idx(negs->value.dim(0));
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        std::vector<Var> keep;
        for (int i = 0; i < lcfg.negative_cap; ++i)
          keep.push_back(ag::select_row(negs, idx[i]));
        negs = ag::stack_rows(keep);
      }
      for (int k = 1; k <= K; ++k) {
        auto S = geometry::correspondence(batch.view(v, k).crop,
                                          batch.view(v, 0).crop, clip_grid,
                                          video_grid);
        contrast_terms.push_back(losses::region_contrast(
            local_cells[v][k - 1], global_cells[v], S, negs, lcfg.tau));
      }
    }
  }
  Var contrast = mean_of(contrast_terms);

  // Adversarial low-level MI over intensity groups + frozen local-global term.
  std::vector<losses::MiBatchItem> items;
  std::vector<std::pair<Var, Var>> local_global;
  for (int v = 0; v < n; ++v) {
    items.push_back({v, batch.view(v, 0).group, pooled_global[v]});
    for (int k = 1; k <= K; ++k) {
      items.push_back({v, batch.view(v, k).group, pooled_local[v][k - 1]});
      local_global.emplace_back(pooled_local[v][k - 1], pooled_global[v]);
    }
  }
  auto mi = losses::shortcut_elimination_loss(items, local_global,
                                              models.mi_head, lcfg.grl_lambda);

  // Temporal order dependency (needs K >= 2).
  Var td;
  if (K >= 2 && lcfg.w_td > 0.0) {
    std::vector<std::pair<losses::Seq, Var>> joint, marginal;
    for (int v = 0; v < n; ++v) {
      joint.emplace_back(pooled_local[v], pooled_global[v]);
      losses::Seq shuffled(K);
      for (int k = 0; k < K; ++k)
        shuffled[k] = pooled_local[v][batch.perms[v][k]];
      marginal.emplace_back(std::move(shuffled), pooled_global[v]);
    }
    td = losses::temporal_dependency_bound(models.order_head, joint, marginal);
  }

  auto tl = losses::total_loss(contrast, mi, td, lcfg);
  opt.zero_grad();
  core::backward(tl.total);
  opt.step();

  StepMetrics m;
  m.l_rc = tl.contrast;
  m.l_mi_head = tl.mi_head;
  m.l_mi_enc = tl.mi_enc;
  m.l_td = tl.td;
  m.total = tl.total->value[0];
  m.lr = opt.lr();
  return m;
}

void save_train_checkpoint(const std::string& path, int next_epoch, long step,
                           double lr, Models& models, const core::Adam& opt,
                           const core::Rng& rng) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp);
    os.precision(17);
    os << "lgvc-train-checkpoint 1\n";
    os << next_epoch << " " << step << " " << lr << "\n";
    os << rng.serialize() << "\n";
    auto named = models.named_params();
    os << named.size() << "\n";
    for (auto& [name, v] : named) {
      os << name << " " << v->value.numel();
      for (double x : v->value.data) os << " " << x;
      os << "\n";
    }
    opt.serialize(os);
    if (!os) {
      os.close();
      fs::remove(tmp);
      throw std::runtime_error("short write on checkpoint " + tmp);
    }
  }
  fs::rename(tmp, path);
}

ResumeState load_train_checkpoint(const std::string& path, Models& models,
                                  core::Adam& opt) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path);
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "lgvc-train-checkpoint" || version != 1)
    throw std::runtime_error("not a training checkpoint: " + path);
  ResumeState rs;
  is >> rs.next_epoch >> rs.step >> rs.lr;
  is.ignore(1);
  std::getline(is, rs.rng_state);
  size_t count = 0;
  is >> count;
  auto named = models.named_params();
  if (count != named.size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  std::map<std::string, Var> by_name;
  for (auto& [n, v] : named) by_name[n] = v;
  for (size_t i = 0; i < count; ++i) {
    std::string name;
    std::int64_t numel = 0;
    is >> name >> numel;
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second->value.numel() != numel)
      throw std::runtime_error("checkpoint parameter mismatch: " + name);
    for (std::int64_t j = 0; j < numel; ++j) is >> it->second->value[j];
  }
  opt.deserialize(is);
  if (!is) throw std::runtime_error("truncated checkpoint " + path);
  return rs;
}

FitResult fit(const std::vector<dataio::PretrainView>& data,
              const encoder::EncoderConfig& ecfg, const TrainConfig& tcfg,
              const losses::LossConfig& lcfg, const std::string& resume_from) {
  tcfg.validate();
  lcfg.validate();
  if (data.empty()) throw std::invalid_argument("empty dataset");

  core::Rng master(tcfg.seed);
  core::Rng init_rng = master.child("init");
  Models models(ecfg, tcfg, init_rng);
  core::Adam opt(models.param_list(), tcfg.lr, 0.9, 0.999, 1e-8,
                 tcfg.weight_decay);
  core::Rng train_rng = master.child("train");

  int start_epoch = 0;
  long step = 0;
  double lr = tcfg.lr;
  if (!resume_from.empty()) {
    auto rs = load_train_checkpoint(resume_from, models, opt);
    start_epoch = rs.next_epoch;
    step = rs.step;
    lr = rs.lr;
    train_rng.deserialize(rs.rng_state);
  }

  std::ofstream metrics_os;
  if (!tcfg.metrics_path.empty()) {
    metrics_os.open(tcfg.metrics_path, std::ios::app);
    if (!metrics_os)
      throw std::runtime_error("cannot open metrics file " +
                               tcfg.metrics_path);
  }
  if (!tcfg.checkpoint_dir.empty()) fs::create_directories(tcfg.checkpoint_dir);

  FitResult result;
  const int steps_per_epoch =
      std::max<int>(1, static_cast<int>(data.size()) / tcfg.batch_size);
  for (int epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
    // lr is a pure function of the epoch, which keeps resume trivially exact.
    lr = epoch >= tcfg.lr_milestone ? tcfg.lr * tcfg.lr_decay : tcfg.lr;
    opt.set_lr(lr);
    for (int s = 0; s < steps_per_epoch; ++s) {
      auto batch = build_batch(data, tcfg, ecfg, train_rng);
      // The reversal strength is a pure function of the step counter, which
      // keeps resumption exact.
      losses::LossConfig step_lcfg = lcfg;
      if (tcfg.grl_warmup > 0.0 && lcfg.grl_lambda > 0.0) {
        const double total =
            static_cast<double>(steps_per_epoch) * tcfg.epochs;
        const double p =
            std::min(1.0, static_cast<double>(step) / (total * tcfg.grl_warmup));
        step_lcfg.grl_lambda =
            lcfg.grl_lambda * (2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0);
      }
      auto m = train_step(batch, models, step_lcfg, opt, train_rng);
      m.step = ++step;
      m.epoch = epoch;
      result.metrics.push_back(m);
      if (metrics_os) metrics_os << m.to_json() << "\n";
    }
    if (!tcfg.checkpoint_dir.empty()) {
      std::ostringstream name;
      name << "epoch_" << epoch << ".ckpt";
      const std::string path =
          (fs::path(tcfg.checkpoint_dir) / name.str()).string();
      save_train_checkpoint(path, epoch + 1, step, lr, models, opt, train_rng);
      const std::string last =
          (fs::path(tcfg.checkpoint_dir) / "last.ckpt").string();
      fs::copy_file(path, last, fs::copy_options::overwrite_existing);
      result.last_checkpoint = last;
      models.enc.save(
          (fs::path(tcfg.checkpoint_dir) / "encoder_last.ckpt").string());
    }
  }
  return result;
}

}  // namespace lgvc::trainer
