#include "lgvc/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "lgvc/core/optim.hpp"
#include "lgvc/dataaug.hpp"

namespace ag = lgvc::core::ag;
using lgvc::core::Var;

namespace lgvc::evalkit {

namespace {

double cosine(const core::Tensor& a, const core::Tensor& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::max(std::sqrt(aa) * std::sqrt(bb), 1e-12);
}

// Centered square spatial crop in normalized coordinates.
dataaug::CropParams center_crop(const dataio::Video& v) {
  dataaug::CropParams p;
  const double side = static_cast<double>(std::min(v.h(), v.w()));
  const double fy = side / v.h(), fx = side / v.w();
  p.y0 = (1.0 - fy) / 2.0;
  p.y1 = p.y0 + fy;
  p.x0 = (1.0 - fx) / 2.0;
  p.x1 = p.x0 + fx;
  return p;
}

}  // namespace

core::Tensor extract_video_feature(const encoder::Encoder& enc,
                                   const dataio::Video& video) {
  const auto& cfg = enc.config();
  if (video.t() < cfg.in_t)
    std::cerr << "[evalkit] video " << video.id << " shorter than clip length ("
              << video.t() << " < " << cfg.in_t << "); frames loop\n";
  const double duration =
      std::min(1.0, static_cast<double>(cfg.in_t) / video.t());
  core::Tensor mean({cfg.widths.back()});
  const int clips = 10;
  for (int i = 0; i < clips; ++i) {
    dataaug::CropParams p = center_crop(video);
    const double c = std::clamp((i + 0.5) / clips, duration / 2.0,
                                1.0 - duration / 2.0);
    p.t0 = c - duration / 2.0;
    p.t1 = c + duration / 2.0;
    p.n_frames = cfg.in_t;
    auto clip = dataaug::apply_crop(video.frames, p, cfg.in_t, cfg.in_h,
                                    cfg.in_w);
    auto pooled =
        encoder::Encoder::pool(enc.encode(clip, encoder::Mode::kClip));
    for (std::int64_t j = 0; j < mean.numel(); ++j)
      mean[j] += pooled->value[j] / clips;
  }
  return mean;
}

ProbeResult linear_probe(const std::vector<core::Tensor>& train_x,
                         const std::vector<int>& train_y,
                         const std::vector<core::Tensor>& test_x,
                         const std::vector<int>& test_y,
                         std::uint64_t seed) {
  if (train_x.empty() || train_x.size() != train_y.size() ||
      test_x.size() != test_y.size())
    throw std::invalid_argument("probe inputs misaligned");
  const int d = static_cast<int>(train_x[0].numel());
  int classes = 0;
  for (int y : train_y) classes = std::max(classes, y + 1);
  for (int y : test_y) classes = std::max(classes, y + 1);
  std::vector<int> seen(classes, 0);
  for (int y : train_y) seen[y] = 1;
  for (int c = 0; c < classes; ++c)
    if (!seen[c])
      throw std::invalid_argument("class " + std::to_string(c) +
                                  " missing from probe train set");

  const int n = static_cast<int>(train_x.size());
  core::Tensor xs({n, d}), onehot({n, classes});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) xs[static_cast<std::int64_t>(i) * d + j] = train_x[i][j];
    onehot[static_cast<std::int64_t>(i) * classes + train_y[i]] = 1.0 / n;
  }
  Var X = core::leaf(std::move(xs));
  Var target = core::leaf(std::move(onehot));

  core::Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  core::Tensor w0({classes, d});
  for (auto& v : w0.data) v = 0.01 * rng.normal();
  Var w = core::leaf(std::move(w0), true);
  Var b = core::leaf(core::Tensor({classes}), true);
  core::Adam opt({w, b}, 0.05, 0.9, 0.999, 1e-8, 1e-4);
  for (int step = 0; step < 400; ++step) {
    opt.zero_grad();
    Var logp = ag::log_softmax_rows(ag::linear(X, w, b));
    core::backward(ag::neg(ag::sum_all(ag::mul(logp, target))));
    opt.step();
  }

  ProbeResult res;
  res.per_class.assign(classes, 0.0);
  std::vector<int> class_total(classes, 0);
  int correct = 0;
  for (size_t i = 0; i < test_x.size(); ++i) {
    int arg = 0;
    double best = -1e300;
    for (int c = 0; c < classes; ++c) {
      double logit = b->value[c];
      for (int j = 0; j < d; ++j)
        logit += w->value[static_cast<std::int64_t>(c) * d + j] * test_x[i][j];
      if (logit > best) {
        best = logit;
        arg = c;
      }
    }
    class_total[test_y[i]] += 1;
    if (arg == test_y[i]) {
      correct += 1;
      res.per_class[test_y[i]] += 1.0;
    }
  }
  for (int c = 0; c < classes; ++c)
    if (class_total[c] > 0) res.per_class[c] /= class_total[c];
  res.top1 = test_x.empty() ? 0.0
                            : static_cast<double>(correct) / test_x.size();
  res.config_hash = seed;
  return res;
}

RetrievalResult retrieve(const std::vector<core::Tensor>& query,
                         const std::vector<int>& query_labels,
                         const std::vector<core::Tensor>& gallery,
                         const std::vector<int>& gallery_labels,
                         const std::vector<int>& ks) {
  if (query.size() != query_labels.size() ||
      gallery.size() != gallery_labels.size() || gallery.empty())
    throw std::invalid_argument("retrieval inputs misaligned");
  for (int k : ks)
    if (k < 1 || k > static_cast<int>(gallery.size()))
      throw std::invalid_argument("retrieval k exceeds gallery size");

  RetrievalResult res;
  res.n_query = static_cast<int>(query.size());
  res.n_gallery = static_cast<int>(gallery.size());
  std::vector<int> hits(ks.size(), 0);
  for (size_t q = 0; q < query.size(); ++q) {
    std::vector<std::pair<double, int>> sims;
    sims.reserve(gallery.size());
    for (size_t g = 0; g < gallery.size(); ++g)
      sims.emplace_back(-cosine(query[q], gallery[g]), static_cast<int>(g));
    std::sort(sims.begin(), sims.end());
    for (size_t ki = 0; ki < ks.size(); ++ki) {
      for (int r = 0; r < ks[ki]; ++r)
        if (gallery_labels[sims[r].second] == query_labels[q]) {
          hits[ki] += 1;
          break;
        }
    }
  }
  for (size_t ki = 0; ki < ks.size(); ++ki)
    res.r_at_k[ks[ki]] = static_cast<double>(hits[ki]) / query.size();
  return res;
}

std::vector<core::Tensor> upsample_heatmaps(const core::Tensor& activation,
                                            int t, int h_px, int w_px) {
  const int tf = activation.dim(0), hf = activation.dim(1),
            wf = activation.dim(2);
  double lo = activation[0], hi = activation[0];
  for (double v : activation.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  core::Tensor norm(activation.shape);
  if (hi - lo < 1e-12) {
    norm.fill(0.5);
  } else {
    for (std::int64_t i = 0; i < activation.numel(); ++i)
      norm[i] = (activation[i] - lo) / (hi - lo);
  }

  std::vector<core::Tensor> maps;
  maps.reserve(t);
  for (int frame = 0; frame < t; ++frame) {
    const int ft = std::min(tf - 1, frame * tf / t);
    core::Tensor map({h_px, w_px});
    for (int y = 0; y < h_px; ++y)
      for (int x = 0; x < w_px; ++x) {
        // Bilinear sample with the half-pixel center convention.
        const double sy = (y + 0.5) * hf / h_px - 0.5;
        const double sx = (x + 0.5) * wf / w_px - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, hf - 1);
        const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, wf - 1);
        const int y1 = std::min(y0 + 1, hf - 1);
        const int x1 = std::min(x0 + 1, wf - 1);
        const double wy = std::clamp(sy - y0, 0.0, 1.0);
        const double wx = std::clamp(sx - x0, 0.0, 1.0);
        auto at = [&](int yy, int xx) {
          return norm[(static_cast<std::int64_t>(ft) * hf + yy) * wf + xx];
        };
        map[static_cast<std::int64_t>(y) * w_px + x] =
            (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
            wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
      }
    maps.push_back(std::move(map));
  }
  return maps;
}

double foreground_score(const std::vector<core::Tensor>& heatmaps,
                        const dataio::Video& video) {
  if (video.sprite_centers.empty())
    throw std::invalid_argument("video carries no sprite trajectory");
  double in_sum = 0, out_sum = 0;
  std::int64_t in_n = 0, out_n = 0;
  for (size_t t = 0; t < heatmaps.size(); ++t) {
    auto mask = dataio::sprite_mask(video, static_cast<int>(t));
    for (std::int64_t i = 0; i < mask.numel(); ++i) {
      if (mask[i] > 0.5) {
        in_sum += heatmaps[t][i];
        ++in_n;
      } else {
        out_sum += heatmaps[t][i];
        ++out_n;
      }
    }
  }
  const double mean_in = in_n ? in_sum / in_n : 0.0;
  const double mean_out = out_n ? out_sum / out_n : 0.0;
  return mean_in / std::max(mean_out, 1e-6);
}

CaamResult caam(const encoder::Encoder& enc, const dataio::Video& video) {
  const auto& cfg = enc.config();
  dataaug::CropParams p = center_crop(video);
  p.n_frames = cfg.in_t;
  auto clip =
      dataaug::apply_crop(video.frames, p, cfg.in_t, cfg.in_h, cfg.in_w);
  auto fm = enc.encode(clip, encoder::Mode::kVideo);
  const auto& sh = fm.values->value.shape;  // (C, Tf, h, w)
  core::Tensor summed({sh[1], sh[2], sh[3]});
  for (int c = 0; c < sh[0]; ++c)
    for (std::int64_t i = 0; i < summed.numel(); ++i)
      summed[i] += fm.values->value[c * summed.numel() + i];

  CaamResult res;
  res.heatmaps = upsample_heatmaps(summed, video.t(), video.h(), video.w());
  res.foreground_score = foreground_score(res.heatmaps, video);
  return res;
}

}  // namespace lgvc::evalkit
