#include "lgvc/dataaug.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace lgvc::dataaug {

namespace {

double bucket_draw(double base, int level, int n_levels, core::Rng& rng) {
  const double width = base / n_levels;
  return level * width + rng.uniform() * width;
}

}  // namespace

CropParams sample_global_crop(int video_t, double weak_min, core::Rng& rng,
                              int clip_frames) {
  if (video_t < 16)
    throw std::invalid_argument("sample_global_crop: video shorter than 16 frames");
  CropParams p;
  p.t0 = 0.0;
  p.t1 = 1.0;
  p.n_frames = clip_frames;
  const double sy = rng.uniform(weak_min, 1.0);
  const double sx = rng.uniform(weak_min, 1.0);
  p.y0 = rng.uniform(0.0, 1.0 - sy);
  p.y1 = p.y0 + sy;
  p.x0 = rng.uniform(0.0, 1.0 - sx);
  p.x1 = p.x0 + sx;
  p.flip = rng.bernoulli(0.5);
  p.validate();
  return p;
}

CropParams sample_local_crop(int k, int big_k, const CropParams& global,
                             int clip_frames, int video_t, double area_min,
                             double area_max, core::Rng& rng) {
  if (k < 1 || k > big_k)
    throw std::invalid_argument("sample_local_crop: clip index out of range");
  global.validate();
  const double duration =
      std::min(1.0, static_cast<double>(clip_frames) / video_t);
  const double seg_lo = static_cast<double>(k - 1) / big_k;
  const double seg_hi = static_cast<double>(k) / big_k;
  double center = rng.uniform(seg_lo, seg_hi);
  const double clamped =
      std::clamp(center, duration / 2.0, 1.0 - duration / 2.0);
  if (clamped < seg_lo || clamped > seg_hi) {
    std::fprintf(stderr,
                 "[dataaug] warning: clip %d/%d center clamped outside its "
                 "temporal segment (duration %.3f)\n",
                 k, big_k, duration);
  }
  center = clamped;

  CropParams p;
  p.t0 = center - duration / 2.0;
  p.t1 = center + duration / 2.0;
  p.n_frames = clip_frames;

  const double gh = global.y1 - global.y0;
  const double gw = global.x1 - global.x0;
  const double area = rng.uniform(area_min, area_max);
  const double side = std::sqrt(area);
  const double lh = side * gh;
  const double lw = side * gw;
  p.y0 = global.y0 + rng.uniform(0.0, gh - lh);
  p.y1 = p.y0 + lh;
  p.x0 = global.x0 + rng.uniform(0.0, gw - lw);
  p.x1 = p.x0 + lw;
  p.flip = rng.bernoulli(0.5);
  p.validate();
  return p;
}

LowLevelParams sample_lowlevel(const IntensityGrid& grid,
                               const std::optional<LevelId>& level,
                               core::Rng& rng) {
  LevelId id;
  if (level.has_value()) {
    if (!grid.valid(*level))
      throw std::invalid_argument("sample_lowlevel: invalid level_id");
    id = *level;
  } else {
    id.b = static_cast<int>(rng.uniform_int(grid.n_bcs));
    id.c = static_cast<int>(rng.uniform_int(grid.n_bcs));
    id.s = static_cast<int>(rng.uniform_int(grid.n_bcs));
    id.h = static_cast<int>(rng.uniform_int(grid.n_h));
    id.g = static_cast<int>(rng.uniform_int(grid.n_g));
  }
  LowLevelParams p;
  p.level_id = id;
  p.brightness = bucket_draw(grid.base_b, id.b, grid.n_bcs, rng);
  p.contrast = bucket_draw(grid.base_c, id.c, grid.n_bcs, rng);
  p.saturation = bucket_draw(grid.base_s, id.s, grid.n_bcs, rng);
  p.hue = bucket_draw(grid.base_h, id.h, grid.n_h, rng);
  p.blur_sigma = bucket_draw(grid.sigma_max, id.g, grid.n_g, rng);
  p.blur_radius =
      p.blur_sigma > 1e-8 ? std::max(1, static_cast<int>(std::ceil(2.0 * p.blur_sigma)))
                          : 0;
  return p;
}

core::Tensor apply_crop(const core::Tensor& frames, const CropParams& p,
                        int t_out, int h_out, int w_out) {
  p.validate();
  if (frames.rank() != 4 || frames.dim(3) != 3)
    throw std::invalid_argument("apply_crop: frames must be (T,H,W,3)");
  const int t_in = frames.dim(0), h_in = frames.dim(1), w_in = frames.dim(2);
  core::Tensor out({3, t_out, h_out, w_out});

  const double y0p = p.y0 * h_in, y1p = p.y1 * h_in;
  const double x0p = p.x0 * w_in, x1p = p.x1 * w_in;
  const std::int64_t frame_stride = static_cast<std::int64_t>(h_in) * w_in * 3;
  const std::int64_t out_thw = static_cast<std::int64_t>(t_out) * h_out * w_out;

  for (int ti = 0; ti < t_out; ++ti) {
    const double tpos = p.t0 + (ti + 0.5) * (p.t1 - p.t0) / t_out;
    const int fidx =
        std::min(t_in - 1, static_cast<int>(std::floor(tpos * t_in)));
    const double* src = frames.data.data() + fidx * frame_stride;
    for (int r = 0; r < h_out; ++r) {
      const double sy = y0p + (r + 0.5) * (y1p - y0p) / h_out - 0.5;
      const int y0i = static_cast<int>(std::floor(sy));
      const double fy = sy - y0i;
      const int ya = std::clamp(y0i, 0, h_in - 1);
      const int yb = std::clamp(y0i + 1, 0, h_in - 1);
      for (int cidx = 0; cidx < w_out; ++cidx) {
        // Horizontal mirror applied last == sampling mirrored output column.
        const int wc = p.flip ? w_out - 1 - cidx : cidx;
        const double sx = x0p + (wc + 0.5) * (x1p - x0p) / w_out - 0.5;
        const int x0i = static_cast<int>(std::floor(sx));
        const double fx = sx - x0i;
        const int xa = std::clamp(x0i, 0, w_in - 1);
        const int xb = std::clamp(x0i + 1, 0, w_in - 1);
        for (int ch = 0; ch < 3; ++ch) {
          const double v00 = src[(static_cast<std::int64_t>(ya) * w_in + xa) * 3 + ch];
          const double v01 = src[(static_cast<std::int64_t>(ya) * w_in + xb) * 3 + ch];
          const double v10 = src[(static_cast<std::int64_t>(yb) * w_in + xa) * 3 + ch];
          const double v11 = src[(static_cast<std::int64_t>(yb) * w_in + xb) * 3 + ch];
          const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                           fy * ((1 - fx) * v10 + fx * v11);
          out[ch * out_thw +
              (static_cast<std::int64_t>(ti) * h_out + r) * w_out + cidx] = v;
        }
      }
    }
  }
  return out;
}

namespace {

// RGB <-> YIQ; the IQ-plane rotation makes hue shifts exactly invertible.
constexpr double kRgb2Yiq[9] = {0.299,     0.587,     0.114,
                                0.595716,  -0.274453, -0.321263,
                                0.211456,  -0.522591, 0.311135};
constexpr double kYiq2Rgb[9] = {1.0, 0.9563,  0.6210,  1.0, -0.2721,
                                -0.6474, 1.0, -1.1070, 1.7046};

void gaussian_blur_frame(double* data, int h, int w, std::int64_t ch_stride,
                         const std::vector<double>& kernel, int radius,
                         std::vector<double>& scratch) {
  // Separable blur with replicate borders, per channel.
  for (int ch = 0; ch < 3; ++ch) {
    double* img = data + ch * ch_stride;
    // Horizontal pass into scratch.
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int xx = std::clamp(x + k, 0, w - 1);
          acc += kernel[static_cast<size_t>(k + radius)] *
                 img[static_cast<std::int64_t>(y) * w + xx];
        }
        scratch[static_cast<size_t>(y) * w + x] = acc;
      }
    }
    // Vertical pass back.
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = std::clamp(y + k, 0, h - 1);
          acc += kernel[static_cast<size_t>(k + radius)] *
                 scratch[static_cast<size_t>(yy) * w + x];
        }
        img[static_cast<std::int64_t>(y) * w + x] = acc;
      }
    }
  }
}

}  // namespace

PhotometricFactors resolve_factors(const LowLevelParams& p, core::Rng& rng) {
  // Deviation magnitudes come from the parameter record, the direction from
  // the rng, so all frames of a clip shift consistently.
  PhotometricFactors f;
  f.brightness = 1.0 + (rng.bernoulli(0.5) ? 1.0 : -1.0) * p.brightness;
  f.contrast = 1.0 + (rng.bernoulli(0.5) ? 1.0 : -1.0) * p.contrast;
  f.saturation = 1.0 + (rng.bernoulli(0.5) ? 1.0 : -1.0) * p.saturation;
  f.hue_angle = (rng.bernoulli(0.5) ? 1.0 : -1.0) * p.hue * 2.0 * M_PI;
  f.blur_sigma = p.blur_sigma;
  f.blur_radius = p.blur_radius;
  return f;
}

core::Tensor apply_lowlevel(const core::Tensor& clip, const LowLevelParams& p,
                            core::Rng& rng) {
  return apply_lowlevel_factors(clip, resolve_factors(p, rng));
}

core::Tensor apply_lowlevel_factors(const core::Tensor& clip,
                                    const PhotometricFactors& f) {
  if (clip.rank() != 4 || clip.dim(0) != 3)
    throw std::invalid_argument("apply_lowlevel: clip must be (3,T,H,W)");
  const int t = clip.dim(1), h = clip.dim(2), w = clip.dim(3);
  const std::int64_t thw = static_cast<std::int64_t>(t) * h * w;
  core::Tensor out = clip;
  double* red = out.data.data();
  double* grn = red + thw;
  double* blu = grn + thw;

  const double fb = f.brightness;
  const double fc = f.contrast;
  const double fs = f.saturation;
  const double hue_angle = f.hue_angle;

  if (fb != 1.0)
    for (std::int64_t i = 0; i < 3 * thw; ++i) out[i] *= fb;

  if (fc != 1.0) {
    double mean = 0.0;
    for (std::int64_t i = 0; i < thw; ++i)
      mean += 0.299 * red[i] + 0.587 * grn[i] + 0.114 * blu[i];
    mean /= static_cast<double>(thw);
    for (std::int64_t i = 0; i < 3 * thw; ++i)
      out[i] = mean + (out[i] - mean) * fc;
  }

  if (fs != 1.0) {
    for (std::int64_t i = 0; i < thw; ++i) {
      const double luma = 0.299 * red[i] + 0.587 * grn[i] + 0.114 * blu[i];
      red[i] = luma + (red[i] - luma) * fs;
      grn[i] = luma + (grn[i] - luma) * fs;
      blu[i] = luma + (blu[i] - luma) * fs;
    }
  }

  if (hue_angle != 0.0) {
    const double ca = std::cos(hue_angle), sa = std::sin(hue_angle);
    for (std::int64_t i = 0; i < thw; ++i) {
      const double r = red[i], g = grn[i], b = blu[i];
      const double y = kRgb2Yiq[0] * r + kRgb2Yiq[1] * g + kRgb2Yiq[2] * b;
      const double iq = kRgb2Yiq[3] * r + kRgb2Yiq[4] * g + kRgb2Yiq[5] * b;
      const double qq = kRgb2Yiq[6] * r + kRgb2Yiq[7] * g + kRgb2Yiq[8] * b;
      const double ir = ca * iq - sa * qq;
      const double qr = sa * iq + ca * qq;
      red[i] = kYiq2Rgb[0] * y + kYiq2Rgb[1] * ir + kYiq2Rgb[2] * qr;
      grn[i] = kYiq2Rgb[3] * y + kYiq2Rgb[4] * ir + kYiq2Rgb[5] * qr;
      blu[i] = kYiq2Rgb[6] * y + kYiq2Rgb[7] * ir + kYiq2Rgb[8] * qr;
    }
  }

  if (f.blur_sigma > 1e-8 && f.blur_radius > 0) {
    const int radius = f.blur_radius;
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
      const double v = std::exp(-0.5 * k * k / (f.blur_sigma * f.blur_sigma));
      kernel[static_cast<size_t>(k + radius)] = v;
      ksum += v;
    }
    for (auto& v : kernel) v /= ksum;
    std::vector<double> scratch(static_cast<size_t>(h) * w);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int ti = 0; ti < t; ++ti) {
      // Channel stride within one frame view: frames are (3,T,H,W), so the
      // per-frame channel planes are thw apart.
      gaussian_blur_frame(out.data.data() + static_cast<std::int64_t>(ti) * hw,
                          h, w, thw, kernel, radius, scratch);
    }
  }

  for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace lgvc::dataaug
