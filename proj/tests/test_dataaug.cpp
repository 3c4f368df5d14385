#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lgvc/core/rng.hpp"
#include "lgvc/dataaug.hpp"

using namespace lgvc;
using namespace lgvc::dataaug;

namespace {

core::Tensor ramp_video(int t, int h, int w) {
  // Frame i is a constant image of value i/t.
  core::Tensor v({t, h, w, 3});
  for (int i = 0; i < t; ++i) {
    const double val = static_cast<double>(i) / t;
    const std::int64_t off = static_cast<std::int64_t>(i) * h * w * 3;
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(h) * w * 3; ++j)
      v[off + j] = val;
  }
  return v;
}

core::Tensor noise_clip(int t, int h, int w, core::Rng& rng) {
  core::Tensor c({3, t, h, w});
  for (auto& v : c.data) v = rng.uniform();
  return c;
}

double clip_mean(const core::Tensor& c) {
  double s = 0.0;
  for (double v : c.data) s += v;
  return s / static_cast<double>(c.numel());
}

}  // namespace

TEST_CASE("global crop: full temporal span, weak spatial crop") {
  core::Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    auto p = sample_global_crop(32, 0.9, rng);
    CHECK(p.t0 == 0.0);
    CHECK(p.t1 == 1.0);
    CHECK(p.y1 - p.y0 >= 0.9 - 1e-12);
    CHECK(p.x1 - p.x0 >= 0.9 - 1e-12);
  }
  // weak_min = 1 degenerates to the full frame.
  auto p = sample_global_crop(32, 1.0, rng);
  CHECK(p.y0 == doctest::Approx(0.0));
  CHECK(p.y1 == doctest::Approx(1.0));
  CHECK(p.x0 == doctest::Approx(0.0));
  CHECK(p.x1 == doctest::Approx(1.0));
  CHECK_THROWS(sample_global_crop(8, 0.9, rng));
}

TEST_CASE("local crop: segment constraint and containment") {
  core::Rng rng(2);
  const auto g = sample_global_crop(64, 0.9, rng);
  for (int i = 0; i < 10000; ++i) {
    auto p = sample_local_crop(2, 4, g, 16, 64, 0.3, 0.8, rng);
    const double center = (p.t0 + p.t1) / 2.0;
    CHECK(center >= 0.25 - 1e-12);
    CHECK(center <= 0.5 + 1e-12);
    CHECK(p.y0 >= g.y0 - 1e-12);
    CHECK(p.y1 <= g.y1 + 1e-12);
    CHECK(p.x0 >= g.x0 - 1e-12);
    CHECK(p.x1 <= g.x1 + 1e-12);
    const double ratio = ((p.y1 - p.y0) * (p.x1 - p.x0)) /
                         ((g.y1 - g.y0) * (g.x1 - g.x0));
    CHECK(ratio >= 0.3 - 1e-9);
    CHECK(ratio <= 0.8 + 1e-9);
  }
  // K=1 degenerates to an unconstrained center.
  for (int i = 0; i < 100; ++i) {
    auto p = sample_local_crop(1, 1, g, 16, 64, 0.3, 0.8, rng);
    const double center = (p.t0 + p.t1) / 2.0;
    CHECK(center >= 0.0);
    CHECK(center <= 1.0);
  }
}

TEST_CASE("intensity grid: counts and bucket membership") {
  IntensityGrid grid;  // 4,2,4
  CHECK(grid.total_levels() == 512);
  IntensityGrid small{2, 2, 2};
  CHECK(small.total_levels() == 32);

  core::Rng rng(3);
  LevelId lowest{0, 0, 0, 0, 0};
  for (int i = 0; i < 200; ++i) {
    auto p = sample_lowlevel(grid, lowest, rng);
    CHECK(p.level_id == lowest);
    CHECK(p.brightness >= 0.0);
    CHECK(p.brightness < 0.4 / 4);
    CHECK(p.hue < 0.1 / 2);
    CHECK(p.blur_sigma < 2.0 / 4);
  }
  // Same level, different draws -> generally different magnitudes.
  auto a = sample_lowlevel(grid, lowest, rng);
  auto b = sample_lowlevel(grid, lowest, rng);
  CHECK(a.level_id == b.level_id);
  CHECK(a.brightness != b.brightness);
  // Round trip through the flat index enumerates all levels.
  for (long f = 0; f < grid.total_levels(); f += 37)
    CHECK(grid.flat_index(grid.from_flat(f)) == f);
  CHECK_THROWS(sample_lowlevel(grid, LevelId{4, 0, 0, 0, 0}, rng));
}

TEST_CASE("apply_crop identity and involution") {
  core::Rng rng(4);
  core::Tensor video({8, 10, 12, 3});
  for (auto& v : video.data) v = rng.uniform();
  CropParams id;
  id.n_frames = 8;
  auto out = apply_crop(video, id, 8, 10, 12);
  // Identity params reproduce the input exactly (layout change only).
  for (int t = 0; t < 8; ++t)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 12; ++x)
        for (int c = 0; c < 3; ++c) {
          const double in = video[((static_cast<std::int64_t>(t) * 10 + y) * 12 + x) * 3 + c];
          const double o =
              out[c * (8LL * 10 * 12) + (static_cast<std::int64_t>(t) * 10 + y) * 12 + x];
          CHECK(std::abs(in - o) < 1e-6);
        }

  CropParams flip = id;
  flip.flip = true;
  auto f1 = apply_crop(video, flip, 8, 10, 12);
  // Mirroring the mirrored output reproduces the unflipped crop exactly.
  auto two = f1;
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 8; ++t)
      for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 12; ++x)
          two[c * (8LL * 10 * 12) + (static_cast<std::int64_t>(t) * 10 + y) * 12 + x] =
              f1[c * (8LL * 10 * 12) + (static_cast<std::int64_t>(t) * 10 + y) * 12 + (11 - x)];
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(two[i] == out[i]);
}

TEST_CASE("apply_crop temporal window on a ramp video") {
  auto video = ramp_video(32, 4, 4);
  CropParams p;
  p.t0 = 0.25;
  p.t1 = 0.75;
  p.n_frames = 16;
  auto clip = apply_crop(video, p, 16, 4, 4);
  const std::int64_t hw = 16;
  double prev = -1.0;
  for (int t = 0; t < 16; ++t) {
    double mean = 0.0;
    for (int i = 0; i < hw; ++i) mean += clip[static_cast<std::int64_t>(t) * hw + i];
    mean /= hw;
    CHECK(mean >= prev);
    prev = mean;
  }
  double first = clip[0], last = clip[15 * hw];
  CHECK(first == doctest::Approx(0.25).epsilon(0.05));
  CHECK(last == doctest::Approx(0.75).epsilon(0.07));
}

TEST_CASE("apply_lowlevel identity at zero magnitudes") {
  core::Rng rng(5);
  auto clip = noise_clip(4, 6, 6, rng);
  LowLevelParams p;  // all zeros
  core::Rng arng(6);
  auto out = apply_lowlevel(clip, p, arng);
  for (std::int64_t i = 0; i < clip.numel(); ++i) CHECK(out[i] == clip[i]);
}

TEST_CASE("hue shift is invertible before clamping") {
  core::Rng rng(7);
  // Mid-range clip so no clamping happens.
  core::Tensor clip({3, 2, 4, 4});
  for (auto& v : clip.data) v = 0.35 + 0.3 * rng.uniform();
  PhotometricFactors fwd, bwd;
  fwd.hue_angle = 0.07 * 2 * M_PI;
  bwd.hue_angle = -fwd.hue_angle;
  auto round = apply_lowlevel_factors(apply_lowlevel_factors(clip, fwd), bwd);
  for (std::int64_t i = 0; i < clip.numel(); ++i)
    CHECK(std::abs(round[i] - clip[i]) < 1e-4);
}

TEST_CASE("blur reduces per-frame variance of white noise") {
  core::Rng rng(8);
  auto clip = noise_clip(3, 16, 16, rng);
  PhotometricFactors f;
  f.blur_sigma = 2.0;
  f.blur_radius = 4;
  auto out = apply_lowlevel_factors(clip, f);
  const std::int64_t hw = 256;
  for (int ch = 0; ch < 3; ++ch)
    for (int t = 0; t < 3; ++t) {
      const std::int64_t off = (static_cast<std::int64_t>(ch) * 3 + t) * hw;
      auto variance = [&](const core::Tensor& c) {
        double m = 0.0, v = 0.0;
        for (int i = 0; i < hw; ++i) m += c[off + i];
        m /= hw;
        for (int i = 0; i < hw; ++i) v += (c[off + i] - m) * (c[off + i] - m);
        return v / hw;
      };
      CHECK(variance(out) < variance(clip));
    }
}

TEST_CASE("brightness factor moves the clip mean consistently") {
  core::Rng rng(9);
  core::Tensor clip({3, 2, 4, 4});
  for (auto& v : clip.data) v = 0.2 + 0.3 * rng.uniform();
  PhotometricFactors f;
  f.brightness = 1.3;
  auto out = apply_lowlevel_factors(clip, f);
  CHECK(clip_mean(out) == doctest::Approx(1.3 * clip_mean(clip)).epsilon(1e-9));
}
