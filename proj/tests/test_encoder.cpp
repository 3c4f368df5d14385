#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "lgvc/core/rng.hpp"
#include "lgvc/encoder.hpp"

using namespace lgvc;
using namespace lgvc::encoder;
using core::Var;
namespace ag = core::ag;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.widths = {4, 6};
  c.blocks = {1, 1};
  c.clip_t_strides = {2, 2};
  c.video_t_strides = {2, 1};
  c.spatial_strides = {2, 2};
  c.proj_dim = 3;
  c.in_t = 8;
  c.in_h = 8;
  c.in_w = 8;
  return c;
}

core::Tensor random_clip(const EncoderConfig& c, core::Rng& rng) {
  core::Tensor t({3, c.in_t, c.in_h, c.in_w});
  for (auto& v : t.data) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("grid shapes at reference strides: clip (2,4,4), video (8,4,4)") {
  EncoderConfig c;  // defaults: 16x64x64, strides (2,2,2,1)/(2,1,1,1)
  c.widths = {4, 4, 6, 6};
  core::Rng rng(1);
  Encoder e(c, rng);
  auto gc = e.grid_shape(Mode::kClip);
  CHECK(gc.t == 2);
  CHECK(gc.h == 4);
  CHECK(gc.w == 4);
  auto gv = e.grid_shape(Mode::kVideo);
  CHECK(gv.t == 8);
  CHECK(gv.h == 4);
  CHECK(gv.w == 4);

  auto clip = random_clip(c, rng);
  auto fc = e.encode(clip, Mode::kClip);
  auto fv = e.encode(clip, Mode::kVideo);
  CHECK(fc.values->value.shape == std::vector<int>{6, 2, 4, 4});
  CHECK(fv.values->value.shape == std::vector<int>{6, 8, 4, 4});
}

TEST_CASE("determinism, finiteness, and shape validation") {
  auto c = tiny_config();
  core::Rng rng(2);
  Encoder e(c, rng);
  auto clip = random_clip(c, rng);
  auto a = e.encode(clip, Mode::kClip);
  auto b = e.encode(clip, Mode::kClip);
  for (std::int64_t i = 0; i < a.values->value.numel(); ++i)
    CHECK(a.values->value[i] == b.values->value[i]);

  core::Tensor zeros({3, c.in_t, c.in_h, c.in_w});
  for (auto mode : {Mode::kClip, Mode::kVideo}) {
    auto f = e.encode(zeros, mode);
    for (double v : f.values->value.data) CHECK(std::isfinite(v));
  }

  core::Tensor wrong({3, c.in_t + 1, c.in_h, c.in_w});
  CHECK_THROWS_AS(e.encode(wrong, Mode::kClip), std::invalid_argument);
}

TEST_CASE("modes share parameters: gradients land on the same nodes") {
  auto c = tiny_config();
  core::Rng rng(3);
  Encoder e(c, rng);
  auto clip = random_clip(c, rng);

  auto grad_norm = [&](Mode mode) {
    e.zero_grad();
    auto fm = e.encode(clip, mode);
    core::backward(ag::mean_all(fm.values));
    double total = 0.0;
    for (auto& [name, v] : e.params()) {
      if (v->grad.data.empty()) continue;
      for (double g : v->grad.data) total += g * g;
    }
    return total;
  };
  CHECK(grad_norm(Mode::kClip) > 0.0);
  CHECK(grad_norm(Mode::kVideo) > 0.0);
  // Every conv/norm parameter receives gradient in both modes.
  for (auto mode : {Mode::kClip, Mode::kVideo}) {
    e.zero_grad();
    auto fm = e.encode(clip, mode);
    core::backward(ag::mean_all(fm.values));
    for (auto& [name, v] : e.params()) {
      if (name.rfind("proj.", 0) == 0) continue;  // head not in this graph
      double g = 0.0;
      if (!v->grad.data.empty())
        for (double x : v->grad.data) g += std::abs(x);
      CHECK_MESSAGE(g > 0.0, name);
    }
  }
}

TEST_CASE("unshared ablation keeps two towers") {
  auto c = tiny_config();
  c.share_weights = false;
  core::Rng rng(4);
  Encoder e(c, rng);
  auto clip = random_clip(c, rng);
  int fv_params = 0;
  for (auto& [name, v] : e.params())
    if (name.rfind("fv.", 0) == 0) ++fv_params;
  CHECK(fv_params > 0);
  // Clip-mode loss must not touch the video tower.
  e.zero_grad();
  core::backward(ag::mean_all(e.encode(clip, Mode::kClip).values));
  for (auto& [name, v] : e.params()) {
    if (name.rfind("fv.", 0) != 0) continue;
    double g = 0.0;
    if (!v->grad.data.empty())
      for (double x : v->grad.data) g += std::abs(x);
    CHECK(g == 0.0);
  }
}

TEST_CASE("pool: constant map, permutation invariance, unit norm") {
  FeatureMap fm;
  core::Tensor t({3, 2, 2, 2});
  t.fill(0.7);
  fm.values = core::leaf(t);
  fm.grid = {2, 2, 2};
  auto v = Encoder::pool(fm);
  REQUIRE(v->value.numel() == 3);
  for (int i = 0; i < 3; ++i) CHECK(v->value[i] == doctest::Approx(0.7));

  core::Rng rng(5);
  core::Tensor r({3, 2, 2, 2});
  for (auto& x : r.data) x = rng.uniform();
  core::Tensor perm = r;
  // Reverse the 8 grid cells of every channel.
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 8; ++i) perm[c * 8 + i] = r[c * 8 + (7 - i)];
  FeatureMap a{core::leaf(r), {2, 2, 2}, Mode::kClip};
  FeatureMap b{core::leaf(perm), {2, 2, 2}, Mode::kClip};
  auto pa = Encoder::pool(a), pb = Encoder::pool(b);
  for (int i = 0; i < 3; ++i)
    CHECK(pa->value[i] == doctest::Approx(pb->value[i]).epsilon(1e-12));

  auto un = Encoder::pool(a, true);
  double n2 = 0.0;
  for (double x : un->value.data) n2 += x * x;
  CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("project: output dim, zero-input bias path, determinism") {
  auto c = tiny_config();
  core::Rng rng(6);
  Encoder e(c, rng);
  core::Tensor z({c.widths.back()});
  auto out1 = e.project(core::leaf(z));
  auto out2 = e.project(core::leaf(z));
  REQUIRE(out1->value.numel() == c.proj_dim);
  for (int i = 0; i < c.proj_dim; ++i)
    CHECK(out1->value[i] == out2->value[i]);
}

TEST_CASE("finite-difference gradients through both modes") {
  auto c = tiny_config();
  core::Rng rng(7);
  Encoder e(c, rng);
  auto clip = random_clip(c, rng);

  auto loss_value = [&]() {
    auto lc = e.project(Encoder::pool(e.encode(clip, Mode::kClip)));
    auto lv = e.project(Encoder::pool(e.encode(clip, Mode::kVideo)));
    return ag::add(ag::mean_all(ag::mul(lc, lc)), ag::mean_all(ag::mul(lv, lv)));
  };
  e.zero_grad();
  core::backward(loss_value());

  core::Rng pick(8);
  int checked = 0;
  while (checked < 10) {
    auto& [name, v] =
        e.params()[pick.uniform_int(static_cast<int>(e.params().size()))];
    const std::int64_t i = pick.uniform_int(v->value.numel());
    const double autograd_g = v->grad.data.empty() ? 0.0 : v->grad[i];
    const double eps = 1e-5;
    const double saved = v->value[i];
    v->value[i] = saved + eps;
    const double hi = loss_value()->value[0];
    v->value[i] = saved - eps;
    const double lo = loss_value()->value[0];
    v->value[i] = saved;
    const double fd = (hi - lo) / (2 * eps);
    const double tol = 1e-2 * std::max({std::abs(fd), std::abs(autograd_g), 1e-6});
    CHECK_MESSAGE(std::abs(fd - autograd_g) <= tol,
                  name << "[" << i << "] fd=" << fd << " ad=" << autograd_g);
    ++checked;
  }
}

TEST_CASE("checkpoint round trip and hash gate") {
  namespace fs = std::filesystem;
  auto c = tiny_config();
  core::Rng rng(9);
  Encoder e(c, rng);
  const std::string path =
      (fs::temp_directory_path() / "lgvc_enc_ckpt.txt").string();
  e.save(path);

  Encoder back = Encoder::load(path, c);
  REQUIRE(back.params().size() == e.params().size());
  for (size_t i = 0; i < e.params().size(); ++i) {
    CHECK(back.params()[i].first == e.params()[i].first);
    for (std::int64_t j = 0; j < e.params()[i].second->value.numel(); ++j)
      CHECK(back.params()[i].second->value[j] == e.params()[i].second->value[j]);
  }
  auto clip = random_clip(c, rng);
  auto a = e.encode(clip, Mode::kClip);
  auto b = back.encode(clip, Mode::kClip);
  for (std::int64_t i = 0; i < a.values->value.numel(); ++i)
    CHECK(a.values->value[i] == b.values->value[i]);

  EncoderConfig other = c;
  other.proj_dim = 5;
  CHECK_THROWS(Encoder::load(path, other));
  Encoder forced = Encoder::load(path, other, true);
  CHECK(forced.config().proj_dim == c.proj_dim);  // checkpoint config wins
  fs::remove(path);
}
