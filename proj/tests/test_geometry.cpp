#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lgvc/core/rng.hpp"
#include "lgvc/geometry.hpp"

using namespace lgvc;
using geometry::CorrespondenceMatrix;
using geometry::GridShape;
using dataaug::CropParams;

namespace {

CropParams identity_params() { return CropParams{}; }

// Random contained (local, global) pair: global weak crop, local inside it.
std::pair<CropParams, CropParams> random_pair(core::Rng& rng) {
  CropParams g;
  g.t0 = 0.0;
  g.t1 = 1.0;
  const double gy = rng.uniform(0.85, 1.0);
  const double gx = rng.uniform(0.85, 1.0);
  g.y0 = rng.uniform(0.0, 1.0 - gy);
  g.y1 = g.y0 + gy;
  g.x0 = rng.uniform(0.0, 1.0 - gx);
  g.x1 = g.x0 + gx;
  g.flip = rng.bernoulli(0.5);

  CropParams l;
  const double dur = rng.uniform(0.2, 0.7);
  l.t0 = rng.uniform(0.0, 1.0 - dur);
  l.t1 = l.t0 + dur;
  const double sy = rng.uniform(0.45, 0.95) * gy;
  const double sx = rng.uniform(0.45, 0.95) * gx;
  l.y0 = g.y0 + rng.uniform(0.0, gy - sy);
  l.y1 = l.y0 + sy;
  l.x0 = g.x0 + rng.uniform(0.0, gx - sx);
  l.x1 = l.x0 + sx;
  l.flip = rng.bernoulli(0.5);
  return {l, g};
}

GridShape random_local_shape(core::Rng& rng) {
  return GridShape{1 + static_cast<int>(rng.uniform_int(4)),
                   1 + static_cast<int>(rng.uniform_int(4)),
                   1 + static_cast<int>(rng.uniform_int(4))};
}

double max_abs_diff(const CorrespondenceMatrix& a,
                    const CorrespondenceMatrix& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i)
    m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

}  // namespace

TEST_CASE("tube_of degenerate and partition cases") {
  const CropParams id = identity_params();
  auto b = geometry::tube_of(0, 0, 0, {1, 1, 1}, id);
  CHECK(b.t0 == 0.0);
  CHECK(b.t1 == 1.0);
  CHECK(b.y0 == 0.0);
  CHECK(b.y1 == 1.0);
  CHECK(b.x0 == 0.0);
  CHECK(b.x1 == 1.0);

  auto b0 = geometry::tube_of(0, 0, 0, {2, 1, 1}, id);
  auto b1 = geometry::tube_of(1, 0, 0, {2, 1, 1}, id);
  CHECK(b0.t0 == 0.0);
  CHECK(b0.t1 == 0.5);
  CHECK(b1.t0 == 0.5);
  CHECK(b1.t1 == 1.0);

  CropParams flipped = id;
  flipped.flip = true;
  auto bf = geometry::tube_of(0, 0, 0, {1, 1, 2}, flipped);
  CHECK(bf.x0 == 0.5);
  CHECK(bf.x1 == 1.0);

  CHECK_THROWS_AS(geometry::tube_of(2, 0, 0, {2, 1, 1}, id), std::logic_error);
}

TEST_CASE("identical params give identity correspondence") {
  const CropParams id = identity_params();
  const GridShape shape{2, 3, 2};
  auto s = geometry::correspondence(id, id, shape, shape);
  for (int i = 0; i < s.n_local(); ++i)
    for (int j = 0; j < s.n_global(); ++j)
      CHECK(s.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("temporal half-overlap example") {
  // Global: full span, T=4 grid over frames [0,16); local: frames [2,10).
  CropParams g = identity_params();
  CropParams l = identity_params();
  l.t0 = 2.0 / 16.0;
  l.t1 = 10.0 / 16.0;
  auto s = geometry::correspondence(l, g, {2, 1, 1}, {4, 1, 1});
  CHECK(s.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.at(0, 2) == doctest::Approx(0.0));
  CHECK(s.at(0, 3) == doctest::Approx(0.0));
  CHECK(s.at(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.at(1, 2) == doctest::Approx(0.5).epsilon(1e-12));

  auto o = geometry::correspondence_oracle(l, g, {2, 1, 1}, {4, 1, 1}, 256);
  CHECK(o.at(0, 0) == doctest::Approx(0.5).epsilon(0.01));
  CHECK(o.at(0, 1) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("row sums are 1 under containment; entries in [0,1]") {
  core::Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto [l, g] = random_pair(rng);
    const GridShape ls = random_local_shape(rng);
    const GridShape gs{ls.t * 2, ls.h, ls.w};
    auto s = geometry::correspondence(l, g, ls, gs);
    for (int i = 0; i < s.n_local(); ++i) {
      double sum = 0.0;
      for (int j = 0; j < s.n_global(); ++j) {
        CHECK(s.at(i, j) >= 0.0);
        CHECK(s.at(i, j) <= 1.0 + 1e-12);
        sum += s.at(i, j);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("flip equivariance: flipping both views permutes S") {
  core::Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto [l, g] = random_pair(rng);
    const GridShape ls = random_local_shape(rng);
    const GridShape gs{ls.t * 2, ls.h, ls.w};
    auto s = geometry::correspondence(l, g, ls, gs);
    CropParams lf = l, gf = g;
    lf.flip = !lf.flip;
    gf.flip = !gf.flip;
    auto sf = geometry::correspondence(lf, gf, ls, gs);
    std::vector<double> a = s.values, b = sf.values;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (size_t i = 0; i < a.size(); ++i)
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("oracle identity configuration") {
  const CropParams id = identity_params();
  const GridShape shape{2, 2, 2};
  auto o = geometry::correspondence_oracle(id, id, shape, shape, 128);
  for (int i = 0; i < o.n_local(); ++i)
    for (int j = 0; j < o.n_global(); ++j)
      CHECK(o.at(i, j) ==
            doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1.0 / 128));
}

TEST_CASE("factored oracle equals brute-force voxel counting") {
  core::Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    auto [l, g] = random_pair(rng);
    const GridShape ls{2, 2, 2};
    const GridShape gs{4, 2, 2};
    // The brute path has no minimum-resolution gate; compare at 64 where both
    // are exact duplicates of each other by construction.
    auto fast = geometry::correspondence_oracle(l, g, ls, gs, 64);
    auto brute = geometry::correspondence_oracle_brute(l, g, ls, gs, 64);
    CHECK(max_abs_diff(fast, brute) == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("oracle agreement bound over random configurations") {
  core::Rng rng(14);
  const int resolution = 128;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto [l, g] = random_pair(rng);
    const GridShape ls = random_local_shape(rng);
    const GridShape gs{std::min(8, ls.t * 2), ls.h, ls.w};
    auto exact = geometry::correspondence(l, g, ls, gs);
    auto oracle = geometry::correspondence_oracle(l, g, ls, gs, resolution);
    worst = std::max(worst, max_abs_diff(exact, oracle));
  }
  CHECK(worst <= 3.0 / resolution);
}

TEST_CASE("non-contained local box renormalizes rows") {
  CropParams g = identity_params();
  g.y0 = 0.2;  // local sticks out below
  CropParams l = identity_params();
  l.y0 = 0.0;
  l.y1 = 0.5;
  auto s = geometry::correspondence(l, g, {1, 2, 1}, {1, 2, 1});
  for (int i = 0; i < s.n_local(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < s.n_global(); ++j) sum += s.at(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}
