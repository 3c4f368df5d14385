// Compares the OpenMP im2col/GEMM kernels against the serial references on
// encoder-shaped workloads. Prints one line per case with both timings.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "lgvc/core/kernels.hpp"
#include "lgvc/core/rng.hpp"

using namespace lgvc::core;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void fill(std::vector<double>& v, Rng& rng) {
  for (auto& x : v) x = rng.normal();
}

void bench_gemm(int m, int k, int n, int reps, Rng& rng) {
  std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n),
      c1(static_cast<size_t>(m) * n), c2(c1.size());
  fill(a, rng);
  fill(b, rng);

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    kernels::gemm_serial(a.data(), b.data(), c1.data(), m, k, n);
  const double serial = ms_since(t0) / reps;

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    kernels::gemm(a.data(), b.data(), c2.data(), m, k, n);
  const double parallel = ms_since(t0) / reps;

  double max_dev = 0;
  for (size_t i = 0; i < c1.size(); ++i)
    max_dev = std::max(max_dev, std::abs(c1[i] - c2[i]));
  std::printf("gemm %4dx%4dx%4d  serial %8.3f ms  omp %8.3f ms  x%.2f  dev %.2e\n",
              m, k, n, serial, parallel, serial / parallel, max_dev);
}

void bench_conv(const kernels::Conv3dShape& s, int reps, Rng& rng) {
  std::vector<double> x(static_cast<size_t>(s.cin) * s.t * s.h * s.w),
      w(static_cast<size_t>(s.cout) * s.patch_size()), bias(s.cout),
      y1(static_cast<size_t>(s.cout) * s.out_voxels()), y2(y1.size()),
      cols(static_cast<size_t>(s.out_voxels()) * s.patch_size());
  fill(x, rng);
  fill(w, rng);
  fill(bias, rng);

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    kernels::conv3d_forward_naive(x.data(), w.data(), bias.data(), s, y1.data());
  const double serial = ms_since(t0) / reps;

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    kernels::conv3d_forward(x.data(), w.data(), bias.data(), s, cols.data(),
                            y2.data());
  const double parallel = ms_since(t0) / reps;

  double max_dev = 0;
  for (size_t i = 0; i < y1.size(); ++i)
    max_dev = std::max(max_dev, std::abs(y1[i] - y2[i]));
  std::printf(
      "conv %3d->%3d %2dx%2dx%2d  naive %8.3f ms  im2col %8.3f ms  x%.2f  dev %.2e\n",
      s.cin, s.cout, s.t, s.h, s.w, serial, parallel, serial / parallel,
      max_dev);
}

}  // namespace

int main() {
  Rng rng(42);
  bench_gemm(64, 128, 256, 20, rng);
  bench_gemm(256, 256, 256, 10, rng);
  bench_gemm(512, 512, 512, 3, rng);

  // Stage-shaped convolutions from the default encoder.
  bench_conv({3, 16, 64, 64, 16, 3, 3, 3, 1, 1, 1, 1, 1, 1}, 5, rng);
  bench_conv({16, 8, 32, 32, 32, 3, 3, 3, 2, 2, 2, 1, 1, 1}, 5, rng);
  bench_conv({32, 4, 16, 16, 64, 3, 3, 3, 2, 2, 2, 1, 1, 1}, 5, rng);
  return 0;
}
