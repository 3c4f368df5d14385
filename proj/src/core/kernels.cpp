#include "lgvc/core/kernels.hpp"

#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lgvc::core::kernels {

namespace {

// Inner kernel shared by the parallel and serial entry points. Accumulates
// one row of C; the k-loop outer / n-loop inner order vectorizes well.
inline void gemm_row(const double* arow, const double* b, double* crow, int k,
                     int n) {
  std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
  for (int p = 0; p < k; ++p) {
    const double av = arow[p];
    if (av == 0.0) continue;
    const double* brow = b + static_cast<std::int64_t>(p) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

}  // namespace

void gemm(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    gemm_row(a + static_cast<std::int64_t>(i) * k, b,
             c + static_cast<std::int64_t>(i) * n, k, n);
  }
}

void gemm_serial(const double* a, const double* b, double* c, int m, int k,
                 int n) {
  for (int i = 0; i < m; ++i) {
    gemm_row(a + static_cast<std::int64_t>(i) * k, b,
             c + static_cast<std::int64_t>(i) * n, k, n);
  }
}

void gemm_at_b(const double* a, const double* b, double* c, int m, int k,
               int n) {
  // c(m,n) += a(k,m)^T b(k,n); deterministic: each row of c owned by one i.
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<std::int64_t>(p) * m + i];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_a_bt(const double* a, const double* b, double* c, int m, int k,
               int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::int64_t>(i) * k;
    double* crow = c + static_cast<std::int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::int64_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
}

void im2col_3d(const double* x, const Conv3dShape& s, double* cols) {
  const int ot = s.ot(), oh = s.oh(), ow = s.ow();
  const std::int64_t patch = s.patch_size();
  const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
  const std::int64_t thw = static_cast<std::int64_t>(s.t) * hw;
#pragma omp parallel for schedule(static) collapse(2)
  for (int zt = 0; zt < ot; ++zt) {
    for (int zh = 0; zh < oh; ++zh) {
      for (int zw = 0; zw < ow; ++zw) {
        double* dst =
            cols + ((static_cast<std::int64_t>(zt) * oh + zh) * ow + zw) * patch;
        const int t0 = zt * s.st - s.pt;
        const int h0 = zh * s.sh - s.ph;
        const int w0 = zw * s.sw - s.pw;
        std::int64_t q = 0;
        for (int c = 0; c < s.cin; ++c) {
          const double* xc = x + c * thw;
          for (int dt = 0; dt < s.kt; ++dt) {
            const int tt = t0 + dt;
            const bool t_in = tt >= 0 && tt < s.t;
            for (int dh = 0; dh < s.kh; ++dh) {
              const int hh = h0 + dh;
              const bool h_in = t_in && hh >= 0 && hh < s.h;
              const double* xrow = xc + tt * hw + static_cast<std::int64_t>(hh) * s.w;
              for (int dw = 0; dw < s.kw; ++dw, ++q) {
                const int ww = w0 + dw;
                dst[q] = (h_in && ww >= 0 && ww < s.w) ? xrow[ww] : 0.0;
              }
            }
          }
        }
      }
    }
  }
}

void col2im_3d(const double* cols, const Conv3dShape& s, double* dx) {
  // Serial scatter-add: overlapping patches write to shared voxels.
  const int ot = s.ot(), oh = s.oh(), ow = s.ow();
  const std::int64_t patch = s.patch_size();
  const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
  const std::int64_t thw = static_cast<std::int64_t>(s.t) * hw;
  for (int zt = 0; zt < ot; ++zt) {
    for (int zh = 0; zh < oh; ++zh) {
      for (int zw = 0; zw < ow; ++zw) {
        const double* src =
            cols + ((static_cast<std::int64_t>(zt) * oh + zh) * ow + zw) * patch;
        const int t0 = zt * s.st - s.pt;
        const int h0 = zh * s.sh - s.ph;
        const int w0 = zw * s.sw - s.pw;
        std::int64_t q = 0;
        for (int c = 0; c < s.cin; ++c) {
          double* xc = dx + c * thw;
          for (int dt = 0; dt < s.kt; ++dt) {
            const int tt = t0 + dt;
            const bool t_in = tt >= 0 && tt < s.t;
            for (int dh = 0; dh < s.kh; ++dh) {
              const int hh = h0 + dh;
              const bool h_in = t_in && hh >= 0 && hh < s.h;
              double* xrow = xc + tt * hw + static_cast<std::int64_t>(hh) * s.w;
              for (int dw = 0; dw < s.kw; ++dw, ++q) {
                const int ww = w0 + dw;
                if (h_in && ww >= 0 && ww < s.w) xrow[ww] += src[q];
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_forward(const double* x, const double* weight, const double* bias,
                    const Conv3dShape& s, double* cols, double* y) {
  const std::int64_t nvox = s.out_voxels();
  const int patch = static_cast<int>(s.patch_size());
  im2col_3d(x, s, cols);
  // y laid out (cout, voxels): y = W(cout,patch) * cols(voxels,patch)^T.
  gemm_a_bt(weight, cols, y, s.cout, patch, static_cast<int>(nvox));
  if (bias != nullptr) {
    for (int c = 0; c < s.cout; ++c) {
      double* yc = y + static_cast<std::int64_t>(c) * nvox;
      const double bv = bias[c];
      for (std::int64_t v = 0; v < nvox; ++v) yc[v] += bv;
    }
  }
}

void conv3d_forward_naive(const double* x, const double* weight,
                          const double* bias, const Conv3dShape& s, double* y) {
  const int ot = s.ot(), oh = s.oh(), ow = s.ow();
  const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
  const std::int64_t thw = static_cast<std::int64_t>(s.t) * hw;
  const std::int64_t kvol = static_cast<std::int64_t>(s.kt) * s.kh * s.kw;
  std::int64_t idx = 0;
  for (int co = 0; co < s.cout; ++co) {
    for (int zt = 0; zt < ot; ++zt) {
      for (int zh = 0; zh < oh; ++zh) {
        for (int zw = 0; zw < ow; ++zw, ++idx) {
          double acc = bias != nullptr ? bias[co] : 0.0;
          for (int ci = 0; ci < s.cin; ++ci) {
            for (int dt = 0; dt < s.kt; ++dt) {
              const int tt = zt * s.st - s.pt + dt;
              if (tt < 0 || tt >= s.t) continue;
              for (int dh = 0; dh < s.kh; ++dh) {
                const int hh = zh * s.sh - s.ph + dh;
                if (hh < 0 || hh >= s.h) continue;
                for (int dw = 0; dw < s.kw; ++dw) {
                  const int ww = zw * s.sw - s.pw + dw;
                  if (ww < 0 || ww >= s.w) continue;
                  const double xv = x[ci * thw + tt * hw + hh * s.w + ww];
                  const double wv =
                      weight[((co * s.cin + ci) * kvol) +
                             (static_cast<std::int64_t>(dt) * s.kh + dh) * s.kw +
                             dw];
                  acc += xv * wv;
                }
              }
            }
          }
          y[idx] = acc;
        }
      }
    }
  }
}

}  // namespace lgvc::core::kernels
