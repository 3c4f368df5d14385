#pragma once

#include <cstdint>

namespace lgvc::core::kernels {

/// C(m,n) = A(m,k) * B(k,n), row-major, C overwritten. OpenMP over rows of C.
void gemm(const double* a, const double* b, double* c, int m, int k, int n);

/// Serial reference for gemm, kept for correctness tests and benchmarks.
void gemm_serial(const double* a, const double* b, double* c, int m, int k,
                 int n);

/// C(m,n) += A(k,m)^T * B(k,n).
void gemm_at_b(const double* a, const double* b, double* c, int m, int k,
               int n);

/// C(m,n) = A(m,k) * B(n,k)^T. OpenMP over rows of C.
void gemm_a_bt(const double* a, const double* b, double* c, int m, int k,
               int n);

struct Conv3dShape {
  int cin, t, h, w;        // input
  int cout;                // output channels
  int kt, kh, kw;          // kernel
  int st, sh, sw;          // stride
  int pt, ph, pw;          // zero padding
  int ot() const { return (t + 2 * pt - kt) / st + 1; }
  int oh() const { return (h + 2 * ph - kh) / sh + 1; }
  int ow() const { return (w + 2 * pw - kw) / sw + 1; }
  std::int64_t out_voxels() const {
    return static_cast<std::int64_t>(ot()) * oh() * ow();
  }
  std::int64_t patch_size() const {
    return static_cast<std::int64_t>(cin) * kt * kh * kw;
  }
};

/// Unfolds x(cin,t,h,w) into cols(out_voxels, patch_size), zero padded.
void im2col_3d(const double* x, const Conv3dShape& s, double* cols);

/// Scatters cols(out_voxels, patch_size) back into dx(cin,t,h,w), accumulating.
void col2im_3d(const double* cols, const Conv3dShape& s, double* dx);

/// Forward convolution: y(cout, ot, oh, ow). Uses im2col + gemm.
/// `cols` is caller-provided scratch of size out_voxels * patch_size.
void conv3d_forward(const double* x, const double* weight, const double* bias,
                    const Conv3dShape& s, double* cols, double* y);

/// Direct 7-loop serial reference convolution, kept for correctness tests.
void conv3d_forward_naive(const double* x, const double* weight,
                          const double* bias, const Conv3dShape& s, double* y);

}  // namespace lgvc::core::kernels
