#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lgvc/core/kernels.hpp"
#include "lgvc/core/tensor.hpp"

namespace lgvc::core {

/// One node of the dynamic computation graph. Values are materialized eagerly;
/// backprop closures accumulate into parent grads.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor(value.shape);
  }
  void zero_grad() {
    if (!grad.data.empty()) grad.fill(0.0);
  }
  void accumulate(const Tensor& g) {
    ensure_grad();
    for (std::int64_t i = 0; i < g.numel(); ++i) grad[i] += g[i];
  }
};

using Var = std::shared_ptr<Node>;

Var leaf(Tensor v, bool requires_grad = false);
Var scalar(double v);

/// Reverse-mode sweep from a scalar root (seeds grad = 1).
void backward(const Var& root);

namespace ag {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

/// (m,k) x (k,n) -> (m,n)
Var matmul(const Var& a, const Var& b);
/// x(n,in) * w(out,in)^T + b(out) -> (n,out); x may also be a flat {in} vector.
Var linear(const Var& x, const Var& w, const Var& b);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh_(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);

Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var dot(const Var& a, const Var& b);

Var reshape(const Var& a, std::vector<int> shape);
Var transpose2d(const Var& a);
Var concat_flat(const std::vector<Var>& xs);
Var stack_rows(const std::vector<Var>& xs);
Var select_row(const Var& m, int row);

/// Row-wise L2 normalization; accepts {d} or (n,d).
Var l2_normalize_rows(const Var& a, double eps = 1e-12);
/// Numerically stable row-wise log softmax over (n,d).
Var log_softmax_rows(const Var& a);
/// log(mean(exp(x))) over a flat tensor, max-subtracted.
Var logmeanexp(const Var& a);

/// (C,T,H,W) -> {C}: global average over the spatio-temporal grid.
Var pool_mean(const Var& fm);

/// x(cin,t,h,w), w(cout,cin,kt,kh,kw), optional bias {cout}.
Var conv3d(const Var& x, const Var& w, const Var& b, int st, int sh, int sw,
           int pt, int ph, int pw);

/// Per-sample group normalization over (C,T,H,W) with affine {C} params.
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               double eps = 1e-5);

/// Gradient reversal: identity forward, grad * (-lambda) backward.
Var grl(const Var& x, double lambda);

/// Cuts the graph: same value, no gradient flow.
Var detach(const Var& x);

}  // namespace ag
}  // namespace lgvc::core
