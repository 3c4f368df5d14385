#include "lgvc/core/autograd.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace lgvc::core {

Var leaf(Tensor v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

Var scalar(double v) {
  Tensor t({1});
  t[0] = v;
  return leaf(std::move(t), false);
}

void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw std::logic_error("backward: root must be a scalar");
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && visited.insert(p).second)
        stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->requires_grad) n->backprop(*n);
  }
}

namespace ag {
namespace {

bool any_grad(const std::vector<Var>& ps) {
  for (const auto& p : ps)
    if (p->requires_grad) return true;
  return false;
}

Var make(Tensor value, std::vector<Var> parents,
         std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = any_grad(parents);
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::logic_error(std::string(op) + ": shape mismatch");
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Node* p = n.parents[k].get();
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) pa->grad[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) pb->grad[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::int64_t i = 0; i < n.grad.numel(); ++i)
        pa->grad[i] += n.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::int64_t i = 0; i < n.grad.numel(); ++i)
        pb->grad[i] += n.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  for (auto& v : out.data) v *= s;
  return make(std::move(out), {a}, [s](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i)
      p->grad[i] += s * n.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (auto& v : out.data) v += s;
  return make(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var matmul(const Var& a, const Var& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 ||
      a->value.dim(1) != b->value.dim(0))
    throw std::logic_error("matmul: incompatible shapes");
  const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor out({m, n});
  kernels::gemm(a->value.data.data(), b->value.data.data(), out.data.data(), m,
                k, n);
  return make(std::move(out), {a, b}, [m, k, n](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_grad();
      // dA += dC * B^T
      Tensor tmp({m, k});
      kernels::gemm_a_bt(nd.grad.data.data(), pb->value.data.data(),
                         tmp.data.data(), m, n, k);
      for (std::int64_t i = 0; i < tmp.numel(); ++i) pa->grad[i] += tmp[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      // dB += A^T * dC
      kernels::gemm_at_b(pa->value.data.data(), nd.grad.data.data(),
                         pb->grad.data.data(), k, m, n);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const bool vec_in = x->value.rank() == 1;
  const int n = vec_in ? 1 : x->value.dim(0);
  const int in = vec_in ? x->value.dim(0) : x->value.dim(1);
  const int out_dim = w->value.dim(0);
  if (w->value.dim(1) != in || b->value.dim(0) != out_dim)
    throw std::logic_error("linear: incompatible shapes");
  Tensor out(vec_in ? std::vector<int>{out_dim} : std::vector<int>{n, out_dim});
  kernels::gemm_a_bt(x->value.data.data(), w->value.data.data(),
                     out.data.data(), n, in, out_dim);
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < out_dim; ++j)
      out[static_cast<std::int64_t>(r) * out_dim + j] += b->value[j];
  return make(std::move(out), {x, w, b}, [n, in, out_dim](Node& nd) {
    Node* px = nd.parents[0].get();
    Node* pw = nd.parents[1].get();
    Node* pb = nd.parents[2].get();
    const double* g = nd.grad.data.data();
    if (px->requires_grad) {
      px->ensure_grad();
      // dX += dY(n,out) * W(out,in)
      Tensor tmp({n, in});
      kernels::gemm(g, pw->value.data.data(), tmp.data.data(), n, out_dim, in);
      for (std::int64_t i = 0; i < tmp.numel(); ++i) px->grad[i] += tmp[i];
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      // dW += dY(n,out)^T * X(n,in)
      kernels::gemm_at_b(g, px->value.data.data(), pw->grad.data.data(),
                         out_dim, n, in);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < out_dim; ++j)
          pb->grad[j] += g[static_cast<std::int64_t>(r) * out_dim + j];
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return make(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i)
      if (p->value[i] > 0.0) p->grad[i] += n.grad[i];
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return make(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
      const double y = n.value[i];
      p->grad[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

Var tanh_(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::tanh(v);
  return make(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
      const double y = n.value[i];
      p->grad[i] += n.grad[i] * (1.0 - y * y);
    }
  });
}

Var exp_(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::exp(v);
  return make(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i)
      p->grad[i] += n.grad[i] * n.value[i];
  });
}

Var log_(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::log(v);
  return make(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i)
      p->grad[i] += n.grad[i] / p->value[i];
  });
}

Var sum_all(const Var& a) {
  Tensor out({1});
  double acc = 0.0;
  for (double v : a->value.data) acc += v;
  out[0] = acc;
  return make(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    const double g = n.grad[0];
    for (std::int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g;
  });
}

Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

Var dot(const Var& a, const Var& b) { return sum_all(mul(a, b)); }

Var reshape(const Var& a, std::vector<int> shape) {
  if (Tensor::numel_of(shape) != a->value.numel())
    throw std::logic_error("reshape: element count mismatch");
  Tensor out = a->value;
  out.shape = std::move(shape);
  return make(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
  });
}

Var transpose2d(const Var& a) {
  if (a->value.rank() != 2) throw std::logic_error("transpose2d: rank != 2");
  const int m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::int64_t>(j) * m + i] =
          a->value[static_cast<std::int64_t>(i) * n + j];
  return make(std::move(out), {a}, [m, n](Node& nd) {
    Node* p = nd.parents[0].get();
    p->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        p->grad[static_cast<std::int64_t>(i) * n + j] +=
            nd.grad[static_cast<std::int64_t>(j) * m + i];
  });
}

Var concat_flat(const std::vector<Var>& xs) {
  std::int64_t total = 0;
  for (const auto& x : xs) total += x->value.numel();
  Tensor out({static_cast<int>(total)});
  std::int64_t off = 0;
  for (const auto& x : xs) {
    std::copy(x->value.data.begin(), x->value.data.end(),
              out.data.begin() + off);
    off += x->value.numel();
  }
  return make(std::move(out), xs, [](Node& n) {
    std::int64_t off = 0;
    for (auto& pv : n.parents) {
      Node* p = pv.get();
      const std::int64_t cnt = p->value.numel();
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::int64_t i = 0; i < cnt; ++i) p->grad[i] += n.grad[off + i];
      }
      off += cnt;
    }
  });
}

Var stack_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::logic_error("stack_rows: empty input");
  const int d = static_cast<int>(xs[0]->value.numel());
  const int n = static_cast<int>(xs.size());
  Tensor out({n, d});
  for (int r = 0; r < n; ++r) {
    if (xs[static_cast<size_t>(r)]->value.numel() != d)
      throw std::logic_error("stack_rows: ragged input");
    std::copy(xs[static_cast<size_t>(r)]->value.data.begin(),
              xs[static_cast<size_t>(r)]->value.data.end(),
              out.data.begin() + static_cast<std::int64_t>(r) * d);
  }
  return make(std::move(out), xs, [d](Node& nd) {
    for (size_t r = 0; r < nd.parents.size(); ++r) {
      Node* p = nd.parents[r].get();
      if (!p->requires_grad) continue;
      p->ensure_grad();
      const std::int64_t off = static_cast<std::int64_t>(r) * d;
      for (int i = 0; i < d; ++i) p->grad[i] += nd.grad[off + i];
    }
  });
}

Var select_row(const Var& m, int row) {
  if (m->value.rank() != 2) throw std::logic_error("select_row: rank != 2");
  const int d = m->value.dim(1);
  if (row < 0 || row >= m->value.dim(0))
    throw std::logic_error("select_row: index out of range");
  Tensor out({d});
  const std::int64_t off = static_cast<std::int64_t>(row) * d;
  std::copy(m->value.data.begin() + off, m->value.data.begin() + off + d,
            out.data.begin());
  return make(std::move(out), {m}, [row, d](Node& nd) {
    Node* p = nd.parents[0].get();
    p->ensure_grad();
    const std::int64_t off = static_cast<std::int64_t>(row) * d;
    for (int i = 0; i < d; ++i) p->grad[off + i] += nd.grad[i];
  });
}

Var l2_normalize_rows(const Var& a, double eps) {
  const bool vec_in = a->value.rank() == 1;
  const int n = vec_in ? 1 : a->value.dim(0);
  const int d = vec_in ? a->value.dim(0) : a->value.dim(1);
  Tensor out = a->value;
  std::vector<double> norms(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    const std::int64_t off = static_cast<std::int64_t>(r) * d;
    for (int i = 0; i < d; ++i) s += out[off + i] * out[off + i];
    const double nv = std::sqrt(s) + eps;
    norms[static_cast<size_t>(r)] = nv;
    for (int i = 0; i < d; ++i) out[off + i] /= nv;
  }
  return make(std::move(out), {a}, [n, d, norms](Node& nd) {
    Node* p = nd.parents[0].get();
    p->ensure_grad();
    for (int r = 0; r < n; ++r) {
      const std::int64_t off = static_cast<std::int64_t>(r) * d;
      double gy = 0.0;
      for (int i = 0; i < d; ++i) gy += nd.grad[off + i] * nd.value[off + i];
      const double inv = 1.0 / norms[static_cast<size_t>(r)];
      for (int i = 0; i < d; ++i)
        p->grad[off + i] += inv * (nd.grad[off + i] - nd.value[off + i] * gy);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  if (a->value.rank() != 2) throw std::logic_error("log_softmax_rows: rank != 2");
  const int n = a->value.dim(0), d = a->value.dim(1);
  Tensor out = a->value;
  for (int r = 0; r < n; ++r) {
    const std::int64_t off = static_cast<std::int64_t>(r) * d;
    double mx = out[off];
    for (int i = 1; i < d; ++i) mx = std::max(mx, out[off + i]);
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += std::exp(out[off + i] - mx);
    const double lse = mx + std::log(s);
    for (int i = 0; i < d; ++i) out[off + i] -= lse;
  }
  return make(std::move(out), {a}, [n, d](Node& nd) {
    Node* p = nd.parents[0].get();
    p->ensure_grad();
    for (int r = 0; r < n; ++r) {
      const std::int64_t off = static_cast<std::int64_t>(r) * d;
      double gsum = 0.0;
      for (int i = 0; i < d; ++i) gsum += nd.grad[off + i];
      for (int i = 0; i < d; ++i)
        p->grad[off + i] +=
            nd.grad[off + i] - std::exp(nd.value[off + i]) * gsum;
    }
  });
}

Var logmeanexp(const Var& a) {
  const std::int64_t n = a->value.numel();
  if (n == 0) throw std::logic_error("logmeanexp: empty input");
  double mx = a->value[0];
  for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, a->value[i]);
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += std::exp(a->value[i] - mx);
  Tensor out({1});
  out[0] = mx + std::log(s / static_cast<double>(n));
  return make(std::move(out), {a}, [n](Node& nd) {
    Node* p = nd.parents[0].get();
    p->ensure_grad();
    const double g = nd.grad[0];
    const double y = nd.value[0];
    const double dn = static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i)
      p->grad[i] += g * std::exp(p->value[i] - y) / dn;
  });
}

Var pool_mean(const Var& fm) {
  if (fm->value.rank() != 4) throw std::logic_error("pool_mean: rank != 4");
  const int c = fm->value.dim(0);
  const std::int64_t vox =
      static_cast<std::int64_t>(fm->value.dim(1)) * fm->value.dim(2) *
      fm->value.dim(3);
  Tensor out({c});
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    const std::int64_t off = ch * vox;
    for (std::int64_t i = 0; i < vox; ++i) s += fm->value[off + i];
    out[ch] = s / static_cast<double>(vox);
  }
  return make(std::move(out), {fm}, [c, vox](Node& nd) {
    Node* p = nd.parents[0].get();
    p->ensure_grad();
    for (int ch = 0; ch < c; ++ch) {
      const double g = nd.grad[ch] / static_cast<double>(vox);
      const std::int64_t off = ch * vox;
      for (std::int64_t i = 0; i < vox; ++i) p->grad[off + i] += g;
    }
  });
}

Var conv3d(const Var& x, const Var& w, const Var& b, int st, int sh, int sw,
           int pt, int ph, int pw) {
  if (x->value.rank() != 4 || w->value.rank() != 5)
    throw std::logic_error("conv3d: bad ranks");
  kernels::Conv3dShape s{};
  s.cin = x->value.dim(0);
  s.t = x->value.dim(1);
  s.h = x->value.dim(2);
  s.w = x->value.dim(3);
  s.cout = w->value.dim(0);
  if (w->value.dim(1) != s.cin) throw std::logic_error("conv3d: cin mismatch");
  s.kt = w->value.dim(2);
  s.kh = w->value.dim(3);
  s.kw = w->value.dim(4);
  s.st = st;
  s.sh = sh;
  s.sw = sw;
  s.pt = pt;
  s.ph = ph;
  s.pw = pw;
  const std::int64_t nvox = s.out_voxels();
  Tensor out({s.cout, s.ot(), s.oh(), s.ow()});
  std::vector<double> cols(static_cast<size_t>(nvox * s.patch_size()));
  kernels::conv3d_forward(x->value.data.data(), w->value.data.data(),
                          b ? b->value.data.data() : nullptr, s, cols.data(),
                          out.data.data());
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b}
                               : std::vector<Var>{x, w};
  // im2col is recomputed in the backward pass instead of stored; the
  // activation graph of a full batch would otherwise not fit in memory.
  return make(std::move(out), std::move(parents), [s](Node& nd) {
    Node* px = nd.parents[0].get();
    Node* pw = nd.parents[1].get();
    Node* pb = nd.parents.size() > 2 ? nd.parents[2].get() : nullptr;
    const std::int64_t nvox = s.out_voxels();
    const int patch = static_cast<int>(s.patch_size());
    const double* g = nd.grad.data.data();  // (cout, nvox)
    if (pb != nullptr && pb->requires_grad) {
      pb->ensure_grad();
      for (int c = 0; c < s.cout; ++c) {
        double acc = 0.0;
        const std::int64_t off = static_cast<std::int64_t>(c) * nvox;
        for (std::int64_t v = 0; v < nvox; ++v) acc += g[off + v];
        pb->grad[c] += acc;
      }
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      std::vector<double> cols(static_cast<size_t>(nvox * patch));
      kernels::im2col_3d(px->value.data.data(), s, cols.data());
      // dW(cout,patch) += dY(cout,nvox) * cols(nvox,patch)
      std::vector<double> tmp(static_cast<size_t>(s.cout) * patch, 0.0);
      kernels::gemm(g, cols.data(), tmp.data(), s.cout,
                    static_cast<int>(nvox), patch);
      for (size_t i = 0; i < tmp.size(); ++i) pw->grad[static_cast<std::int64_t>(i)] += tmp[i];
    }
    if (px->requires_grad) {
      px->ensure_grad();
      // dcols(nvox,patch) = dY(cout,nvox)^T * W(cout,patch)
      std::vector<double> dcols(static_cast<size_t>(nvox * patch), 0.0);
      kernels::gemm_at_b(g, pw->value.data.data(), dcols.data(),
                         static_cast<int>(nvox), s.cout, patch);
      kernels::col2im_3d(dcols.data(), s, px->grad.data.data());
    }
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               double eps) {
  if (x->value.rank() != 4) throw std::logic_error("group_norm: rank != 4");
  const int c = x->value.dim(0);
  if (c % groups != 0) throw std::logic_error("group_norm: C % groups != 0");
  const std::int64_t vox =
      static_cast<std::int64_t>(x->value.dim(1)) * x->value.dim(2) *
      x->value.dim(3);
  const int cg = c / groups;
  const std::int64_t gsz = cg * vox;
  Tensor out = x->value;
  std::vector<double> inv_sigma(static_cast<size_t>(groups));
  std::vector<double> mu(static_cast<size_t>(groups));
  for (int g = 0; g < groups; ++g) {
    const std::int64_t off = static_cast<std::int64_t>(g) * gsz;
    double m = 0.0;
    for (std::int64_t i = 0; i < gsz; ++i) m += out[off + i];
    m /= static_cast<double>(gsz);
    double var = 0.0;
    for (std::int64_t i = 0; i < gsz; ++i) {
      const double d = out[off + i] - m;
      var += d * d;
    }
    var /= static_cast<double>(gsz);
    const double is = 1.0 / std::sqrt(var + eps);
    mu[static_cast<size_t>(g)] = m;
    inv_sigma[static_cast<size_t>(g)] = is;
    for (std::int64_t i = 0; i < gsz; ++i) {
      const int ch = g * cg + static_cast<int>(i / vox);
      out[off + i] = (out[off + i] - m) * is * gamma->value[ch] +
                     beta->value[ch];
    }
  }
  return make(std::move(out), {x, gamma, beta},
              [groups, cg, vox, gsz, mu, inv_sigma](Node& nd) {
    Node* px = nd.parents[0].get();
    Node* pg = nd.parents[1].get();
    Node* pb = nd.parents[2].get();
    for (int g = 0; g < groups; ++g) {
      const std::int64_t off = static_cast<std::int64_t>(g) * gsz;
      const double m = mu[static_cast<size_t>(g)];
      const double is = inv_sigma[static_cast<size_t>(g)];
      // xhat recomputed from the input.
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::int64_t i = 0; i < gsz; ++i) {
        const int ch = g * cg + static_cast<int>(i / vox);
        const double xhat = (px->value[off + i] - m) * is;
        const double dxhat = nd.grad[off + i] * pg->value[ch];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        if (pg->requires_grad) {
          pg->ensure_grad();
          pg->grad[ch] += nd.grad[off + i] * xhat;
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          pb->grad[ch] += nd.grad[off + i];
        }
      }
      if (px->requires_grad) {
        px->ensure_grad();
        const double n = static_cast<double>(gsz);
        for (std::int64_t i = 0; i < gsz; ++i) {
          const int ch = g * cg + static_cast<int>(i / vox);
          const double xhat = (px->value[off + i] - m) * is;
          const double dxhat = nd.grad[off + i] * pg->value[ch];
          px->grad[off + i] +=
              is * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
        }
      }
    }
  });
}

Var grl(const Var& x, double lambda) {
  Tensor out = x->value;
  return make(std::move(out), {x}, [lambda](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::int64_t i = 0; i < n.grad.numel(); ++i)
      p->grad[i] -= lambda * n.grad[i];
  });
}

Var detach(const Var& x) { return leaf(x->value, false); }

}  // namespace ag
}  // namespace lgvc::core
