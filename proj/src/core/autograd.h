#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "core/tensor.h"

namespace gnvc {

// Reverse-mode autodiff on a dynamically built tape.  Shapes are fixed per
// node, graphs are rebuilt every step (dynamic), and gradients accumulate
// into leaf nodes.  A node whose inputs all have requires_grad == false is
// created without parents or a backprop closure, so frozen submodels and
// pure inference run almost tape-free.
template <class T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad; // allocated lazily; leaves keep theirs across steps
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T> &)> backprop;

  Tensor<T> &g() {
    if (grad.numel() == 0) grad = Tensor<T>(val.shape);
    return grad;
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> leaf(Tensor<T> v, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

template <class T>
Var<T> constant(Tensor<T> v) {
  return leaf(std::move(v), false);
}

template <class T>
Var<T> detach(const Var<T> &v) {
  return constant(v->val);
}

// Attach parents + backprop only when some input needs gradients.
template <class T>
Var<T> finish(Tensor<T> val, std::vector<Var<T>> parents, std::function<void(Node<T> &)> fn) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(val);
  bool rg = false;
  for (auto &p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backprop = std::move(fn);
  }
  return n;
}

template <class T>
void add_grad(Node<T> *p, const Tensor<T> &g) {
  if (!p->requires_grad) return;
  p->g().add_scaled(g, T(1));
}

// Backpropagate from a scalar root.  seed scales the root gradient (used for
// 1/batch averaging).  Interior activations and gradients are released as
// soon as they are consumed, so read any values you need before calling.
template <class T>
void backward(const Var<T> &root, T seed = T(1)) {
  GNVC_CHECK(root->val.numel() == 1, "backward root must be scalar");
  if (!root->requires_grad) return;

  std::vector<Node<T> *> order;
  std::unordered_set<Node<T> *> seen;
  std::vector<std::pair<Node<T> *, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto &[n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<T> *p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->g().fill(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T> *n = *it;
    if (!n->backprop) continue; // leaf
    if (n->grad.numel() == 0) continue; // no gradient reached this node
    n->backprop(*n);
    n->grad = Tensor<T>();
    n->val = Tensor<T>();
    n->backprop = nullptr;
  }
}

// ------------------------------------------------------------- arithmetic

template <class T>
Var<T> add(const Var<T> &a, const Var<T> &b) {
  GNVC_CHECK(a->val.same_shape(b->val), "add shape mismatch");
  Tensor<T> out = a->val;
  out.add_scaled(b->val, T(1));
  return finish<T>(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node<T> &self) {
    add_grad(pa, self.grad);
    add_grad(pb, self.grad);
  });
}

template <class T>
Var<T> sub(const Var<T> &a, const Var<T> &b) {
  GNVC_CHECK(a->val.same_shape(b->val), "sub shape mismatch");
  Tensor<T> out = a->val;
  out.add_scaled(b->val, T(-1));
  return finish<T>(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node<T> &self) {
    add_grad(pa, self.grad);
    if (pb->requires_grad) pb->g().add_scaled(self.grad, T(-1));
  });
}

template <class T>
Var<T> mul(const Var<T> &a, const Var<T> &b) {
  GNVC_CHECK(a->val.same_shape(b->val), "mul shape mismatch");
  Tensor<T> out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->val[i] * b->val[i];
  return finish<T>(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node<T> &self) {
    if (pa->requires_grad) {
      auto &g = pa->g();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb->val[i];
    }
    if (pb->requires_grad) {
      auto &g = pb->g();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa->val[i];
    }
  });
}

template <class T>
Var<T> divide(const Var<T> &a, const Var<T> &b) {
  GNVC_CHECK(a->val.same_shape(b->val), "divide shape mismatch");
  Tensor<T> out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->val[i] / b->val[i];
  return finish<T>(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node<T> &self) {
    if (pa->requires_grad) {
      auto &g = pa->g();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] / pb->val[i];
    }
    if (pb->requires_grad) {
      auto &g = pb->g();
      for (int64_t i = 0; i < g.numel(); ++i) {
        T bi = pb->val[i];
        g[i] -= self.grad[i] * pa->val[i] / (bi * bi);
      }
    }
  });
}

template <class T>
Var<T> scale(const Var<T> &a, double s) {
  Tensor<T> out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(double(a->val[i]) * s);
  return finish<T>(std::move(out), {a}, [pa = a.get(), s](Node<T> &self) {
    if (pa->requires_grad) pa->g().add_scaled(self.grad, T(s));
  });
}

template <class T>
Var<T> add_scalar(const Var<T> &a, double c) {
  Tensor<T> out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(double(a->val[i]) + c);
  return finish<T>(std::move(out), {a}, [pa = a.get()](Node<T> &self) { add_grad(pa, self.grad); });
}

// out = a + s * b   (shape-equal; used for Euler updates and residual sums)
template <class T>
Var<T> add_scaled(const Var<T> &a, const Var<T> &b, double s) {
  GNVC_CHECK(a->val.same_shape(b->val), "add_scaled shape mismatch");
  Tensor<T> out = a->val;
  out.add_scaled(b->val, T(s));
  return finish<T>(std::move(out), {a, b}, [pa = a.get(), pb = b.get(), s](Node<T> &self) {
    add_grad(pa, self.grad);
    if (pb->requires_grad) pb->g().add_scaled(self.grad, T(s));
  });
}

// ----------------------------------------------------------- elementwise

template <class T, class F, class DF>
Var<T> unary_op(const Var<T> &a, F f, DF df_from_in) {
  Tensor<T> out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(a->val[i]);
  return finish<T>(std::move(out), {a}, [pa = a.get(), df_from_in](Node<T> &self) {
    if (!pa->requires_grad) return;
    auto &g = pa->g();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * df_from_in(pa->val[i]);
  });
}

template <class T>
Var<T> silu(const Var<T> &a) {
  return unary_op(
      a, [](T x) { return T(double(x) / (1.0 + std::exp(-double(x)))); },
      [](T x) {
        double s = 1.0 / (1.0 + std::exp(-double(x)));
        return T(s * (1.0 + double(x) * (1.0 - s)));
      });
}

template <class T>
Var<T> sigmoid(const Var<T> &a) {
  return unary_op(
      a, [](T x) { return T(1.0 / (1.0 + std::exp(-double(x)))); },
      [](T x) {
        double s = 1.0 / (1.0 + std::exp(-double(x)));
        return T(s * (1.0 - s));
      });
}

template <class T>
Var<T> vexp(const Var<T> &a) {
  return unary_op(
      a, [](T x) { return T(std::exp(double(x))); },
      [](T x) { return T(std::exp(double(x))); });
}

template <class T>
Var<T> vlog(const Var<T> &a) {
  return unary_op(
      a, [](T x) { return T(std::log(double(x))); },
      [](T x) { return T(1.0 / double(x)); });
}

template <class T>
Var<T> verf(const Var<T> &a) {
  return unary_op(
      a, [](T x) { return T(std::erf(double(x))); },
      [](T x) { return T(1.1283791670955125739 * std::exp(-double(x) * double(x))); });
}

template <class T>
Var<T> clamp_min(const Var<T> &a, double c) {
  return unary_op(
      a, [c](T x) { return double(x) < c ? T(c) : x; },
      [c](T x) { return double(x) < c ? T(0) : T(1); });
}

// Hard round forward, straight-through gradient backward.
template <class T>
Var<T> ste_round(const Var<T> &a) {
  Tensor<T> out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(std::nearbyint(double(a->val[i])));
  return finish<T>(std::move(out), {a}, [pa = a.get()](Node<T> &self) { add_grad(pa, self.grad); });
}

// Hard clamp forward; gradient passes only inside [lo, hi].
template <class T>
Var<T> clamp_ste(const Var<T> &a, double lo, double hi) {
  return unary_op(
      a, [lo, hi](T x) { return T(std::min(hi, std::max(lo, double(x)))); },
      [lo, hi](T x) { return (double(x) >= lo && double(x) <= hi) ? T(1) : T(0); });
}

// ------------------------------------------------------------- reductions

template <class T>
Var<T> sum(const Var<T> &a) {
  Tensor<T> out({1});
  out[0] = a->val.sum();
  return finish<T>(std::move(out), {a}, [pa = a.get()](Node<T> &self) {
    if (!pa->requires_grad) return;
    auto &g = pa->g();
    T s = self.grad[0];
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += s;
  });
}

// sum((a-b)^2): the workhorse distortion term.
template <class T>
Var<T> sum_sq_diff(const Var<T> &a, const Var<T> &b) {
  GNVC_CHECK(a->val.same_shape(b->val), "sum_sq_diff shape mismatch");
  Tensor<T> out({1});
  double acc = 0;
  for (int64_t i = 0; i < a->val.numel(); ++i) {
    double d = double(a->val[i]) - double(b->val[i]);
    acc += d * d;
  }
  out[0] = T(acc);
  return finish<T>(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node<T> &self) {
    T s = self.grad[0];
    if (pa->requires_grad) {
      auto &g = pa->g();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += s * T(2) * (pa->val[i] - pb->val[i]);
    }
    if (pb->requires_grad) {
      auto &g = pb->g();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= s * T(2) * (pa->val[i] - pb->val[i]);
    }
  });
}

template <class T>
Var<T> mean_sq_diff(const Var<T> &a, const Var<T> &b) {
  return scale(sum_sq_diff(a, b), 1.0 / double(a->val.numel()));
}

// --------------------------------------------------------------- reshape

template <class T>
Var<T> reshape(const Var<T> &a, std::vector<int64_t> shape) {
  Tensor<T> out = a->val.reshaped(std::move(shape));
  return finish<T>(std::move(out), {a}, [pa = a.get()](Node<T> &self) {
    if (!pa->requires_grad) return;
    auto &g = pa->g();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

// ------------------------------------------------------ slicing/stacking

// Slice along the last dimension: columns [start, start+len).
template <class T>
Var<T> slice_last(const Var<T> &a, int64_t start, int64_t len) {
  int64_t d = a->val.shape.back();
  GNVC_CHECK(start >= 0 && start + len <= d, "slice_last out of range");
  int64_t rows = a->val.numel() / d;
  std::vector<int64_t> shape = a->val.shape;
  shape.back() = len;
  Tensor<T> out(shape);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < len; ++c) out[r * len + c] = a->val[r * d + start + c];
  return finish<T>(std::move(out), {a}, [pa = a.get(), start, len, d, rows](Node<T> &self) {
    if (!pa->requires_grad) return;
    auto &g = pa->g();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < len; ++c) g[r * d + start + c] += self.grad[r * len + c];
  });
}

template <class T>
Var<T> concat_last(const std::vector<Var<T>> &parts) {
  GNVC_CHECK(!parts.empty(), "concat_last needs inputs");
  std::vector<int64_t> shape = parts[0]->val.shape;
  int64_t total = 0;
  for (auto &p : parts) {
    GNVC_CHECK(p->val.rank() == int(shape.size()), "concat_last rank mismatch");
    for (size_t i = 0; i + 1 < shape.size(); ++i)
      GNVC_CHECK(p->val.shape[i] == shape[i], "concat_last leading dims mismatch");
    total += p->val.shape.back();
  }
  int64_t rows = parts[0]->val.numel() / parts[0]->val.shape.back();
  shape.back() = total;
  Tensor<T> out(shape);
  int64_t off = 0;
  for (auto &p : parts) {
    int64_t d = p->val.shape.back();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < d; ++c) out[r * total + off + c] = p->val[r * d + c];
    off += d;
  }
  std::vector<Var<T>> parents(parts.begin(), parts.end());
  std::vector<int64_t> widths;
  for (auto &p : parts) widths.push_back(p->val.shape.back());
  return finish<T>(std::move(out), parents, [widths, rows, total](Node<T> &self) {
    int64_t off = 0;
    for (size_t k = 0; k < widths.size(); ++k) {
      Node<T> *p = self.parents[k].get();
      int64_t d = widths[k];
      if (p->requires_grad) {
        auto &g = p->g();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < d; ++c) g[r * d + c] += self.grad[r * total + off + c];
      }
      off += d;
    }
  });
}

// Slice index i along dim 0, dropping that dim.
template <class T>
Var<T> slice0(const Var<T> &a, int64_t i) {
  GNVC_CHECK(a->val.rank() >= 1 && i >= 0 && i < a->val.shape[0], "slice0 out of range");
  std::vector<int64_t> shape(a->val.shape.begin() + 1, a->val.shape.end());
  int64_t block = a->val.numel() / a->val.shape[0];
  Tensor<T> out(shape);
  for (int64_t k = 0; k < block; ++k) out[k] = a->val[i * block + k];
  return finish<T>(std::move(out), {a}, [pa = a.get(), i, block](Node<T> &self) {
    if (!pa->requires_grad) return;
    auto &g = pa->g();
    for (int64_t k = 0; k < block; ++k) g[i * block + k] += self.grad[k];
  });
}

// Stack equal-shaped tensors along a new dim 0.
template <class T>
Var<T> stack0(const std::vector<Var<T>> &parts) {
  GNVC_CHECK(!parts.empty(), "stack0 needs inputs");
  for (auto &p : parts) GNVC_CHECK(p->val.same_shape(parts[0]->val), "stack0 shape mismatch");
  std::vector<int64_t> shape = parts[0]->val.shape;
  shape.insert(shape.begin(), int64_t(parts.size()));
  int64_t block = parts[0]->val.numel();
  Tensor<T> out(shape);
  for (size_t k = 0; k < parts.size(); ++k)
    for (int64_t j = 0; j < block; ++j) out[int64_t(k) * block + j] = parts[k]->val[j];
  std::vector<Var<T>> parents(parts.begin(), parts.end());
  return finish<T>(std::move(out), parents, [block](Node<T> &self) {
    for (size_t k = 0; k < self.parents.size(); ++k) {
      Node<T> *p = self.parents[k].get();
      if (!p->requires_grad) continue;
      auto &g = p->g();
      for (int64_t j = 0; j < block; ++j) g[j] += self.grad[int64_t(k) * block + j];
    }
  });
}

// Row gather: out[r] = table[idx[r]].  Used for positional embeddings.
template <class T>
Var<T> gather_rows(const Var<T> &table, std::vector<int64_t> idx) {
  GNVC_CHECK(table->val.rank() == 2, "gather_rows wants [R,D] table");
  int64_t R = table->val.shape[0], D = table->val.shape[1];
  for (int64_t i : idx) GNVC_CHECK(i >= 0 && i < R, "gather_rows index out of range");
  Tensor<T> out({int64_t(idx.size()), D});
  for (size_t r = 0; r < idx.size(); ++r)
    for (int64_t c = 0; c < D; ++c) out[int64_t(r) * D + c] = table->val[idx[r] * D + c];
  return finish<T>(std::move(out), {table}, [pt = table.get(), idx = std::move(idx), D](Node<T> &self) {
    if (!pt->requires_grad) return;
    auto &g = pt->g();
    for (size_t r = 0; r < idx.size(); ++r)
      for (int64_t c = 0; c < D; ++c) g[idx[r] * D + c] += self.grad[int64_t(r) * D + c];
  });
}

// ----------------------------------------------------------------- GEMM

// c (+)= op(a) * op(b) with op selected by transpose flags.  Logical shapes:
// op(a) is [m,k], op(b) is [k,n].  Row-major maps straight onto our buffers.
template <class T>
void gemm(const Tensor<T> &a, const Tensor<T> &b, Tensor<T> &c, bool ta, bool tb, bool accumulate) {
  using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  GNVC_CHECK(a.rank() == 2 && b.rank() == 2 && c.rank() == 2, "gemm wants matrices");
  int64_t m = ta ? a.shape[1] : a.shape[0];
  int64_t k = ta ? a.shape[0] : a.shape[1];
  int64_t kb = tb ? b.shape[1] : b.shape[0];
  int64_t n = tb ? b.shape[0] : b.shape[1];
  GNVC_CHECK(k == kb && c.shape[0] == m && c.shape[1] == n, "gemm shape mismatch");
  Eigen::Map<const EMat> A(a.ptr(), a.shape[0], a.shape[1]);
  Eigen::Map<const EMat> B(b.ptr(), b.shape[0], b.shape[1]);
  Eigen::Map<EMat> C(c.ptr(), m, n);
  if (!ta && !tb) accumulate ? (C.noalias() += A * B) : (C.noalias() = A * B);
  else if (ta && !tb) accumulate ? (C.noalias() += A.transpose() * B) : (C.noalias() = A.transpose() * B);
  else if (!ta && tb) accumulate ? (C.noalias() += A * B.transpose()) : (C.noalias() = A * B.transpose());
  else accumulate ? (C.noalias() += A.transpose() * B.transpose()) : (C.noalias() = A.transpose() * B.transpose());
}

template <class T>
Var<T> matmul(const Var<T> &a, const Var<T> &b, bool ta = false, bool tb = false) {
  int64_t m = ta ? a->val.shape[1] : a->val.shape[0];
  int64_t n = tb ? b->val.shape[0] : b->val.shape[1];
  Tensor<T> out({m, n});
  gemm(a->val, b->val, out, ta, tb, false);
  return finish<T>(std::move(out), {a, b}, [pa = a.get(), pb = b.get(), ta, tb](Node<T> &self) {
    if (pa->requires_grad) {
      auto &ga = pa->g();
      if (!ta) gemm(self.grad, pb->val, ga, false, !tb, true);
      else gemm(pb->val, self.grad, ga, tb, true, true);
    }
    if (pb->requires_grad) {
      auto &gb = pb->g();
      if (!tb) gemm(pa->val, self.grad, gb, !ta, false, true);
      else gemm(self.grad, pa->val, gb, true, ta, true);
    }
  });
}

// x [N,D] + bias [D] broadcast over rows.
template <class T>
Var<T> add_bias(const Var<T> &x, const Var<T> &b) {
  int64_t d = x->val.shape.back();
  GNVC_CHECK(b->val.rank() == 1 && b->val.shape[0] == d, "add_bias dim mismatch");
  int64_t rows = x->val.numel() / d;
  Tensor<T> out = x->val;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < d; ++c) out[r * d + c] += b->val[c];
  return finish<T>(std::move(out), {x, b}, [px = x.get(), pb = b.get(), rows, d](Node<T> &self) {
    add_grad(px, self.grad);
    if (pb->requires_grad) {
      auto &g = pb->g();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
    }
  });
}

// Fully connected layer on the last dim: x [..,Din] -> [..,Dout].
template <class T>
Var<T> linear(const Var<T> &x, const Var<T> &w, const Var<T> &b) {
  int64_t din = x->val.shape.back();
  GNVC_CHECK(w->val.rank() == 2 && w->val.shape[0] == din, "linear weight mismatch");
  std::vector<int64_t> out_shape = x->val.shape;
  out_shape.back() = w->val.shape[1];
  auto flat = reshape(x, {x->val.numel() / din, din});
  auto y = add_bias(matmul(flat, w), b);
  return reshape(y, out_shape);
}

// --------------------------------------------------------------- softmax

template <class T>
Var<T> softmax_rows(const Var<T> &x) {
  int64_t d = x->val.shape.back();
  int64_t rows = x->val.numel() / d;
  Tensor<T> out(x->val.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const T *in = x->val.ptr() + r * d;
    T *o = out.ptr() + r * d;
    T mx = in[0];
    for (int64_t c = 1; c < d; ++c) mx = std::max(mx, in[c]);
    double z = 0;
    for (int64_t c = 0; c < d; ++c) {
      double e = std::exp(double(in[c] - mx));
      o[c] = T(e);
      z += e;
    }
    double inv = 1.0 / z;
    for (int64_t c = 0; c < d; ++c) o[c] = T(double(o[c]) * inv);
  }
  // Softmax backward needs its own output; keep a copy since node values are
  // released during the backward sweep.
  Tensor<T> saved = out;
  return finish<T>(std::move(out), {x}, [px = x.get(), saved = std::move(saved), rows, d](Node<T> &self) {
    if (!px->requires_grad) return;
    auto &g = px->g();
    for (int64_t r = 0; r < rows; ++r) {
      const T *y = saved.ptr() + r * d;
      const T *go = self.grad.ptr() + r * d;
      double dot = 0;
      for (int64_t c = 0; c < d; ++c) dot += double(go[c]) * double(y[c]);
      for (int64_t c = 0; c < d; ++c) g[r * d + c] += T((double(go[c]) - dot) * double(y[c]));
    }
  });
}

// -------------------------------------------------------------- layernorm

template <class T>
Var<T> layernorm(const Var<T> &x, const Var<T> &gamma, const Var<T> &beta, double eps = 1e-5) {
  int64_t d = x->val.shape.back();
  GNVC_CHECK(gamma->val.numel() == d && beta->val.numel() == d, "layernorm param mismatch");
  int64_t rows = x->val.numel() / d;
  Tensor<T> out(x->val.shape);
  Tensor<T> xhat(x->val.shape);
  Tensor<T> inv_std({rows});
  for (int64_t r = 0; r < rows; ++r) {
    const T *in = x->val.ptr() + r * d;
    double mu = 0;
    for (int64_t c = 0; c < d; ++c) mu += double(in[c]);
    mu /= double(d);
    double var = 0;
    for (int64_t c = 0; c < d; ++c) {
      double t = double(in[c]) - mu;
      var += t * t;
    }
    var /= double(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = T(is);
    for (int64_t c = 0; c < d; ++c) {
      double h = (double(in[c]) - mu) * is;
      xhat[r * d + c] = T(h);
      out[r * d + c] = T(h * double(gamma->val[c]) + double(beta->val[c]));
    }
  }
  return finish<T>(std::move(out), {x, gamma, beta},
                   [px = x.get(), pg = gamma.get(), pb = beta.get(), xhat = std::move(xhat),
                    inv_std = std::move(inv_std), rows, d](Node<T> &self) {
                     for (int64_t r = 0; r < rows; ++r) {
                       const T *go = self.grad.ptr() + r * d;
                       const T *xh = xhat.ptr() + r * d;
                       if (pg->requires_grad) {
                         auto &gg = pg->g();
                         for (int64_t c = 0; c < d; ++c) gg[c] += go[c] * xh[c];
                       }
                       if (pb->requires_grad) {
                         auto &gb = pb->g();
                         for (int64_t c = 0; c < d; ++c) gb[c] += go[c];
                       }
                       if (px->requires_grad) {
                         auto &gx = px->g();
                         double m1 = 0, m2 = 0;
                         for (int64_t c = 0; c < d; ++c) {
                           double dxh = double(go[c]) * double(pg->val[c]);
                           m1 += dxh;
                           m2 += dxh * double(xh[c]);
                         }
                         m1 /= double(d);
                         m2 /= double(d);
                         for (int64_t c = 0; c < d; ++c) {
                           double dxh = double(go[c]) * double(pg->val[c]);
                           gx[r * d + c] += T((dxh - m1 - double(xh[c]) * m2) * double(inv_std[r]));
                         }
                       }
                     }
                   });
}

// Per-row unit normalization y = x / sqrt(|x|^2 + eps), rows = last dim.
template <class T>
Var<T> unit_rows(const Var<T> &x, double eps = 1e-10) {
  int64_t d = x->val.shape.back();
  int64_t rows = x->val.numel() / d;
  Tensor<T> out(x->val.shape);
  Tensor<T> inv_n({rows});
  for (int64_t r = 0; r < rows; ++r) {
    const T *in = x->val.ptr() + r * d;
    double s = eps;
    for (int64_t c = 0; c < d; ++c) s += double(in[c]) * double(in[c]);
    double inv = 1.0 / std::sqrt(s);
    inv_n[r] = T(inv);
    for (int64_t c = 0; c < d; ++c) out[r * d + c] = T(double(in[c]) * inv);
  }
  Tensor<T> saved = out;
  return finish<T>(std::move(out), {x},
                   [px = x.get(), saved = std::move(saved), inv_n = std::move(inv_n), rows, d](Node<T> &self) {
                     if (!px->requires_grad) return;
                     auto &g = px->g();
                     for (int64_t r = 0; r < rows; ++r) {
                       const T *y = saved.ptr() + r * d;
                       const T *go = self.grad.ptr() + r * d;
                       double dot = 0;
                       for (int64_t c = 0; c < d; ++c) dot += double(go[c]) * double(y[c]);
                       for (int64_t c = 0; c < d; ++c)
                         g[r * d + c] += T((double(go[c]) - dot * double(y[c])) * double(inv_n[r]));
                     }
                   });
}

} // namespace gnvc
