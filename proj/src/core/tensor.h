#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "core/common.h"
#include "core/rng.h"

namespace gnvc {

// Dense row-major tensor.  Layout convention across the project is
// channels-last: video [T,H,W,C], latents [T,H,W,C] or [H,W,C] per frame,
// token matrices [N,D].  T = float for production models, double for the
// finite-difference oracles in the tests.
template <class T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), data(size_t(count(shape)), T(0)) {}
  Tensor(std::vector<int64_t> s, T fill) : shape(std::move(s)), data(size_t(count(shape)), fill) {}

  static int64_t count(const std::vector<int64_t> &s) {
    int64_t n = 1;
    for (int64_t d : s) {
      GNVC_CHECK(d >= 0, "negative tensor dim");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return int64_t(data.size()); }
  int rank() const { return int(shape.size()); }
  int64_t dim(int i) const { return shape[size_t(i)]; }

  T *ptr() { return data.data(); }
  const T *ptr() const { return data.data(); }

  T &operator[](int64_t i) { return data[size_t(i)]; }
  const T &operator[](int64_t i) const { return data[size_t(i)]; }

  // Multi-index access; variadic folds to a linear offset.
  template <class... Ix>
  T &at(Ix... ix) {
    return data[size_t(offset(ix...))];
  }
  template <class... Ix>
  const T &at(Ix... ix) const {
    return data[size_t(offset(ix...))];
  }
  template <class... Ix>
  int64_t offset(Ix... ix) const {
    const std::array<int64_t, sizeof...(Ix)> idx{int64_t(ix)...};
    GNVC_CHECK(int(idx.size()) == rank(), "index rank mismatch");
    int64_t off = 0;
    for (size_t i = 0; i < idx.size(); ++i) off = off * shape[i] + idx[i];
    return off;
  }

  bool same_shape(const Tensor &o) const { return shape == o.shape; }

  Tensor reshaped(std::vector<int64_t> s) const {
    GNVC_CHECK(count(s) == numel(), "reshape element count mismatch");
    Tensor r;
    r.shape = std::move(s);
    r.data = data;
    return r;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  void add_scaled(const Tensor &o, T s) {
    GNVC_CHECK(same_shape(o), "add_scaled shape mismatch");
    for (size_t i = 0; i < data.size(); ++i) data[i] += s * o.data[i];
  }

  T sum() const { return std::accumulate(data.begin(), data.end(), T(0)); }

  static Tensor zeros_like(const Tensor &o) { return Tensor(o.shape); }

  static Tensor randn(std::vector<int64_t> s, Rng &rng, T stddev = T(1)) {
    Tensor t(std::move(s));
    for (auto &v : t.data) v = T(rng.normal() * double(stddev));
    return t;
  }
  static Tensor rand_uniform(std::vector<int64_t> s, Rng &rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(s));
    for (auto &v : t.data) v = T(rng.uniform(lo, hi));
    return t;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> r;
    r.shape = shape;
    r.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) r.data[i] = U(data[i]);
    return r;
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }
};

template <class T>
double max_abs_diff(const Tensor<T> &a, const Tensor<T> &b) {
  GNVC_CHECK(a.same_shape(b), "max_abs_diff shape mismatch");
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

template <class T>
double mse(const Tensor<T> &a, const Tensor<T> &b) {
  GNVC_CHECK(a.same_shape(b), "mse shape mismatch");
  if (a.numel() == 0) return 0.0;
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return s / double(a.numel());
}

} // namespace gnvc
