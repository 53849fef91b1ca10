#pragma once

#include <cmath>
#include <vector>

#include "core/autograd.h"

namespace gnvc {

// Entropy models for the transform codec.  Symbols live in [-127, 127]
// (255 bins).  Anchor latents use a learned per-channel categorical prior
// (logits -> softmax); predicted latents use a conditional Gaussian whose
// mean/scale come from the context head.  Coding always goes through a
// deterministically quantized 16-bit CDF table, so encoder and decoder build
// bit-identical tables from the same model state.

constexpr int kSymbolMin = -127;
constexpr int kSymbolMax = 127;
constexpr int kSymbolCount = 255;
constexpr double kProbFloor = 0x1.0p-32;

struct CdfTable {
  static constexpr uint32_t kTot = 1u << 16;
  // cum[i]..cum[i+1] spans symbol (i - 127)
  std::vector<uint32_t> cum;

  uint32_t freq(int idx) const { return cum[size_t(idx) + 1] - cum[size_t(idx)]; }
  uint32_t lo(int idx) const { return cum[size_t(idx)]; }

  int find(uint32_t v) const {
    int lo_ = 0, hi_ = kSymbolCount - 1;
    while (lo_ < hi_) {
      int mid = (lo_ + hi_ + 1) / 2;
      if (cum[size_t(mid)] <= v) lo_ = mid;
      else hi_ = mid - 1;
    }
    return lo_;
  }
};

// Deterministic pmf -> integer frequency quantization: every bin keeps mass
// >= 1, the remainder lands on the heaviest bin (lowest index on ties).
inline CdfTable quantize_pmf(const std::vector<double> &pmf) {
  GNVC_CHECK(int(pmf.size()) == kSymbolCount, "pmf size");
  double total = 0;
  for (double p : pmf) total += p < 0 ? 0.0 : p;
  GNVC_CHECK(total > 0 && std::isfinite(total), "pmf degenerate");
  const uint32_t budget = CdfTable::kTot - uint32_t(kSymbolCount);
  std::vector<uint32_t> f(kSymbolCount);
  uint32_t sum = 0;
  size_t heaviest = 0;
  for (size_t i = 0; i < pmf.size(); ++i) {
    double p = (pmf[i] < 0 ? 0.0 : pmf[i]) / total;
    f[i] = 1 + uint32_t(std::floor(p * double(budget)));
    sum += f[i];
    if (pmf[i] > pmf[heaviest]) heaviest = i;
  }
  GNVC_CHECK(sum <= CdfTable::kTot, "pmf overflow after quantization");
  f[heaviest] += CdfTable::kTot - sum;
  CdfTable t;
  t.cum.resize(kSymbolCount + 1, 0);
  for (int i = 0; i < kSymbolCount; ++i) t.cum[size_t(i) + 1] = t.cum[size_t(i)] + f[size_t(i)];
  return t;
}

inline double phi(double x) { return 0.5 * (1.0 + std::erf(x * 0.7071067811865475244)); }

// Gaussian bin masses over the symbol alphabet, tails folded into the edges.
inline std::vector<double> gaussian_pmf(double sigma) {
  sigma = std::max(sigma, 1e-4);
  std::vector<double> p(kSymbolCount);
  double prev = 0.0; // CDF at -127.5 folded into the first bin
  for (int s = kSymbolMin; s <= kSymbolMax; ++s) {
    double hi = s == kSymbolMax ? 1.0 : phi((double(s) + 0.5) / sigma);
    p[size_t(s - kSymbolMin)] = hi - prev;
    prev = hi;
  }
  return p;
}

// Per-channel categorical pmf from float32 logits (double softmax, stable).
inline std::vector<double> categorical_pmf(const float *logits) {
  double mx = logits[0];
  for (int i = 1; i < kSymbolCount; ++i) mx = std::max(mx, double(logits[i]));
  std::vector<double> p(kSymbolCount);
  double z = 0;
  for (int i = 0; i < kSymbolCount; ++i) {
    p[size_t(i)] = std::exp(double(logits[i]) - mx);
    z += p[size_t(i)];
  }
  for (auto &x : p) x /= z;
  return p;
}

// Ideal bits for a symbol under a quantized table.
inline double table_bits(const CdfTable &t, int sym) {
  return -std::log2(double(t.freq(sym - kSymbolMin)) / double(CdfTable::kTot));
}

// Ideal code length of a symbol stream under an arbitrary pmf (0-based
// indices).  Floored so impossible symbols cost 32 bits instead of infinity.
inline double estimate_rate(const std::vector<int> &symbols, const std::vector<double> &pmf) {
  double bits = 0;
  for (int s : symbols) {
    GNVC_CHECK(s >= 0 && size_t(s) < pmf.size(), "symbol out of range");
    bits += -std::log2(std::max(pmf[size_t(s)], kProbFloor));
  }
  return bits;
}

// ---------------------------------------------------------- training rate

// Differentiable bits for Gaussian-modelled residuals: d is the (possibly
// noise-relaxed) centered value, sigma the per-element scale.
template <class T>
Var<T> gaussian_rate_bits(const Var<T> &d, const Var<T> &sigma) {
  GNVC_CHECK(d->val.same_shape(sigma->val), "gaussian_rate_bits shape mismatch");
  const double inv_sqrt2 = 0.7071067811865475244;
  auto hi = verf(scale(divide(add_scalar(d, 0.5), sigma), inv_sqrt2));
  auto lo = verf(scale(divide(add_scalar(d, -0.5), sigma), inv_sqrt2));
  auto p = scale(sub(hi, lo), 0.5);
  auto bits = scale(sum(vlog(clamp_min(p, kProbFloor))), -1.4426950408889634074);
  return bits;
}

// Differentiable bits for the anchor categorical prior.  probs is the
// softmax-ed [C, 255] table; y is channels-last, relaxed to continuous
// values.  The mass at a continuous point interpolates linearly between the
// neighboring integer bins, so it matches the table exactly at integers and
// stays differentiable in both the logits and y.
template <class T>
Var<T> categorical_rate_bits(const Var<T> &y, const Var<T> &probs) {
  GNVC_CHECK(probs->val.rank() == 2 && probs->val.shape[1] == kSymbolCount,
             "categorical_rate_bits wants [C,255] probs");
  const int64_t C = probs->val.shape[0];
  GNVC_CHECK(y->val.shape.back() == C, "categorical_rate_bits channel mismatch");
  const int64_t N = y->val.numel();

  struct Saved {
    std::vector<int32_t> k;   // lower bin index (0-based)
    std::vector<T> f;         // interpolation fraction
    std::vector<T> pm;        // interpolated mass (before floor)
  };
  Saved sv;
  sv.k.resize(size_t(N));
  sv.f.resize(size_t(N));
  sv.pm.resize(size_t(N));

  Tensor<T> out({1});
  double bits = 0;
  const double ln2 = 0.69314718055994530942;
  for (int64_t i = 0; i < N; ++i) {
    int64_t c = i % C;
    double x = std::clamp(double(y->val[i]), double(kSymbolMin), double(kSymbolMax));
    double kf = std::floor(x);
    int64_t k = int64_t(kf) - kSymbolMin;
    double f = x - kf;
    if (k >= kSymbolCount - 1) { // x == kSymbolMax exactly
      k = kSymbolCount - 2;
      f = 1.0;
    }
    double p0 = probs->val[c * kSymbolCount + k];
    double p1 = probs->val[c * kSymbolCount + k + 1];
    double pm = (1 - f) * p0 + f * p1;
    sv.k[size_t(i)] = int32_t(k);
    sv.f[size_t(i)] = T(f);
    sv.pm[size_t(i)] = T(pm);
    bits += -std::log2(std::max(pm, kProbFloor));
  }
  out[0] = T(bits);

  return finish<T>(std::move(out), {y, probs},
                   [py = y.get(), pp = probs.get(), sv = std::move(sv), C, N, ln2](Node<T> &self) {
                     T go = self.grad[0];
                     for (int64_t i = 0; i < N; ++i) {
                       double pm = double(sv.pm[size_t(i)]);
                       if (pm < kProbFloor) continue; // clamped, zero grad
                       double dbits = -double(go) / (pm * ln2);
                       int64_t c = i % C;
                       int64_t k = sv.k[size_t(i)];
                       double f = double(sv.f[size_t(i)]);
                       if (pp->requires_grad) {
                         auto &g = pp->g();
                         g[c * kSymbolCount + k] += T(dbits * (1 - f));
                         g[c * kSymbolCount + k + 1] += T(dbits * f);
                       }
                       if (py->requires_grad) {
                         double x = double(py->val[i]);
                         if (x > double(kSymbolMin) && x < double(kSymbolMax)) {
                           double p0 = pp->val[c * kSymbolCount + k];
                           double p1 = pp->val[c * kSymbolCount + k + 1];
                           py->g()[i] += T(dbits * (p1 - p0));
                         }
                       }
                     }
                   });
}

// Uniform noise in [-0.5, 0.5): the training-time relaxation of rounding.
template <class T>
Var<T> add_uniform_noise(const Var<T> &y, Rng &rng) {
  Tensor<T> u(y->val.shape);
  for (int64_t i = 0; i < u.numel(); ++i) u[i] = T(rng.uniform(-0.5, 0.5));
  return add(y, constant(std::move(u)));
}

} // namespace gnvc
