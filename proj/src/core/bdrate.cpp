#include "core/metrics.h"

#include <algorithm>
#include <cmath>

namespace gnvc {
namespace {

// Monotone cubic (Fritsch-Carlson) derivative estimates for y over x.
std::vector<double> pchip_slopes(const std::vector<double> &x, const std::vector<double> &y) {
  const size_t n = x.size();
  std::vector<double> h(n - 1), m(n - 1), d(n);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    m[i] = (y[i + 1] - y[i]) / h[i];
  }
  for (size_t i = 1; i + 1 < n; ++i) {
    if (m[i - 1] * m[i] <= 0) {
      d[i] = 0;
    } else {
      double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
      d[i] = (w1 + w2) / (w1 / m[i - 1] + w2 / m[i]);
    }
  }
  auto end_slope = [](double h0, double h1, double m0, double m1) {
    double d0 = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (d0 * m0 <= 0) return 0.0;
    if (m0 * m1 <= 0 && std::abs(d0) > 3 * std::abs(m0)) return 3 * m0;
    return d0;
  };
  d[0] = n == 2 ? m[0] : end_slope(h[0], h[1], m[0], m[1]);
  d[n - 1] = n == 2 ? m[0] : end_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
  return d;
}

// Integral of the cubic Hermite segment (y0,d0)-(y1,d1) over s in [s0,s1],
// s normalized to [0,1], scaled by the interval width h.
double hermite_integral(double y0, double d0, double y1, double d1, double h, double s0,
                        double s1) {
  auto anti = [&](double s) {
    double s2 = s * s, s3 = s2 * s, s4 = s2 * s2;
    double a = y0 * (0.5 * s4 - s3 + s);
    double b = h * d0 * (0.25 * s4 - 2.0 / 3.0 * s3 + 0.5 * s2);
    double c = y1 * (-0.5 * s4 + s3);
    double e = h * d1 * (0.25 * s4 - s3 / 3.0);
    return a + b + c + e;
  };
  return h * (anti(s1) - anti(s0));
}

// Integrate the interpolant of (x, y) over [lo, hi].  n >= 4 uses monotone
// cubic segments, n == 3 the exact quadratic through the points, n == 2 the
// straight line.
double curve_integral(const std::vector<double> &x, const std::vector<double> &y, double lo,
                      double hi) {
  const size_t n = x.size();
  if (n == 2) {
    double m = (y[1] - y[0]) / (x[1] - x[0]);
    auto anti = [&](double q) { return y[0] * q + 0.5 * m * (q - x[0]) * (q - x[0]); };
    return anti(hi) - anti(lo);
  }
  if (n == 3) {
    // Lagrange quadratic coefficients
    double a2 = 0, a1 = 0, a0 = 0;
    for (int i = 0; i < 3; ++i) {
      int j = (i + 1) % 3, k = (i + 2) % 3;
      double den = (x[i] - x[j]) * (x[i] - x[k]);
      a2 += y[i] / den;
      a1 += -y[i] * (x[j] + x[k]) / den;
      a0 += y[i] * x[j] * x[k] / den;
    }
    auto anti = [&](double q) { return a2 * q * q * q / 3 + a1 * q * q / 2 + a0 * q; };
    return anti(hi) - anti(lo);
  }
  std::vector<double> d = pchip_slopes(x, y);
  double total = 0;
  for (size_t i = 0; i + 1 < x.size(); ++i) {
    double a = std::max(lo, x[i]), b = std::min(hi, x[i + 1]);
    if (b <= a) continue;
    double h = x[i + 1] - x[i];
    total += hermite_integral(y[i], d[i], y[i + 1], d[i + 1], h, (a - x[i]) / h, (b - x[i]) / h);
  }
  return total;
}

void prepare(std::vector<RdPoint> &pts, std::vector<double> &q, std::vector<double> &lr) {
  if (pts.size() < 2) throw Error(Status::data_error, "bd_rate needs at least 2 points per curve");
  std::sort(pts.begin(), pts.end(),
            [](const RdPoint &a, const RdPoint &b) { return a.quality < b.quality; });
  for (auto &p : pts) {
    if (!(p.bpp > 0) || !std::isfinite(p.quality))
      throw Error(Status::data_error, "bd_rate points need positive rate and finite quality");
    q.push_back(p.quality);
    lr.push_back(std::log10(p.bpp));
  }
  for (size_t i = 0; i + 1 < q.size(); ++i)
    if (q[i + 1] <= q[i])
      throw Error(Status::data_error, "bd_rate quality values must be distinct");
}

} // namespace

double bd_rate(std::vector<RdPoint> ref, std::vector<RdPoint> test) {
  std::vector<double> qr, lr, qt, lt;
  prepare(ref, qr, lr);
  prepare(test, qt, lt);
  double lo = std::max(qr.front(), qt.front());
  double hi = std::min(qr.back(), qt.back());
  if (!(hi > lo)) throw Error(Status::data_error, "bd_rate curves do not overlap in quality");
  double avg_diff = (curve_integral(qt, lt, lo, hi) - curve_integral(qr, lr, lo, hi)) / (hi - lo);
  return 100.0 * (std::pow(10.0, avg_diff) - 1.0);
}

} // namespace gnvc
