#pragma once

#include <limits>
#include <vector>

#include "core/nnops.h"
#include "core/tensor.h"

namespace gnvc {

// ------------------------------------------------------------------ psnr

inline double psnr(double mse_value, double peak = 1.0) {
  if (mse_value <= 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse_value);
}

inline double psnr(const Tensor<double> &a, const Tensor<double> &b, double peak = 1.0) {
  return psnr(mse(a, b), peak);
}

// ------------------------------------------------------- perceptual proxy

// Distance between videos in a fixed random multi-scale feature space:
// three octaves of zero-mean 3x3 projections, per-position unit-normalized,
// compared by mean squared difference.  The filters come from a constant
// seed-0 stream, so the measure is the same everywhere and never trains.
// Differentiable, so it can sit inside a pixel-domain training loss.

namespace detail {
template <class T>
Tensor<T> proxy_filters(int scale) {
  Rng rng = Rng::derive(0, "proxy/scale" + std::to_string(scale));
  Tensor<T> w = Tensor<T>::randn({1, 3, 3, 3, 8}, rng, 1.0 / std::sqrt(27.0));
  // zero mean per output channel: flat patches produce no response
  for (int64_t co = 0; co < 8; ++co) {
    double m = 0;
    for (int64_t i = 0; i < 27; ++i) m += double(w[i * 8 + co]);
    m /= 27.0;
    for (int64_t i = 0; i < 27; ++i) w[i * 8 + co] -= T(m);
  }
  return w;
}
} // namespace detail

template <class T>
Var<T> perceptual_proxy(const Var<T> &a, const Var<T> &b, int scales = 3) {
  GNVC_CHECK(a->val.rank() == 4 && a->val.shape[3] == 3 && a->val.same_shape(b->val),
             "perceptual_proxy wants matching [T,H,W,3]");
  auto xa = a, xb = b;
  Var<T> total;
  for (int s = 0; s < scales; ++s) {
    if (s > 0) {
      if (xa->val.shape[1] % 2 || xa->val.shape[2] % 2 || xa->val.shape[1] < 8 ||
          xa->val.shape[2] < 8)
        break;
      xa = avgpool2x_hw(xa);
      xb = avgpool2x_hw(xb);
    }
    auto filt = constant(detail::proxy_filters<T>(s));
    auto bias = constant(Tensor<T>({8}));
    auto fa = conv3d(xa, filt, bias);
    auto fb = conv3d(xb, filt, bias);
    int64_t n = fa->val.numel() / 8;
    auto na = unit_rows(reshape(fa, {n, 8}));
    auto nb = unit_rows(reshape(fb, {n, 8}));
    auto d = scale(mean_sq_diff(na, nb), 1.0 / double(scales));
    total = total ? add(total, d) : d;
  }
  return total;
}

inline double perceptual_proxy_value(const Tensor<double> &a, const Tensor<double> &b) {
  return perceptual_proxy(constant(a), constant(b))->val[0];
}

// ------------------------------------------------------------- warp error

// Border-clamped bilinear lookup of frames[t] at (qx, qy).
inline double warp_sample(const Tensor<double> &frames, int64_t t, double qx, double qy,
                          int64_t c) {
  const int64_t H = frames.shape[1], W = frames.shape[2];
  qx = std::clamp(qx, 0.0, double(W - 1));
  qy = std::clamp(qy, 0.0, double(H - 1));
  int64_t x0 = int64_t(std::floor(qx)), y0 = int64_t(std::floor(qy));
  int64_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
  double ax = qx - double(x0), ay = qy - double(y0);
  double v00 = frames.at(t, y0, x0, c), v10 = frames.at(t, y0, x1, c);
  double v01 = frames.at(t, y1, x0, c), v11 = frames.at(t, y1, x1, c);
  return (v00 * (1 - ax) + v10 * ax) * (1 - ay) + (v01 * (1 - ax) + v11 * ax) * ay;
}

// Masked temporal warp error: mean over valid pixels of the channel-mean
// squared difference between frame t and frame t+1 pulled back along the
// flow, scaled by 1e4.
inline double warp_error(const Tensor<double> &frames, const Tensor<double> &flow,
                         const Tensor<uint8_t> &mask) {
  const int64_t T = frames.shape[0], H = frames.shape[1], W = frames.shape[2];
  GNVC_CHECK(frames.rank() == 4 && frames.shape[3] == 3, "warp_error wants frames [T,H,W,3]");
  GNVC_CHECK(flow.rank() == 4 && flow.shape[0] == T - 1 && flow.shape[1] == H &&
                 flow.shape[2] == W && flow.shape[3] == 2,
             "warp_error wants flow [T-1,H,W,2]");
  GNVC_CHECK(mask.rank() == 3 && mask.shape[0] == T - 1 && mask.shape[1] == H &&
                 mask.shape[2] == W,
             "warp_error wants mask [T-1,H,W]");
  double acc = 0;
  int64_t cnt = 0;
  for (int64_t t = 0; t + 1 < T; ++t)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        if (!mask.at(t, y, x)) continue;
        double qx = double(x) + flow.at(t, y, x, 0);
        double qy = double(y) + flow.at(t, y, x, 1);
        double d2 = 0;
        for (int64_t c = 0; c < 3; ++c) {
          double d = frames.at(t, y, x, c) - warp_sample(frames, t + 1, qx, qy, c);
          d2 += d * d;
        }
        acc += d2 / 3.0;
        ++cnt;
      }
  return cnt ? 1e4 * acc / double(cnt) : 0.0;
}

// ------------------------------------------------------------------- bpp

// Bits per source pixel: chunk payloads plus the 8-byte per-chunk framing
// (length + symbol count), over the unpadded frames.
inline double bits_per_pixel(int64_t payload_bytes, int64_t chunk_count, int64_t frames,
                             int64_t h, int64_t w) {
  GNVC_CHECK(frames > 0 && h > 0 && w > 0, "bits_per_pixel: empty video");
  return double((payload_bytes + 8 * chunk_count) * 8) / double(frames * h * w);
}

// --------------------------------------------------------------- bd-rate

struct RdPoint {
  double bpp = 0;
  double quality = 0; // higher is better (e.g. psnr)
};

// Average relative rate difference (percent) of `test` against `ref` over
// their common quality range; negative means `test` spends fewer bits for
// equal quality.  Needs >= 2 points per curve with distinct qualities.
double bd_rate(std::vector<RdPoint> ref, std::vector<RdPoint> test);

} // namespace gnvc
