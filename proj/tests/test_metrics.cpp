#include <doctest.h>

#include "core/metrics.h"
#include "core/synthdata.h"
#include "testutil.h"

using namespace gnvc;

namespace {
Tensor<double> box_blur3(const Tensor<double> &x) {
  const int64_t T = x.shape[0], H = x.shape[1], W = x.shape[2];
  Tensor<double> out(x.shape);
  for (int64_t t = 0; t < T; ++t)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t xx = 0; xx < W; ++xx)
        for (int64_t c = 0; c < 3; ++c) {
          double acc = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              int64_t sy = std::clamp<int64_t>(y + dy, 0, H - 1);
              int64_t sx = std::clamp<int64_t>(xx + dx, 0, W - 1);
              acc += x.at(t, sy, sx, c);
            }
          out.at(t, y, xx, c) = acc / 9.0;
        }
  return out;
}

Tensor<double> textured_video() {
  MotionSpec spec;
  spec.frames = 3;
  spec.width = 32;
  spec.height = 32;
  spec.bg_seed = 91;
  spec.bg_cell = 6.0;
  spec.bg_octaves = 3;
  RectSpec r;
  r.x0 = 6;
  r.y0 = 8;
  r.w = 14;
  r.h = 12;
  r.tex_amp = 0.5;
  r.tex_cell = 4.0;
  r.tex_seed = 5;
  spec.rects.push_back(r);
  return render_clip(spec).frames.cast<double>();
}
} // namespace

TEST_CASE("psnr oracle values") {
  Tensor<double> a({1, 2, 2, 3});
  Tensor<double> b({1, 2, 2, 3});
  CHECK(psnr(a, b) == std::numeric_limits<double>::infinity());
  b.fill(0.1); // rmse 0.1
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  b.fill(1.0);
  CHECK(psnr(a, b) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
}

TEST_CASE("bits-per-pixel oracle values") {
  // 8 coded bits over a single 2x2 frame -> 2 bpp
  CHECK(bits_per_pixel(1, 0, 1, 2, 2) == 2.0);
  // framing: each chunk costs 8 extra bytes
  CHECK(bits_per_pixel(2, 1, 1, 2, 2) == 20.0);
  CHECK_THROWS_AS(bits_per_pixel(1, 0, 0, 2, 2), Error);
}

TEST_CASE("warp error: exact zero on static and integer-shift scenes") {
  MotionSpec spec;
  spec.frames = 4;
  spec.width = 24;
  spec.height = 20;
  spec.bg_seed = 92;
  Clip still = render_clip(spec);
  CHECK(warp_error(still.frames.cast<double>(), still.flow.cast<double>(), still.mask) == 0.0);

  spec.bg_vx = 1.0; // integer drift
  RectSpec r;
  r.x0 = 3;
  r.y0 = 4;
  r.w = 8;
  r.h = 7;
  r.vx = 2;
  r.vy = -1;
  r.tex_amp = 0.4;
  spec.rects.push_back(r);
  Clip moving = render_clip(spec);
  CHECK(warp_error(moving.frames.cast<double>(), moving.flow.cast<double>(), moving.mask) ==
        0.0);
}

TEST_CASE("warp error matches hand-computed bilinear values") {
  Tensor<double> frames({2, 1, 2, 3});
  double f0[3] = {0.2, 0.4, 0.6};
  double f1a[3] = {0.1, 0.3, 0.9}, f1b[3] = {0.5, 0.5, 0.5};
  for (int c = 0; c < 3; ++c) {
    frames.at(0, 0, 0, c) = f0[c];
    frames.at(0, 0, 1, c) = 0.0;
    frames.at(1, 0, 0, c) = f1a[c];
    frames.at(1, 0, 1, c) = f1b[c];
  }
  Tensor<double> flow({1, 1, 2, 2});
  Tensor<uint8_t> mask({1, 1, 2});
  mask.at(0, 0, 0) = 1; // only pixel (0,0) counts

  // integer flow: pull frame1[x=1]
  flow.at(0, 0, 0, 0) = 1.0;
  double e = 0;
  for (int c = 0; c < 3; ++c) e += (f0[c] - f1b[c]) * (f0[c] - f1b[c]);
  CHECK(warp_error(frames, flow, mask) == doctest::Approx(1e4 * e / 3).epsilon(1e-12));

  // fractional flow: halfway between the two frame1 pixels
  flow.at(0, 0, 0, 0) = 0.5;
  e = 0;
  for (int c = 0; c < 3; ++c) {
    double s = 0.5 * (f1a[c] + f1b[c]);
    e += (f0[c] - s) * (f0[c] - s);
  }
  CHECK(warp_error(frames, flow, mask) == doctest::Approx(1e4 * e / 3).epsilon(1e-12));

  // empty mask -> zero by convention
  mask.at(0, 0, 0) = 0;
  CHECK(warp_error(frames, flow, mask) == 0.0);
}

TEST_CASE("perceptual proxy: zero at identity, deterministic, finite") {
  auto v = textured_video();
  CHECK(perceptual_proxy_value(v, v) == 0.0);
  Tensor<double> w = v;
  Rng rng(93);
  for (int64_t i = 0; i < w.numel(); ++i) w[i] += 0.05 * rng.normal();
  double d1 = perceptual_proxy_value(v, w);
  double d2 = perceptual_proxy_value(v, w);
  CHECK(d1 == d2);
  CHECK(d1 > 0);
  CHECK(std::isfinite(d1));
}

TEST_CASE("perceptual proxy ranks blur as worse than light noise") {
  auto v = textured_video();
  Tensor<double> noisy = v;
  Rng rng(94);
  for (int64_t i = 0; i < noisy.numel(); ++i) noisy[i] += 0.01 * rng.normal();
  Tensor<double> blurred = box_blur3(v);
  double dn = perceptual_proxy_value(v, noisy);
  double db = perceptual_proxy_value(v, blurred);
  CHECK(db > dn);
  // while plain mse barely separates them at these amplitudes
  CHECK(mse(v, noisy) == doctest::Approx(1e-4).epsilon(0.2));
}

TEST_CASE("grad: perceptual proxy is differentiable in both inputs") {
  auto a = leaf(test::randn({1, 8, 8, 3}, 95, 0.2), true);
  auto b = leaf(test::randn({1, 8, 8, 3}, 96, 0.2), true);
  auto build = [&] { return perceptual_proxy(a, b); };
  CHECK(test::grad_check(build, {a, b}, 1e-5, 24) < 1e-3);
}

TEST_CASE("bd-rate oracle: identical curves score zero") {
  std::vector<RdPoint> ref = {{0.2, 30}, {0.4, 33}, {0.8, 36}, {1.6, 39}};
  CHECK(bd_rate(ref, ref) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
}

TEST_CASE("bd-rate oracle: constant rate ratios are recovered exactly") {
  std::vector<RdPoint> ref4 = {{0.2, 30}, {0.4, 33}, {0.8, 36}, {1.6, 39}};
  std::vector<RdPoint> ref3 = {{0.2, 30}, {0.4, 33}, {0.8, 36}};
  std::vector<RdPoint> ref2 = {{0.2, 30}, {0.4, 33}};
  for (auto *ref : {&ref4, &ref3, &ref2}) {
    std::vector<RdPoint> half = *ref, tenth_up = *ref;
    for (auto &p : half) p.bpp *= 0.5;
    for (auto &p : tenth_up) p.bpp *= 1.1;
    CHECK(std::abs(bd_rate(*ref, half) - (-50.0)) < 0.1);
    CHECK(std::abs(bd_rate(*ref, tenth_up) - 10.0) < 0.1);
    CHECK(std::abs(bd_rate(half, *ref) - 100.0) < 0.1);
  }
}

TEST_CASE("bd-rate orientation: cheaper-at-equal-quality is negative") {
  std::vector<RdPoint> ref = {{0.3, 30}, {0.5, 32.5}, {0.9, 35}, {1.7, 38}};
  std::vector<RdPoint> better = {{0.25, 30.5}, {0.42, 33}, {0.7, 35.5}, {1.3, 38.2}};
  CHECK(bd_rate(ref, better) < 0);
  CHECK(bd_rate(better, ref) > 0);
}

TEST_CASE("bd-rate rejects degenerate inputs") {
  std::vector<RdPoint> one = {{0.5, 30}};
  std::vector<RdPoint> ok = {{0.2, 30}, {0.4, 33}};
  CHECK_THROWS_AS(bd_rate(one, ok), Error);
  std::vector<RdPoint> dup = {{0.2, 30}, {0.4, 30}};
  CHECK_THROWS_AS(bd_rate(dup, ok), Error);
  std::vector<RdPoint> disjoint = {{0.2, 40}, {0.4, 43}};
  CHECK_THROWS_AS(bd_rate(ok, disjoint), Error);
  std::vector<RdPoint> zero_rate = {{0.0, 30}, {0.4, 33}};
  CHECK_THROWS_AS(bd_rate(zero_rate, ok), Error);
}
