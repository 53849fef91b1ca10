#include "core/synthdata.h"

#include <algorithm>
#include <cmath>

namespace gnvc {

static uint64_t lattice_hash(int64_t ix, int64_t iy, uint64_t seed) {
  uint64_t h = Rng::mix(seed ^ 0x51ed270b9a3e45d1ull);
  h = Rng::mix(h ^ uint64_t(ix) * 0x9e3779b97f4a7c15ull);
  h = Rng::mix(h ^ uint64_t(iy) * 0xc2b2ae3d27d4eb4full);
  return h;
}

double value_noise(double x, double y, uint64_t seed) {
  double fx = std::floor(x), fy = std::floor(y);
  int64_t ix = int64_t(fx), iy = int64_t(fy);
  double tx = x - fx, ty = y - fy;
  // smoothstep fade keeps the field C1, which keeps the VAE's life easy
  tx = tx * tx * (3 - 2 * tx);
  ty = ty * ty * (3 - 2 * ty);
  auto v = [&](int64_t a, int64_t b) {
    return double(lattice_hash(a, b, seed) >> 11) * 0x1.0p-53;
  };
  double a = v(ix, iy), b = v(ix + 1, iy), c = v(ix, iy + 1), d = v(ix + 1, iy + 1);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

double fbm_noise(double x, double y, uint64_t seed, double cell, int octaves) {
  double sum = 0, amp = 1, norm = 0, freq = 1.0 / cell;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(x * freq, y * freq, seed + uint64_t(o) * 0x9e37ull);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

namespace {

struct RectState {
  double x, y, w, h; // extent at a given frame
};

RectState rect_at(const RectSpec &r, int t) {
  return {r.x0 + r.vx * t, r.y0 + r.vy * t, r.w, r.h};
}

// Area of overlap between the rect and the unit pixel [px,px+1)x[py,py+1).
double coverage(const RectState &s, int px, int py) {
  double ox = std::min(double(px) + 1, s.x + s.w) - std::max(double(px), s.x);
  double oy = std::min(double(py) + 1, s.y + s.h) - std::max(double(py), s.y);
  if (ox <= 0 || oy <= 0) return 0;
  return ox * oy;
}

// Topmost rect fully covering the pixel; -1 = background.  fractional is set
// when any rect partially covers it (anti-aliasing blend zone).
int owner_at(const MotionSpec &spec, int t, int px, int py, bool *fractional) {
  int own = -1;
  bool frac = false;
  for (size_t k = 0; k < spec.rects.size(); ++k) {
    double cov = coverage(rect_at(spec.rects[k], t), px, py);
    if (cov >= 1.0 - 1e-12) own = int(k);
    else if (cov > 1e-12) frac = true;
  }
  if (fractional) *fractional = frac;
  return own;
}

float rect_color(const RectSpec &r, int t, double sx, double sy, int c) {
  double v = r.color[c];
  if (r.tex_amp > 0) {
    // texture sampled in object coordinates: rides rigidly with the rect
    double ox = sx - (r.x0 + r.vx * t), oy = sy - (r.y0 + r.vy * t);
    double n = value_noise(ox / r.tex_cell, oy / r.tex_cell, r.tex_seed);
    v *= 1.0 + r.tex_amp * (2.0 * n - 1.0);
  }
  return float(std::clamp(v, 0.0, 1.0));
}

} // namespace

Clip render_clip(const MotionSpec &spec) {
  const int T = spec.frames, H = spec.height, W = spec.width;
  GNVC_CHECK(T >= 1 && H >= 1 && W >= 1, "render_clip degenerate spec");
  Clip clip;
  clip.frames = Tensor<float>({T, H, W, 3});
  if (T > 1) {
    clip.flow = Tensor<float>({T - 1, H, W, 2});
    clip.mask = Tensor<uint8_t>({T - 1, H, W}, 1);
  } else {
    clip.flow = Tensor<float>({0, H, W, 2});
    clip.mask = Tensor<uint8_t>({0, H, W});
  }

  for (int t = 0; t < T; ++t) {
    for (int py = 0; py < H; ++py)
      for (int px = 0; px < W; ++px) {
        double sx = px + 0.5, sy = py + 0.5; // pixel center in scene coords
        // background drifts with bg velocity; sampling at p - v*t makes the
        // motion exact for any velocity
        double n = fbm_noise(sx - spec.bg_vx * t, sy - spec.bg_vy * t, spec.bg_seed,
                             spec.bg_cell, spec.bg_octaves);
        float base = float(spec.bg_lo + (spec.bg_hi - spec.bg_lo) * n);
        float out[3];
        for (int c = 0; c < 3; ++c) out[c] = std::clamp(base * spec.bg_tint[c], 0.0f, 1.0f);
        for (size_t k = 0; k < spec.rects.size(); ++k) {
          const RectSpec &r = spec.rects[k];
          double cov = coverage(rect_at(r, t), px, py);
          if (cov <= 0) continue;
          for (int c = 0; c < 3; ++c) {
            float rc = rect_color(r, t, sx, sy, c);
            out[c] = float(cov * rc + (1.0 - cov) * out[c]);
          }
        }
        for (int c = 0; c < 3; ++c) clip.frames.at(t, py, px, c) = out[c];
      }
  }

  for (int t = 0; t + 1 < T; ++t) {
    for (int py = 0; py < H; ++py)
      for (int px = 0; px < W; ++px) {
        bool frac_t = false, frac_dest = false;
        int own_t = owner_at(spec, t, px, py, &frac_t);
        bool frac_t1 = false;
        int own_t1 = owner_at(spec, t + 1, px, py, &frac_t1);

        double fx, fy;
        if (own_t >= 0) {
          fx = spec.rects[size_t(own_t)].vx;
          fy = spec.rects[size_t(own_t)].vy;
        } else {
          fx = spec.bg_vx;
          fy = spec.bg_vy;
        }
        clip.flow.at(t, py, px, 0) = float(fx);
        clip.flow.at(t, py, px, 1) = float(fy);

        uint8_t m = 1;
        // blend zones are not warp-exact
        if (frac_t || frac_t1) m = 0;
        // the entity occupying this position changed between the two frames
        // (covers both freshly occluded and freshly revealed pixels)
        if (own_t != own_t1) m = 0;
        // destination must stay inside the bilinear sampling domain
        double qx = px + fx, qy = py + fy;
        if (qx < 0 || qx > W - 1 || qy < 0 || qy > H - 1) m = 0;
        // destination pixels must belong to the same entity (true occlusion)
        if (m) {
          int x0 = int(std::floor(qx)), y0 = int(std::floor(qy));
          int x1 = int(std::ceil(qx)), y1 = int(std::ceil(qy));
          for (int yy = y0; yy <= y1 && m; ++yy)
            for (int xx = x0; xx <= x1 && m; ++xx) {
              bool fr = false;
              int o = owner_at(spec, t + 1, xx, yy, &fr);
              if (o != own_t || fr) m = 0;
              (void)frac_dest;
            }
        }
        clip.mask.at(t, py, px) = m;
      }
  }

  return clip;
}

MotionSpec sample_motion_spec(const DataParams &p, uint64_t seed, uint64_t index) {
  Rng rng = Rng::derive(seed, "data/clip", index);
  MotionSpec spec;
  spec.frames = p.frames;
  spec.width = p.width;
  spec.height = p.height;
  spec.bg_seed = rng.next_u64();
  spec.bg_cell = rng.uniform(12.0, 24.0);
  spec.bg_octaves = 2;
  spec.bg_lo = rng.uniform(0.15, 0.35);
  spec.bg_hi = rng.uniform(0.6, 0.85);
  for (int c = 0; c < 3; ++c) spec.bg_tint[c] = float(rng.uniform(0.85, 1.0));

  bool scene_static = rng.uniform() < p.static_prob;
  auto velocity = [&](double cap) {
    if (scene_static) return 0.0;
    double v = rng.uniform(-cap, cap);
    if (rng.uniform() < p.integer_prob) v = std::nearbyint(v);
    return v * p.motion_scale;
  };
  spec.bg_vx = velocity(1.5);
  spec.bg_vy = velocity(1.5);

  int nrect = rng.range_int(p.min_rects, p.max_rects);
  for (int k = 0; k < nrect; ++k) {
    RectSpec r;
    r.w = std::floor(rng.uniform(p.min_size, p.max_size));
    r.h = std::floor(rng.uniform(p.min_size, p.max_size));
    // keep the rect on screen for most of the clip
    r.x0 = std::floor(rng.uniform(0, std::max(1.0, p.width - r.w)));
    r.y0 = std::floor(rng.uniform(0, std::max(1.0, p.height - r.h)));
    r.vx = velocity(p.max_speed);
    r.vy = velocity(p.max_speed);
    for (int c = 0; c < 3; ++c) r.color[c] = float(rng.uniform(0.1, 0.9));
    if (rng.uniform() < p.texture_prob) {
      r.tex_amp = rng.uniform(0.1, 0.3);
      r.tex_cell = rng.uniform(6.0, 14.0);
      r.tex_seed = rng.next_u64();
    }
    spec.rects.push_back(r);
  }
  return spec;
}

Clip make_clip(const DataParams &p, uint64_t seed, uint64_t index) {
  return render_clip(sample_motion_spec(p, seed, index));
}

} // namespace gnvc
