#pragma once

#include <vector>

#include "core/rng.h"
#include "core/tensor.h"

namespace gnvc {

// Procedural clip generator.  Scenes are a drifting value-noise background
// with textured rectangles sliding over it.  Every field is sampled
// continuously in scene coordinates, so content moves exactly with its
// velocity: with integer velocities the next frame is a pure pixel shift of
// the previous one wherever nothing occludes, which is what the ground-truth
// flow and visibility mask assert.

struct RectSpec {
  double x0 = 0, y0 = 0; // top-left at t=0, pixels
  double w = 8, h = 8;
  double vx = 0, vy = 0; // pixels per frame
  float color[3] = {0.5f, 0.5f, 0.5f};
  double tex_amp = 0.0;  // multiplicative value-noise texture, 0 = flat
  double tex_cell = 8.0;
  uint64_t tex_seed = 0;
};

struct MotionSpec {
  int frames = 13, width = 64, height = 64;
  double bg_vx = 0, bg_vy = 0;
  uint64_t bg_seed = 1;
  double bg_cell = 16.0; // lattice cell of the coarsest noise octave
  int bg_octaves = 2;
  double bg_lo = 0.25, bg_hi = 0.75; // background value range
  float bg_tint[3] = {1.0f, 1.0f, 1.0f};
  std::vector<RectSpec> rects; // painted in order, later entries on top
};

struct Clip {
  Tensor<float> frames;  // [T,H,W,3], values in [0,1]
  Tensor<float> flow;    // [T-1,H,W,2], (dx,dy) mapping frame t to t+1
  Tensor<uint8_t> mask;  // [T-1,H,W], 1 where the warp identity must hold
};

// Smoothstep-interpolated value noise in [0,1]; deterministic in (x,y,seed).
double value_noise(double x, double y, uint64_t seed);
double fbm_noise(double x, double y, uint64_t seed, double cell, int octaves);

Clip render_clip(const MotionSpec &spec);

// Dataset sampling knobs (driven from the config file by the harness).
struct DataParams {
  int count = 256;
  int frames = 13;
  int width = 64, height = 64;
  int min_rects = 1, max_rects = 3;
  double min_size = 12, max_size = 36;
  double max_speed = 3.0;      // per-axis velocity bound
  double static_prob = 0.2;    // whole-scene static probability
  double integer_prob = 0.75;  // snap sampled velocities to integers
  double texture_prob = 0.7;   // rectangles carry noise texture
  double motion_scale = 1.0;   // multiplies every velocity (0 = static set)
};

MotionSpec sample_motion_spec(const DataParams &p, uint64_t seed, uint64_t index);
Clip make_clip(const DataParams &p, uint64_t seed, uint64_t index);

} // namespace gnvc
