#pragma once

#include "core/autograd.h"

namespace gnvc {

// Convolution layers via im2col + GEMM.  Weight layout [kt,kh,kw,Cin,Cout]
// (3D) or [kh,kw,Cin,Cout] (2D) flattens row-major to the [K,Cout] matrix the
// GEMM wants, so no repacking happens on the hot path.  Temporal padding is
// strictly causal (kt-1 frames of left pad, none on the right); spatial
// padding is centered, odd kernels only.  The im2col buffer is rebuilt in the
// backward pass instead of being stored: graphs hold activations for the
// whole unrolled clip, and the rebuild is cheap next to the GEMMs.

namespace detail {

struct Conv3dGeom {
  int64_t Ti, H, W, Ci, kt, kh, kw, Co, st, sh, sw, To, Ho, Wo;
};

inline Conv3dGeom conv3d_geom(const std::vector<int64_t> &xs, const std::vector<int64_t> &ws,
                              int64_t st, int64_t sh, int64_t sw) {
  GNVC_CHECK(xs.size() == 4 && ws.size() == 5, "conv3d wants x[T,H,W,C] w[kt,kh,kw,Ci,Co]");
  Conv3dGeom g;
  g.Ti = xs[0]; g.H = xs[1]; g.W = xs[2]; g.Ci = xs[3];
  g.kt = ws[0]; g.kh = ws[1]; g.kw = ws[2]; g.Co = ws[4];
  GNVC_CHECK(ws[3] == g.Ci, "conv3d channel mismatch");
  GNVC_CHECK(g.kh % 2 == 1 && g.kw % 2 == 1, "conv3d spatial kernels must be odd");
  g.st = st; g.sh = sh; g.sw = sw;
  g.To = (g.Ti - 1) / st + 1; // with kt-1 causal left pad
  g.Ho = (g.H + (g.kh - 1) - g.kh) / sh + 1;
  g.Wo = (g.W + (g.kw - 1) - g.kw) / sw + 1;
  return g;
}

template <class T>
void conv3d_im2col(const Tensor<T> &x, const Conv3dGeom &g, Tensor<T> &col) {
  const int64_t K = g.kt * g.kh * g.kw * g.Ci;
  const int64_t ph = (g.kh - 1) / 2, pw = (g.kw - 1) / 2;
  GNVC_CHECK(col.shape[0] == g.To * g.Ho * g.Wo && col.shape[1] == K, "im2col buffer shape");
  T *cp = col.ptr();
  for (int64_t to = 0; to < g.To; ++to)
    for (int64_t yo = 0; yo < g.Ho; ++yo)
      for (int64_t xo = 0; xo < g.Wo; ++xo) {
        for (int64_t dt = 0; dt < g.kt; ++dt) {
          int64_t ti = to * g.st - (g.kt - 1) + dt;
          for (int64_t dy = 0; dy < g.kh; ++dy) {
            int64_t yi = yo * g.sh - ph + dy;
            for (int64_t dx = 0; dx < g.kw; ++dx) {
              int64_t xi = xo * g.sw - pw + dx;
              if (ti < 0 || yi < 0 || yi >= g.H || xi < 0 || xi >= g.W) {
                for (int64_t c = 0; c < g.Ci; ++c) *cp++ = T(0);
              } else {
                const T *src = x.ptr() + ((ti * g.H + yi) * g.W + xi) * g.Ci;
                for (int64_t c = 0; c < g.Ci; ++c) *cp++ = src[c];
              }
            }
          }
        }
      }
}

template <class T>
void conv3d_col2im(const Tensor<T> &col, const Conv3dGeom &g, Tensor<T> &dx) {
  const int64_t ph = (g.kh - 1) / 2, pw = (g.kw - 1) / 2;
  const T *cp = col.ptr();
  for (int64_t to = 0; to < g.To; ++to)
    for (int64_t yo = 0; yo < g.Ho; ++yo)
      for (int64_t xo = 0; xo < g.Wo; ++xo) {
        for (int64_t dt = 0; dt < g.kt; ++dt) {
          int64_t ti = to * g.st - (g.kt - 1) + dt;
          for (int64_t dy = 0; dy < g.kh; ++dy) {
            int64_t yi = yo * g.sh - ph + dy;
            for (int64_t dx_ = 0; dx_ < g.kw; ++dx_) {
              int64_t xi = xo * g.sw - pw + dx_;
              if (ti < 0 || yi < 0 || yi >= g.H || xi < 0 || xi >= g.W) {
                cp += g.Ci;
              } else {
                T *dst = dx.ptr() + ((ti * g.H + yi) * g.W + xi) * g.Ci;
                for (int64_t c = 0; c < g.Ci; ++c) dst[c] += *cp++;
              }
            }
          }
        }
      }
}

} // namespace detail

// x [T,H,W,Ci] -> [To,Ho,Wo,Co]; causal in time.
template <class T>
Var<T> conv3d(const Var<T> &x, const Var<T> &w, const Var<T> &b, int64_t st = 1, int64_t sh = 1,
              int64_t sw = 1) {
  auto g = detail::conv3d_geom(x->val.shape, w->val.shape, st, sh, sw);
  const int64_t P = g.To * g.Ho * g.Wo;
  const int64_t K = g.kt * g.kh * g.kw * g.Ci;
  GNVC_CHECK(b->val.numel() == g.Co, "conv3d bias mismatch");

  Tensor<T> col({P, K});
  detail::conv3d_im2col(x->val, g, col);
  Tensor<T> w2 = w->val.reshaped({K, g.Co});
  Tensor<T> out({P, g.Co});
  gemm(col, w2, out, false, false, false);
  for (int64_t p = 0; p < P; ++p)
    for (int64_t c = 0; c < g.Co; ++c) out[p * g.Co + c] += b->val[c];
  out = out.reshaped({g.To, g.Ho, g.Wo, g.Co});

  return finish<T>(std::move(out), {x, w, b},
                   [px = x.get(), pw = w.get(), pb = b.get(), g, P, K](Node<T> &self) {
                     Tensor<T> go = self.grad.reshaped({P, g.Co});
                     if (pb->requires_grad) {
                       auto &gb = pb->g();
                       for (int64_t p = 0; p < P; ++p)
                         for (int64_t c = 0; c < g.Co; ++c) gb[c] += go[p * g.Co + c];
                     }
                     if (pw->requires_grad) {
                       Tensor<T> col({P, K});
                       detail::conv3d_im2col(px->val, g, col);
                       Tensor<T> gw = pw->g().reshaped({K, g.Co});
                       gemm(col, go, gw, true, false, true);
                       pw->grad = gw.reshaped(pw->val.shape);
                     }
                     if (px->requires_grad) {
                       Tensor<T> w2 = pw->val.reshaped({K, g.Co});
                       Tensor<T> dcol({P, K});
                       gemm(go, w2, dcol, false, true, false);
                       Tensor<T> dx = px->g().reshaped(px->val.shape);
                       detail::conv3d_col2im(dcol, g, dx);
                       px->grad = std::move(dx);
                     }
                   });
}

// x [H,W,Ci] -> [Ho,Wo,Co]; thin wrapper over the 3D path with T = kt = 1.
template <class T>
Var<T> conv2d(const Var<T> &x, const Var<T> &w, const Var<T> &b, int64_t sh = 1, int64_t sw = 1) {
  GNVC_CHECK(x->val.rank() == 3 && w->val.rank() == 4, "conv2d wants x[H,W,C] w[kh,kw,Ci,Co]");
  auto x4 = reshape(x, {1, x->val.shape[0], x->val.shape[1], x->val.shape[2]});
  auto w5 = reshape(w, {1, w->val.shape[0], w->val.shape[1], w->val.shape[2], w->val.shape[3]});
  auto y = conv3d(x4, w5, b, 1, sh, sw);
  return reshape(y, {y->val.shape[1], y->val.shape[2], y->val.shape[3]});
}

// Nearest-neighbor 2x spatial upsampling on [T,H,W,C].
template <class T>
Var<T> upsample2x_hw(const Var<T> &x) {
  GNVC_CHECK(x->val.rank() == 4, "upsample2x_hw wants [T,H,W,C]");
  int64_t Tn = x->val.shape[0], H = x->val.shape[1], W = x->val.shape[2], C = x->val.shape[3];
  Tensor<T> out({Tn, H * 2, W * 2, C});
  for (int64_t t = 0; t < Tn; ++t)
    for (int64_t y = 0; y < 2 * H; ++y)
      for (int64_t xq = 0; xq < 2 * W; ++xq) {
        const T *src = x->val.ptr() + ((t * H + y / 2) * W + xq / 2) * C;
        T *dst = out.ptr() + ((t * 2 * H + y) * 2 * W + xq) * C;
        for (int64_t c = 0; c < C; ++c) dst[c] = src[c];
      }
  return finish<T>(std::move(out), {x}, [px = x.get(), Tn, H, W, C](Node<T> &self) {
    if (!px->requires_grad) return;
    auto &g = px->g();
    for (int64_t t = 0; t < Tn; ++t)
      for (int64_t y = 0; y < 2 * H; ++y)
        for (int64_t xq = 0; xq < 2 * W; ++xq) {
          T *dst = g.ptr() + ((t * H + y / 2) * W + xq / 2) * C;
          const T *src = self.grad.ptr() + ((t * 2 * H + y) * 2 * W + xq) * C;
          for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
        }
  });
}

// Causal temporal upsampling: [Tl,H,W,C] -> [2*Tl-1,H,W,C], out[i] = x[ceil(i/2)].
// Inverts the stride-2 temporal downsampling convention (1+T frames <-> 1+T/2
// latents): every output frame depends only on latents at or before its own
// time.
template <class T>
Var<T> upsample_time_causal(const Var<T> &x) {
  GNVC_CHECK(x->val.rank() == 4 && x->val.shape[0] >= 1, "upsample_time_causal wants [T,H,W,C]");
  int64_t Tl = x->val.shape[0];
  int64_t block = x->val.numel() / Tl;
  int64_t To = 2 * Tl - 1;
  Tensor<T> out({To, x->val.shape[1], x->val.shape[2], x->val.shape[3]});
  for (int64_t i = 0; i < To; ++i) {
    int64_t j = (i + 1) / 2;
    std::memcpy(out.ptr() + i * block, x->val.ptr() + j * block, sizeof(T) * size_t(block));
  }
  return finish<T>(std::move(out), {x}, [px = x.get(), To, block](Node<T> &self) {
    if (!px->requires_grad) return;
    auto &g = px->g();
    for (int64_t i = 0; i < To; ++i) {
      int64_t j = (i + 1) / 2;
      for (int64_t k = 0; k < block; ++k) g[j * block + k] += self.grad[i * block + k];
    }
  });
}

// 2x average pooling on [T,H,W,C] (H, W even).
template <class T>
Var<T> avgpool2x_hw(const Var<T> &x) {
  GNVC_CHECK(x->val.rank() == 4, "avgpool2x_hw wants [T,H,W,C]");
  int64_t Tn = x->val.shape[0], H = x->val.shape[1], W = x->val.shape[2], C = x->val.shape[3];
  GNVC_CHECK(H % 2 == 0 && W % 2 == 0, "avgpool2x_hw wants even H,W");
  Tensor<T> out({Tn, H / 2, W / 2, C});
  for (int64_t t = 0; t < Tn; ++t)
    for (int64_t y = 0; y < H / 2; ++y)
      for (int64_t xq = 0; xq < W / 2; ++xq)
        for (int64_t c = 0; c < C; ++c) {
          double s = 0;
          for (int64_t dy = 0; dy < 2; ++dy)
            for (int64_t dx = 0; dx < 2; ++dx) s += double(x->val.at(t, 2 * y + dy, 2 * xq + dx, c));
          out.at(t, y, xq, c) = T(s * 0.25);
        }
  return finish<T>(std::move(out), {x}, [px = x.get(), Tn, H, W, C](Node<T> &self) {
    if (!px->requires_grad) return;
    auto &g = px->g();
    for (int64_t t = 0; t < Tn; ++t)
      for (int64_t y = 0; y < H / 2; ++y)
        for (int64_t xq = 0; xq < W / 2; ++xq)
          for (int64_t c = 0; c < C; ++c) {
            T s = T(double(self.grad.at(t, y, xq, c)) * 0.25);
            for (int64_t dy = 0; dy < 2; ++dy)
              for (int64_t dx = 0; dx < 2; ++dx) g.at(t, 2 * y + dy, 2 * xq + dx, c) += s;
          }
  });
}

// [T,H,W,C] -> token matrix [T*(H/p)*(W/p), p*p*C]; frames scan first, then
// patch rows, then patch cols.  unpatchify inverts exactly.
template <class T>
Var<T> patchify(const Var<T> &x, int64_t p) {
  GNVC_CHECK(x->val.rank() == 4, "patchify wants [T,H,W,C]");
  int64_t Tn = x->val.shape[0], H = x->val.shape[1], W = x->val.shape[2], C = x->val.shape[3];
  GNVC_CHECK(H % p == 0 && W % p == 0, "patchify: H,W must divide by patch");
  int64_t hp = H / p, wp = W / p;
  Tensor<T> out({Tn * hp * wp, p * p * C});
  int64_t row = 0;
  for (int64_t t = 0; t < Tn; ++t)
    for (int64_t py = 0; py < hp; ++py)
      for (int64_t px_ = 0; px_ < wp; ++px_, ++row) {
        T *dst = out.ptr() + row * p * p * C;
        for (int64_t dy = 0; dy < p; ++dy)
          for (int64_t dx = 0; dx < p; ++dx) {
            const T *src = x->val.ptr() + ((t * H + py * p + dy) * W + px_ * p + dx) * C;
            for (int64_t c = 0; c < C; ++c) *dst++ = src[c];
          }
      }
  return finish<T>(std::move(out), {x}, [px = x.get(), Tn, H, W, C, p, hp, wp](Node<T> &self) {
    if (!px->requires_grad) return;
    auto &g = px->g();
    int64_t row = 0;
    for (int64_t t = 0; t < Tn; ++t)
      for (int64_t py = 0; py < hp; ++py)
        for (int64_t px_ = 0; px_ < wp; ++px_, ++row) {
          const T *src = self.grad.ptr() + row * p * p * C;
          for (int64_t dy = 0; dy < p; ++dy)
            for (int64_t dx = 0; dx < p; ++dx) {
              T *dst = g.ptr() + ((t * H + py * p + dy) * W + px_ * p + dx) * C;
              for (int64_t c = 0; c < C; ++c) dst[c] += *src++;
            }
        }
  });
}

// Token matrix [T*(H/p)*(W/p), p*p*C] -> [T,H,W,C].
template <class T>
Var<T> unpatchify(const Var<T> &x, int64_t Tn, int64_t H, int64_t W, int64_t C, int64_t p) {
  GNVC_CHECK(x->val.rank() == 2, "unpatchify wants tokens");
  int64_t hp = H / p, wp = W / p;
  GNVC_CHECK(x->val.shape[0] == Tn * hp * wp && x->val.shape[1] == p * p * C, "unpatchify shape");
  Tensor<T> out({Tn, H, W, C});
  int64_t row = 0;
  for (int64_t t = 0; t < Tn; ++t)
    for (int64_t py = 0; py < hp; ++py)
      for (int64_t px_ = 0; px_ < wp; ++px_, ++row) {
        const T *src = x->val.ptr() + row * p * p * C;
        for (int64_t dy = 0; dy < p; ++dy)
          for (int64_t dx = 0; dx < p; ++dx) {
            T *dst = out.ptr() + ((t * H + py * p + dy) * W + px_ * p + dx) * C;
            for (int64_t c = 0; c < C; ++c) dst[c] = *src++;
          }
      }
  return finish<T>(std::move(out), {x}, [px = x.get(), Tn, H, W, C, p, hp, wp](Node<T> &self) {
    if (!px->requires_grad) return;
    auto &g = px->g();
    int64_t row = 0;
    for (int64_t t = 0; t < Tn; ++t)
      for (int64_t py = 0; py < hp; ++py)
        for (int64_t px_ = 0; px_ < wp; ++px_, ++row) {
          T *dst = g.ptr() + row * p * p * C;
          for (int64_t dy = 0; dy < p; ++dy)
            for (int64_t dx = 0; dx < p; ++dx) {
              const T *src = self.grad.ptr() + ((t * H + py * p + dy) * W + px_ * p + dx) * C;
              for (int64_t c = 0; c < C; ++c) *dst++ += src[c];
            }
        }
  });
}

} // namespace gnvc
