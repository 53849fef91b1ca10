#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/config.h"
#include "core/entropy.h"
#include "core/nnops.h"
#include "core/params.h"
#include "core/rangecoder.h"
#include "core/serialize.h"

namespace gnvc {

// Conditional transform codec over VAE latents.  The first latent step of a
// sequence is the anchor: transformed with a zeroed context and coded under a
// learned per-channel categorical prior.  Later steps are transformed and
// coded conditioned on a recurrent context feature built from previously
// *decoded* steps, so encoder and decoder stay in lockstep: the entropy
// parameters (per-element Gaussian mean/scale) depend only on data both sides
// already share.
//
// Geometry per step: latent [h,w,Cl] -> transform coefficients [h/2,w/2,Cy];
// context feature [h,w,Cc] rides at latent resolution.

struct CodecConfig {
  int latent_channels = 8;
  int width = 32;
  int y_channels = 32;
  int context_channels = 16;

  static CodecConfig from(const Config &cfg, int latent_channels) {
    CodecConfig c;
    c.latent_channels = latent_channels;
    c.width = cfg.i("codec.width");
    c.y_channels = cfg.i("codec.y_channels");
    c.context_channels = cfg.i("codec.context_channels");
    return c;
  }
};

// One entropy-coded latent step.
struct CodedChunk {
  std::vector<uint8_t> bytes;
  uint32_t symbol_count = 0;
  uint32_t clamped = 0; // symbols that hit the alphabet bounds while encoding
  double est_bits = 0;  // ideal table bits, excludes coder flush
};

template <class T>
struct CodecSides {
  Tensor<T> recon;    // [Tl,h,w,Cl] decoded latents
  Tensor<T> contexts; // [Tl,h,w,Cc] context feature after each step
};

template <class T>
struct CodecTrainForward {
  Var<T> rate_bits; // relaxed total rate, scalar
  Var<T> recon;     // [Tl,h,w,Cl] straight-through reconstruction
  Var<T> contexts;  // [Tl,h,w,Cc]
};

template <class T>
class CodecModel {
public:
  CodecConfig cfg;
  ParamStore<T> params;

  // Nearest integer, ties to even; out-of-range values clamp to the symbol
  // alphabet and are counted so quality loss never goes unnoticed.
  static int quantize_symbol(double v, uint32_t &clamped) {
    double r = std::nearbyint(v);
    if (r < kSymbolMin || r > kSymbolMax) {
      ++clamped;
      r = std::clamp(r, double(kSymbolMin), double(kSymbolMax));
    }
    return int(r);
  }

  CodecModel(const CodecConfig &c, uint64_t seed) : cfg(c), params(seed) {
    if (cfg.latent_channels < 1 || cfg.width < 1 || cfg.y_channels < 1 ||
        cfg.context_channels < 1)
      throw Error(Status::config_error, "codec channel counts must be positive");
    const int cl = cfg.latent_channels, w = cfg.width, cy = cfg.y_channels,
              cc = cfg.context_channels;
    add_conv("ga.0", cl + cc, w);
    add_conv("ga.1", w, w);
    add_conv("ga.head", w, cy, 1);
    add_conv("gs.0", cy, w);
    add_conv("gs.1", w, w);
    add_conv("gs.2", w + cc, w);
    add_conv("gs.head", w, cl, 1);
    add_conv("ctx.0", cl + cc, w);
    add_conv("ctx.1", w, cc);
    add_conv("ep.0", cc, w);
    // zero-init entropy head: untrained predictive steps see mu=0, sigma~1
    params.add_zeros("ep.1.w", {3, 3, int64_t(w), 2 * int64_t(cy)});
    params.add_zeros("ep.1.b", {2 * int64_t(cy)});
    // zero-init anchor prior: exactly uniform over the symbol alphabet
    params.add_zeros("anchor.logits", {int64_t(cy), int64_t(kSymbolCount)});
  }

  // --------------------------------------------------------- model pieces

  Var<T> zero_context(int64_t h, int64_t w) const {
    return constant(Tensor<T>({h, w, int64_t(cfg.context_channels)}));
  }

  // latent step + context -> transform coefficients [h/2,w/2,Cy]
  Var<T> analyze(const Var<T> &latent, const Var<T> &ctx) const {
    auto x = concat_last(std::vector<Var<T>>{latent, ctx});
    x = silu(conv("ga.0", x, 2));
    x = silu(conv("ga.1", x, 1));
    return conv("ga.head", x, 1);
  }

  // decoded coefficients + context -> latent reconstruction [h,w,Cl]
  Var<T> synthesize(const Var<T> &yhat, const Var<T> &ctx) const {
    auto x = silu(conv("gs.0", yhat, 1));
    x = up2(x);
    x = silu(conv("gs.1", x, 1));
    x = silu(conv("gs.2", concat_last(std::vector<Var<T>>{x, ctx}), 1));
    return conv("gs.head", x, 1);
  }

  Var<T> update_context(const Var<T> &lhat, const Var<T> &ctx) const {
    auto x = silu(conv("ctx.0", concat_last(std::vector<Var<T>>{lhat, ctx}), 1));
    return conv("ctx.1", x, 1);
  }

  // context -> per-element (mu, sigma) on the coefficient grid
  std::pair<Var<T>, Var<T>> entropy_params(const Var<T> &ctx) const {
    auto x = silu(conv("ep.0", ctx, 2));
    x = conv("ep.1", x, 1);
    auto mu = slice_last(x, 0, cfg.y_channels);
    auto sigma = add_scalar(vexp(slice_last(x, cfg.y_channels, cfg.y_channels)), 1e-4);
    return {mu, sigma};
  }

  // ------------------------------------------------------------ inference

  // Encode a latent sequence [Tl,h,w,Cl]; chunks[0] is the anchor.  sides,
  // when given, receives the encoder's own decoded reconstruction — the
  // decoder must reproduce it bit for bit.
  std::vector<CodedChunk> encode_latents(const Tensor<T> &latents,
                                         CodecSides<T> *sides = nullptr) const {
    check_latents(latents);
    const int64_t Tl = latents.shape[0], h = latents.shape[1], w = latents.shape[2];
    std::vector<CodedChunk> chunks;
    CodecSides<T> s;
    s.recon = Tensor<T>({Tl, h, w, int64_t(cfg.latent_channels)});
    s.contexts = Tensor<T>({Tl, h, w, int64_t(cfg.context_channels)});
    auto ctx = zero_context(h, w);
    const auto anchor = anchor_tables();
    for (int64_t t = 0; t < Tl; ++t) {
      Tensor<T> step({h, w, int64_t(cfg.latent_channels)});
      std::copy_n(latents.ptr() + t * step.numel(), step.numel(), step.ptr());
      Tensor<T> y = analyze(constant(std::move(step)), ctx)->val;

      CodedChunk chunk;
      chunk.symbol_count = uint32_t(y.numel());
      RangeEncoder enc;
      Tensor<T> yhat(y.shape);
      if (t == 0) {
        for (int64_t i = 0; i < y.numel(); ++i) {
          int sym = quantize_symbol(double(y[i]), chunk.clamped);
          const CdfTable &tab = anchor[size_t(i % cfg.y_channels)];
          chunk.est_bits += table_bits(tab, sym);
          enc.encode(tab.lo(sym - kSymbolMin), tab.freq(sym - kSymbolMin), CdfTable::kTot);
          yhat[i] = T(sym);
        }
      } else {
        auto [mu, sigma] = entropy_params(ctx);
        for (int64_t i = 0; i < y.numel(); ++i) {
          int sym = quantize_symbol(double(y[i]) - double(mu->val[i]), chunk.clamped);
          CdfTable tab = quantize_pmf(gaussian_pmf(double(sigma->val[i])));
          chunk.est_bits += table_bits(tab, sym);
          enc.encode(tab.lo(sym - kSymbolMin), tab.freq(sym - kSymbolMin), CdfTable::kTot);
          yhat[i] = T(sym) + mu->val[i];
        }
      }
      chunk.bytes = enc.finish();
      chunks.push_back(std::move(chunk));

      auto lhat = synthesize(constant(std::move(yhat)), ctx);
      ctx = update_context(lhat, ctx);
      std::copy_n(lhat->val.ptr(), lhat->val.numel(), s.recon.ptr() + t * lhat->val.numel());
      std::copy_n(ctx->val.ptr(), ctx->val.numel(), s.contexts.ptr() + t * ctx->val.numel());
    }
    if (sides) *sides = std::move(s);
    return chunks;
  }

  // Decode chunks back to latents + context features on a [h,w] grid.
  CodecSides<T> decode_latents(const std::vector<CodedChunk> &chunks, int64_t h,
                               int64_t w) const {
    if (h % 2 || w % 2) throw Error(Status::data_error, "latent grid must be even");
    const int64_t Tl = int64_t(chunks.size());
    const int64_t hy = h / 2, wy = w / 2;
    CodecSides<T> s;
    s.recon = Tensor<T>({Tl, h, w, int64_t(cfg.latent_channels)});
    s.contexts = Tensor<T>({Tl, h, w, int64_t(cfg.context_channels)});
    auto ctx = zero_context(h, w);
    const auto anchor = anchor_tables();
    for (int64_t t = 0; t < Tl; ++t) {
      const CodedChunk &chunk = chunks[size_t(t)];
      const int64_t n = hy * wy * cfg.y_channels;
      if (chunk.symbol_count != uint64_t(n))
        throw Error(Status::data_error, "chunk symbol count does not match geometry");
      RangeDecoder dec(chunk.bytes.data(), chunk.bytes.size());
      Tensor<T> yhat({hy, wy, int64_t(cfg.y_channels)});
      if (t == 0) {
        for (int64_t i = 0; i < n; ++i) {
          const CdfTable &tab = anchor[size_t(i % cfg.y_channels)];
          int idx = tab.find(dec.decode_freq(CdfTable::kTot));
          dec.consume(tab.lo(idx), tab.freq(idx));
          yhat[i] = T(idx + kSymbolMin);
        }
      } else {
        auto [mu, sigma] = entropy_params(ctx);
        for (int64_t i = 0; i < n; ++i) {
          CdfTable tab = quantize_pmf(gaussian_pmf(double(sigma->val[i])));
          int idx = tab.find(dec.decode_freq(CdfTable::kTot));
          dec.consume(tab.lo(idx), tab.freq(idx));
          yhat[i] = T(idx + kSymbolMin) + mu->val[i];
        }
      }
      auto lhat = synthesize(constant(std::move(yhat)), ctx);
      ctx = update_context(lhat, ctx);
      std::copy_n(lhat->val.ptr(), lhat->val.numel(), s.recon.ptr() + t * lhat->val.numel());
      std::copy_n(ctx->val.ptr(), ctx->val.numel(), s.contexts.ptr() + t * ctx->val.numel());
    }
    return s;
  }

  // ------------------------------------------------------------- training

  // Differentiable unroll. The rate term relaxes quantization to additive
  // uniform noise; the reconstruction path rounds straight-through, so the
  // training-time context chain matches what inference will actually decode.
  CodecTrainForward<T> forward_train(const Var<T> &latents, Rng &noise_rng) const {
    check_latents(latents->val);
    const int64_t Tl = latents->val.shape[0];
    auto ctx = zero_context(latents->val.shape[1], latents->val.shape[2]);
    auto probs = softmax_rows(params.find("anchor.logits"));
    Var<T> rate;
    std::vector<Var<T>> recon, ctxs;
    for (int64_t t = 0; t < Tl; ++t) {
      auto y = analyze(slice0(latents, t), ctx);
      Var<T> step_rate, yhat;
      if (t == 0) {
        step_rate = categorical_rate_bits(add_uniform_noise(y, noise_rng), probs);
        yhat = ste_round(y);
      } else {
        auto [mu, sigma] = entropy_params(ctx);
        auto d = sub(y, mu);
        step_rate = gaussian_rate_bits(add_uniform_noise(d, noise_rng), sigma);
        yhat = add(ste_round(d), mu);
      }
      rate = rate ? add(rate, step_rate) : step_rate;
      auto lhat = synthesize(yhat, ctx);
      ctx = update_context(lhat, ctx);
      recon.push_back(lhat);
      ctxs.push_back(ctx);
    }
    CodecTrainForward<T> out;
    out.rate_bits = rate;
    out.recon = stack0(recon);
    out.contexts = stack0(ctxs);
    return out;
  }

  // --------------------------------------------------------- persistence

  void save(const std::string &path) const {
    Checkpoint c;
    c.magic = kMagicCodec;
    c.set_int("latent_channels", cfg.latent_channels);
    c.set_int("width", cfg.width);
    c.set_int("y_channels", cfg.y_channels);
    c.set_int("context_channels", cfg.context_channels);
    c.params = params.state_dict();
    c.save(path);
  }

  static CodecModel load(const std::string &path) {
    Checkpoint c = Checkpoint::load(path, kMagicCodec);
    CodecConfig k;
    k.latent_channels = int(c.get_int("latent_channels"));
    k.width = int(c.get_int("width"));
    k.y_channels = int(c.get_int("y_channels"));
    k.context_channels = int(c.get_int("context_channels"));
    CodecModel m(k, 0);
    m.params.load_state_dict(c.params);
    return m;
  }

private:
  void add_conv(const std::string &name, int ci, int co, int k = 3) {
    params.add_randn(name + ".w", {int64_t(k), int64_t(k), ci, co}, int64_t(k) * k * ci);
    params.add_zeros(name + ".b", {co});
  }

  Var<T> conv(const std::string &name, const Var<T> &x, int stride) const {
    return conv2d(x, params.find(name + ".w"), params.find(name + ".b"), stride, stride);
  }

  static Var<T> up2(const Var<T> &x) {
    auto x4 = reshape(x, {1, x->val.shape[0], x->val.shape[1], x->val.shape[2]});
    auto y = upsample2x_hw(x4);
    return reshape(y, {y->val.shape[1], y->val.shape[2], y->val.shape[3]});
  }


  void check_latents(const Tensor<T> &lat) const {
    GNVC_CHECK(lat.rank() == 4 && lat.shape[3] == cfg.latent_channels,
               "codec wants [Tl,h,w,latent_channels]");
    if (lat.shape[0] < 1 || lat.shape[1] % 2 || lat.shape[2] % 2)
      throw Error(Status::data_error, "latent grid must be even and non-empty");
  }

  std::vector<CdfTable> anchor_tables() const {
    auto logits = params.find("anchor.logits")->val;
    std::vector<CdfTable> tabs;
    std::vector<float> row(kSymbolCount);
    for (int c = 0; c < cfg.y_channels; ++c) {
      for (int i = 0; i < kSymbolCount; ++i) row[size_t(i)] = float(logits[c * kSymbolCount + i]);
      tabs.push_back(quantize_pmf(categorical_pmf(row.data())));
    }
    return tabs;
  }
};

} // namespace gnvc
