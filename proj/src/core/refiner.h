#pragma once

#include <string>
#include <vector>

#include "core/config.h"
#include "core/nnops.h"
#include "core/params.h"
#include "core/serialize.h"

namespace gnvc {

// Transformer velocity model over patchified latent videos.
//
// Two parameter groups with different lifecycles:
//   prior.*   - the unconditional flow-matching backbone, pretrained on clean
//               latents and frozen afterwards;
//   adapter.* - cross-attention blocks reading codec context features,
//               zero-initialized at the output projection so an untouched
//               adapter leaves the prior's velocity field bitwise intact.
//
// Self/cross attention is full (all latent steps attend everywhere); the
// codec, not the refiner, carries the causal structure.

struct RefinerConfig {
  int latent_channels = 8;
  int context_channels = 16;
  int width = 128;
  int blocks = 4;
  int heads = 4;
  int patch = 2;
  int max_latents = 16;

  static RefinerConfig from(const Config &cfg, int latent_channels, int context_channels) {
    RefinerConfig r;
    r.latent_channels = latent_channels;
    r.context_channels = context_channels;
    r.width = cfg.i("refiner.width");
    r.blocks = cfg.i("refiner.blocks");
    r.heads = cfg.i("refiner.heads");
    r.patch = cfg.i("refiner.patch");
    r.max_latents = cfg.i("refiner.max_latents");
    return r;
  }
};

template <class T>
class RefinerModel {
public:
  RefinerConfig cfg;
  ParamStore<T> params;

  RefinerModel(const RefinerConfig &c, uint64_t seed) : cfg(c), params(seed) {
    if (cfg.width % (2 * cfg.heads) || cfg.width % 4)
      throw Error(Status::config_error, "refiner.width must divide by 4 and by 2*heads");
    if (cfg.blocks < 1 || cfg.patch < 1 || cfg.max_latents < 1)
      throw Error(Status::config_error, "refiner geometry must be positive");
    const int64_t D = cfg.width, pv = int64_t(cfg.patch) * cfg.patch;

    add_linear("prior.embed", pv * cfg.latent_channels, D);
    params.add_randn("prior.pos_t", {cfg.max_latents, D}, cfg.max_latents);
    add_linear("prior.tau.0", D, D);
    add_linear("prior.tau.1", D, D);
    for (int b = 0; b < cfg.blocks; ++b) {
      std::string p = "prior.bk" + std::to_string(b);
      add_ln(p + ".ln1", D);
      add_linear(p + ".q", D, D);
      add_linear(p + ".k", D, D);
      add_linear(p + ".v", D, D);
      add_linear(p + ".o", D, D);
      add_ln(p + ".ln2", D);
      add_linear(p + ".mlp.0", D, 3 * D);
      add_linear(p + ".mlp.1", 3 * D, D);
    }
    add_ln("prior.out.ln", D);
    // zero-init head: the untrained velocity field is identically zero
    params.add_zeros("prior.out.w", {D, pv * cfg.latent_channels});
    params.add_zeros("prior.out.b", {pv * cfg.latent_channels});

    add_linear("adapter.embed", pv * cfg.context_channels, D);
    params.add_randn("adapter.pos_t", {cfg.max_latents, D}, cfg.max_latents);
    for (int b = 0; b < cfg.blocks; ++b) {
      std::string p = "adapter.bk" + std::to_string(b);
      add_ln(p + ".ln", D);
      add_ln(p + ".lnc", D);
      add_linear(p + ".q", D, D);
      add_linear(p + ".k", D, D);
      add_linear(p + ".v", D, D);
      // zero-init projection: the adapter contributes nothing until trained
      params.add_zeros(p + ".o.w", {D, D});
      params.add_zeros(p + ".o.b", {D});
    }
  }

  // x [Tl,h,w,Cl], tau in [0,1], optional context [Tl,h,w,Cc] -> velocity,
  // same shape as x.
  Var<T> velocity(const Var<T> &x, double tau, const Var<T> *ctx = nullptr) const {
    const auto &s = x->val.shape;
    GNVC_CHECK(x->val.rank() == 4 && s[3] == cfg.latent_channels, "velocity wants [Tl,h,w,Cl]");
    const int64_t Tl = s[0], h = s[1], w = s[2], p = cfg.patch;
    if (Tl > cfg.max_latents)
      throw Error(Status::data_error, "latent sequence longer than refiner.max_latents");
    if (h % p || w % p) throw Error(Status::data_error, "latent grid must divide by patch");
    const int64_t sp = (h / p) * (w / p);

    auto tok = lin("prior.embed", patchify(x, p));
    tok = add(tok, constant(spatial_pos(h / p, w / p, Tl)));
    tok = add(tok, gather_rows(params.find("prior.pos_t"), temporal_idx(Tl, sp)));
    auto tau_row = tau_embedding(tau);
    tok = add_bias(tok, tau_row);

    Var<T> ctok;
    if (ctx) {
      GNVC_CHECK((*ctx)->val.rank() == 4 && (*ctx)->val.shape[3] == cfg.context_channels &&
                     (*ctx)->val.shape[0] == Tl && (*ctx)->val.shape[1] == h &&
                     (*ctx)->val.shape[2] == w,
                 "context shape must match latents");
      ctok = lin("adapter.embed", patchify(*ctx, p));
      ctok = add(ctok, constant(spatial_pos(h / p, w / p, Tl)));
      ctok = add(ctok, gather_rows(params.find("adapter.pos_t"), temporal_idx(Tl, sp)));
    }

    for (int b = 0; b < cfg.blocks; ++b) {
      std::string pb = "prior.bk" + std::to_string(b);
      tok = add(tok, attention(ln(pb + ".ln1", tok), pb, pb));
      if (ctx) {
        std::string ab = "adapter.bk" + std::to_string(b);
        auto q_in = ln(ab + ".ln", tok);
        auto kv_in = ln(ab + ".lnc", ctok);
        tok = add(tok, cross_attention(q_in, kv_in, ab));
      }
      auto m = ln(pb + ".ln2", tok);
      m = lin(pb + ".mlp.1", silu(lin(pb + ".mlp.0", m)));
      tok = add(tok, m);
    }

    auto out = lin("prior.out", ln("prior.out.ln", tok));
    return unpatchify(out, Tl, h, w, cfg.latent_channels, p);
  }

  void set_prior_trainable(bool on) { params.set_trainable("prior.", on); }
  void set_adapters_trainable(bool on) { params.set_trainable("adapter.", on); }
  uint64_t prior_digest() const { return params.digest("prior."); }
  uint64_t adapter_digest() const { return params.digest("adapter."); }

  void save(const std::string &path) const {
    Checkpoint c;
    c.magic = kMagicRefiner;
    c.set_int("latent_channels", cfg.latent_channels);
    c.set_int("context_channels", cfg.context_channels);
    c.set_int("width", cfg.width);
    c.set_int("blocks", cfg.blocks);
    c.set_int("heads", cfg.heads);
    c.set_int("patch", cfg.patch);
    c.set_int("max_latents", cfg.max_latents);
    c.params = params.state_dict();
    c.save(path);
  }

  static RefinerModel load(const std::string &path) {
    Checkpoint c = Checkpoint::load(path, kMagicRefiner);
    RefinerConfig r;
    r.latent_channels = int(c.get_int("latent_channels"));
    r.context_channels = int(c.get_int("context_channels"));
    r.width = int(c.get_int("width"));
    r.blocks = int(c.get_int("blocks"));
    r.heads = int(c.get_int("heads"));
    r.patch = int(c.get_int("patch"));
    r.max_latents = int(c.get_int("max_latents"));
    RefinerModel m(r, 0);
    m.params.load_state_dict(c.params);
    return m;
  }

private:
  void add_linear(const std::string &name, int64_t di, int64_t dout) {
    params.add_randn(name + ".w", {di, dout}, di);
    params.add_zeros(name + ".b", {dout});
  }

  void add_ln(const std::string &name, int64_t d) {
    params.add_full(name + ".g", {d}, T(1));
    params.add_zeros(name + ".b", {d});
  }

  Var<T> lin(const std::string &name, const Var<T> &x) const {
    return linear(x, params.find(name + ".w"), params.find(name + ".b"));
  }

  Var<T> ln(const std::string &name, const Var<T> &x) const {
    return layernorm(x, params.find(name + ".g"), params.find(name + ".b"));
  }

  // Multi-head attention; queries from xq, keys/values from xkv.
  Var<T> mha(const Var<T> &q, const Var<T> &k, const Var<T> &v, const std::string &out_name) const {
    const int64_t D = cfg.width, H = cfg.heads, dh = D / H;
    const T inv = T(1.0 / std::sqrt(double(dh)));
    std::vector<Var<T>> heads;
    for (int64_t hh = 0; hh < H; ++hh) {
      auto qh = slice_last(q, hh * dh, dh);
      auto kh = slice_last(k, hh * dh, dh);
      auto vh = slice_last(v, hh * dh, dh);
      auto att = softmax_rows(scale(matmul(qh, kh, false, true), inv));
      heads.push_back(matmul(att, vh));
    }
    return lin(out_name, concat_last(heads));
  }

  Var<T> attention(const Var<T> &x, const std::string &qkv_prefix,
                   const std::string &out_prefix) const {
    return mha(lin(qkv_prefix + ".q", x), lin(qkv_prefix + ".k", x), lin(qkv_prefix + ".v", x),
               out_prefix + ".o");
  }

  Var<T> cross_attention(const Var<T> &x, const Var<T> &c, const std::string &prefix) const {
    return mha(lin(prefix + ".q", x), lin(prefix + ".k", c), lin(prefix + ".v", c),
               prefix + ".o");
  }

  static std::vector<int64_t> temporal_idx(int64_t Tl, int64_t sp) {
    std::vector<int64_t> idx(size_t(Tl * sp));
    for (int64_t i = 0; i < Tl * sp; ++i) idx[size_t(i)] = i / sp;
    return idx;
  }

  // Fixed 2D sin/cos position features, tiled across latent steps.
  Tensor<T> spatial_pos(int64_t hp, int64_t wp, int64_t Tl) const {
    const int64_t D = cfg.width, q = D / 4;
    Tensor<T> e({Tl * hp * wp, D});
    for (int64_t t = 0; t < Tl; ++t)
      for (int64_t r = 0; r < hp; ++r)
        for (int64_t c = 0; c < wp; ++c) {
          T *row = e.ptr() + ((t * hp + r) * wp + c) * D;
          for (int64_t k = 0; k < q; ++k) {
            double f = std::pow(10000.0, -double(k) / double(q));
            row[k] = T(std::sin(double(r) * f));
            row[q + k] = T(std::cos(double(r) * f));
            row[2 * q + k] = T(std::sin(double(c) * f));
            row[3 * q + k] = T(std::cos(double(c) * f));
          }
        }
    return e;
  }

  // Scalar tau -> feature row through a small MLP.
  Var<T> tau_embedding(double tau) const {
    const int64_t D = cfg.width, q = D / 2;
    Tensor<T> f({1, D});
    for (int64_t k = 0; k < q; ++k) {
      double fr = 1000.0 * tau * std::pow(10000.0, -double(k) / double(q));
      f[k] = T(std::sin(fr));
      f[q + k] = T(std::cos(fr));
    }
    auto v = lin("prior.tau.1", silu(lin("prior.tau.0", constant(std::move(f)))));
    return reshape(v, {D});
  }
};

} // namespace gnvc
