#pragma once

#include <string>

#include "core/config.h"
#include "core/nnops.h"
#include "core/params.h"
#include "core/serialize.h"

namespace gnvc {

// Causal 3D autoencoder.  Every temporal convolution pads on the left only,
// so latent step j depends on input frames <= j * temporal_stride and the
// encoder can run streaming.  Spatial downsampling halves H/W per stage,
// temporal downsampling halves the step count per stage; strides must be
// powers of two.

struct VaeConfig {
  int width = 16;
  int latent_channels = 8;
  int spatial_stride = 4;
  int temporal_stride = 2;

  static VaeConfig from(const Config &cfg) {
    VaeConfig v;
    v.width = cfg.i("vae.width");
    v.latent_channels = cfg.i("vae.latent_channels");
    v.spatial_stride = cfg.i("vae.spatial_stride");
    v.temporal_stride = cfg.i("vae.temporal_stride");
    return v;
  }
};

namespace detail {
inline int log2_exact(int v, const char *what) {
  int n = 0;
  while (v > 1) {
    if (v % 2) throw Error(Status::config_error, std::string(what) + " must be a power of two");
    v /= 2;
    ++n;
  }
  return n;
}
} // namespace detail

template <class T>
class VaeModel {
public:
  VaeConfig cfg;
  ParamStore<T> params;

  VaeModel(const VaeConfig &c, uint64_t seed) : cfg(c), params(seed) {
    if (cfg.width < 1 || cfg.latent_channels < 1)
      throw Error(Status::config_error, "vae widths must be positive");
    n_sp_ = detail::log2_exact(cfg.spatial_stride, "vae.spatial_stride");
    n_t_ = detail::log2_exact(cfg.temporal_stride, "vae.temporal_stride");

    const int w3 = 3 * cfg.width;
    int ch = 3;
    for (int i = 0; i < n_sp_; ++i) {
      int out = std::min(cfg.width << i, w3);
      add_conv("enc.sp" + std::to_string(i), 3, ch, out);
      ch = out;
    }
    for (int j = 0; j < n_t_; ++j) {
      add_conv("enc.t" + std::to_string(j), 3, ch, w3);
      ch = w3;
    }
    add_conv("enc.mix", 3, ch, w3);
    add_conv("enc.head", 1, w3, cfg.latent_channels);

    add_conv("dec.in", 1, cfg.latent_channels, w3);
    add_conv("dec.mix", 3, w3, w3);
    ch = w3;
    for (int j = 0; j < n_t_; ++j) {
      int out = j == n_t_ - 1 ? 2 * cfg.width : w3;
      add_conv("dec.t" + std::to_string(j), 3, ch, out);
      ch = out;
    }
    for (int i = 0; i < n_sp_; ++i) {
      int out = std::max(cfg.width, ch / 2);
      add_conv("dec.sp" + std::to_string(i), 3, ch, out);
      ch = out;
    }
    add_conv("dec.head", 3, ch, 3);
  }

  // frames [T,H,W,3] -> latent [1+(T-1)/t_stride, H/s, W/s, latent_channels]
  Var<T> encode(const Var<T> &frames) const {
    const auto &s = frames->val.shape;
    GNVC_CHECK(frames->val.rank() == 4 && s[3] == 3, "encode wants [T,H,W,3]");
    if ((s[0] - 1) % cfg.temporal_stride || s[1] % cfg.spatial_stride || s[2] % cfg.spatial_stride)
      throw Error(Status::data_error, "frame geometry not divisible by vae strides");
    auto x = frames;
    for (int i = 0; i < n_sp_; ++i) x = silu(conv("enc.sp" + std::to_string(i), x, 1, 2, 2));
    for (int j = 0; j < n_t_; ++j) x = silu(conv("enc.t" + std::to_string(j), x, 2, 1, 1));
    x = silu(conv("enc.mix", x, 1, 1, 1));
    return conv("enc.head", x, 1, 1, 1);
  }

  // latent [Tl,h,w,C] -> frames [(Tl-1)*t_stride+1, h*s, w*s, 3]
  Var<T> decode(const Var<T> &latent) const {
    GNVC_CHECK(latent->val.rank() == 4 && latent->val.shape[3] == cfg.latent_channels,
               "decode wants [T,h,w,latent_channels]");
    auto x = silu(conv("dec.in", latent, 1, 1, 1));
    x = silu(conv("dec.mix", x, 1, 1, 1));
    for (int j = 0; j < n_t_; ++j) {
      x = upsample_time_causal(x);
      x = silu(conv("dec.t" + std::to_string(j), x, 1, 1, 1));
    }
    for (int i = 0; i < n_sp_; ++i) {
      x = upsample2x_hw(x);
      x = silu(conv("dec.sp" + std::to_string(i), x, 1, 1, 1));
    }
    return conv("dec.head", x, 1, 1, 1);
  }

  int64_t latent_steps(int64_t frame_count) const {
    return 1 + (frame_count - 1) / cfg.temporal_stride;
  }
  int64_t frame_count(int64_t latent_count) const {
    return (latent_count - 1) * cfg.temporal_stride + 1;
  }

  void save(const std::string &path) const {
    Checkpoint c;
    c.magic = kMagicVae;
    c.set_int("width", cfg.width);
    c.set_int("latent_channels", cfg.latent_channels);
    c.set_int("spatial_stride", cfg.spatial_stride);
    c.set_int("temporal_stride", cfg.temporal_stride);
    c.params = params.state_dict();
    c.save(path);
  }

  static VaeModel load(const std::string &path) {
    Checkpoint c = Checkpoint::load(path, kMagicVae);
    VaeConfig v;
    v.width = int(c.get_int("width"));
    v.latent_channels = int(c.get_int("latent_channels"));
    v.spatial_stride = int(c.get_int("spatial_stride"));
    v.temporal_stride = int(c.get_int("temporal_stride"));
    VaeModel m(v, 0);
    m.params.load_state_dict(c.params);
    return m;
  }

private:
  int n_sp_ = 0;
  int n_t_ = 0;

  void add_conv(const std::string &name, int k, int ci, int co) {
    params.add_randn(name + ".w", {k, k == 1 ? 1 : 3, k == 1 ? 1 : 3, ci, co},
                     int64_t(k) * (k == 1 ? 1 : 9) * ci);
    params.add_zeros(name + ".b", {co});
  }

  Var<T> conv(const std::string &name, const Var<T> &x, int st, int sh, int sw) const {
    return conv3d(x, params.find(name + ".w"), params.find(name + ".b"), st, sh, sw);
  }
};

} // namespace gnvc
