#pragma once

#include <string>

#include "core/codec.h"
#include "core/flowmath.h"
#include "core/metrics.h"
#include "core/refiner.h"
#include "core/synthdata.h"
#include "core/vae.h"

namespace gnvc {

// Loss components for one optimization step.  Distortion terms are sums of
// squares (batch-averaged), logged unweighted; the lambda weights appear only
// in `total`, so the weighted-sum identity can be re-checked from the report.
struct LossReport {
  double rate_bits = 0;
  double latent_align = 0; // |x~1 - x1|^2 after refinement
  double cfm = 0;          // flow-matching regression
  double pixel = 0;        // |V - V~|^2
  double proxy = 0;        // perceptual proxy distance
  double codec_align = 0;  // |xc - x1|^2
  double total = 0;

  void add(const LossReport &o) {
    rate_bits += o.rate_bits;
    latent_align += o.latent_align;
    cfm += o.cfm;
    pixel += o.pixel;
    proxy += o.proxy;
    codec_align += o.codec_align;
    total += o.total;
  }
  void scale(double s) {
    rate_bits *= s;
    latent_align *= s;
    cfm *= s;
    pixel *= s;
    proxy *= s;
    codec_align *= s;
    total *= s;
  }
  // Aborts the run rather than letting NaNs poison the optimizer.
  void check_finite(const char *stage) const;
};

// Append-only CSV training log with a fixed column set shared by all stages.
class TrainLog {
public:
  TrainLog() = default;
  explicit TrainLog(const std::string &path);
  void row(int64_t step, const std::string &stage, double lambda_r,
           const LossReport &r, double lr, uint64_t seed);
  static const char *header();

private:
  std::string path_;
};

struct VaeTrainConfig {
  int steps = 1200;
  int batch = 4;
  int frames = 5;
  int final_frames = 13;
  int final_steps = 200;
  double lr = 1e-3;
  double latent_reg = 1e-3;

  static VaeTrainConfig from(const Config &cfg) {
    VaeTrainConfig c;
    c.steps = cfg.i("vae.train.steps");
    c.batch = cfg.i("vae.train.batch");
    c.frames = cfg.i("vae.train.frames");
    c.final_frames = cfg.i("vae.train.final_frames");
    c.final_steps = cfg.i("vae.train.final_steps");
    c.lr = cfg.d("vae.train.lr");
    c.latent_reg = cfg.d("vae.train.latent_reg");
    return c;
  }
};

struct PriorTrainConfig {
  int steps = 2000;
  int batch = 4;
  int frames = 13;
  double lr = 3e-4;

  static PriorTrainConfig from(const Config &cfg) {
    PriorTrainConfig c;
    c.steps = cfg.i("prior.train.steps");
    c.batch = cfg.i("prior.train.batch");
    c.frames = cfg.i("prior.train.frames");
    c.lr = cfg.d("prior.train.lr");
    return c;
  }
};

struct StageIConfig {
  double lambda_r = 0.5;
  int batch = 8;
  double lr = 1e-4;
  std::vector<std::pair<int, int>> phases; // (clip frames, steps) curriculum
  FlowSchedule flow;

  static StageIConfig from(const Config &cfg) {
    StageIConfig c;
    c.lambda_r = cfg.d("stage1.lambda_r");
    c.batch = cfg.i("stage1.batch");
    c.lr = cfg.d("stage1.lr");
    c.phases = cfg.phase_list("stage1.phases");
    c.flow = FlowSchedule::from(cfg);
    if (c.lambda_r <= 0) throw Error(Status::config_error, "stage1.lambda_r must be > 0");
    return c;
  }
};

struct StageIIConfig {
  double lambda_r = 0.5;       // the active grid point
  double lambda_lpips = 1.0;
  int batch = 2;
  int steps = 250;
  int frames = 13;
  double lr_start = 5e-5;
  double lr_end = 1e-5;
  bool train_vae = true; // decoder only; the encoder stays frozen regardless

  static StageIIConfig from(const Config &cfg, double lambda_r) {
    StageIIConfig c;
    c.lambda_r = lambda_r;
    c.lambda_lpips = cfg.d("stage2.lambda_lpips");
    c.batch = cfg.i("stage2.batch");
    c.steps = cfg.i("stage2.steps");
    c.frames = cfg.i("stage2.frames");
    c.lr_start = cfg.d("stage2.lr_start");
    c.lr_end = cfg.d("stage2.lr_end");
    c.train_vae = cfg.b("stage2.train_vae");
    if (c.lambda_r <= 0) throw Error(Status::config_error, "stage2 lambda must be > 0");
    if (c.lambda_lpips < 0) throw Error(Status::config_error, "stage2.lambda_lpips must be >= 0");
    return c;
  }
};

// ------------------------------------------------------------ loss graphs
//
// These build the differentiable parts shared by tests and the run loops.
// Noise and tau are injected so degenerate cases have closed forms.

// L-step Euler refinement of the codec reconstruction.
template <class T>
Var<T> refined_latents(const RefinerModel<T> &refiner, const FlowSchedule &sched,
                       const Var<T> &xc, const Var<T> &contexts, const Tensor<T> &x0) {
  auto start = flow_start(xc, constant(x0), sched.t_n);
  return flow_refine<T>(start, sched,
                        [&](const Var<T> &x, double tau) { return refiner.velocity(x, tau, &contexts); });
}

// Flow-matching regression at one sampled tau on the truncated path.
template <class T>
Var<T> cfm_term(const RefinerModel<T> &refiner, const FlowSchedule &sched, const Var<T> &x1,
                const Var<T> &xc, const Var<T> &contexts, const Tensor<T> &x0, double tau) {
  auto noise = constant(x0);
  auto xtau = flow_point(x1, noise, xc, sched.t_n, tau);
  auto pred = refiner.velocity(xtau, tau, &contexts);
  return sum_sq_diff(pred, flow_target_velocity(x1, noise, xc, sched.t_n));
}

// Rate + lambda_r |x~1-x1|^2 + CFM on one clip's latents.  The encoder graph
// is severed: x1 is ground truth here, never a training path.
template <class T>
Var<T> stage1_sample_loss(const CodecModel<T> &codec, const RefinerModel<T> &refiner,
                          const VaeModel<T> &vae, const Tensor<T> &frames,
                          const StageIConfig &cfg, Rng &rng, LossReport &rep) {
  auto x1 = constant(vae.encode(constant(frames))->val);
  auto fwd = codec.forward_train(x1, rng);
  Tensor<T> x0(x1->val.shape);
  for (int64_t i = 0; i < x0.numel(); ++i) x0[i] = T(rng.normal());
  double tau = rng.uniform(cfg.flow.t_n, 1.0);

  auto align = sum_sq_diff(refined_latents(refiner, cfg.flow, fwd.recon, fwd.contexts, x0), x1);
  auto cfm = cfm_term(refiner, cfg.flow, x1, fwd.recon, fwd.contexts, x0, tau);
  auto total = add(fwd.rate_bits, add(scale(align, T(cfg.lambda_r)), cfm));

  rep.rate_bits += double(fwd.rate_bits->val[0]);
  rep.latent_align += double(align->val[0]);
  rep.cfm += double(cfm->val[0]);
  rep.codec_align += double(mse(fwd.recon->val, x1->val)) * double(x1->val.numel());
  rep.total += double(total->val[0]);
  return total;
}

// Rate + lambda_r (|V-V~|^2 + lpips*proxy + |xc-x1|^2 + |x~1-x1|^2).
template <class T>
Var<T> stage2_sample_loss(const CodecModel<T> &codec, const RefinerModel<T> &refiner,
                          const VaeModel<T> &vae, const Tensor<T> &frames,
                          const StageIIConfig &cfg, const FlowSchedule &sched, Rng &rng,
                          LossReport &rep) {
  auto video = constant(frames);
  auto x1 = constant(vae.encode(video)->val);
  auto fwd = codec.forward_train(x1, rng);
  Tensor<T> x0(x1->val.shape);
  for (int64_t i = 0; i < x0.numel(); ++i) x0[i] = T(rng.normal());

  auto xt = refined_latents(refiner, sched, fwd.recon, fwd.contexts, x0);
  auto recon_video = vae.decode(xt);
  auto pixel = sum_sq_diff(video, recon_video);
  auto prox = perceptual_proxy(video, recon_video);
  auto codec_align = sum_sq_diff(fwd.recon, x1);
  auto align = sum_sq_diff(xt, x1);

  auto inner = add(add(pixel, scale(prox, T(cfg.lambda_lpips))), add(codec_align, align));
  auto total = add(fwd.rate_bits, scale(inner, T(cfg.lambda_r)));

  rep.rate_bits += double(fwd.rate_bits->val[0]);
  rep.pixel += double(pixel->val[0]);
  rep.proxy += double(prox->val[0]);
  rep.codec_align += double(codec_align->val[0]);
  rep.latent_align += double(align->val[0]);
  rep.total += double(total->val[0]);
  return total;
}

// ------------------------------------------------------------- run loops

void train_vae(VaeModel<double> &vae, const DataParams &data, const VaeTrainConfig &cfg,
               uint64_t seed, TrainLog &log);

// Mean reconstruction PSNR over `count` clips the training seed never saw.
double vae_holdout_psnr(const VaeModel<double> &vae, const DataParams &data, uint64_t seed,
                        int count);

void pretrain_prior(RefinerModel<double> &refiner, const VaeModel<double> &vae,
                    const DataParams &data, const PriorTrainConfig &cfg, uint64_t seed,
                    TrainLog &log);

void run_stage1(CodecModel<double> &codec, RefinerModel<double> &refiner,
                VaeModel<double> &vae, const DataParams &data, const StageIConfig &cfg,
                uint64_t seed, TrainLog &log);

void run_stage2(CodecModel<double> &codec, RefinerModel<double> &refiner,
                VaeModel<double> &vae, const DataParams &data, const StageIIConfig &cfg,
                const FlowSchedule &sched, uint64_t seed, TrainLog &log);

} // namespace gnvc
