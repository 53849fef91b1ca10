#include "core/training.h"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace gnvc {

void LossReport::check_finite(const char *stage) const {
  auto bad = [&](const char *name, double v) {
    if (!std::isfinite(v))
      throw Error(Status::numeric_error,
                  std::string(stage) + " loss component '" + name + "' is not finite");
  };
  bad("rate_bits", rate_bits);
  bad("latent_align", latent_align);
  bad("cfm", cfm);
  bad("pixel", pixel);
  bad("proxy", proxy);
  bad("codec_align", codec_align);
  bad("total", total);
}

const char *TrainLog::header() {
  return "step,stage,lambda_r,rate_bits,cfm,latent_mse,pixel_mse,proxy,total,lr,seed";
}

TrainLog::TrainLog(const std::string &path) : path_(path) {
  std::ofstream f(path_, std::ios::trunc);
  if (!f) throw Error(Status::data_error, "cannot open training log " + path_);
  f << header() << "\n";
}

void TrainLog::row(int64_t step, const std::string &stage, double lambda_r,
                   const LossReport &r, double lr, uint64_t seed) {
  if (path_.empty()) return;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%lld,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%llu\n",
                (long long)step, stage.c_str(), lambda_r, r.rate_bits, r.cfm, r.latent_align,
                r.pixel, r.proxy, r.total, lr, (unsigned long long)seed);
  std::ofstream f(path_, std::ios::app);
  f << buf;
}

namespace {

Tensor<double> sample_frames(const DataParams &base, int frames, uint64_t seed, uint64_t index) {
  DataParams p = base;
  p.frames = frames;
  return make_clip(p, seed, index).frames.cast<double>();
}

Tensor<double> gaussian_like(const std::vector<int64_t> &shape, Rng &rng) {
  Tensor<double> t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

} // namespace

void train_vae(VaeModel<double> &vae, const DataParams &data, const VaeTrainConfig &cfg,
               uint64_t seed, TrainLog &log) {
  vae.params.set_trainable(true);
  Adam<double> opt;
  opt.attach(vae.params);
  Tensor<double> one({1});
  one[0] = 1.0;
  uint64_t sample_idx = 0;
  const int total_steps = cfg.steps + cfg.final_steps;
  for (int step = 0; step < total_steps; ++step) {
    const int frames = step < cfg.steps ? cfg.frames : cfg.final_frames;
    LossReport rep;
    vae.params.zero_grad();
    for (int b = 0; b < cfg.batch; ++b) {
      auto video = constant(sample_frames(data, frames, seed, sample_idx++));
      auto lat = vae.encode(video);
      auto pixel = sum_sq_diff(vae.decode(lat), video);
      // pull the latent second moment toward 1 so codec symbols stay inside
      // the alphabet; weighted per latent element to stay felt at scale
      auto msq = scale(sum_sq_diff(lat, constant(Tensor<double>(lat->val.shape))),
                       1.0 / double(lat->val.numel()));
      auto reg = scale(sum_sq_diff(msq, constant(one)),
                       cfg.latent_reg * double(lat->val.numel()));
      auto total = add(pixel, reg);
      rep.pixel += pixel->val[0];
      rep.latent_align += reg->val[0];
      rep.total += total->val[0];
      backward(total, 1.0 / cfg.batch);
    }
    rep.scale(1.0 / cfg.batch);
    rep.check_finite("vae");
    opt.step(cfg.lr);
    log.row(step, "vae", 0.0, rep, cfg.lr, seed);
  }
  vae.params.zero_grad();
}

double vae_holdout_psnr(const VaeModel<double> &vae, const DataParams &data, uint64_t seed,
                        int count) {
  GNVC_CHECK(count > 0, "holdout count must be positive");
  double acc = 0;
  for (int i = 0; i < count; ++i) {
    Tensor<double> v = make_clip(data, seed, uint64_t(i)).frames.cast<double>();
    acc += psnr(vae.decode(vae.encode(constant(v)))->val, v);
  }
  return acc / count;
}

void pretrain_prior(RefinerModel<double> &refiner, const VaeModel<double> &vae,
                    const DataParams &data, const PriorTrainConfig &cfg, uint64_t seed,
                    TrainLog &log) {
  // latents of clean clips, computed once through the frozen encoder
  std::vector<Tensor<double>> lats;
  lats.reserve(size_t(data.count));
  for (int i = 0; i < data.count; ++i) {
    auto v = constant(sample_frames(data, cfg.frames, seed, uint64_t(i)));
    lats.push_back(vae.encode(v)->val);
  }
  refiner.set_prior_trainable(true);
  refiner.set_adapters_trainable(false);
  Adam<double> opt;
  opt.attach(refiner.params);
  Rng rng = Rng::derive(seed, "prior-train");
  for (int step = 0; step < cfg.steps; ++step) {
    LossReport rep;
    refiner.params.zero_grad();
    for (int b = 0; b < cfg.batch; ++b) {
      auto x1 = constant(lats[size_t(rng.next_u64() % lats.size())]);
      auto x0 = constant(gaussian_like(x1->val.shape, rng));
      double tau = rng.uniform();
      auto pred = refiner.velocity(flow_point_full(x1, x0, tau), tau, nullptr);
      auto loss = sum_sq_diff(pred, sub(x1, x0));
      rep.cfm += loss->val[0];
      rep.total += loss->val[0];
      backward(loss, 1.0 / cfg.batch);
    }
    rep.scale(1.0 / cfg.batch);
    rep.check_finite("prior");
    opt.step(cfg.lr);
    log.row(step, "prior", 0.0, rep, cfg.lr, seed);
  }
  refiner.params.zero_grad();
  refiner.set_prior_trainable(false);
}

void run_stage1(CodecModel<double> &codec, RefinerModel<double> &refiner,
                VaeModel<double> &vae, const DataParams &data, const StageIConfig &cfg,
                uint64_t seed, TrainLog &log) {
  vae.params.set_trainable(false);
  refiner.set_prior_trainable(false);
  refiner.set_adapters_trainable(true);
  codec.params.set_trainable(true);
  const uint64_t prior_hash = refiner.prior_digest();
  const uint64_t vae_hash = vae.params.digest();

  Adam<double> opt;
  opt.attach(codec.params);
  opt.attach(refiner.params);
  Rng rng = Rng::derive(seed, "stage1");
  int64_t step = 0;
  uint64_t sample_idx = 0;
  for (auto [frames, phase_steps] : cfg.phases) {
    for (int s = 0; s < phase_steps; ++s, ++step) {
      LossReport rep;
      codec.params.zero_grad();
      refiner.params.zero_grad();
      for (int b = 0; b < cfg.batch; ++b) {
        Tensor<double> v = sample_frames(data, frames, seed, sample_idx++);
        auto total = stage1_sample_loss(codec, refiner, vae, v, cfg, rng, rep);
        backward(total, 1.0 / cfg.batch);
      }
      rep.scale(1.0 / cfg.batch);
      rep.check_finite("stage1");
      opt.step(cfg.lr);
      log.row(step, "1", cfg.lambda_r, rep, cfg.lr, seed);
    }
  }
  codec.params.zero_grad();
  refiner.params.zero_grad();
  if (refiner.prior_digest() != prior_hash || vae.params.digest() != vae_hash)
    throw Error(Status::numeric_error, "frozen parameters drifted during stage 1");
}

void run_stage2(CodecModel<double> &codec, RefinerModel<double> &refiner,
                VaeModel<double> &vae, const DataParams &data, const StageIIConfig &cfg,
                const FlowSchedule &sched, uint64_t seed, TrainLog &log) {
  vae.params.set_trainable(false);
  if (cfg.train_vae) vae.params.set_trainable("dec.", true);
  refiner.set_prior_trainable(false);
  refiner.set_adapters_trainable(true);
  codec.params.set_trainable(true);
  const uint64_t prior_hash = refiner.prior_digest();
  const uint64_t enc_hash = vae.params.digest("enc.");

  Adam<double> opt;
  opt.attach(codec.params);
  opt.attach(refiner.params);
  opt.attach(vae.params);
  Rng rng = Rng::derive(seed, "stage2", uint64_t(cfg.lambda_r * 1e6));
  uint64_t sample_idx = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    const double f = cfg.steps > 1 ? double(step) / double(cfg.steps - 1) : 0.0;
    const double lr = cfg.lr_start + (cfg.lr_end - cfg.lr_start) * f;
    LossReport rep;
    codec.params.zero_grad();
    refiner.params.zero_grad();
    vae.params.zero_grad();
    for (int b = 0; b < cfg.batch; ++b) {
      Tensor<double> v = sample_frames(data, cfg.frames, seed, sample_idx++);
      auto total = stage2_sample_loss(codec, refiner, vae, v, cfg, sched, rng, rep);
      backward(total, 1.0 / cfg.batch);
    }
    rep.scale(1.0 / cfg.batch);
    rep.check_finite("stage2");
    opt.step(lr);
    log.row(step, "2", cfg.lambda_r, rep, lr, seed);
  }
  codec.params.zero_grad();
  refiner.params.zero_grad();
  vae.params.zero_grad();
  if (refiner.prior_digest() != prior_hash || vae.params.digest("enc.") != enc_hash)
    throw Error(Status::numeric_error, "frozen parameters drifted during stage 2");
}

} // namespace gnvc
