#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "gnvc/gnvc.h"

// Thin shell over the C API: parse flags, call one command, translate its
// status into the exit code (0 ok, 2 config, 3 data, 4 numeric).

namespace {

struct CtxDeleter {
  void operator()(gnvc_ctx *c) const { gnvc_ctx_destroy(c); }
};
using CtxPtr = std::unique_ptr<gnvc_ctx, CtxDeleter>;

int report(gnvc_status st) {
  if (st != GNVC_OK) std::fprintf(stderr, "error: %s\n", gnvc_last_error());
  return int(st);
}

// Build a context from --config plus any --seed override.
gnvc_status make_ctx(const std::string &config_path, const std::string &seed_line,
                     CtxPtr &out) {
  gnvc_ctx *raw = nullptr;
  gnvc_status st = gnvc_ctx_create(config_path.empty() ? nullptr : config_path.c_str(),
                                   seed_line.empty() ? nullptr : seed_line.c_str(), &raw);
  out.reset(raw);
  return st;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"generative video codec with flow-matching latent refinement"};
  app.set_version_flag("--version", gnvc_version());
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_path;
  uint64_t seed = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "configuration file (key=value lines)")
      ->check(CLI::ExistingFile);
  app.add_option_function<uint64_t>(
         "--seed", [&](uint64_t v) { seed = v; seed_set = true; },
         "override the configured seed");
  app.add_option("--out", out_path, "output file or directory");

  std::string train_stage, encode_in, decode_in, eval_data, bd_ref, bd_test;

  CLI::App *gen = app.add_subcommand("gen-data", "render the synthetic dataset");
  CLI::App *train = app.add_subcommand("train", "run one training stage");
  train->add_option("--stage", train_stage, "vae, prior, 1 or 2")->required();
  CLI::App *enc = app.add_subcommand("encode", "compress a raw video");
  enc->add_option("input", encode_in, "input .raw video")->required();
  CLI::App *dec = app.add_subcommand("decode", "decompress a bitstream");
  dec->add_option("input", decode_in, "input bitstream")->required();
  CLI::App *ev = app.add_subcommand("eval", "rate-distortion sweep over a dataset");
  ev->add_option("data_dir", eval_data, "directory of clip*.raw/.flo files")->required();
  CLI::App *bd = app.add_subcommand("bd-rate", "BD-rate between two RD CSVs");
  bd->add_option("ref", bd_ref, "reference rd.csv")->required();
  bd->add_option("test", bd_test, "test rd.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return int(GNVC_CONFIG_ERROR);
  }

  auto need_out = [&](const char *what) {
    if (!out_path.empty()) return true;
    std::fprintf(stderr, "error: %s needs --out\n", what);
    return false;
  };

  std::string seed_line = seed_set ? "seed=" + std::to_string(seed) : "";
  CtxPtr ctx;
  if (!bd->parsed()) { // bd-rate is pure CSV math, no configuration involved
    gnvc_status st = make_ctx(config_path, seed_line, ctx);
    if (st != GNVC_OK) return report(st);
  }

  if (gen->parsed()) {
    if (!need_out("gen-data")) return int(GNVC_CONFIG_ERROR);
    int clips = 0;
    gnvc_status st = gnvc_gen_data(ctx.get(), out_path.c_str(), &clips);
    if (st == GNVC_OK) std::printf("wrote %d clips to %s\n", clips, out_path.c_str());
    return report(st);
  }

  if (train->parsed()) {
    gnvc_status st = gnvc_train(ctx.get(), train_stage.c_str(),
                                out_path.empty() ? nullptr : out_path.c_str());
    if (st == GNVC_OK) std::printf("stage %s done\n", train_stage.c_str());
    return report(st);
  }

  if (enc->parsed()) {
    if (!need_out("encode")) return int(GNVC_CONFIG_ERROR);
    double bpp = 0;
    gnvc_status st = gnvc_encode(ctx.get(), encode_in.c_str(), out_path.c_str(), &bpp);
    if (st == GNVC_OK) std::printf("bpp=%.10g\n", bpp);
    return report(st);
  }

  if (dec->parsed()) {
    if (!need_out("decode")) return int(GNVC_CONFIG_ERROR);
    gnvc_status st = gnvc_decode(ctx.get(), decode_in.c_str(), out_path.c_str());
    if (st == GNVC_OK) std::printf("decoded to %s\n", out_path.c_str());
    return report(st);
  }

  if (ev->parsed()) {
    if (!need_out("eval")) return int(GNVC_CONFIG_ERROR);
    double bd_proxy = 0, bd_psnr = 0;
    gnvc_status st = gnvc_eval(ctx.get(), eval_data.c_str(), out_path.c_str(), &bd_proxy,
                               &bd_psnr);
    if (st == GNVC_OK)
      std::printf("bd_rate_proxy=%.10g bd_rate_psnr=%.10g (refined vs codec)\n", bd_proxy,
                  bd_psnr);
    return report(st);
  }

  if (bd->parsed()) {
    double r = 0;
    gnvc_status st = gnvc_bd_rate(bd_ref.c_str(), bd_test.c_str(),
                                  out_path.empty() ? nullptr : out_path.c_str(), &r);
    if (st == GNVC_OK) std::printf("bd_rate_proxy=%.10g\n", r);
    return report(st);
  }

  return int(GNVC_CONFIG_ERROR); // unreachable with require_subcommand(1)
}
