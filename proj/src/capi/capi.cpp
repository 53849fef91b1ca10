#include "gnvc/gnvc.h"

#include <exception>
#include <new>
#include <string>

#include "core/harness.h"

using namespace gnvc;

struct gnvc_ctx {
  Config cfg;
};

namespace {

thread_local std::string t_last_error = "no error";

// Run a command body, translating exceptions into status codes + the
// thread-local message.  Never lets anything propagate across the C ABI.
template <class Fn>
gnvc_status guarded(Fn &&fn) {
  try {
    fn();
    return GNVC_OK;
  } catch (const Error &e) {
    t_last_error = e.what();
    return gnvc_status(int(e.status));
  } catch (const std::bad_alloc &) {
    t_last_error = "out of memory";
    return GNVC_NUMERIC_ERROR;
  } catch (const std::exception &e) {
    t_last_error = e.what();
    return GNVC_NUMERIC_ERROR;
  }
}

gnvc_status null_arg(const char *what) {
  t_last_error = std::string(what) + " must not be NULL";
  return GNVC_CONFIG_ERROR;
}

} // namespace

extern "C" {

const char *gnvc_last_error(void) { return t_last_error.c_str(); }

const char *gnvc_version(void) { return "gnvc 1.0"; }

gnvc_status gnvc_ctx_create(const char *config_path, const char *overrides, gnvc_ctx **out) {
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] {
    Config cfg = (config_path && *config_path) ? Config::from_file(config_path)
                                               : Config::from_string("");
    if (overrides && *overrides)
      for (const auto &[k, v] : Config::parse_pairs(overrides)) cfg.set(k, v);
    *out = new gnvc_ctx{std::move(cfg)};
  });
}

void gnvc_ctx_destroy(gnvc_ctx *ctx) { delete ctx; }

gnvc_status gnvc_gen_data(gnvc_ctx *ctx, const char *out_dir, int *clip_count_out) {
  if (!ctx) return null_arg("ctx");
  if (!out_dir) return null_arg("out_dir");
  return guarded([&] {
    int n = cmd_gen_data(ctx->cfg, ctx->cfg.u("seed"), out_dir);
    if (clip_count_out) *clip_count_out = n;
  });
}

gnvc_status gnvc_train(gnvc_ctx *ctx, const char *stage, const char *dir) {
  if (!ctx) return null_arg("ctx");
  if (!stage) return null_arg("stage");
  return guarded([&] {
    std::string d = (dir && *dir) ? dir : ctx->cfg.str("checkpoint_dir");
    cmd_train(ctx->cfg, ctx->cfg.u("seed"), stage, d);
  });
}

gnvc_status gnvc_encode(gnvc_ctx *ctx, const char *in_raw, const char *out_bitstream,
                        double *bpp_out) {
  if (!ctx) return null_arg("ctx");
  if (!in_raw) return null_arg("in_raw");
  if (!out_bitstream) return null_arg("out_bitstream");
  return guarded([&] {
    EncodeSummary s = cmd_encode(ctx->cfg, in_raw, out_bitstream);
    if (bpp_out) *bpp_out = s.bpp;
  });
}

gnvc_status gnvc_decode(gnvc_ctx *ctx, const char *in_bitstream, const char *out_raw) {
  if (!ctx) return null_arg("ctx");
  if (!in_bitstream) return null_arg("in_bitstream");
  if (!out_raw) return null_arg("out_raw");
  return guarded([&] { cmd_decode(ctx->cfg, in_bitstream, out_raw); });
}

gnvc_status gnvc_eval(gnvc_ctx *ctx, const char *data_dir, const char *out_dir,
                      double *bd_proxy_out, double *bd_psnr_out) {
  if (!ctx) return null_arg("ctx");
  if (!data_dir) return null_arg("data_dir");
  if (!out_dir) return null_arg("out_dir");
  return guarded([&] {
    EvalSummary s = cmd_eval(ctx->cfg, data_dir, out_dir);
    if (bd_proxy_out) *bd_proxy_out = s.bd_proxy;
    if (bd_psnr_out) *bd_psnr_out = s.bd_psnr;
  });
}

gnvc_status gnvc_bd_rate(const char *ref_csv, const char *test_csv, const char *out_report,
                         double *bd_proxy_out) {
  if (!ref_csv) return null_arg("ref_csv");
  if (!test_csv) return null_arg("test_csv");
  return guarded([&] {
    double r = cmd_bd_rate(ref_csv, test_csv, out_report ? out_report : "");
    if (bd_proxy_out) *bd_proxy_out = r;
  });
}

} // extern "C"
