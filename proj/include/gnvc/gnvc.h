#ifndef GNVC_H
#define GNVC_H

/* C interface to the generative video codec.  All functions return a
 * gnvc_status; anything but GNVC_OK leaves a human-readable explanation in
 * gnvc_last_error() (thread local, valid until the next call on that
 * thread).  The numeric values double as process exit codes. */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gnvc_status {
  GNVC_OK = 0,
  GNVC_CONFIG_ERROR = 2, /* bad configuration, flags, or model geometry */
  GNVC_DATA_ERROR = 3,   /* missing/corrupt files or malformed containers */
  GNVC_NUMERIC_ERROR = 4 /* non-finite losses, internal invariant failures */
} gnvc_status;

/* A context owns one validated configuration.  config_path NULL or empty
 * loads the built-in defaults; overrides is optional "key=value" text (one
 * pair per line) applied on top, e.g. "seed=7\ncheckpoint_dir=/tmp/run". */
typedef struct gnvc_ctx gnvc_ctx;

gnvc_status gnvc_ctx_create(const char *config_path, const char *overrides, gnvc_ctx **out);
void gnvc_ctx_destroy(gnvc_ctx *ctx);

/* Message for the most recent failure on this thread; never NULL. */
const char *gnvc_last_error(void);

const char *gnvc_version(void);

/* Render the synthetic dataset into out_dir (clip000.raw/.flo, ...).
 * clip_count_out may be NULL. */
gnvc_status gnvc_gen_data(gnvc_ctx *ctx, const char *out_dir, int *clip_count_out);

/* Run one training stage: "vae", "prior", "1" or "2".  Checkpoints and
 * training CSVs live in dir (NULL = the configured checkpoint_dir).  Stages
 * must run in that order; later stages fail when their inputs are missing. */
gnvc_status gnvc_train(gnvc_ctx *ctx, const char *stage, const char *dir);

/* Compress a raw video into a bitstream file.  bpp_out may be NULL. */
gnvc_status gnvc_encode(gnvc_ctx *ctx, const char *in_raw, const char *out_bitstream,
                        double *bpp_out);

/* Decompress a bitstream into a raw video, honoring the refinement flag and
 * noise seed recorded in its header. */
gnvc_status gnvc_decode(gnvc_ctx *ctx, const char *in_bitstream, const char *out_raw);

/* Score every clip in data_dir at all four quality levels, both with and
 * without refinement; writes rd.csv and bd_report.txt under out_dir.  The
 * BD-rate outputs may be NULL; they are NaN when a curve is degenerate. */
gnvc_status gnvc_eval(gnvc_ctx *ctx, const char *data_dir, const char *out_dir,
                      double *bd_proxy_out, double *bd_psnr_out);

/* BD-rate between two RD CSVs (as written by gnvc_eval).  out_report may be
 * NULL to skip the report file; bd_proxy_out may be NULL. */
gnvc_status gnvc_bd_rate(const char *ref_csv, const char *test_csv, const char *out_report,
                         double *bd_proxy_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GNVC_H */
