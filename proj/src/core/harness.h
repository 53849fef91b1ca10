#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/codec.h"
#include "core/config.h"
#include "core/flowmath.h"
#include "core/refiner.h"
#include "core/synthdata.h"
#include "core/tensor.h"
#include "core/vae.h"

namespace gnvc {

// End-to-end plumbing: the file formats, GOP layout, and the command entry
// points the CLI (and the C API) call into.  Everything here is a pure
// function of (bytes in, config, checkpoints) -> bytes out, so the same
// inputs always reproduce the same files.

// --------------------------------------------------------------- raw video
//
// .raw container, 24-byte header then tightly packed pixels:
//   8 bytes  magic "GNVDRAW\0"
//   1 byte   version (= 1)
//   u16le    width, height, frame_count
//   1 byte   channels (= 3)
//   zeros    up to offset 24
// body: frames in order, each row-major 8-bit RGB.

Tensor<uint8_t> read_raw_video(const std::string &path);
void write_raw_video(const std::string &path, const Tensor<uint8_t> &frames);

// -------------------------------------------------------------- flow files
//
// Ground-truth motion sidecar (.flo) written next to each generated clip so
// eval can score temporal consistency without re-deriving the scene:
//   8 bytes  magic "GNVDFLO\0"
//   1 byte   version (= 1)
//   u16le    width, height, frame_count (of the clip; fields cover T-1)
//   zeros    up to offset 24
// body: f32le flow [T-1,H,W,2], then u8 visibility mask [T-1,H,W].

struct FlowSidecar {
  Tensor<float> flow;   // [T-1,H,W,2]
  Tensor<uint8_t> mask; // [T-1,H,W]
};

FlowSidecar read_flow_sidecar(const std::string &path);
void write_flow_sidecar(const std::string &path, const Tensor<float> &flow,
                        const Tensor<uint8_t> &mask);

// --------------------------------------------------------------- bitstream
//
// Coded video container (.gnvc):
//   4 bytes  magic "GNVD"
//   1 byte   version (= 1)
//   u16le    width, height, frame_count   (coded frames, padding included)
//   1 byte   temporal_stride
//   1 byte   spatial_stride
//   1 byte   quality index
//   1 byte   refined flag (0 = codec-only decode, 1 = flow-refined decode)
//   u32le    noise seed for the refiner's starting noise
//   1 byte   pad_count: trailing repeats of the last source frame, added so
//            every GOP has 1+k*temporal_stride frames; stripped after decode
//   1 byte   gop_count
//   u16le    per-GOP frame counts (gop_count of them, summing to frame_count)
// body: per GOP, one chunk per latent step (anchor first):
//   u32le payload length, u32le symbol count, payload bytes
// footer: u32le CRC-32 of every byte before it.
//
// Rate accounting counts payload bytes plus the 8-byte chunk framing and
// divides by the unpadded pixels; the fixed header and CRC are excluded.

struct Bitstream {
  uint16_t width = 0, height = 0;
  uint16_t frame_count = 0; // includes pad_count repeated frames
  uint8_t temporal_stride = 0, spatial_stride = 0;
  uint8_t quality = 0;
  uint8_t refined = 0;
  uint32_t noise_seed = 0;
  uint8_t pad_count = 0;
  std::vector<uint16_t> gop_frames;
  std::vector<std::vector<CodedChunk>> gops; // est_bits not serialized

  int64_t source_frames() const { return int64_t(frame_count) - pad_count; }
  int64_t payload_bytes() const;
  int64_t chunk_count() const;
  double bpp() const; // payload + framing bits over unpadded pixels
};

std::vector<uint8_t> serialize_bitstream(const Bitstream &bs);
Bitstream parse_bitstream(const std::vector<uint8_t> &bytes); // validates CRC

// --------------------------------------------------------------- gop split
//
// Greedy split into GOPs of at most max_gop frames, each of the form
// 1 + k*s_t so one anchor latent plus k predictive latents cover it exactly.
// A remainder that cannot form such a GOP throws and names the padding fix;
// gop_padding finds the smallest trailing repeat count that makes the split
// work (searching 0..4*s_t).

std::vector<int> split_gops(int64_t frame_count, int max_gop, int s_t);
int gop_padding(int64_t frame_count, int max_gop, int s_t);

// ------------------------------------------------------------- checkpoints

// The three models one quality level decodes with.
struct RunModels {
  VaeModel<double> vae;
  CodecModel<double> codec;
  RefinerModel<double> refiner;
};

// Load q<q>_{vae,codec,refiner}.gnvd from dir and cross-check that their
// geometries agree with each other; missing files name the training stage
// that produces them.
RunModels load_quality_models(const std::string &dir, int quality);

// ------------------------------------------------------------ encode core

Bitstream encode_video(const RunModels &m, const Tensor<uint8_t> &frames, int max_gop,
                       int quality, bool refined, uint32_t noise_seed);

// Decode to 8-bit frames, padding stripped.  refine_override: -1 honors the
// header flag, 0/1 force a codec-only or refined decode of the same bits.
Tensor<uint8_t> decode_video(const RunModels &m, const Bitstream &bs,
                             const FlowSchedule &sched, int refine_override = -1);

// ----------------------------------------------------------- command layer

DataParams data_params_from(const Config &cfg);

// Writes clip000.raw/.flo ... under out_dir; returns the clip count.
int cmd_gen_data(const Config &cfg, uint64_t seed, const std::string &out_dir);

// stage is "vae", "prior", "1" or "2"; reads/writes checkpoints + training
// CSVs under dir.  Later stages refuse to run before their inputs exist.
void cmd_train(const Config &cfg, uint64_t seed, const std::string &stage,
               const std::string &dir);

struct EncodeSummary {
  double bpp = 0;
  int64_t payload_bytes = 0;
  int64_t chunk_count = 0;
  int64_t file_bytes = 0;
  std::vector<int64_t> gop_bits; // payload + framing, per GOP
};

EncodeSummary cmd_encode(const Config &cfg, const std::string &in_raw,
                         const std::string &out_bitstream);

void cmd_decode(const Config &cfg, const std::string &in_bitstream,
                const std::string &out_raw);

struct EvalSummary {
  int rows = 0;            // data rows written to the CSV
  double bd_proxy = 0;     // refined vs codec-only, quality axis -proxy
  double bd_psnr = 0;      // refined vs codec-only, quality axis psnr
  std::string csv_path, report_path;
};

// Encodes/decodes every clip*.raw in data_dir at q = 0..3, scores both the
// refined and codec-only arm of each bitstream, writes rd.csv and
// bd_report.txt under out_dir.
EvalSummary cmd_eval(const Config &cfg, const std::string &data_dir,
                     const std::string &out_dir);

// BD-rate between two RD CSVs (mean curve over sequences per q).  Returns
// the proxy-axis rate difference of test vs ref, and writes a small report
// when out_report is non-empty.
double cmd_bd_rate(const std::string &ref_csv, const std::string &test_csv,
                   const std::string &out_report);

} // namespace gnvc
