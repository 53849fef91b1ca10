#include "core/harness.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>

#include "core/metrics.h"
#include "core/serialize.h"
#include "core/training.h"

namespace fs = std::filesystem;

namespace gnvc {

// ------------------------------------------------------------ byte helpers

namespace {

constexpr size_t kMediaHeaderSize = 24;

void check_magic(ByteReader &r, const char *magic, size_t n, const std::string &what) {
  if (r.str(n) != std::string(magic, n)) fail_data(what + " has the wrong magic");
}

void pad_header_to(ByteWriter &w, size_t size) {
  GNVC_CHECK(w.buf.size() <= size, "header overflow");
  w.buf.resize(size, 0);
}

std::string format_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

} // namespace

// ---------------------------------------------------------------- raw video

Tensor<uint8_t> read_raw_video(const std::string &path) {
  std::vector<uint8_t> bytes = read_file(path);
  ByteReader r(bytes);
  check_magic(r, "GNVDRAW\0", 8, "raw video '" + path + "'");
  if (r.u8() != 1) fail_data("raw video '" + path + "': unsupported version");
  int64_t w = r.u16le(), h = r.u16le(), t = r.u16le();
  int64_t c = r.u8();
  if (c != 3) fail_data("raw video '" + path + "': expected 3 channels");
  if (w == 0 || h == 0 || t == 0) fail_data("raw video '" + path + "': empty geometry");
  r.pos = kMediaHeaderSize;
  if (bytes.size() != kMediaHeaderSize + size_t(t * h * w * 3))
    fail_data("raw video '" + path + "': size does not match header");
  Tensor<uint8_t> frames({t, h, w, 3});
  r.bytes(frames.ptr(), size_t(frames.numel()));
  return frames;
}

void write_raw_video(const std::string &path, const Tensor<uint8_t> &frames) {
  GNVC_CHECK(frames.rank() == 4 && frames.shape[3] == 3, "raw video wants [T,H,W,3]");
  GNVC_CHECK(frames.shape[0] <= 0xffff && frames.shape[1] <= 0xffff && frames.shape[2] <= 0xffff,
             "raw video dimensions exceed 16 bits");
  ByteWriter w;
  w.bytes("GNVDRAW\0", 8);
  w.u8(1);
  w.u16le(uint16_t(frames.shape[2]));
  w.u16le(uint16_t(frames.shape[1]));
  w.u16le(uint16_t(frames.shape[0]));
  w.u8(3);
  pad_header_to(w, kMediaHeaderSize);
  w.bytes(frames.ptr(), size_t(frames.numel()));
  write_file(path, w.buf);
}

// --------------------------------------------------------------- flow files

FlowSidecar read_flow_sidecar(const std::string &path) {
  std::vector<uint8_t> bytes = read_file(path);
  ByteReader r(bytes);
  check_magic(r, "GNVDFLO\0", 8, "flow sidecar '" + path + "'");
  if (r.u8() != 1) fail_data("flow sidecar '" + path + "': unsupported version");
  int64_t w = r.u16le(), h = r.u16le(), t = r.u16le();
  if (w == 0 || h == 0 || t < 2) fail_data("flow sidecar '" + path + "': empty geometry");
  r.pos = kMediaHeaderSize;
  FlowSidecar s;
  s.flow = Tensor<float>({t - 1, h, w, 2});
  s.mask = Tensor<uint8_t>({t - 1, h, w});
  size_t body = size_t(s.flow.numel()) * 4 + size_t(s.mask.numel());
  if (bytes.size() != kMediaHeaderSize + body)
    fail_data("flow sidecar '" + path + "': size does not match header");
  r.bytes(s.flow.ptr(), size_t(s.flow.numel()) * 4);
  r.bytes(s.mask.ptr(), size_t(s.mask.numel()));
  return s;
}

void write_flow_sidecar(const std::string &path, const Tensor<float> &flow,
                        const Tensor<uint8_t> &mask) {
  GNVC_CHECK(flow.rank() == 4 && flow.shape[3] == 2, "flow sidecar wants flow [T-1,H,W,2]");
  GNVC_CHECK(mask.rank() == 3 && mask.shape[0] == flow.shape[0] &&
                 mask.shape[1] == flow.shape[1] && mask.shape[2] == flow.shape[2],
             "flow sidecar wants mask [T-1,H,W]");
  ByteWriter w;
  w.bytes("GNVDFLO\0", 8);
  w.u8(1);
  w.u16le(uint16_t(flow.shape[2]));
  w.u16le(uint16_t(flow.shape[1]));
  w.u16le(uint16_t(flow.shape[0] + 1));
  pad_header_to(w, kMediaHeaderSize);
  w.bytes(flow.ptr(), size_t(flow.numel()) * 4);
  w.bytes(mask.ptr(), size_t(mask.numel()));
  write_file(path, w.buf);
}

// ---------------------------------------------------------------- bitstream

int64_t Bitstream::payload_bytes() const {
  int64_t n = 0;
  for (const auto &gop : gops)
    for (const auto &c : gop) n += int64_t(c.bytes.size());
  return n;
}

int64_t Bitstream::chunk_count() const {
  int64_t n = 0;
  for (const auto &gop : gops) n += int64_t(gop.size());
  return n;
}

double Bitstream::bpp() const {
  return bits_per_pixel(payload_bytes(), chunk_count(), source_frames(), height, width);
}

std::vector<uint8_t> serialize_bitstream(const Bitstream &bs) {
  GNVC_CHECK(bs.gops.size() == bs.gop_frames.size() && bs.gop_frames.size() <= 0xff,
             "bitstream gop bookkeeping out of range");
  ByteWriter w;
  w.bytes("GNVD", 4);
  w.u8(1);
  w.u16le(bs.width);
  w.u16le(bs.height);
  w.u16le(bs.frame_count);
  w.u8(bs.temporal_stride);
  w.u8(bs.spatial_stride);
  w.u8(bs.quality);
  w.u8(bs.refined);
  w.u32le(bs.noise_seed);
  w.u8(bs.pad_count);
  w.u8(uint8_t(bs.gop_frames.size()));
  for (uint16_t g : bs.gop_frames) w.u16le(g);
  for (const auto &gop : bs.gops)
    for (const auto &c : gop) {
      w.u32le(uint32_t(c.bytes.size()));
      w.u32le(c.symbol_count);
      w.bytes(c.bytes.data(), c.bytes.size());
    }
  uint32_t crc = crc32(w.buf.data(), w.buf.size());
  w.u32le(crc);
  return std::move(w.buf);
}

Bitstream parse_bitstream(const std::vector<uint8_t> &bytes) {
  // Integrity first: nothing else is trusted until the checksum holds.
  if (bytes.size() < 4) fail_data("bitstream is truncated");
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= uint32_t(bytes[bytes.size() - 4 + i]) << (8 * i);
  if (crc32(bytes.data(), bytes.size() - 4) != stored)
    fail_data("bitstream checksum mismatch — file is corrupt");

  ByteReader r(bytes.data(), bytes.size() - 4);
  check_magic(r, "GNVD", 4, "bitstream");
  if (r.u8() != 1) fail_data("bitstream: unsupported version");
  Bitstream bs;
  bs.width = r.u16le();
  bs.height = r.u16le();
  bs.frame_count = r.u16le();
  bs.temporal_stride = r.u8();
  bs.spatial_stride = r.u8();
  bs.quality = r.u8();
  bs.refined = r.u8();
  bs.noise_seed = r.u32le();
  bs.pad_count = r.u8();
  int gop_count = r.u8();
  if (bs.width == 0 || bs.height == 0 || bs.frame_count == 0 || bs.temporal_stride == 0 ||
      bs.spatial_stride == 0 || gop_count == 0)
    fail_data("bitstream: empty geometry");
  if (bs.pad_count >= bs.frame_count) fail_data("bitstream: padding exceeds frame count");

  int64_t total = 0;
  for (int g = 0; g < gop_count; ++g) {
    uint16_t n = r.u16le();
    if (n == 0 || (n - 1) % bs.temporal_stride != 0)
      fail_data("bitstream: gop length does not fit the temporal stride");
    bs.gop_frames.push_back(n);
    total += n;
  }
  if (total != bs.frame_count) fail_data("bitstream: gop lengths do not sum to frame count");

  for (uint16_t n : bs.gop_frames) {
    int64_t steps = 1 + (n - 1) / bs.temporal_stride;
    std::vector<CodedChunk> gop;
    for (int64_t t = 0; t < steps; ++t) {
      CodedChunk c;
      uint32_t len = r.u32le();
      c.symbol_count = r.u32le();
      c.bytes.resize(len);
      r.bytes(c.bytes.data(), len);
      gop.push_back(std::move(c));
    }
    bs.gops.push_back(std::move(gop));
  }
  if (r.remaining() != 0) fail_data("bitstream: trailing bytes after the last chunk");
  return bs;
}

// ---------------------------------------------------------------- gop split

std::vector<int> split_gops(int64_t frame_count, int max_gop, int s_t) {
  GNVC_CHECK(frame_count >= 1 && max_gop >= 1 && s_t >= 1, "split_gops: bad arguments");
  // Largest 1+k*s_t that fits the cap; every full GOP has this length.
  const int full = 1 + (max_gop - 1) / s_t * s_t;
  std::vector<int> out;
  int64_t left = frame_count;
  while (left > full) {
    out.push_back(full);
    left -= full;
  }
  if ((left - 1) % s_t != 0)
    fail_data("cannot split " + std::to_string(frame_count) +
              " frames into GOPs of 1+k*" + std::to_string(s_t) +
              " — pad by repeating the last frame (see gop_padding)");
  out.push_back(int(left));
  return out;
}

int gop_padding(int64_t frame_count, int max_gop, int s_t) {
  for (int p = 0; p <= 4 * s_t; ++p) {
    try {
      split_gops(frame_count + p, max_gop, s_t);
      return p;
    } catch (const Error &) {
    }
  }
  fail_data("no padding up to " + std::to_string(4 * s_t) + " frames makes " +
            std::to_string(frame_count) + " frames splittable");
}

// -------------------------------------------------------------- checkpoints

namespace {

std::string quality_path(const std::string &dir, int q, const char *part) {
  return dir + "/q" + std::to_string(q) + "_" + part + ".gnvd";
}

void require_file(const std::string &path, const std::string &hint) {
  if (!fs::exists(path)) fail_data("missing checkpoint '" + path + "' — " + hint);
}

} // namespace

RunModels load_quality_models(const std::string &dir, int quality) {
  std::string vp = quality_path(dir, quality, "vae");
  std::string cp = quality_path(dir, quality, "codec");
  std::string rp = quality_path(dir, quality, "refiner");
  for (const auto &p : {vp, cp, rp}) require_file(p, "run train --stage 2 first");
  RunModels m{VaeModel<double>::load(vp), CodecModel<double>::load(cp),
              RefinerModel<double>::load(rp)};
  // The three checkpoints describe one pipeline; latent geometry must agree
  // or decode would silently mix incompatible models.
  if (m.codec.cfg.latent_channels != m.vae.cfg.latent_channels ||
      m.refiner.cfg.latent_channels != m.vae.cfg.latent_channels ||
      m.refiner.cfg.context_channels != m.codec.cfg.context_channels)
    fail_data("checkpoints in '" + dir + "' disagree on latent geometry");
  return m;
}

// -------------------------------------------------------------- encode core

namespace {

Tensor<double> bytes_to_unit(const Tensor<uint8_t> &frames) {
  Tensor<double> out(frames.shape);
  for (int64_t i = 0; i < frames.numel(); ++i) out[i] = double(frames[i]) / 255.0;
  return out;
}

Tensor<uint8_t> unit_to_bytes(const Tensor<double> &frames) {
  Tensor<uint8_t> out(frames.shape);
  for (int64_t i = 0; i < frames.numel(); ++i) {
    double v = std::nearbyint(std::clamp(frames[i], 0.0, 1.0) * 255.0);
    out[i] = uint8_t(v);
  }
  return out;
}

Tensor<double> slice_frames(const Tensor<double> &frames, int64_t from, int64_t count) {
  Tensor<double> out({count, frames.shape[1], frames.shape[2], frames.shape[3]});
  const int64_t stride = frames.numel() / frames.shape[0];
  std::copy_n(frames.ptr() + from * stride, count * stride, out.ptr());
  return out;
}

void check_pixel_geometry(const RunModels &m, int64_t h, int64_t w) {
  const int64_t s = m.vae.cfg.spatial_stride;
  if (h % (2 * s) || w % (2 * s))
    fail_data("frame size " + std::to_string(w) + "x" + std::to_string(h) +
              " is not divisible by " + std::to_string(2 * s) +
              " (latent stride x codec stride)");
}

} // namespace

Bitstream encode_video(const RunModels &m, const Tensor<uint8_t> &frames, int max_gop,
                       int quality, bool refined, uint32_t noise_seed) {
  GNVC_CHECK(frames.rank() == 4 && frames.shape[3] == 3, "encode wants [T,H,W,3]");
  const int64_t T = frames.shape[0], H = frames.shape[1], W = frames.shape[2];
  check_pixel_geometry(m, H, W);

  const int s_t = m.vae.cfg.temporal_stride;
  const int pad = gop_padding(T, max_gop, s_t);
  if (T + pad > 0xffff) fail_data("video too long for the container");
  std::vector<int> gop_lens = split_gops(T + pad, max_gop, s_t);

  // Repeat the last frame so every GOP lands on the latent grid; decode
  // strips the repeats again via pad_count.
  Tensor<double> unit = bytes_to_unit(frames);
  if (pad) {
    Tensor<double> padded({T + pad, H, W, 3});
    const int64_t fs = H * W * 3;
    std::copy_n(unit.ptr(), unit.numel(), padded.ptr());
    for (int p = 0; p < pad; ++p)
      std::copy_n(unit.ptr() + (T - 1) * fs, fs, padded.ptr() + (T + p) * fs);
    unit = std::move(padded);
  }

  const int64_t max_steps = 1 + (int64_t(gop_lens[0]) - 1) / s_t;
  if (max_steps > m.refiner.cfg.max_latents)
    fail_data("gop of " + std::to_string(gop_lens[0]) + " frames needs " +
              std::to_string(max_steps) + " latent steps but the refiner supports " +
              std::to_string(m.refiner.cfg.max_latents) + " — lower encode.max_gop");

  Bitstream bs;
  bs.width = uint16_t(W);
  bs.height = uint16_t(H);
  bs.frame_count = uint16_t(T + pad);
  bs.temporal_stride = uint8_t(s_t);
  bs.spatial_stride = uint8_t(m.vae.cfg.spatial_stride);
  bs.quality = uint8_t(quality);
  bs.refined = refined ? 1 : 0;
  bs.noise_seed = noise_seed;
  bs.pad_count = uint8_t(pad);

  int64_t at = 0;
  for (int len : gop_lens) {
    Tensor<double> latents = m.vae.encode(constant(slice_frames(unit, at, len)))->val;
    bs.gops.push_back(m.codec.encode_latents(latents));
    bs.gop_frames.push_back(uint16_t(len));
    at += len;
  }
  return bs;
}

Tensor<uint8_t> decode_video(const RunModels &m, const Bitstream &bs,
                             const FlowSchedule &sched, int refine_override) {
  if (bs.temporal_stride != m.vae.cfg.temporal_stride ||
      bs.spatial_stride != m.vae.cfg.spatial_stride)
    fail_data("bitstream strides do not match the checkpoint — wrong model for this file");
  const int64_t H = bs.height, W = bs.width;
  check_pixel_geometry(m, H, W);
  const int64_t lh = H / bs.spatial_stride, lw = W / bs.spatial_stride;
  const bool refine = refine_override < 0 ? bs.refined != 0 : refine_override != 0;

  Tensor<double> video({int64_t(bs.frame_count), H, W, 3});
  int64_t at = 0;
  for (size_t g = 0; g < bs.gops.size(); ++g) {
    CodecSides<double> sides = m.codec.decode_latents(bs.gops[g], lh, lw);
    Tensor<double> latents = std::move(sides.recon);
    if (refine) {
      if (latents.shape[0] > m.refiner.cfg.max_latents)
        fail_data("bitstream gop exceeds the refiner's latent capacity");
      Rng rng = Rng::derive(bs.noise_seed, "decode/x0", uint64_t(g));
      Tensor<double> x0 = Tensor<double>::randn(latents.shape, rng);
      latents = refined_latents(m.refiner, sched, constant(latents),
                                constant(sides.contexts), x0)
                    ->val;
    }
    Tensor<double> frames = m.vae.decode(constant(latents))->val;
    std::copy_n(frames.ptr(), frames.numel(), video.ptr() + at * H * W * 3);
    at += frames.shape[0];
  }
  GNVC_CHECK(at == bs.frame_count, "decoded frame accounting mismatch");
  return unit_to_bytes(slice_frames(video, 0, bs.source_frames()));
}

// ------------------------------------------------------------ command layer

DataParams data_params_from(const Config &cfg) {
  DataParams p;
  p.count = int(cfg.i("data.count"));
  p.frames = int(cfg.i("data.frames"));
  p.width = int(cfg.i("data.width"));
  p.height = int(cfg.i("data.height"));
  p.min_rects = int(cfg.i("data.min_rects"));
  p.max_rects = int(cfg.i("data.max_rects"));
  p.min_size = cfg.d("data.min_size");
  p.max_size = cfg.d("data.max_size");
  p.max_speed = cfg.d("data.max_speed");
  p.static_prob = cfg.d("data.static_prob");
  p.integer_prob = cfg.d("data.integer_prob");
  p.texture_prob = cfg.d("data.texture_prob");
  p.motion_scale = cfg.d("data.motion_scale");
  if (p.count < 1 || p.frames < 1 || p.width < 1 || p.height < 1)
    fail_config("data.* geometry must be positive");
  return p;
}

namespace {

std::string clip_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "clip%03d", index);
  return buf;
}

} // namespace

int cmd_gen_data(const Config &cfg, uint64_t seed, const std::string &out_dir) {
  DataParams p = data_params_from(cfg);
  fs::create_directories(out_dir);
  for (int i = 0; i < p.count; ++i) {
    Clip clip = make_clip(p, seed, uint64_t(i));
    Tensor<uint8_t> bytes(clip.frames.shape);
    for (int64_t j = 0; j < bytes.numel(); ++j)
      bytes[j] = uint8_t(std::nearbyint(std::clamp(double(clip.frames[j]), 0.0, 1.0) * 255.0));
    std::string stem = out_dir + "/" + clip_stem(i);
    write_raw_video(stem + ".raw", bytes);
    write_flow_sidecar(stem + ".flo", clip.flow, clip.mask);
  }
  return p.count;
}

// --------------------------------------------------------------- cmd_train

namespace {

VaeModel<double> load_vae_or_fail(const std::string &dir) {
  std::string p = dir + "/vae.gnvd";
  require_file(p, "run train --stage vae first");
  return VaeModel<double>::load(p);
}

} // namespace

void cmd_train(const Config &cfg, uint64_t seed, const std::string &stage,
               const std::string &dir) {
  fs::create_directories(dir);
  DataParams data = data_params_from(cfg);

  if (stage == "vae") {
    VaeModel<double> vae(VaeConfig::from(cfg), Rng::derive(seed, "init/vae").next_u64());
    TrainLog log(dir + "/vae_train.csv");
    train_vae(vae, data, VaeTrainConfig::from(cfg), seed, log);
    vae.save(dir + "/vae.gnvd");
    return;
  }

  if (stage == "prior") {
    VaeModel<double> vae = load_vae_or_fail(dir);
    RefinerModel<double> refiner(
        RefinerConfig::from(cfg, vae.cfg.latent_channels, int(cfg.i("codec.context_channels"))),
        Rng::derive(seed, "init/refiner").next_u64());
    TrainLog log(dir + "/prior_train.csv");
    pretrain_prior(refiner, vae, data, PriorTrainConfig::from(cfg), seed, log);
    refiner.save(dir + "/prior.gnvd");
    return;
  }

  if (stage == "1") {
    VaeModel<double> vae = load_vae_or_fail(dir);
    std::string pp = dir + "/prior.gnvd";
    if (!fs::exists(pp)) fail_data("prior required — run train --stage prior before stage 1");
    RefinerModel<double> refiner = RefinerModel<double>::load(pp);
    CodecModel<double> codec(CodecConfig::from(cfg, vae.cfg.latent_channels),
                             Rng::derive(seed, "init/codec").next_u64());
    if (refiner.cfg.context_channels != codec.cfg.context_channels)
      fail_data("prior checkpoint context width does not match codec.context_channels");
    TrainLog log(dir + "/stage1_train.csv");
    run_stage1(codec, refiner, vae, data, StageIConfig::from(cfg), seed, log);
    codec.save(dir + "/stage1_codec.gnvd");
    refiner.save(dir + "/stage1_refiner.gnvd");
    return;
  }

  if (stage == "2") {
    for (const auto &p :
         {dir + "/vae.gnvd", dir + "/stage1_codec.gnvd", dir + "/stage1_refiner.gnvd"})
      require_file(p, "run train --stage 1 first");
    std::vector<double> lambdas = cfg.dlist("stage2.lambdas");
    FlowSchedule sched = FlowSchedule::from(cfg);
    // Each grid point starts from the same stage-1 state and trains
    // independently, so quality levels never contaminate each other.
    for (size_t q = 0; q < lambdas.size(); ++q) {
      VaeModel<double> vae = VaeModel<double>::load(dir + "/vae.gnvd");
      CodecModel<double> codec = CodecModel<double>::load(dir + "/stage1_codec.gnvd");
      RefinerModel<double> refiner = RefinerModel<double>::load(dir + "/stage1_refiner.gnvd");
      TrainLog log(dir + "/stage2_q" + std::to_string(q) + "_train.csv");
      run_stage2(codec, refiner, vae, data, StageIIConfig::from(cfg, lambdas[q]), sched, seed,
                 log);
      vae.save(quality_path(dir, int(q), "vae"));
      codec.save(quality_path(dir, int(q), "codec"));
      refiner.save(quality_path(dir, int(q), "refiner"));
    }
    return;
  }

  fail_config("unknown training stage '" + stage + "' (want vae, prior, 1 or 2)");
}

// -------------------------------------------------------- cmd_encode/decode

EncodeSummary cmd_encode(const Config &cfg, const std::string &in_raw,
                         const std::string &out_bitstream) {
  Tensor<uint8_t> frames = read_raw_video(in_raw);
  RunModels m = load_quality_models(cfg.str("checkpoint_dir"), int(cfg.i("encode.quality")));
  Bitstream bs = encode_video(m, frames, int(cfg.i("encode.max_gop")),
                              int(cfg.i("encode.quality")), cfg.b("encode.refine"),
                              uint32_t(cfg.u("encode.noise_seed")));
  std::vector<uint8_t> bytes = serialize_bitstream(bs);
  write_file(out_bitstream, bytes);

  EncodeSummary sum;
  sum.bpp = bs.bpp();
  sum.payload_bytes = bs.payload_bytes();
  sum.chunk_count = bs.chunk_count();
  sum.file_bytes = int64_t(bytes.size());
  for (const auto &gop : bs.gops) {
    int64_t bits = 0;
    for (const auto &c : gop) bits += 8 * (int64_t(c.bytes.size()) + 8);
    sum.gop_bits.push_back(bits);
  }
  return sum;
}

void cmd_decode(const Config &cfg, const std::string &in_bitstream,
                const std::string &out_raw) {
  Bitstream bs = parse_bitstream(read_file(in_bitstream));
  RunModels m = load_quality_models(cfg.str("checkpoint_dir"), int(bs.quality));
  Tensor<uint8_t> video = decode_video(m, bs, FlowSchedule::from(cfg));
  write_raw_video(out_raw, video);
}

// ----------------------------------------------------------------- cmd_eval

namespace {

struct RdRow {
  std::string sequence;
  int q = 0;
  double bpp = 0, psnr_db = 0, proxy = 0, e_warp = 0;
};

std::string rd_csv_line(const RdRow &r) {
  return r.sequence + "," + std::to_string(r.q) + "," + format_num(r.bpp) + "," +
         format_num(r.psnr_db) + "," + format_num(r.proxy) + "," + format_num(r.e_warp) + "\n";
}

// Mean RD curve of one arm: rows grouped by q, bpp and quality averaged.
std::vector<RdPoint> arm_curve(const std::vector<RdRow> &rows, const std::string &arm_tag,
                               bool proxy_axis) {
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> per_q;
  for (const auto &r : rows) {
    if (r.sequence.size() < arm_tag.size() ||
        r.sequence.compare(r.sequence.size() - arm_tag.size(), arm_tag.size(), arm_tag) != 0)
      continue;
    per_q[r.q].first.push_back(r.bpp);
    per_q[r.q].second.push_back(proxy_axis ? -r.proxy : r.psnr_db);
  }
  std::vector<RdPoint> curve;
  for (const auto &[q, acc] : per_q) {
    RdPoint pt;
    for (double v : acc.first) pt.bpp += v;
    for (double v : acc.second) pt.quality += v;
    pt.bpp /= double(acc.first.size());
    pt.quality /= double(acc.second.size());
    curve.push_back(pt);
  }
  return curve;
}

} // namespace

EvalSummary cmd_eval(const Config &cfg, const std::string &data_dir,
                     const std::string &out_dir) {
  const int want = int(cfg.i("eval.count"));
  std::vector<std::string> stems;
  if (fs::is_directory(data_dir))
    for (const auto &e : fs::directory_iterator(data_dir)) {
      std::string name = e.path().filename().string();
      if (name.rfind("clip", 0) == 0 && name.size() > 4 &&
          name.compare(name.size() - 4, 4, ".raw") == 0)
        stems.push_back(name.substr(0, name.size() - 4));
    }
  std::sort(stems.begin(), stems.end());
  if (int(stems.size()) < want)
    fail_data("eval wants " + std::to_string(want) + " clips in '" + data_dir + "', found " +
              std::to_string(stems.size()));
  stems.resize(size_t(want));

  const std::string ckpt_dir = cfg.str("checkpoint_dir");
  const FlowSchedule sched = FlowSchedule::from(cfg);
  const int max_gop = int(cfg.i("encode.max_gop"));
  const uint32_t noise_seed = uint32_t(cfg.u("encode.noise_seed"));

  std::vector<RunModels> models;
  for (int q = 0; q < 4; ++q) models.push_back(load_quality_models(ckpt_dir, q));

  std::vector<RdRow> rows;
  for (const auto &stem : stems) {
    Tensor<uint8_t> src = read_raw_video(data_dir + "/" + stem + ".raw");
    FlowSidecar flo = read_flow_sidecar(data_dir + "/" + stem + ".flo");
    Tensor<double> src_unit = bytes_to_unit(src);
    Tensor<double> flow = flo.flow.cast<double>();
    for (int q = 0; q < 4; ++q) {
      Bitstream bs = encode_video(models[size_t(q)], src, max_gop, q, true, noise_seed);
      // Both arms decode the same bits, so they sit at identical rate.
      std::vector<uint8_t> bytes = serialize_bitstream(bs);
      Bitstream reread = parse_bitstream(bytes);
      double rate = reread.bpp();
      for (int arm = 0; arm < 2; ++arm) {
        Tensor<uint8_t> out = decode_video(models[size_t(q)], reread, sched, arm);
        Tensor<double> out_unit = bytes_to_unit(out);
        RdRow r;
        r.sequence = stem + (arm ? "#refined" : "#codec");
        r.q = q;
        r.bpp = rate;
        r.psnr_db = psnr(out_unit, src_unit);
        r.proxy = perceptual_proxy_value(out_unit, src_unit);
        r.e_warp = warp_error(out_unit, flow, flo.mask);
        rows.push_back(std::move(r));
      }
    }
  }

  fs::create_directories(out_dir);
  EvalSummary sum;
  sum.csv_path = out_dir + "/rd.csv";
  sum.report_path = out_dir + "/bd_report.txt";
  sum.rows = int(rows.size());
  {
    std::string csv = "sequence,q,bpp,psnr,proxy,e_warp\n";
    for (const auto &r : rows) csv += rd_csv_line(r);
    write_file(sum.csv_path, csv.data(), csv.size());
  }

  // Degenerate curves (flat or non-overlapping quality, as untrained models
  // produce) report n/a instead of failing the whole run.
  auto bd_or_nan = [&](bool proxy_axis) {
    try {
      return bd_rate(arm_curve(rows, "#codec", proxy_axis),
                     arm_curve(rows, "#refined", proxy_axis));
    } catch (const Error &) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  sum.bd_proxy = bd_or_nan(true);
  sum.bd_psnr = bd_or_nan(false);
  {
    std::ostringstream rep;
    rep << "arm     q  mean_bpp       mean_psnr      mean_proxy\n";
    for (const char *arm : {"#codec", "#refined"}) {
      auto rate_curve = arm_curve(rows, arm, true);
      auto psnr_curve = arm_curve(rows, arm, false);
      for (size_t q = 0; q < rate_curve.size(); ++q)
        rep << (arm[1] == 'c' ? "codec   " : "refined ") << q << "  "
            << format_num(rate_curve[q].bpp) << "  " << format_num(psnr_curve[q].quality)
            << "  " << format_num(-rate_curve[q].quality) << "\n";
    }
    rep << "bd_rate_proxy(refined vs codec) = " << format_num(sum.bd_proxy) << " %\n";
    rep << "bd_rate_psnr(refined vs codec)  = " << format_num(sum.bd_psnr) << " %\n";
    std::string s = rep.str();
    write_file(sum.report_path, s.data(), s.size());
  }
  return sum;
}

// -------------------------------------------------------------- cmd_bd_rate

namespace {

std::vector<RdRow> read_rd_csv(const std::string &path) {
  std::vector<uint8_t> bytes = read_file(path);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "sequence,q,bpp,psnr,proxy,e_warp")
    fail_data("'" + path + "' is not an RD CSV (bad header)");
  std::vector<RdRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t pos = 0;
    while (true) {
      size_t c = line.find(',', pos);
      cells.push_back(line.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    if (cells.size() != 6)
      fail_data("'" + path + "' line " + std::to_string(lineno) + ": want 6 columns");
    try {
      RdRow r;
      r.sequence = cells[0];
      r.q = std::stoi(cells[1]);
      r.bpp = std::stod(cells[2]);
      r.psnr_db = std::stod(cells[3]);
      r.proxy = std::stod(cells[4]);
      r.e_warp = std::stod(cells[5]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error &) {
      fail_data("'" + path + "' line " + std::to_string(lineno) + ": bad number");
    }
  }
  if (rows.empty()) fail_data("'" + path + "' has no data rows");
  return rows;
}

// Mean curve over all rows of a CSV (no arm filtering — callers split files
// or rely on tags matching everything).
std::vector<RdPoint> csv_curve(const std::vector<RdRow> &rows, bool proxy_axis) {
  return arm_curve(rows, "", proxy_axis);
}

} // namespace

double cmd_bd_rate(const std::string &ref_csv, const std::string &test_csv,
                   const std::string &out_report) {
  std::vector<RdRow> ref = read_rd_csv(ref_csv);
  std::vector<RdRow> test = read_rd_csv(test_csv);
  double on_proxy = bd_rate(csv_curve(ref, true), csv_curve(test, true));
  double on_psnr = bd_rate(csv_curve(ref, false), csv_curve(test, false));
  if (!out_report.empty()) {
    std::string rep = "bd_rate_proxy = " + format_num(on_proxy) + " %\n" +
                      "bd_rate_psnr  = " + format_num(on_psnr) + " %\n";
    write_file(out_report, rep.data(), rep.size());
  }
  return on_proxy;
}

} // namespace gnvc
