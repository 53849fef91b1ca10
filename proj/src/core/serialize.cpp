#include "core/serialize.h"

#include "core/common.h"

namespace gnvc {

std::vector<uint8_t> Checkpoint::serialize() const {
  GNVC_CHECK(magic.size() <= 15, "checkpoint magic too long");
  ByteWriter w;
  char pad[16] = {0};
  for (size_t i = 0; i < magic.size(); ++i) pad[i] = magic[i];
  w.bytes(pad, 16);
  w.u8(kVersion);

  w.u32le(uint32_t(config.size()));
  for (auto &kv : config) {
    std::string line = kv.first + "=" + kv.second;
    w.u32le(uint32_t(line.size()));
    w.str(line);
  }

  w.u32le(uint32_t(params.size()));
  for (auto &kv : params) {
    w.u32le(uint32_t(kv.first.size()));
    w.str(kv.first);
    w.u32le(uint32_t(kv.second.numel()));
    for (int64_t i = 0; i < kv.second.numel(); ++i) w.f32le(kv.second[i]);
  }
  return std::move(w.buf);
}

Checkpoint Parse_impl(ByteReader &r, const std::string &expected_magic) {
  Checkpoint ck;
  std::string raw = r.str(16);
  size_t end = raw.find('\0');
  ck.magic = raw.substr(0, end == std::string::npos ? 16 : end);
  if (ck.magic != expected_magic)
    fail_data("bad checkpoint magic: got '" + ck.magic + "', want '" + expected_magic + "'");
  uint8_t ver = r.u8();
  if (ver != Checkpoint::kVersion)
    fail_data("unsupported checkpoint version " + std::to_string(ver));

  uint32_t nlines = r.u32le();
  for (uint32_t i = 0; i < nlines; ++i) {
    std::string line = r.str(r.u32le());
    size_t eq = line.find('=');
    if (eq == std::string::npos) fail_data("checkpoint config line without '=': " + line);
    ck.config.push_back({line.substr(0, eq), line.substr(eq + 1)});
  }

  uint32_t nparams = r.u32le();
  for (uint32_t i = 0; i < nparams; ++i) {
    std::string name = r.str(r.u32le());
    uint32_t count = r.u32le();
    if (size_t(count) * 4 > r.remaining()) fail_data("checkpoint parameter blob truncated: " + name);
    Tensor<float> t({int64_t(count)});
    for (uint32_t j = 0; j < count; ++j) t[j] = r.f32le();
    if (!ck.params.emplace(name, std::move(t)).second)
      fail_data("duplicate checkpoint parameter " + name);
  }
  if (r.remaining() != 0) fail_data("trailing bytes after checkpoint payload");
  return ck;
}

Checkpoint Checkpoint::parse(const std::vector<uint8_t> &bytes, const std::string &expected_magic) {
  ByteReader r(bytes);
  return Parse_impl(r, expected_magic);
}

void Checkpoint::save(const std::string &path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::string &path, const std::string &expected_magic) {
  return parse(read_file(path), expected_magic);
}

const std::string *Checkpoint::find(const std::string &key) const {
  for (auto &kv : config)
    if (kv.first == key) return &kv.second;
  return nullptr;
}

std::string Checkpoint::get(const std::string &key) const {
  const std::string *v = find(key);
  if (!v) fail_data("checkpoint config missing key '" + key + "'");
  return *v;
}

int64_t Checkpoint::get_int(const std::string &key) const {
  try {
    return std::stoll(get(key));
  } catch (const std::logic_error &) {
    fail_data("checkpoint config key '" + key + "' is not an integer");
  }
}

double Checkpoint::get_double(const std::string &key) const {
  try {
    return std::stod(get(key));
  } catch (const std::logic_error &) {
    fail_data("checkpoint config key '" + key + "' is not a number");
  }
}

void Checkpoint::set(const std::string &key, const std::string &value) {
  for (auto &kv : config)
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  config.push_back({key, value});
}

} // namespace gnvc
