#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnvc {

// Process-level outcome of any operation.  The numeric values double as CLI
// exit codes, so they must stay stable.
enum class Status : int {
  ok = 0,
  config_error = 2,  // bad config file, unknown key, invalid value
  data_error = 3,    // malformed input file, bad magic, CRC mismatch
  numeric_error = 4, // non-finite loss, shape violation, coder desync
};

struct Error : std::runtime_error {
  Status status;
  Error(Status s, const std::string &msg) : std::runtime_error(msg), status(s) {}
};

[[noreturn]] inline void fail_config(const std::string &msg) { throw Error(Status::config_error, msg); }
[[noreturn]] inline void fail_data(const std::string &msg) { throw Error(Status::data_error, msg); }
[[noreturn]] inline void fail_numeric(const std::string &msg) { throw Error(Status::numeric_error, msg); }

// Internal invariants (shape mismatches etc.).  These are bugs, not user
// errors, but they still surface as numeric_error through the C API so a
// broken build cannot silently emit garbage files.
#define GNVC_CHECK(cond, msg)                                                  \
  do {                                                                         \
    if (!(cond)) ::gnvc::fail_numeric(std::string("internal: ") + (msg));      \
  } while (0)

// ----------------------------------------------------------------- hashing

inline uint64_t fnv1a64(const void *data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto *p = static_cast<const uint8_t *>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string &s) { return fnv1a64(s.data(), s.size()); }

uint32_t crc32(const void *data, size_t n, uint32_t seed = 0);

// ------------------------------------------------------------ byte buffers

struct ByteWriter {
  std::vector<uint8_t> buf;
  void u8(uint8_t v) { buf.push_back(v); }
  void u16le(uint16_t v) {
    buf.push_back(uint8_t(v & 0xff));
    buf.push_back(uint8_t(v >> 8));
  }
  void u32le(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(uint8_t((v >> (8 * i)) & 0xff));
  }
  void u64le(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(uint8_t((v >> (8 * i)) & 0xff));
  }
  void f32le(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32le(bits);
  }
  void bytes(const void *p, size_t n) {
    const auto *b = static_cast<const uint8_t *>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void str(const std::string &s) { bytes(s.data(), s.size()); }
};

struct ByteReader {
  const uint8_t *p;
  size_t n;
  size_t pos = 0;
  ByteReader(const void *data, size_t size) : p(static_cast<const uint8_t *>(data)), n(size) {}
  explicit ByteReader(const std::vector<uint8_t> &v) : ByteReader(v.data(), v.size()) {}

  void need(size_t k) const {
    if (pos + k > n) fail_data("truncated input (wanted " + std::to_string(k) + " bytes at offset " + std::to_string(pos) + ")");
  }
  uint8_t u8() {
    need(1);
    return p[pos++];
  }
  uint16_t u16le() {
    need(2);
    uint16_t v = uint16_t(p[pos]) | uint16_t(p[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32le() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64le() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32le() {
    uint32_t bits = u32le();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  void bytes(void *dst, size_t k) {
    need(k);
    std::memcpy(dst, p + pos, k);
    pos += k;
  }
  std::string str(size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char *>(p + pos), k);
    pos += k;
    return s;
  }
  size_t remaining() const { return n - pos; }
};

// --------------------------------------------------------------- file I/O

std::vector<uint8_t> read_file(const std::string &path);
void write_file(const std::string &path, const void *data, size_t n);
inline void write_file(const std::string &path, const std::vector<uint8_t> &v) {
  write_file(path, v.data(), v.size());
}
bool file_exists(const std::string &path);

} // namespace gnvc
