#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/tensor.h"

namespace gnvc {

// Model checkpoint container.  Layout:
//   16 bytes  magic, zero padded ("GNVDVAE", "GNVDCDC", "GNVDDIT")
//    1 byte   version (= 1)
//    u32      config line count, then per line u32 length + "key=value" UTF-8
//    u32      parameter count, then per parameter
//             u32 name length, name bytes, u32 element count, f32le values
// Parameters are written in sorted name order so the same state always
// produces the same bytes.
struct Checkpoint {
  std::string magic; // 7 significant chars, e.g. "GNVDVAE"
  std::vector<std::pair<std::string, std::string>> config;
  std::map<std::string, Tensor<float>> params;

  static constexpr uint8_t kVersion = 1;

  std::vector<uint8_t> serialize() const;
  static Checkpoint parse(const std::vector<uint8_t> &bytes, const std::string &expected_magic);

  void save(const std::string &path) const;
  static Checkpoint load(const std::string &path, const std::string &expected_magic);

  const std::string *find(const std::string &key) const;
  std::string get(const std::string &key) const;       // fail_data when absent
  int64_t get_int(const std::string &key) const;
  double get_double(const std::string &key) const;
  void set(const std::string &key, const std::string &value);
  void set_int(const std::string &key, int64_t v) { set(key, std::to_string(v)); }
};

inline const char *kMagicVae = "GNVDVAE";
inline const char *kMagicCodec = "GNVDCDC";
inline const char *kMagicRefiner = "GNVDDIT";

} // namespace gnvc
