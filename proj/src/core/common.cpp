#include "core/common.h"

#include <cstdio>
#include <sys/stat.h>

namespace gnvc {

// CRC-32 (IEEE, reflected 0xEDB88320), same convention as zip/png footers.
static uint32_t crc_table[256];
static bool crc_init_done = [] {
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    crc_table[i] = c;
  }
  return true;
}();

uint32_t crc32(const void *data, size_t n, uint32_t seed) {
  (void)crc_init_done;
  uint32_t c = seed ^ 0xFFFFFFFFu;
  const auto *p = static_cast<const uint8_t *>(data);
  for (size_t i = 0; i < n; ++i) c = crc_table[(c ^ p[i]) & 0xff] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

std::vector<uint8_t> read_file(const std::string &path) {
  FILE *f = std::fopen(path.c_str(), "rb");
  if (!f) fail_data("cannot open file: " + path);
  std::fseek(f, 0, SEEK_END);
  long sz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> buf(size_t(sz < 0 ? 0 : sz));
  size_t got = sz > 0 ? std::fread(buf.data(), 1, buf.size(), f) : 0;
  std::fclose(f);
  if (got != buf.size()) fail_data("short read: " + path);
  return buf;
}

void write_file(const std::string &path, const void *data, size_t n) {
  FILE *f = std::fopen(path.c_str(), "wb");
  if (!f) fail_data("cannot open file for writing: " + path);
  size_t put = n ? std::fwrite(data, 1, n, f) : 0;
  int rc = std::fclose(f);
  if (put != n || rc != 0) fail_data("short write: " + path);
}

bool file_exists(const std::string &path) {
  struct stat st;
  return ::stat(path.c_str(), &st) == 0;
}

} // namespace gnvc
