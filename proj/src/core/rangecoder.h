#pragma once

#include <cstdint>
#include <vector>

#include "core/common.h"

namespace gnvc {

// Carry-less range coder, 32-bit state, byte renormalization.  Frequencies
// are 16-bit: cum + freq <= tot <= 65536, freq >= 1.  The encoder avoids
// carries by shrinking the range at segment boundaries instead of propagating
// them, which costs a fraction of a bit per renormalization in the worst case
// and keeps encode/decode loops branch-identical.
class RangeEncoder {
public:
  static constexpr uint32_t TOP = 1u << 24;
  static constexpr uint32_t BOT = 1u << 16;

  void encode(uint32_t cum, uint32_t freq, uint32_t tot) {
    GNVC_CHECK(freq > 0 && cum + freq <= tot && tot <= BOT, "range coder frequency contract");
    uint32_t r = range / tot;
    low += r * cum;
    range = r * freq;
    normalize();
  }

  std::vector<uint8_t> finish() {
    // After normalization range >= BOT, so the next multiple of 2^16 above
    // low still lies inside [low, low+range).  Emitting its top two bytes
    // (the decoder zero-pads the rest) pins the interval with 16 bits of
    // flush instead of the classic 32.
    uint32_t c = (low + (BOT - 1)) & ~(BOT - 1);
    out.push_back(uint8_t(c >> 24));
    out.push_back(uint8_t(c >> 16));
    return std::move(out);
  }

  size_t bytes_pending() const { return out.size(); }

private:
  void normalize() {
    while ((low ^ (low + range)) < TOP || (range < BOT && ((range = -low & (BOT - 1)), true))) {
      out.push_back(uint8_t(low >> 24));
      low <<= 8;
      range <<= 8;
    }
  }

  uint32_t low = 0;
  uint32_t range = 0xFFFFFFFFu;
  std::vector<uint8_t> out;
};

class RangeDecoder {
public:
  static constexpr uint32_t TOP = 1u << 24;
  static constexpr uint32_t BOT = 1u << 16;

  RangeDecoder(const uint8_t *data, size_t size) : p(data), n(size) {
    for (int i = 0; i < 4; ++i) code = (code << 8) | next_byte();
  }

  // Returns a value in [0, tot); caller maps it to a symbol via its CDF and
  // then confirms with consume().
  uint32_t decode_freq(uint32_t tot) {
    r = range / tot;
    uint32_t v = (code - low) / r;
    return v < tot ? v : tot - 1;
  }

  void consume(uint32_t cum, uint32_t freq) {
    low += r * cum;
    range = r * freq;
    while ((low ^ (low + range)) < TOP || (range < BOT && ((range = -low & (BOT - 1)), true))) {
      code = (code << 8) | next_byte();
      low <<= 8;
      range <<= 8;
    }
  }

private:
  uint8_t next_byte() {
    // Reading past the stream is legal during the final flush window; the
    // encoder's finish() wrote exactly the bytes needed for valid symbols.
    return pos < n ? p[pos++] : 0;
  }

  const uint8_t *p;
  size_t n;
  size_t pos = 0;
  uint32_t low = 0;
  uint32_t range = 0xFFFFFFFFu;
  uint32_t code = 0;
  uint32_t r = 0;
};

} // namespace gnvc
