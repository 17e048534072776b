#include "frl/deflate.hpp"

#include <array>
#include <cstring>

namespace frl {

namespace {

// matcher parameters; changing any of these changes every emitted stream
constexpr int kMinMatch = 3;
constexpr int kMaxMatch = 258;
constexpr int kWindow = 32768;
constexpr int kHashBits = 15;
constexpr int kMaxChain = 32;

class BitWriter {
 public:
  // n bits of v, LSB first (header fields, extra bits)
  void put_bits(uint32_t v, int n) {
    acc_ |= static_cast<uint64_t>(v & ((1u << n) - 1)) << fill_;
    fill_ += n;
    while (fill_ >= 8) {
      out_.push_back(static_cast<uint8_t>(acc_ & 0xFF));
      acc_ >>= 8;
      fill_ -= 8;
    }
  }

  // n-bit Huffman code, MSB first
  void put_code(uint32_t code, int n) {
    uint32_t rev = 0;
    for (int i = 0; i < n; ++i) rev |= ((code >> i) & 1u) << (n - 1 - i);
    put_bits(rev, n);
  }

  std::vector<uint8_t> finish() {
    if (fill_ > 0) {
      out_.push_back(static_cast<uint8_t>(acc_ & 0xFF));
      acc_ = 0;
      fill_ = 0;
    }
    return std::move(out_);
  }

 private:
  std::vector<uint8_t> out_;
  uint64_t acc_ = 0;
  int fill_ = 0;
};

void put_literal(BitWriter& bw, int sym) {
  if (sym < 144)
    bw.put_code(0x30 + sym, 8);
  else
    bw.put_code(0x190 + (sym - 144), 9);
}

void put_litlen_sym(BitWriter& bw, int sym) {
  // symbols 256..287 of the fixed table
  if (sym < 280)
    bw.put_code(sym - 256, 7);
  else
    bw.put_code(0xC0 + (sym - 280), 8);
}

struct LengthCode {
  int sym, extra_bits, base;
};

LengthCode length_code(int len) {
  static constexpr std::array<int, 29> base = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,
                                               15, 17, 19, 23, 27, 31, 35, 43, 51,  59,
                                               67, 83, 99, 115, 131, 163, 195, 227, 258};
  static constexpr std::array<int, 29> extra = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                                2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
  int i = 28;
  while (base[i] > len) --i;
  return {257 + i, extra[i], base[i]};
}

struct DistCode {
  int sym, extra_bits, base;
};

DistCode dist_code(int dist) {
  static constexpr std::array<int, 30> base = {1,    2,    3,    4,    5,    7,     9,    13,
                                               17,   25,   33,   49,   65,   97,    129,  193,
                                               257,  385,  513,  769,  1025, 1537,  2049, 3073,
                                               4097, 6145, 8193, 12289, 16385, 24577};
  static constexpr std::array<int, 30> extra = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5, 6,
                                                6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};
  int i = 29;
  while (base[i] > dist) --i;
  return {i, extra[i], base[i]};
}

uint32_t hash3(const uint8_t* p) {
  const uint32_t v = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                     (static_cast<uint32_t>(p[2]) << 16);
  return (v * 2654435761u) >> (32 - kHashBits);
}

// stored (btype 00) blocks: 5 header bytes per block of up to 65535 bytes,
// then the raw bytes verbatim
std::vector<uint8_t> stored_stream(const std::vector<uint8_t>& raw) {
  constexpr size_t kMaxStored = 65535;
  std::vector<uint8_t> out;
  size_t pos = 0;
  do {
    const size_t len = std::min(kMaxStored, raw.size() - pos);
    const bool last = pos + len == raw.size();
    out.push_back(last ? 1 : 0);  // BFINAL, BTYPE 00, byte-aligned padding
    out.push_back(static_cast<uint8_t>(len & 0xFF));
    out.push_back(static_cast<uint8_t>(len >> 8));
    out.push_back(static_cast<uint8_t>(~len & 0xFF));
    out.push_back(static_cast<uint8_t>((~len >> 8) & 0xFF));
    out.insert(out.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
               raw.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  } while (pos < raw.size());
  return out;
}

std::vector<uint8_t> fixed_stream(const std::vector<uint8_t>& raw) {
  BitWriter bw;
  bw.put_bits(1, 1);  // final block
  bw.put_bits(1, 2);  // fixed Huffman

  const size_t n = raw.size();
  std::vector<int32_t> head(1u << kHashBits, -1);
  std::vector<int32_t> prev(n, -1);

  size_t pos = 0;
  while (pos < n) {
    int best_len = 0, best_dist = 0;
    if (pos + kMinMatch <= n) {
      const uint32_t h = hash3(raw.data() + pos);
      int32_t cand = head[h];
      int chain = kMaxChain;
      const int max_len = static_cast<int>(std::min<size_t>(kMaxMatch, n - pos));
      while (cand >= 0 && chain-- > 0) {
        const int dist = static_cast<int>(pos) - cand;
        if (dist > kWindow) break;
        if (raw[cand + best_len] == raw[pos + best_len] || best_len == 0) {
          int len = 0;
          while (len < max_len && raw[cand + len] == raw[pos + len]) ++len;
          if (len > best_len) {
            best_len = len;
            best_dist = dist;
            if (len >= max_len) break;
          }
        }
        cand = prev[cand];
      }
    }
    if (best_len >= kMinMatch) {
      const auto lc = length_code(best_len);
      put_litlen_sym(bw, lc.sym);
      if (lc.extra_bits > 0) bw.put_bits(static_cast<uint32_t>(best_len - lc.base), lc.extra_bits);
      const auto dc = dist_code(best_dist);
      bw.put_code(static_cast<uint32_t>(dc.sym), 5);
      if (dc.extra_bits > 0) bw.put_bits(static_cast<uint32_t>(best_dist - dc.base), dc.extra_bits);
      const size_t end = std::min(pos + static_cast<size_t>(best_len), n >= 2 ? n - 2 : 0);
      for (size_t i = pos; i < end; ++i) {
        const uint32_t h = hash3(raw.data() + i);
        prev[i] = head[h];
        head[h] = static_cast<int32_t>(i);
      }
      pos += static_cast<size_t>(best_len);
    } else {
      put_literal(bw, raw[pos]);
      if (pos + kMinMatch <= n) {
        const uint32_t h = hash3(raw.data() + pos);
        prev[pos] = head[h];
        head[h] = static_cast<int32_t>(pos);
      }
      ++pos;
    }
  }
  put_litlen_sym(bw, 256);  // end of block
  return bw.finish();
}

}  // namespace

std::vector<uint8_t> deflate(const std::vector<uint8_t>& raw) {
  auto fixed = fixed_stream(raw);
  auto stored = stored_stream(raw);
  // ties keep the Huffman stream; either choice works, it just has to be fixed
  return fixed.size() <= stored.size() ? fixed : stored;
}

uint32_t crc32(const uint8_t* data, size_t n, uint32_t seed) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = seed ^ 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

uint32_t adler32(const uint8_t* data, size_t n) {
  constexpr uint32_t kMod = 65521;
  uint32_t a = 1, b = 0;
  for (size_t i = 0; i < n; ++i) {
    a = (a + data[i]) % kMod;
    b = (b + a) % kMod;
  }
  return (b << 16) | a;
}

}  // namespace frl
