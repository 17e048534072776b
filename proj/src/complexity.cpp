#include "frl/complexity.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

#include "frl/deflate.hpp"

namespace frl {

namespace {

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
  put_u32be(out, static_cast<uint32_t>(data.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32be(out, crc32(out.data() + start, out.size() - start));
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

// Applies filter `f` to one scanline; returns sum of absolute values of the
// filtered bytes interpreted as signed, the selection criterion.
int64_t filter_row(const uint8_t* row, const uint8_t* prior, int nbytes, int bpp, int f,
                   std::vector<uint8_t>& out) {
  out.resize(static_cast<size_t>(nbytes));
  int64_t score = 0;
  for (int i = 0; i < nbytes; ++i) {
    const int x = row[i];
    const int a = i >= bpp ? row[i - bpp] : 0;
    const int b = prior ? prior[i] : 0;
    const int c = (prior && i >= bpp) ? prior[i - bpp] : 0;
    int v = 0;
    switch (f) {
      case 0: v = x; break;
      case 1: v = x - a; break;
      case 2: v = x - b; break;
      case 3: v = x - (a + b) / 2; break;
      case 4: v = x - paeth(a, b, c); break;
    }
    const uint8_t byte = static_cast<uint8_t>(v & 0xFF);
    out[i] = byte;
    score += byte < 128 ? byte : 256 - byte;
  }
  return score;
}

}  // namespace

std::vector<uint8_t> png_encode(const Image& img) {
  if (img.h < 1 || img.w < 1) throw std::invalid_argument("png_encode: empty image");
  if (img.c != 1 && img.c != 3)
    throw std::invalid_argument("png_encode: expected 1 or 3 channels, got " +
                                std::to_string(img.c));
  const int bpp = img.c;
  const int nbytes = img.w * img.c;

  // filter every scanline, choosing the filter with minimum absolute sum
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.h) * (nbytes + 1));
  std::vector<uint8_t> best, trial;
  for (int y = 0; y < img.h; ++y) {
    const uint8_t* row = img.pix.data() + static_cast<size_t>(y) * nbytes;
    const uint8_t* prior = y > 0 ? img.pix.data() + static_cast<size_t>(y - 1) * nbytes : nullptr;
    int best_f = 0;
    int64_t best_score = -1;
    for (int f = 0; f < 5; ++f) {
      const int64_t score = filter_row(row, prior, nbytes, bpp, f, trial);
      if (best_score < 0 || score < best_score) {
        best_score = score;
        best_f = f;
        best.swap(trial);
      }
    }
    raw.push_back(static_cast<uint8_t>(best_f));
    raw.insert(raw.end(), best.begin(), best.end());
  }

  // zlib wrapper around the deflate stream
  std::vector<uint8_t> zs;
  zs.push_back(0x78);
  zs.push_back(0x01);
  const auto body = deflate(raw);
  zs.insert(zs.end(), body.begin(), body.end());
  put_u32be(zs, adler32(raw.data(), raw.size()));

  std::vector<uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<uint8_t> ihdr;
  put_u32be(ihdr, static_cast<uint32_t>(img.w));
  put_u32be(ihdr, static_cast<uint32_t>(img.h));
  ihdr.push_back(8);                          // bit depth
  ihdr.push_back(img.c == 1 ? 0 : 2);         // color type
  ihdr.push_back(0);                          // compression
  ihdr.push_back(0);                          // filter method
  ihdr.push_back(0);                          // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", zs);
  put_chunk(out, "IEND", {});
  return out;
}

ComplexityResult png_complexity(const Image& img) {
  const auto bytes = png_encode(img);
  ComplexityResult r;
  r.code_bits = 8.0 * static_cast<double>(bytes.size());
  r.bits_per_dim = r.code_bits / static_cast<double>(img.size());
  return r;
}

double complexity_score(const Image& img, bool normalize) {
  const auto r = png_complexity(img);
  return normalize ? r.bits_per_dim : r.code_bits;
}

}  // namespace frl
