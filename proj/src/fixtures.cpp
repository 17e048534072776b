#include "frl/fixtures.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "frl/data.hpp"
#include "frl/rng.hpp"

namespace frl {

namespace fs = std::filesystem;

namespace {

Image make_image(int h, int w, int c) {
  Image img;
  img.h = h;
  img.w = w;
  img.c = c;
  img.pix.assign(static_cast<size_t>(h) * w * c, 0);
  return img;
}

void write_idx(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  auto put32 = [&](uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
  };
  put32(0x00000803);
  put32(1);
  put32(static_cast<uint32_t>(img.h));
  put32(static_cast<uint32_t>(img.w));
  f.write(reinterpret_cast<const char*>(img.pix.data()),
          static_cast<std::streamsize>(img.pix.size()));
  if (!f) throw std::runtime_error("write failed for " + path);
}

// Color triple for the compression-order check: flat mid gray, the same
// picture with a faint dither on it, and full-range static.
Image constant_32() {
  Image img = make_image(32, 32, 3);
  std::fill(img.pix.begin(), img.pix.end(), 128);
  return img;
}

Image low_noise_32() {
  Image img = make_image(32, 32, 3);
  Rng rng(hash_str("low_noise_32"));
  for (auto& p : img.pix) p = static_cast<uint8_t>(124 + rng.below(9));
  return img;
}

Image noise_32() {
  Image img = make_image(32, 32, 3);
  Rng rng(hash_str("noise_32"));
  for (auto& p : img.pix) p = static_cast<uint8_t>(rng.below(256));
  return img;
}

// Gray triple at the handwriting resolution: empty page, a drawn zero, and
// static. Stored as P6 with equal channels.
Image blank_28() { return make_image(28, 28, 1); }

Image digit_28() {
  Image img = make_image(28, 28, 1);
  for (int y = 0; y < 28; ++y) {
    for (int x = 0; x < 28; ++x) {
      const double ny = (y - 13.5) / 9.0;
      const double nx = (x - 13.5) / 6.0;
      const double r2 = nx * nx + ny * ny;
      if (r2 >= 0.55 && r2 <= 1.45) img.pix[static_cast<size_t>(y) * 28 + x] = 230;
    }
  }
  return img;
}

Image noise_28() {
  Image img = make_image(28, 28, 1);
  Rng rng(hash_str("noise_28"));
  for (auto& p : img.pix) p = static_cast<uint8_t>(rng.below(256));
  return img;
}

Image tiny_2x2() {
  Image img = make_image(2, 2, 1);
  img.pix = {0, 64, 128, 255};
  return img;
}

Image two_pixels() {
  Image img = make_image(1, 2, 3);
  img.pix = {255, 0, 0, 0, 0, 255};
  return img;
}

}  // namespace

void write_fixtures(const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_ppm((dir / "constant_32.ppm").string(), constant_32());
  write_ppm((dir / "low_noise_32.ppm").string(), low_noise_32());
  write_ppm((dir / "noise_32.ppm").string(), noise_32());
  write_ppm((dir / "blank_28.ppm").string(), blank_28());
  write_ppm((dir / "digit_28.ppm").string(), digit_28());
  write_ppm((dir / "noise_28.ppm").string(), noise_28());
  write_idx((dir / "tiny.idx").string(), tiny_2x2());
  write_ppm((dir / "two_pixels.ppm").string(), two_pixels());
}

}  // namespace frl
