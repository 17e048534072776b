#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace frl {

// 8-bit image, HWC row-major. c is 1 (grayscale) or 3 (RGB).
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<uint8_t> pix;

  Image() = default;
  Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), pix(static_cast<size_t>(h_) * w_ * c_, 0) {}

  uint8_t& at(int y, int x, int ch) { return pix[(static_cast<size_t>(y) * w + x) * c + ch]; }
  uint8_t at(int y, int x, int ch) const { return pix[(static_cast<size_t>(y) * w + x) * c + ch]; }
  size_t size() const { return pix.size(); }
};

// Real-valued image, HWC row-major, double precision. The frequency pipeline
// runs in doubles; values are in [0,1] for pixel content and [-1,1] for the
// high-frequency residual.
struct FloatImage {
  int h = 0, w = 0, c = 0;
  std::vector<double> v;

  FloatImage() = default;
  FloatImage(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, 0.0) {}

  double& at(int y, int x, int ch) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
  double at(int y, int x, int ch) const { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
  size_t size() const { return v.size(); }
};

inline FloatImage normalized(const Image& img) {
  FloatImage out(img.h, img.w, img.c);
  for (size_t i = 0; i < img.pix.size(); ++i) out.v[i] = img.pix[i] / 255.0;
  return out;
}

// round half away from zero, the convention used for every value->level map
inline int64_t round_half_away(double v) {
  return static_cast<int64_t>(v >= 0 ? std::floor(v + 0.5) : std::ceil(v - 0.5));
}

inline Image to_levels(const FloatImage& img) {
  Image out(img.h, img.w, img.c);
  for (size_t i = 0; i < img.v.size(); ++i) {
    const double x = img.v[i];
    if (x < -1e-9 || x > 1.0 + 1e-9)
      throw std::invalid_argument("to_levels: value " + std::to_string(x) + " outside [0,1]");
    int64_t lv = round_half_away(x * 255.0);
    if (lv < 0) lv = 0;
    if (lv > 255) lv = 255;
    out.pix[i] = static_cast<uint8_t>(lv);
  }
  return out;
}

}  // namespace frl
