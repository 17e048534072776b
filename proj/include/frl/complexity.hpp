#pragma once

#include <cstdint>
#include <vector>

#include "frl/image.hpp"

namespace frl {

// Complete PNG encoding of an 8-bit image (color type 0 for one channel,
// 2 for three). Scanline filters are chosen per row by minimum sum of
// absolute filtered values; the stream is deterministic for fixed input.
std::vector<uint8_t> png_encode(const Image& img);

struct ComplexityResult {
  double code_bits;     // 8 * encoded byte count, container included
  double bits_per_dim;  // code_bits / (h*w*c)
};

ComplexityResult png_complexity(const Image& img);

// The complexity score used by the detector: PNG code length of the raw
// (pre-augmentation) image, in bits per dimension when normalize is set,
// otherwise total bits.
double complexity_score(const Image& img, bool normalize = true);

}  // namespace frl
