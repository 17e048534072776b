#pragma once

#include <string>

namespace frl {

// Writes the deterministic test images used across the suite:
//   constant_32.ppm / low_noise_32.ppm / noise_32.ppm   32x32 color triple
//   blank_28.ppm / digit_28.ppm / noise_28.ppm          28x28 gray triple
//   tiny.idx                                            one 2x2 IDX image
//   two_pixels.ppm                                      2x1 red/blue pair
// Reruns produce byte-identical files.
void write_fixtures(const std::string& out_dir);

}  // namespace frl
