#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frl/image.hpp"

namespace frl {

struct Dataset {
  std::string name;
  std::string split;  // train or test
  std::vector<Image> images;

  int h() const { return images.empty() ? 0 : images.front().h; }
  int w() const { return images.empty() ? 0 : images.front().w; }
  int c() const { return images.empty() ? 0 : images.front().c; }
};

// IDX loader (big-endian container used by the MNIST family). Accepts the
// 3-dimensional unsigned-byte image magic 0x00000803 only.
Dataset load_idx(const std::string& path, const std::string& name = "", int64_t limit = 0);

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// All *.ppm files in the directory, lexicographic by filename.
Dataset load_ppm_dir(const std::string& dir, const std::string& name = "");

// Bilinear resize on the continuous [0,1] view. The corner convention maps
// output sample centers by the (in-1)/(out-1) edge-aligned rule, degenerating
// to nearest for one-pixel outputs.
FloatImage resize_bilinear(const FloatImage& img, int oh, int ow);
Image resize(const Image& img, int oh, int ow);

// Procedural OOD sets: "noise" draws every pixel-channel i.i.d. uniform in
// 0..255, "constant" draws one uniform level per image.
Dataset synth_ood(const std::string& kind, int count, int h, int w, int c, uint64_t seed);

Image to_rgb(const Image& gray);
Image to_gray(const Image& rgb);

// Reshapes a dataset image to the model's data resolution: bilinear resize
// plus gray<->color channel adaptation.
Image adapt_image(const Image& img, int h, int w, int c);

}  // namespace frl
