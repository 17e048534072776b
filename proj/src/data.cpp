#include "frl/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "frl/frequency.hpp"
#include "frl/rng.hpp"

namespace frl {

namespace {

uint32_t read_u32be(std::istream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw std::runtime_error("idx: truncated header in " + path);
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& path, const std::string& name, int64_t limit) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("idx: cannot open " + path);
  const uint32_t magic = read_u32be(f, path);
  if (magic != 0x00000803u)
    throw std::runtime_error("idx: bad magic in " + path + " (expected image magic 0x00000803)");
  const int64_t n = read_u32be(f, path);
  const int64_t h = read_u32be(f, path);
  const int64_t w = read_u32be(f, path);
  if (n < 1 || h < 1 || w < 1 || h > 4096 || w > 4096)
    throw std::runtime_error("idx: implausible dimensions in " + path);
  const int64_t take = (limit > 0 && limit < n) ? limit : n;
  Dataset ds;
  ds.name = name.empty() ? std::filesystem::path(path).stem().string() : name;
  ds.images.reserve(static_cast<size_t>(take));
  for (int64_t i = 0; i < take; ++i) {
    Image img(static_cast<int>(h), static_cast<int>(w), 1);
    f.read(reinterpret_cast<char*>(img.pix.data()), static_cast<std::streamsize>(img.pix.size()));
    if (!f) throw std::runtime_error("idx: payload shorter than header implies in " + path);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ppm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("ppm: " + path + " is not a P6 file");
  auto next_int = [&]() {
    // skip whitespace and # comments between header fields
    int v;
    while (true) {
      f >> std::ws;
      if (f.peek() == '#') {
        std::string line;
        std::getline(f, line);
        continue;
      }
      if (!(f >> v)) throw std::runtime_error("ppm: malformed header in " + path);
      return v;
    }
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w < 1 || h < 1) throw std::runtime_error("ppm: bad dimensions in " + path);
  if (maxval != 255) throw std::runtime_error("ppm: only maxval 255 supported, " + path);
  f.get();  // single whitespace byte before payload
  Image img(h, w, 3);
  f.read(reinterpret_cast<char*>(img.pix.data()), static_cast<std::streamsize>(img.pix.size()));
  if (!f) throw std::runtime_error("ppm: truncated payload in " + path);
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  const Image rgb = img.c == 3 ? img : to_rgb(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("ppm: cannot open " + path + " for writing");
  f << "P6\n" << rgb.w << " " << rgb.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.pix.data()), static_cast<std::streamsize>(rgb.pix.size()));
  if (!f) throw std::runtime_error("ppm: write failed for " + path);
}

Dataset load_ppm_dir(const std::string& dir, const std::string& name) {
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error("ppm dir: " + dir + " is not a directory");
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path().string());
  }
  if (files.empty()) throw std::runtime_error("ppm dir: no .ppm files in " + dir);
  std::sort(files.begin(), files.end());
  Dataset ds;
  ds.name = name.empty() ? std::filesystem::path(dir).filename().string() : name;
  for (const auto& f : files) {
    Image img = read_ppm(f);
    if (!ds.images.empty() && (img.h != ds.h() || img.w != ds.w()))
      throw std::runtime_error("ppm dir: mixed resolutions in " + dir + " (at " + f + ")");
    ds.images.push_back(std::move(img));
  }
  return ds;
}

FloatImage resize_bilinear(const FloatImage& img, int oh, int ow) {
  if (oh < 1 || ow < 1) throw std::invalid_argument("resize: target dims must be positive");
  if (oh == img.h && ow == img.w) return img;
  FloatImage out(oh, ow, img.c);
  const double sy = oh > 1 ? static_cast<double>(img.h - 1) / (oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(img.w - 1) / (ow - 1) : 0.0;
  for (int y = 0; y < oh; ++y) {
    const double fy = y * sy;
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < ow; ++x) {
      const double fx = x * sx;
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < img.c; ++ch) {
        const double top = (1.0 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch);
        const double bot = (1.0 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch);
        out.at(y, x, ch) = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

Image resize(const Image& img, int oh, int ow) {
  if (oh == img.h && ow == img.w) return img;
  return to_levels(resize_bilinear(normalized(img), oh, ow));
}

Dataset synth_ood(const std::string& kind, int count, int h, int w, int c, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("synth_ood: count must be positive");
  if (kind != "noise" && kind != "constant")
    throw std::invalid_argument("synth_ood: unknown kind '" + kind + "' (expected noise or constant)");
  Dataset ds;
  ds.name = kind;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    Image img(h, w, c);
    if (kind == "noise") {
      for (auto& p : img.pix) p = static_cast<uint8_t>(rng.below(256));
    } else {
      const uint8_t level = static_cast<uint8_t>(rng.below(256));
      std::fill(img.pix.begin(), img.pix.end(), level);
    }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

Image to_rgb(const Image& gray) {
  if (gray.c != 1) throw std::invalid_argument("to_rgb: input already has 3 channels");
  Image out(gray.h, gray.w, 3);
  for (int i = 0; i < gray.h * gray.w; ++i) {
    const uint8_t v = gray.pix[static_cast<size_t>(i)];
    out.pix[static_cast<size_t>(i) * 3 + 0] = v;
    out.pix[static_cast<size_t>(i) * 3 + 1] = v;
    out.pix[static_cast<size_t>(i) * 3 + 2] = v;
  }
  return out;
}

Image to_gray(const Image& rgb) {
  if (rgb.c != 3) throw std::invalid_argument("to_gray: expected a 3-channel image");
  Image out(rgb.h, rgb.w, 1);
  for (int i = 0; i < rgb.h * rgb.w; ++i) {
    const double v = 0.299 * rgb.pix[static_cast<size_t>(i) * 3 + 0] +
                     0.587 * rgb.pix[static_cast<size_t>(i) * 3 + 1] +
                     0.114 * rgb.pix[static_cast<size_t>(i) * 3 + 2];
    out.pix[static_cast<size_t>(i)] = static_cast<uint8_t>(round_half_away(v));
  }
  return out;
}

Image adapt_image(const Image& img, int h, int w, int c) {
  Image out = img;
  if (out.c != c) {
    if (out.c == 1 && c == 3)
      out = to_rgb(out);
    else if (out.c == 3 && c == 1)
      out = to_gray(out);
    else
      throw std::invalid_argument("adapt_image: cannot map " + std::to_string(out.c) + " to " +
                                  std::to_string(c) + " channels");
  }
  if (out.h != h || out.w != w) out = resize(out, h, w);
  return out;
}

}  // namespace frl
