#include "frl/frequency.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace frl {

namespace {

// mirror index with the border pixel repeated: -1 -> 0, n -> n-1. Under this
// padding every source pixel collects total kernel weight one (for symmetric
// normalized kernels), so blurring cannot shift the image mean.
int64_t reflect_edge(int64_t i, int64_t n) {
  if (i < 0) return -1 - i;
  if (i >= n) return 2 * n - 1 - i;
  return i;
}

double clamp_unit(double v) { return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

FreqMethod freq_method_from_string(const std::string& s) {
  if (s == "gaussian") return FreqMethod::kGaussian;
  if (s == "fft") return FreqMethod::kFft;
  if (s == "haar") return FreqMethod::kHaar;
  throw std::invalid_argument("unknown frequency method '" + s + "' (expected gaussian, fft or haar)");
}

std::string freq_method_name(FreqMethod m) {
  switch (m) {
    case FreqMethod::kGaussian: return "gaussian";
    case FreqMethod::kFft: return "fft";
    case FreqMethod::kHaar: return "haar";
  }
  return "?";
}

void FreqConfig::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw std::invalid_argument("freq.kernel_size must be odd and >= 1, got " +
                                std::to_string(kernel_size));
  if (sigma < 0.0) throw std::invalid_argument("freq.sigma must be >= 0");
  if (fft_radius <= 0.0 || fft_radius >= 1.0)
    throw std::invalid_argument("freq.fft_radius must lie in (0,1)");
  if (haar_levels < 1) throw std::invalid_argument("freq.haar_levels must be >= 1");
}

std::vector<double> gaussian_kernel(int k, double sigma) {
  if (k < 1 || k % 2 == 0)
    throw std::invalid_argument("gaussian_kernel: size must be odd and >= 1, got " +
                                std::to_string(k));
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
  std::vector<double> w(static_cast<size_t>(k) * k);
  const int r = k / 2;
  double total = 0.0;
  for (int m = -r; m <= r; ++m) {
    for (int n = -r; n <= r; ++n) {
      const double v = std::exp(-(static_cast<double>(m) * m + static_cast<double>(n) * n) /
                                (2.0 * sigma * sigma));
      w[static_cast<size_t>(m + r) * k + (n + r)] = v;
      total += v;
    }
  }
  for (double& v : w) v /= total;
  return w;
}

FloatImage rgb2gray(const FloatImage& x) {
  if (x.c == 1) return x;
  if (x.c != 3)
    throw std::invalid_argument("rgb2gray: expected 1 or 3 channels, got " + std::to_string(x.c));
  FloatImage out(x.h, x.w, 1);
  for (int y = 0; y < x.h; ++y)
    for (int xx = 0; xx < x.w; ++xx)
      out.at(y, xx, 0) =
          0.299 * x.at(y, xx, 0) + 0.587 * x.at(y, xx, 1) + 0.114 * x.at(y, xx, 2);
  return out;
}

FloatImage blur(const FloatImage& gray, const std::vector<double>& kernel, int k) {
  if (gray.c != 1) throw std::invalid_argument("blur: expected a single-channel image");
  if (static_cast<int>(kernel.size()) != k * k)
    throw std::invalid_argument("blur: kernel size does not match k");
  const int r = k / 2;
  if (r > gray.h - 1 || r > gray.w - 1)
    throw std::invalid_argument("blur: kernel radius exceeds image size");
  FloatImage out(gray.h, gray.w, 1);
  for (int y = 0; y < gray.h; ++y) {
    for (int x = 0; x < gray.w; ++x) {
      // accumulate deviations from the centre pixel instead of raw taps: on a
      // locally constant patch every term is exactly zero, so a constant image
      // blurs to itself with no rounding drift (the two forms agree to one ulp
      // otherwise, since the kernel sums to one)
      const double centre = gray.at(y, x, 0);
      double acc = 0.0;
      for (int m = -r; m <= r; ++m) {
        const int64_t sy = reflect_edge(y + m, gray.h);
        for (int n = -r; n <= r; ++n) {
          const int64_t sx = reflect_edge(x + n, gray.w);
          acc += kernel[static_cast<size_t>(m + r) * k + (n + r)] * (gray.at(sy, sx, 0) - centre);
        }
      }
      out.at(y, x, 0) = centre + acc;
    }
  }
  return out;
}

std::vector<std::complex<double>> dft2(const FloatImage& gray) {
  if (gray.c != 1) throw std::invalid_argument("dft2: expected a single-channel image");
  const int h = gray.h, w = gray.w;
  using cd = std::complex<double>;
  std::vector<cd> rows(static_cast<size_t>(h) * w), out(static_cast<size_t>(h) * w);
  const double inv_sw = 1.0 / std::sqrt(static_cast<double>(w));
  const double inv_sh = 1.0 / std::sqrt(static_cast<double>(h));
  for (int y = 0; y < h; ++y) {
    for (int u = 0; u < w; ++u) {
      cd acc(0.0, 0.0);
      for (int x = 0; x < w; ++x) {
        const double ang = -2.0 * std::numbers::pi * u * x / w;
        acc += gray.at(y, x, 0) * cd(std::cos(ang), std::sin(ang));
      }
      rows[static_cast<size_t>(y) * w + u] = acc * inv_sw;
    }
  }
  for (int u = 0; u < w; ++u) {
    for (int v = 0; v < h; ++v) {
      cd acc(0.0, 0.0);
      for (int y = 0; y < h; ++y) {
        const double ang = -2.0 * std::numbers::pi * v * y / h;
        acc += rows[static_cast<size_t>(y) * w + u] * cd(std::cos(ang), std::sin(ang));
      }
      out[static_cast<size_t>(v) * w + u] = acc * inv_sh;
    }
  }
  return out;
}

FloatImage idft2(const std::vector<std::complex<double>>& coef, int h, int w) {
  if (static_cast<int>(coef.size()) != h * w) throw std::invalid_argument("idft2: size mismatch");
  using cd = std::complex<double>;
  std::vector<cd> cols(static_cast<size_t>(h) * w);
  const double inv_sw = 1.0 / std::sqrt(static_cast<double>(w));
  const double inv_sh = 1.0 / std::sqrt(static_cast<double>(h));
  for (int u = 0; u < w; ++u) {
    for (int y = 0; y < h; ++y) {
      cd acc(0.0, 0.0);
      for (int v = 0; v < h; ++v) {
        const double ang = 2.0 * std::numbers::pi * v * y / h;
        acc += coef[static_cast<size_t>(v) * w + u] * cd(std::cos(ang), std::sin(ang));
      }
      cols[static_cast<size_t>(y) * w + u] = acc * inv_sh;
    }
  }
  FloatImage out(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      cd acc(0.0, 0.0);
      for (int u = 0; u < w; ++u) {
        const double ang = 2.0 * std::numbers::pi * u * x / w;
        acc += cols[static_cast<size_t>(y) * w + u] * cd(std::cos(ang), std::sin(ang));
      }
      out.at(y, x, 0) = acc.real() * inv_sw;
    }
  }
  return out;
}

namespace {

void haar_pairs(std::vector<double>& buf, std::vector<double>& tmp, int n) {
  // one stage along a length-n strip already loaded in buf[0..n)
  const double inv_s2 = 1.0 / std::numbers::sqrt2;
  for (int i = 0; i < n / 2; ++i) {
    tmp[i] = (buf[2 * i] + buf[2 * i + 1]) * inv_s2;
    tmp[n / 2 + i] = (buf[2 * i] - buf[2 * i + 1]) * inv_s2;
  }
  std::copy_n(tmp.begin(), n, buf.begin());
}

void haar_pairs_inv(std::vector<double>& buf, std::vector<double>& tmp, int n) {
  const double inv_s2 = 1.0 / std::numbers::sqrt2;
  for (int i = 0; i < n / 2; ++i) {
    tmp[2 * i] = (buf[i] + buf[n / 2 + i]) * inv_s2;
    tmp[2 * i + 1] = (buf[i] - buf[n / 2 + i]) * inv_s2;
  }
  std::copy_n(tmp.begin(), n, buf.begin());
}

void check_haar_dims(int h, int w, int levels) {
  const int f = 1 << levels;
  if (h % f != 0 || w % f != 0)
    throw std::invalid_argument("haar: 2^levels must divide both image sides (got " +
                                std::to_string(h) + "x" + std::to_string(w) + ", levels " +
                                std::to_string(levels) + ")");
}

}  // namespace

std::vector<double> haar2(const FloatImage& gray, int levels) {
  if (gray.c != 1) throw std::invalid_argument("haar2: expected a single-channel image");
  check_haar_dims(gray.h, gray.w, levels);
  const int h = gray.h, w = gray.w;
  std::vector<double> coef = gray.v;
  std::vector<double> buf(std::max(h, w)), tmp(std::max(h, w));
  for (int s = 0; s < levels; ++s) {
    const int hh = h >> s, ww = w >> s;
    for (int y = 0; y < hh; ++y) {
      for (int x = 0; x < ww; ++x) buf[x] = coef[static_cast<size_t>(y) * w + x];
      haar_pairs(buf, tmp, ww);
      for (int x = 0; x < ww; ++x) coef[static_cast<size_t>(y) * w + x] = buf[x];
    }
    for (int x = 0; x < ww; ++x) {
      for (int y = 0; y < hh; ++y) buf[y] = coef[static_cast<size_t>(y) * w + x];
      haar_pairs(buf, tmp, hh);
      for (int y = 0; y < hh; ++y) coef[static_cast<size_t>(y) * w + x] = buf[y];
    }
  }
  return coef;
}

FloatImage ihaar2(const std::vector<double>& coef, int h, int w, int levels) {
  if (static_cast<int>(coef.size()) != h * w) throw std::invalid_argument("ihaar2: size mismatch");
  check_haar_dims(h, w, levels);
  FloatImage out(h, w, 1);
  out.v = coef;
  std::vector<double> buf(std::max(h, w)), tmp(std::max(h, w));
  for (int s = levels - 1; s >= 0; --s) {
    const int hh = h >> s, ww = w >> s;
    for (int x = 0; x < ww; ++x) {
      for (int y = 0; y < hh; ++y) buf[y] = out.v[static_cast<size_t>(y) * w + x];
      haar_pairs_inv(buf, tmp, hh);
      for (int y = 0; y < hh; ++y) out.v[static_cast<size_t>(y) * w + x] = buf[y];
    }
    for (int y = 0; y < hh; ++y) {
      for (int x = 0; x < ww; ++x) buf[x] = out.v[static_cast<size_t>(y) * w + x];
      haar_pairs_inv(buf, tmp, ww);
      for (int x = 0; x < ww; ++x) out.v[static_cast<size_t>(y) * w + x] = buf[x];
    }
  }
  return out;
}

FloatImage high_freq(const FloatImage& x, const FreqConfig& cfg) {
  cfg.validate();
  const FloatImage gray = rgb2gray(x);
  FloatImage res(gray.h, gray.w, 1);
  switch (cfg.method) {
    case FreqMethod::kGaussian: {
      const auto kernel = gaussian_kernel(cfg.kernel_size, cfg.effective_sigma());
      const FloatImage low = blur(gray, kernel, cfg.kernel_size);
      for (size_t i = 0; i < res.v.size(); ++i) res.v[i] = gray.v[i] - low.v[i];
      break;
    }
    case FreqMethod::kFft: {
      auto coef = dft2(gray);
      const int h = gray.h, w = gray.w;
      // zero every coefficient whose radial frequency, as a fraction of the
      // Nyquist radius, falls below the cutoff; DC always qualifies
      for (int v = 0; v < h; ++v) {
        const double fy = (v <= h / 2 ? v : v - h) / (h / 2.0);
        for (int u = 0; u < w; ++u) {
          const double fx = (u <= w / 2 ? u : u - w) / (w / 2.0);
          if (std::sqrt(fy * fy + fx * fx) < cfg.fft_radius)
            coef[static_cast<size_t>(v) * w + u] = 0.0;
        }
      }
      res = idft2(coef, h, w);
      break;
    }
    case FreqMethod::kHaar: {
      auto coef = haar2(gray, cfg.haar_levels);
      const int bh = gray.h >> cfg.haar_levels, bw = gray.w >> cfg.haar_levels;
      for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x) coef[static_cast<size_t>(y) * gray.w + x] = 0.0;
      res = ihaar2(coef, gray.h, gray.w, cfg.haar_levels);
      break;
    }
  }
  for (double& v : res.v) v = clamp_unit(v);
  return res;
}

FloatImage augment(const FloatImage& x, const FreqConfig& cfg) {
  const FloatImage res = high_freq(x, cfg);
  FloatImage out(x.h, x.w, x.c + 1);
  for (int y = 0; y < x.h; ++y) {
    for (int xx = 0; xx < x.w; ++xx) {
      for (int ch = 0; ch < x.c; ++ch) out.at(y, xx, ch) = x.at(y, xx, ch);
      out.at(y, xx, x.c) = (res.at(y, xx, 0) + 1.0) / 2.0;
    }
  }
  return out;
}

}  // namespace frl
