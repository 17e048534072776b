#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "frl/frequency.hpp"
#include "frl/image.hpp"
#include "frl/rng.hpp"

using frl::FloatImage;
using frl::FreqConfig;
using frl::FreqMethod;
using frl::Rng;

namespace {

FloatImage rand_image(int h, int w, int c, uint64_t seed) {
  FloatImage img(h, w, c);
  Rng rng(seed);
  for (auto& v : img.v) v = rng.uniform();
  return img;
}

FloatImage constant_image(int h, int w, int c, double value) {
  FloatImage img(h, w, c);
  for (auto& v : img.v) v = value;
  return img;
}

double image_mean(const FloatImage& img) {
  double total = 0.0;
  for (const double v : img.v) total += v;
  return total / static_cast<double>(img.v.size());
}

// direct-sum convolution oracle: same mirror convention as the library, but
// plain accumulation and no shortcuts
FloatImage naive_blur(const FloatImage& g, const std::vector<double>& kernel, int k) {
  auto mirror = [](int i, int n) {
    if (i < 0) return -1 - i;
    if (i >= n) return 2 * n - 1 - i;
    return i;
  };
  const int r = k / 2;
  FloatImage out(g.h, g.w, 1);
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      double acc = 0.0;
      for (int m = -r; m <= r; ++m)
        for (int n = -r; n <= r; ++n)
          acc += kernel[static_cast<size_t>(m + r) * k + (n + r)] *
                 g.at(mirror(y + m, g.h), mirror(x + n, g.w), 0);
      out.at(y, x, 0) = acc;
    }
  return out;
}

// dense unitary DFT oracle: one direct O(N^2) transform instead of the
// library's row-column factorization
std::vector<std::complex<double>> dense_dft(const FloatImage& g) {
  using cd = std::complex<double>;
  const int h = g.h, w = g.w;
  std::vector<cd> out(static_cast<size_t>(h) * w);
  const double norm = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      cd acc(0.0, 0.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double ang =
              -2.0 * std::numbers::pi * (static_cast<double>(v) * y / h + static_cast<double>(u) * x / w);
          acc += g.at(y, x, 0) * cd(std::cos(ang), std::sin(ang));
        }
      out[static_cast<size_t>(v) * w + u] = acc * norm;
    }
  return out;
}

FloatImage dense_idft(const std::vector<std::complex<double>>& coef, int h, int w) {
  using cd = std::complex<double>;
  FloatImage out(h, w, 1);
  const double norm = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      cd acc(0.0, 0.0);
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          const double ang =
              2.0 * std::numbers::pi * (static_cast<double>(v) * y / h + static_cast<double>(u) * x / w);
          acc += coef[static_cast<size_t>(v) * w + u] * cd(std::cos(ang), std::sin(ang));
        }
      out.at(y, x, 0) = acc.real() * norm;
    }
  return out;
}

}  // namespace

TEST_CASE("gaussian kernel matches direct formula evaluation") {
  // k=3, sigma=0.75: exp(-d^2/1.125) at squared distances {0,1,2}, normalized
  const auto k3 = frl::gaussian_kernel(3, 0.75);
  REQUIRE(k3.size() == 9);
  CHECK(std::fabs(k3[4] - 0.30115924411820216) < 1e-12);  // center
  CHECK(std::fabs(k3[1] - 0.1238102666568473) < 1e-12);   // edge
  CHECK(std::fabs(k3[0] - 0.050899922313602151) < 1e-12); // corner
  // full symmetry group of the square: identical arguments give identical bits
  CHECK(k3[0] == k3[2]);
  CHECK(k3[0] == k3[6]);
  CHECK(k3[0] == k3[8]);
  CHECK(k3[1] == k3[3]);
  CHECK(k3[1] == k3[5]);
  CHECK(k3[1] == k3[7]);
  for (const double v : k3) CHECK(k3[4] >= v);
}

TEST_CASE("gaussian kernel normalizes for any size and width") {
  for (const int k : {1, 3, 5, 7, 9, 11}) {
    for (const double sigma : {0.1, 0.75, 1.25, 3.0, 25.0}) {
      const auto kern = frl::gaussian_kernel(k, sigma);
      double total = 0.0;
      for (const double v : kern) total += v;
      CHECK(std::fabs(total - 1.0) < 1e-12);
    }
  }
  const auto unit = frl::gaussian_kernel(1, 2.0);
  REQUIRE(unit.size() == 1);
  CHECK(unit[0] == 1.0);

  CHECK_THROWS_AS((void)frl::gaussian_kernel(2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)frl::gaussian_kernel(0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)frl::gaussian_kernel(-3, 1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)frl::gaussian_kernel(3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)frl::gaussian_kernel(3, -1.0), std::invalid_argument);
}

TEST_CASE("blur agrees with a naive direct-sum oracle") {
  Rng seeds(100);
  for (const int k : {1, 3, 5}) {
    const auto kern = frl::gaussian_kernel(k, k / 4.0 + 0.25);
    for (const auto [h, w] : {std::pair{8, 8}, {5, 9}, {3, 3}, {7, 4}}) {
      const FloatImage img = rand_image(h, w, 1, seeds.below(1u << 30));
      const FloatImage got = frl::blur(img, kern, k);
      const FloatImage want = naive_blur(img, kern, k);
      for (size_t i = 0; i < got.v.size(); ++i) CHECK(std::fabs(got.v[i] - want.v[i]) < 1e-12);
    }
  }
}

TEST_CASE("blur is exact on constants and stamps the kernel on an impulse") {
  const auto kern = frl::gaussian_kernel(3, 0.75);
  SUBCASE("constant in, the same constant out") {
    for (const double c : {0.0, 0.25, 1.0, 0.7431}) {
      const FloatImage img = constant_image(6, 7, 1, c);
      const FloatImage out = frl::blur(img, kern, 3);
      for (const double v : out.v) CHECK(v == c);
    }
  }
  SUBCASE("impulse reproduces the kernel") {
    FloatImage img = constant_image(11, 11, 1, 0.0);
    img.at(5, 5, 0) = 1.0;
    const FloatImage out = frl::blur(img, kern, 3);
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 11; ++x) {
        const int m = y - 5, n = x - 5;
        const double want =
            (std::abs(m) <= 1 && std::abs(n) <= 1) ? kern[static_cast<size_t>(m + 1) * 3 + (n + 1)] : 0.0;
        CHECK(std::fabs(out.at(y, x, 0) - want) < 1e-12);
      }
  }
}

TEST_CASE("blur preserves the image mean") {
  for (const int k : {3, 5, 9}) {
    const auto kern = frl::gaussian_kernel(k, k / 4.0);
    for (uint64_t seed = 0; seed < 8; ++seed) {
      const FloatImage img = rand_image(16, 13, 1, 900 + seed);
      const FloatImage out = frl::blur(img, kern, k);
      CHECK(std::fabs(image_mean(out) - image_mean(img)) < 1e-12);
    }
  }
}

TEST_CASE("blur rejects bad inputs") {
  const auto kern = frl::gaussian_kernel(3, 0.75);
  CHECK_THROWS_AS((void)frl::blur(rand_image(4, 4, 3, 1), kern, 3), std::invalid_argument);
  CHECK_THROWS_AS((void)frl::blur(rand_image(4, 4, 1, 1), kern, 5), std::invalid_argument);
  const auto wide = frl::gaussian_kernel(11, 2.0);
  CHECK_THROWS_AS((void)frl::blur(rand_image(5, 5, 1, 1), wide, 11), std::invalid_argument);
}

TEST_CASE("rgb2gray projects with the fixed luma weights") {
  SUBCASE("gray passthrough is identity") {
    const FloatImage img = rand_image(5, 4, 1, 2);
    const FloatImage out = frl::rgb2gray(img);
    CHECK(out.v == img.v);
  }
  SUBCASE("equal channels collapse to the shared value") {
    FloatImage img(3, 3, 3);
    Rng rng(3);
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        const double v = rng.uniform();
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
        const FloatImage out = frl::rgb2gray(img);
        CHECK(std::fabs(out.at(y, x, 0) - v) < 1e-12);
      }
  }
  SUBCASE("primary colors land on their coefficients") {
    FloatImage img(1, 3, 3);
    img.at(0, 0, 0) = 1.0;  // red
    img.at(0, 1, 1) = 1.0;  // green
    img.at(0, 2, 2) = 1.0;  // blue
    const FloatImage out = frl::rgb2gray(img);
    CHECK(out.at(0, 0, 0) == 0.299);
    CHECK(out.at(0, 1, 0) == 0.587);
    CHECK(out.at(0, 2, 0) == 0.114);
  }
  SUBCASE("white maps to one") {
    const FloatImage out = frl::rgb2gray(constant_image(2, 2, 3, 1.0));
    for (const double v : out.v) CHECK(std::fabs(v - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS((void)frl::rgb2gray(FloatImage(2, 2, 2)), std::invalid_argument);
  CHECK_THROWS_AS((void)frl::rgb2gray(FloatImage(2, 2, 4)), std::invalid_argument);
}

TEST_CASE("gaussian residual is zero on constants and mean-free in general") {
  FreqConfig cfg;
  cfg.method = FreqMethod::kGaussian;
  cfg.kernel_size = 5;
  SUBCASE("constant images give exactly zero") {
    for (const double c : {0.0, 0.5, 1.0}) {
      const FloatImage res = frl::high_freq(constant_image(9, 9, 1, c), cfg);
      for (const double v : res.v) CHECK(v == 0.0);
      const FloatImage res3 = frl::high_freq(constant_image(8, 6, 3, c), cfg);
      for (const double v : res3.v) CHECK(v == 0.0);
    }
  }
  SUBCASE("the residual mean vanishes on arbitrary images") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      const FloatImage img = rand_image(14, 17, 1, 40 + seed);
      const FloatImage res = frl::high_freq(img, cfg);
      CHECK(std::fabs(image_mean(res)) < 1e-6);  // pinned bound; measured ~1e-17
      for (const double v : res.v) {
        CHECK(v <= 1.0);
        CHECK(v >= -1.0);
      }
    }
  }
  SUBCASE("unset sigma follows the quarter-kernel rule") {
    const FloatImage img = rand_image(10, 10, 1, 77);
    const FloatImage via_cfg = frl::high_freq(img, cfg);  // sigma = 0 in cfg
    const FloatImage low = frl::blur(img, frl::gaussian_kernel(5, 1.25), 5);
    for (size_t i = 0; i < via_cfg.v.size(); ++i)
      CHECK(via_cfg.v[i] == img.v[i] - low.v[i]);
  }
}

TEST_CASE("haar residual zeroes constants exactly and the transform reconstructs") {
  FreqConfig cfg;
  cfg.method = FreqMethod::kHaar;
  SUBCASE("constant images give exactly zero") {
    const FloatImage res = frl::high_freq(constant_image(8, 8, 1, 0.62), cfg);
    for (const double v : res.v) CHECK(v == 0.0);
  }
  SUBCASE("forward-inverse reconstruction") {
    for (const int levels : {1, 2, 3}) {
      const FloatImage img = rand_image(16, 8, 1, 500 + static_cast<uint64_t>(levels));
      const auto coef = frl::haar2(img, levels);
      const FloatImage back = frl::ihaar2(coef, 16, 8, levels);
      for (size_t i = 0; i < img.v.size(); ++i) CHECK(std::fabs(back.v[i] - img.v[i]) < 1e-6);
    }
  }
  SUBCASE("the transform is orthonormal") {
    const FloatImage img = rand_image(8, 8, 1, 600);
    const auto coef = frl::haar2(img, 2);
    double spatial = 0.0, spectral = 0.0;
    for (const double v : img.v) spatial += v * v;
    for (const double v : coef) spectral += v * v;
    CHECK(std::fabs(spatial - spectral) < 1e-10);
  }
  SUBCASE("dyadic divisibility is enforced") {
    CHECK_THROWS_AS((void)frl::haar2(rand_image(28, 28, 1, 1), 3), std::invalid_argument);
    cfg.haar_levels = 3;
    CHECK_THROWS_AS((void)frl::high_freq(rand_image(28, 28, 1, 1), cfg), std::invalid_argument);
  }
}

TEST_CASE("fft residual matches a dense transform oracle") {
  FreqConfig cfg;
  cfg.method = FreqMethod::kFft;
  SUBCASE("checkerboard through the documented mask") {
    cfg.fft_radius = 0.5;
    FloatImage board(16, 16, 1);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) board.at(y, x, 0) = static_cast<double>((y + x) & 1);
    const FloatImage got = frl::high_freq(board, cfg);

    auto coef = dense_dft(board);
    for (int v = 0; v < 16; ++v) {
      const double fy = (v <= 8 ? v : v - 16) / 8.0;
      for (int u = 0; u < 16; ++u) {
        const double fx = (u <= 8 ? u : u - 16) / 8.0;
        if (std::sqrt(fy * fy + fx * fx) < cfg.fft_radius) coef[static_cast<size_t>(v) * 16 + u] = 0.0;
      }
    }
    const FloatImage want = dense_idft(coef, 16, 16);
    for (size_t i = 0; i < got.v.size(); ++i) CHECK(std::fabs(got.v[i] - want.v[i]) < 1e-6);
  }
  SUBCASE("round trip and Parseval") {
    const FloatImage img = rand_image(12, 10, 1, 321);
    const auto coef = frl::dft2(img);
    const FloatImage back = frl::idft2(coef, 12, 10);
    for (size_t i = 0; i < img.v.size(); ++i) CHECK(std::fabs(back.v[i] - img.v[i]) < 1e-12);
    double spatial = 0.0, spectral = 0.0;
    for (const double v : img.v) spatial += v * v;
    for (const auto& z : coef) spectral += std::norm(z);
    CHECK(std::fabs(spatial - spectral) < 1e-6);  // pinned bound; measured ~1e-13
  }
  SUBCASE("masked spectrum energy equals residual energy") {
    cfg.fft_radius = 0.25;
    const FloatImage img = rand_image(16, 16, 1, 654);
    auto coef = frl::dft2(img);
    double masked_energy = 0.0;
    for (int v = 0; v < 16; ++v) {
      const double fy = (v <= 8 ? v : v - 16) / 8.0;
      for (int u = 0; u < 16; ++u) {
        const double fx = (u <= 8 ? u : u - 16) / 8.0;
        if (std::sqrt(fy * fy + fx * fx) < cfg.fft_radius)
          coef[static_cast<size_t>(v) * 16 + u] = 0.0;
        else
          masked_energy += std::norm(coef[static_cast<size_t>(v) * 16 + u]);
      }
    }
    const FloatImage res = frl::high_freq(img, cfg);
    double spatial = 0.0;
    double largest = 0.0;
    for (const double v : res.v) {
      spatial += v * v;
      largest = std::max(largest, std::fabs(v));
    }
    REQUIRE(largest < 1.0);  // clamp must not have fired, or energies diverge
    CHECK(std::fabs(masked_energy - spatial) < 1e-6);
  }
  SUBCASE("the DC term is always removed") {
    cfg.fft_radius = 0.0625;
    const FloatImage res = frl::high_freq(constant_image(8, 8, 1, 0.9), cfg);
    for (const double v : res.v) CHECK(std::fabs(v) < 1e-12);
  }
}

TEST_CASE("augment concatenates the original channels with the remapped residual") {
  FreqConfig cfg;
  SUBCASE("shape contracts") {
    CHECK(frl::augment(rand_image(32, 32, 3, 7), cfg).c == 4);
    CHECK(frl::augment(rand_image(28, 28, 1, 7), cfg).c == 2);
  }
  SUBCASE("original channels are copied bit for bit") {
    const FloatImage img = rand_image(9, 9, 3, 8);
    const FloatImage aug = frl::augment(img, cfg);
    const FloatImage res = frl::high_freq(img, cfg);
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 9; ++x) {
        for (int c = 0; c < 3; ++c) CHECK(aug.at(y, x, c) == img.at(y, x, c));
        CHECK(aug.at(y, x, 3) == (res.at(y, x, 0) + 1.0) / 2.0);
        CHECK(aug.at(y, x, 3) >= 0.0);
        CHECK(aug.at(y, x, 3) <= 1.0);
      }
  }
  SUBCASE("constant input pins the residual channel at one half") {
    const FloatImage aug = frl::augment(constant_image(6, 6, 1, 0.31), cfg);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) CHECK(aug.at(y, x, 1) == 0.5);
  }
}

TEST_CASE("frequency config validates and names its methods") {
  FreqConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  FreqConfig bad = cfg;
  bad.kernel_size = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.kernel_size = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.sigma = -0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.fft_radius = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.fft_radius = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.haar_levels = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  CHECK(frl::freq_method_from_string("gaussian") == FreqMethod::kGaussian);
  CHECK(frl::freq_method_from_string("fft") == FreqMethod::kFft);
  CHECK(frl::freq_method_from_string("haar") == FreqMethod::kHaar);
  CHECK_THROWS_AS((void)frl::freq_method_from_string("wavelet"), std::invalid_argument);
  for (const auto m : {FreqMethod::kGaussian, FreqMethod::kFft, FreqMethod::kHaar})
    CHECK(frl::freq_method_from_string(frl::freq_method_name(m)) == m);
}

TEST_CASE("every method is deterministic") {
  const FloatImage img = rand_image(16, 16, 1, 999);
  for (const auto m : {FreqMethod::kGaussian, FreqMethod::kFft, FreqMethod::kHaar}) {
    FreqConfig cfg;
    cfg.method = m;
    const FloatImage a = frl::high_freq(img, cfg);
    const FloatImage b = frl::high_freq(img, cfg);
    CHECK(a.v == b.v);
  }
}
