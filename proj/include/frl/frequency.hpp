#pragma once

#include <complex>
#include <string>
#include <vector>

#include "frl/image.hpp"

namespace frl {

enum class FreqMethod { kGaussian, kFft, kHaar };

FreqMethod freq_method_from_string(const std::string& s);
std::string freq_method_name(FreqMethod m);

struct FreqConfig {
  FreqMethod method = FreqMethod::kGaussian;
  int kernel_size = 5;      // odd, >= 1
  double sigma = 0.0;       // <= 0 means the kernel_size/4 rule
  double fft_radius = 0.0625; // cutoff as a fraction of the Nyquist radius
  int haar_levels = 1;

  double effective_sigma() const { return sigma > 0.0 ? sigma : kernel_size / 4.0; }
  void validate() const;
};

// k x k low-pass kernel exp(-(m^2+n^2)/(2 sigma^2)) on the centered grid,
// normalized to sum to one. Returned row-major.
std::vector<double> gaussian_kernel(int k, double sigma);

// Luma projection, BT.601 weights. Any channel count c>=1 is accepted for
// c==1 (identity) and c==3; other counts are rejected.
FloatImage rgb2gray(const FloatImage& x);

// Convolves a single-channel image with a k x k kernel under mirror padding
// with the border pixel repeated (..., x1, x0 | x0, x1, ...). With a
// symmetric normalized kernel that padding preserves the image mean, and a
// constant image blurs to exactly itself.
FloatImage blur(const FloatImage& gray, const std::vector<double>& kernel, int k);

// High-frequency residual: gray minus its low-pass projection, clamped to
// [-1,1]. Output is H x W x 1.
FloatImage high_freq(const FloatImage& x, const FreqConfig& cfg);

// Input augmentation: channel-concat of x (values in [0,1]) and the residual
// remapped to [0,1] via (v+1)/2. Output has c+1 channels.
FloatImage augment(const FloatImage& x, const FreqConfig& cfg);

// --- exposed for oracle tests ---

// Unitary 2-D DFT of a single-channel image (row-column factorization) and
// its inverse. Coefficients are row-major H x W.
std::vector<std::complex<double>> dft2(const FloatImage& gray);
FloatImage idft2(const std::vector<std::complex<double>>& coef, int h, int w);

// Orthonormal 2-D Haar transform, `levels` stages on the top-left block.
// Requires the dyadic factor 2^levels to divide both sides.
std::vector<double> haar2(const FloatImage& gray, int levels);
FloatImage ihaar2(const std::vector<double>& coef, int h, int w, int levels);

}  // namespace frl
