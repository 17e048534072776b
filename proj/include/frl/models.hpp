#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "frl/image.hpp"
#include "frl/rng.hpp"
#include "frl/tensor.hpp"

namespace frl {

// Shape and quantization of a model's input. c already includes the
// high-frequency channel when the model consumes augmented inputs.
struct InputSpec {
  int h = 28, w = 28, c = 1;
  int q = 256;
  int64_t dim() const { return static_cast<int64_t>(h) * w * c; }
};

// One sample quantized to q levels, CHW order.
struct QuantSample {
  std::vector<int32_t> levels;
};

// HWC [0,1] values -> CHW levels via round(v*(q-1)), half away from zero.
inline QuantSample quantize(const FloatImage& x, int q) {
  if (q < 2) throw std::invalid_argument("quantize: need at least 2 levels");
  QuantSample s;
  s.levels.resize(x.size());
  for (int ch = 0; ch < x.c; ++ch) {
    for (int y = 0; y < x.h; ++y) {
      for (int xx = 0; xx < x.w; ++xx) {
        const double v = x.at(y, xx, ch);
        if (v < -1e-9 || v > 1.0 + 1e-9)
          throw std::invalid_argument("quantize: value " + std::to_string(v) + " outside [0,1]");
        const int64_t lv = round_half_away(v * (q - 1));
        if (lv < 0 || lv >= q)
          throw std::invalid_argument("quantize: level " + std::to_string(lv) +
                                      " outside 0.." + std::to_string(q - 1));
        s.levels[(static_cast<size_t>(ch) * x.h + y) * x.w + xx] = static_cast<int32_t>(lv);
      }
    }
  }
  return s;
}

// [N,C,H,W] float batch with values level/(q-1).
template <typename T>
TensorT<T> batch_values(const std::vector<const QuantSample*>& batch, const InputSpec& in) {
  const int64_t n = static_cast<int64_t>(batch.size());
  const int64_t d = in.dim();
  std::vector<T> v(static_cast<size_t>(n * d));
  const T scale = T(1) / static_cast<T>(in.q - 1);
  for (int64_t i = 0; i < n; ++i) {
    const auto& lv = batch[i]->levels;
    if (static_cast<int64_t>(lv.size()) != d)
      throw std::invalid_argument("batch_values: sample size does not match input spec");
    for (int64_t j = 0; j < d; ++j) v[i * d + j] = static_cast<T>(lv[j]) * scale;
  }
  return TensorT<T>::from(std::move(v), {n, in.c, in.h, in.w});
}

namespace detail {

template <typename T>
TensorT<T> randn_param(Shape s, double std, Rng& rng) {
  std::vector<T> v(shape_numel(s));
  for (auto& x : v) x = static_cast<T>(rng.normal() * std);
  return TensorT<T>::param(std::move(v), std::move(s));
}

template <typename T>
TensorT<T> zero_param(Shape s) {
  const int64_t n = shape_numel(s);  // before the move below
  return TensorT<T>::param(std::vector<T>(n, T(0)), std::move(s));
}

inline double logsumexp(const std::vector<double>& v) {
  double mx = v[0];
  for (const double x : v) mx = std::max(mx, x);
  double acc = 0.0;
  for (const double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

}  // namespace detail

// ---------------------------------------------------------------------------
// VAE: stride-2 conv encoder to a diagonal Gaussian posterior, mirrored
// transposed-conv decoder to q-way categorical logits per pixel-channel.
// conv_layers == 0 selects a small dense network instead (used by the
// one-pixel oracle tests).
// ---------------------------------------------------------------------------

struct VaeArch {
  InputSpec in;
  int latent_dim = 100;
  int conv_layers = 4;
  int base_filters = 16;
  int hidden = 32;          // dense mode width
  bool augmented = false;   // last input channel is the high-frequency one
};

template <typename T>
class VaeModelT {
 public:
  VaeModelT(const VaeArch& arch, uint64_t init_seed) : a_(arch) {
    if (a_.latent_dim < 1) throw std::invalid_argument("vae: latent_dim must be >= 1");
    detail::tune_allocator();
    Rng rng(init_seed);
    if (a_.conv_layers > 0) {
      // spatial trace of the stride-2 stack; fails fast if the image is too
      // small for the requested depth
      int s = a_.in.h;
      if (a_.in.w != a_.in.h)
        throw std::invalid_argument("vae: conv mode expects square inputs");
      spatial_.push_back(s);
      for (int i = 0; i < a_.conv_layers; ++i) {
        s = (s + 2 - 4) / 2 + 1;
        if (s < 1) throw std::invalid_argument("vae: input too small for conv_layers");
        spatial_.push_back(s);
      }
      int cin = a_.in.c;
      for (int i = 0; i < a_.conv_layers; ++i) {
        const int cout = a_.base_filters << i;
        enc_w_.push_back(detail::randn_param<T>({cout, cin, 4, 4}, std::sqrt(2.0 / (cin * 16)), rng));
        cin = cout;
      }
      flat_ = static_cast<int64_t>(cin) * spatial_.back() * spatial_.back();
      mu_w_ = detail::randn_param<T>({flat_, a_.latent_dim}, std::sqrt(1.0 / flat_), rng);
      mu_b_ = detail::zero_param<T>({a_.latent_dim});
      lv_w_ = detail::randn_param<T>({flat_, a_.latent_dim}, std::sqrt(1.0 / flat_), rng);
      lv_b_ = detail::zero_param<T>({a_.latent_dim});
      fc_w_ = detail::randn_param<T>({a_.latent_dim, flat_}, std::sqrt(1.0 / a_.latent_dim), rng);
      fc_b_ = detail::zero_param<T>({flat_});
      for (int i = a_.conv_layers - 1; i >= 0; --i) {
        const int cout = i > 0 ? (a_.base_filters << (i - 1)) : a_.base_filters;
        const int cin2 = a_.base_filters << i;
        dec_w_.push_back(detail::randn_param<T>({cin2, cout, 4, 4}, std::sqrt(2.0 / (cin2 * 16)), rng));
      }
      head_w_ = detail::randn_param<T>({a_.in.c * a_.in.q, a_.base_filters, 1, 1},
                                       std::sqrt(2.0 / a_.base_filters), rng);
      head_b_ = detail::zero_param<T>({a_.in.c * a_.in.q});
    } else {
      const int64_t d = a_.in.dim();
      eh_w_ = detail::randn_param<T>({d, a_.hidden}, std::sqrt(2.0 / d), rng);
      eh_b_ = detail::zero_param<T>({a_.hidden});
      mu_w_ = detail::randn_param<T>({a_.hidden, a_.latent_dim}, std::sqrt(1.0 / a_.hidden), rng);
      mu_b_ = detail::zero_param<T>({a_.latent_dim});
      lv_w_ = detail::randn_param<T>({a_.hidden, a_.latent_dim}, std::sqrt(1.0 / a_.hidden), rng);
      lv_b_ = detail::zero_param<T>({a_.latent_dim});
      dh_w_ = detail::randn_param<T>({a_.latent_dim, a_.hidden}, std::sqrt(1.0 / a_.latent_dim), rng);
      dh_b_ = detail::zero_param<T>({a_.hidden});
      dout_w_ = detail::randn_param<T>({a_.hidden, d * a_.in.q}, std::sqrt(1.0 / a_.hidden), rng);
      dout_b_ = detail::zero_param<T>({d * a_.in.q});
    }
  }

  const VaeArch& arch() const { return a_; }

  std::vector<NamedParamT<T>> named_params() {
    std::vector<NamedParamT<T>> out;
    if (a_.conv_layers > 0) {
      for (size_t i = 0; i < enc_w_.size(); ++i)
        out.push_back({"enc.conv" + std::to_string(i) + ".w", &enc_w_[i]});
      out.push_back({"enc.mu.w", &mu_w_});
      out.push_back({"enc.mu.b", &mu_b_});
      out.push_back({"enc.lv.w", &lv_w_});
      out.push_back({"enc.lv.b", &lv_b_});
      out.push_back({"dec.fc.w", &fc_w_});
      out.push_back({"dec.fc.b", &fc_b_});
      for (size_t i = 0; i < dec_w_.size(); ++i)
        out.push_back({"dec.tconv" + std::to_string(i) + ".w", &dec_w_[i]});
      out.push_back({"dec.head.w", &head_w_});
      out.push_back({"dec.head.b", &head_b_});
    } else {
      out.push_back({"enc.fc.w", &eh_w_});
      out.push_back({"enc.fc.b", &eh_b_});
      out.push_back({"enc.mu.w", &mu_w_});
      out.push_back({"enc.mu.b", &mu_b_});
      out.push_back({"enc.lv.w", &lv_w_});
      out.push_back({"enc.lv.b", &lv_b_});
      out.push_back({"dec.fc.w", &dh_w_});
      out.push_back({"dec.fc.b", &dh_b_});
      out.push_back({"dec.out.w", &dout_w_});
      out.push_back({"dec.out.b", &dout_b_});
    }
    return out;
  }

  // Posterior parameters for a batch. logvar is bounded to (-10,10) by a
  // saturating 10*tanh(x/10) so the KL term stays finite.
  void encode(const TensorT<T>& x, TensorT<T>& mu, TensorT<T>& logvar) const {
    TensorT<T> h;
    if (a_.conv_layers > 0) {
      h = x;
      for (const auto& w : enc_w_) h = relu(conv2d(h, w, 2, 1));
      h = reshape(h, {x.shape[0], flat_});
    } else {
      h = relu(add(matmul(reshape(x, {x.shape[0], a_.in.dim()}), eh_w_), eh_b_));
    }
    mu = add(matmul(h, mu_w_), mu_b_);
    TensorT<T> pre = add(matmul(h, lv_w_), lv_b_);
    logvar = mul(tanh(mul(pre, TensorT<T>::scalar(T(0.1)))), TensorT<T>::scalar(T(10)));
  }

  // Per-pixel-channel level logits, [N, C*Q, H, W]; channel c's levels live
  // in the Q-channel block starting at c*Q.
  TensorT<T> decode_logits(const TensorT<T>& z) const {
    const int64_t n = z.shape[0];
    TensorT<T> h;
    if (a_.conv_layers > 0) {
      h = relu(add(matmul(z, fc_w_), fc_b_));
      const int top = a_.base_filters << (a_.conv_layers - 1);
      h = reshape(h, {n, top, spatial_.back(), spatial_.back()});
      for (size_t i = 0; i < dec_w_.size(); ++i) {
        // stride-2/pad-1/k-4 doubles the side; out_pad absorbs odd encoder sizes
        const int target = spatial_[spatial_.size() - 2 - i];
        const int cur = spatial_[spatial_.size() - 1 - i];
        h = relu(conv2d_transpose(h, dec_w_[i], 2, 1, target - 2 * cur));
      }
      h = conv2d(h, head_w_, head_b_, 1, 0);
    } else {
      h = relu(add(matmul(z, dh_w_), dh_b_));
      h = add(matmul(h, dout_w_), dout_b_);
      h = reshape(h, {n, a_.in.c * a_.in.q, a_.in.h, a_.in.w});
    }
    return h;
  }

  // Mean negative ELBO over the batch, nats per input dimension. Records on
  // the active tape.
  TensorT<T> loss(const std::vector<const QuantSample*>& batch, Rng& rng) const {
    const int64_t n = static_cast<int64_t>(batch.size());
    const TensorT<T> x = batch_values<T>(batch, a_.in);
    TensorT<T> mu, logvar;
    encode(x, mu, logvar);
    std::vector<T> noise(static_cast<size_t>(n) * a_.latent_dim);
    for (auto& e : noise) e = static_cast<T>(rng.normal());
    const TensorT<T> eps = TensorT<T>::from(std::move(noise), {n, a_.latent_dim});
    const TensorT<T> half = TensorT<T>::scalar(T(0.5));
    const TensorT<T> z = add(mu, mul(exp(mul(logvar, half)), eps));
    const TensorT<T> logits = decode_logits(z);
    const TensorT<T> rec = sum(log_softmax_pick(logits, a_.in.q, pick_levels(batch)));
    // KL(q || N(0,I)) = -1/2 sum(1 + logvar - mu^2 - e^logvar)
    const TensorT<T> ones = TensorT<T>::full({n, a_.latent_dim}, T(1));
    const TensorT<T> kl_terms = sub(sub(add(ones, logvar), mul(mu, mu)), exp(logvar));
    const TensorT<T> kl = mul(sum(kl_terms), TensorT<T>::scalar(T(-0.5)));
    const T scale = T(1) / static_cast<T>(n * a_.in.dim());
    return mul(sub(kl, rec), TensorT<T>::scalar(scale));
  }

  // Importance-weighted NLL estimate in bits per dimension, K posterior
  // samples, log-mean-exp in double precision.
  double nll_bits(const QuantSample& x, int k, uint64_t seed) const {
    return nll_bits_weighted(x, k, 1.0, seed, false);
  }

  // Same bound with the high-frequency channel's reconstruction term scaled
  // by w (w=1 reduces to nll_bits exactly; w=0 drops the channel).
  double nll_bits_weighted(const QuantSample& x, int k, double w, uint64_t seed,
                           bool require_augmented = true) const {
    if (k < 1) throw std::invalid_argument("vae: K must be >= 1");
    if (w < 0.0) throw std::invalid_argument("vae: channel weight must be >= 0");
    if (require_augmented && !a_.augmented)
      throw std::invalid_argument("vae: channel-weighted bound needs an augmented-input model");
    const std::vector<const QuantSample*> batch{&x};
    const TensorT<T> xv = batch_values<T>(batch, a_.in);
    TensorT<T> mu, logvar;
    encode(xv, mu, logvar);
    Rng rng(seed);
    const int64_t dz = a_.latent_dim;
    // all K posterior draws decode as one batch; each elbo term only reads
    // its own rows, so this matches the one-at-a-time evaluation exactly
    std::vector<T> zt(static_cast<size_t>(k) * dz);
    std::vector<double> log_q(static_cast<size_t>(k), 0.0), log_prior(static_cast<size_t>(k), 0.0);
    for (int s = 0; s < k; ++s) {
      for (int64_t j = 0; j < dz; ++j) {
        const double e = rng.normal();
        const double m = static_cast<double>((*mu.data)[j]);
        const double lv = static_cast<double>((*logvar.data)[j]);
        const double zj = m + std::exp(0.5 * lv) * e;
        zt[static_cast<size_t>(s) * dz + j] = static_cast<T>(zj);
        log_q[static_cast<size_t>(s)] += -0.5 * (detail::kLog2Pi + lv + e * e);
        log_prior[static_cast<size_t>(s)] += -0.5 * (detail::kLog2Pi + zj * zj);
      }
    }
    const TensorT<T> z = TensorT<T>::from(std::move(zt), {k, dz});
    const TensorT<T> logits = decode_logits(z);
    std::vector<int32_t> lev;
    lev.reserve(x.levels.size() * static_cast<size_t>(k));
    for (int s = 0; s < k; ++s) lev.insert(lev.end(), x.levels.begin(), x.levels.end());
    const TensorT<T> picked = log_softmax_pick(logits, a_.in.q, lev);
    const int64_t chw = a_.in.dim();
    const int64_t per_ch = static_cast<int64_t>(a_.in.h) * a_.in.w;
    std::vector<double> elbo_k(static_cast<size_t>(k));
    for (int s = 0; s < k; ++s) {
      double rec = 0.0;
      const T* pk = picked.ptr() + static_cast<int64_t>(s) * chw;
      for (int64_t i = 0; i < chw; ++i) {
        const int64_t ch = i / per_ch;  // picked is CHW-ordered per replica
        const bool is_hf = a_.augmented && ch == a_.in.c - 1;
        rec += is_hf ? w * static_cast<double>(pk[i]) : static_cast<double>(pk[i]);
      }
      elbo_k[static_cast<size_t>(s)] = rec + log_prior[static_cast<size_t>(s)] -
                                       log_q[static_cast<size_t>(s)];
    }
    const double lk = detail::logsumexp(elbo_k) - std::log(static_cast<double>(k));
    return -lk / (static_cast<double>(a_.in.dim()) * std::numbers::ln2);
  }

  // Decode of the posterior mean; argmax levels over the original channels
  // (the high-frequency channel is dropped from the view). Softmax is
  // monotone within a level block, so raw logits pick the same level.
  FloatImage reconstruct(const QuantSample& x) const {
    const std::vector<const QuantSample*> batch{&x};
    const TensorT<T> xv = batch_values<T>(batch, a_.in);
    TensorT<T> mu, logvar;
    encode(xv, mu, logvar);
    const TensorT<T> logp = decode_logits(mu);
    const int out_c = a_.augmented ? a_.in.c - 1 : a_.in.c;
    FloatImage out(a_.in.h, a_.in.w, out_c);
    const int64_t hw = static_cast<int64_t>(a_.in.h) * a_.in.w;
    for (int ch = 0; ch < out_c; ++ch) {
      for (int64_t p = 0; p < hw; ++p) {
        int best = 0;
        T best_v = (*logp.data)[(static_cast<int64_t>(ch) * a_.in.q) * hw + p];
        for (int q = 1; q < a_.in.q; ++q) {
          const T v = (*logp.data)[(static_cast<int64_t>(ch) * a_.in.q + q) * hw + p];
          if (v > best_v) {
            best_v = v;
            best = q;
          }
        }
        out.v[static_cast<size_t>(p) * out_c + ch] = static_cast<double>(best) / (a_.in.q - 1);
      }
    }
    return out;
  }

 private:
  // concatenated CHW level indices, the pick order of log_softmax_pick
  static std::vector<int32_t> pick_levels(const std::vector<const QuantSample*>& batch) {
    std::vector<int32_t> lev;
    size_t total = 0;
    for (const QuantSample* s : batch) total += s->levels.size();
    lev.reserve(total);
    for (const QuantSample* s : batch) lev.insert(lev.end(), s->levels.begin(), s->levels.end());
    return lev;
  }

  VaeArch a_;
  std::vector<int> spatial_;
  int64_t flat_ = 0;
  // conv mode
  std::vector<TensorT<T>> enc_w_, dec_w_;
  TensorT<T> fc_w_, fc_b_, head_w_, head_b_;
  // dense mode
  TensorT<T> eh_w_, eh_b_, dh_w_, dh_b_, dout_w_, dout_b_;
  // shared posterior heads
  TensorT<T> mu_w_, mu_b_, lv_w_, lv_b_;
};

using VaeModel = VaeModelT<float>;

// ---------------------------------------------------------------------------
// Coupling flow: affine coupling layers under fixed alternating masks with a
// fixed channel-reversal permutation between layers. Exact log-determinant,
// exact inverse. Discrete inputs are dequantized with uniform noise.
// ---------------------------------------------------------------------------

struct FlowArch {
  InputSpec in;
  int coupling_layers = 8;
  int hidden = 32;
};

template <typename T>
class FlowModelT {
 public:
  FlowModelT(const FlowArch& arch, uint64_t init_seed) : a_(arch) {
    if (a_.coupling_layers < 1) throw std::invalid_argument("flow: need at least one layer");
    detail::tune_allocator();
    Rng rng(init_seed);
    const int c = a_.in.c;
    for (int i = 0; i < a_.coupling_layers; ++i) {
      Layer l;
      // alternate checkerboard pairs with channel pairs (checkerboard only
      // for single-channel inputs), flipping polarity every layer
      const bool channel_mask = c > 1 && ((i / 2) % 2 == 1);
      l.mask = make_mask(channel_mask, i % 2 == 0);
      l.w0 = detail::randn_param<T>({a_.hidden, c, 3, 3}, std::sqrt(2.0 / (c * 9)), rng);
      l.b0 = detail::zero_param<T>({a_.hidden});
      l.w1 = detail::randn_param<T>({a_.hidden, a_.hidden, 3, 3},
                                    std::sqrt(2.0 / (a_.hidden * 9)), rng);
      l.b1 = detail::zero_param<T>({a_.hidden});
      // zero-initialized head so the whole flow starts as the identity map
      l.w2 = detail::zero_param<T>({2 * c, a_.hidden, 1, 1});
      l.b2 = detail::zero_param<T>({2 * c});
      layers_.push_back(std::move(l));
    }
  }

  const FlowArch& arch() const { return a_; }

  std::vector<NamedParamT<T>> named_params() {
    std::vector<NamedParamT<T>> out;
    for (size_t i = 0; i < layers_.size(); ++i) {
      const std::string p = "flow.l" + std::to_string(i) + ".";
      out.push_back({p + "conv0.w", &layers_[i].w0});
      out.push_back({p + "conv0.b", &layers_[i].b0});
      out.push_back({p + "conv1.w", &layers_[i].w1});
      out.push_back({p + "conv1.b", &layers_[i].b1});
      out.push_back({p + "out.w", &layers_[i].w2});
      out.push_back({p + "out.b", &layers_[i].b2});
    }
    return out;
  }

  // Dequantized continuous view of a sample: (level + u)/q with u ~ U[0,1),
  // i.e. uniform noise of width 1/q on the level grid. CHW order.
  std::vector<T> dequantize(const QuantSample& x, uint64_t seed) const {
    Rng rng(seed);
    std::vector<T> v(x.levels.size());
    for (size_t i = 0; i < v.size(); ++i)
      v[i] = static_cast<T>((x.levels[i] + rng.uniform()) / a_.in.q);
    return v;
  }

  // Forward transform of a batch (data -> latent) with accumulated log-det.
  // Builds tape nodes when a tape is active.
  void forward(const TensorT<T>& x, TensorT<T>& z, TensorT<T>& logdet) const {
    const int64_t n = x.shape[0];
    TensorT<T> h = x;
    logdet = TensorT<T>::zeros({1});
    for (const auto& l : layers_) {
      const TensorT<T> m = tile_mask(l.mask, n);
      const TensorT<T> m_inv = tile_mask(inverted(l.mask), n);
      const TensorT<T> visible = mul(h, m);
      TensorT<T> st = net(l, visible);
      const TensorT<T> s = mul(tanh(slice_channels(st, 0, a_.in.c)), m_inv);
      const TensorT<T> t = mul(slice_channels(st, a_.in.c, 2 * a_.in.c), m_inv);
      h = add(mul(h, exp(s)), t);
      // masked part passes through untouched: exp(s)=1, t=0 there
      logdet = add(logdet, sum(s));
      h = reverse_channels(h);
    }
    z = h;
  }

  // Exact inverse of forward (latent -> data), eager values only.
  std::vector<T> inverse(const std::vector<T>& z) const {
    TensorT<T> h = TensorT<T>::from(z, {1, a_.in.c, a_.in.h, a_.in.w});
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      h = reverse_channels(h);
      const TensorT<T> m = tile_mask(it->mask, 1);
      const TensorT<T> m_inv = tile_mask(inverted(it->mask), 1);
      const TensorT<T> visible = mul(h, m);
      TensorT<T> st = net(*it, visible);
      const TensorT<T> s = mul(tanh(slice_channels(st, 0, a_.in.c)), m_inv);
      const TensorT<T> t = mul(slice_channels(st, a_.in.c, 2 * a_.in.c), m_inv);
      // x = (y - t) * exp(-s)
      h = mul(sub(h, t), exp(mul(s, TensorT<T>::scalar(T(-1)))));
    }
    return *h.data;
  }

  // NLL of explicit continuous values (already dequantized), bits/dim.
  double nll_bits_values(const std::vector<T>& values) const {
    const TensorT<T> x = TensorT<T>::from(values, {1, a_.in.c, a_.in.h, a_.in.w});
    TensorT<T> z, logdet;
    forward(x, z, logdet);
    double lp = 0.0;
    for (const T v : *z.data)
      lp += -0.5 * (detail::kLog2Pi + static_cast<double>(v) * static_cast<double>(v));
    lp += static_cast<double>((*logdet.data)[0]);
    return -lp / (static_cast<double>(a_.in.dim()) * std::numbers::ln2);
  }

  double nll_bits(const QuantSample& x, uint64_t seed) const {
    return nll_bits_values(dequantize(x, seed));
  }

  // Mean NLL in nats/dim over a batch, tape-recorded.
  TensorT<T> loss(const std::vector<const QuantSample*>& batch, Rng& rng) const {
    const int64_t n = static_cast<int64_t>(batch.size());
    const int64_t d = a_.in.dim();
    std::vector<T> v(static_cast<size_t>(n * d));
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j)
        v[i * d + j] = static_cast<T>((batch[i]->levels[j] + rng.uniform()) / a_.in.q);
    const TensorT<T> x = TensorT<T>::from(std::move(v), {n, a_.in.c, a_.in.h, a_.in.w});
    TensorT<T> z, logdet;
    forward(x, z, logdet);
    // -log p = 0.5*sum(z^2) + 0.5*N*D*log(2pi) - logdet
    const TensorT<T> zsq = mul(sum(mul(z, z)), TensorT<T>::scalar(T(0.5)));
    const TensorT<T> nll = sub(zsq, logdet);
    const T offset = static_cast<T>(0.5 * detail::kLog2Pi * static_cast<double>(n * d));
    const TensorT<T> total = add(nll, TensorT<T>::scalar(offset));
    return mul(total, TensorT<T>::scalar(T(1) / static_cast<T>(n * d)));
  }

 private:
  struct Layer {
    std::vector<T> mask;  // [C,H,W], 1 = pass-through (conditioning) part
    TensorT<T> w0, b0, w1, b1, w2, b2;
  };

  std::vector<T> make_mask(bool channel, bool polarity) const {
    std::vector<T> m(a_.in.dim());
    const int64_t hw = static_cast<int64_t>(a_.in.h) * a_.in.w;
    for (int64_t c = 0; c < a_.in.c; ++c) {
      for (int64_t y = 0; y < a_.in.h; ++y) {
        for (int64_t x = 0; x < a_.in.w; ++x) {
          bool on = channel ? (c < (a_.in.c + 1) / 2) : ((y + x) % 2 == 0);
          if (!polarity) on = !on;
          m[c * hw + y * a_.in.w + x] = on ? T(1) : T(0);
        }
      }
    }
    return m;
  }

  std::vector<T> inverted(const std::vector<T>& m) const {
    std::vector<T> r(m.size());
    for (size_t i = 0; i < m.size(); ++i) r[i] = T(1) - m[i];
    return r;
  }

  TensorT<T> tile_mask(const std::vector<T>& m, int64_t n) const {
    std::vector<T> v(static_cast<size_t>(n) * m.size());
    for (int64_t i = 0; i < n; ++i) std::copy(m.begin(), m.end(), v.begin() + i * m.size());
    return TensorT<T>::from(std::move(v), {n, a_.in.c, a_.in.h, a_.in.w});
  }

  TensorT<T> net(const Layer& l, const TensorT<T>& visible) const {
    TensorT<T> h = relu(add(conv2d(visible, l.w0, 1, 1), l.b0));
    h = relu(add(conv2d(h, l.w1, 1, 1), l.b1));
    return add(conv2d(h, l.w2, 1, 0), l.b2);
  }

  TensorT<T> reverse_channels(const TensorT<T>& x) const {
    if (a_.in.c == 1) return x;
    TensorT<T> out = slice_channels(x, a_.in.c - 1, a_.in.c);
    for (int64_t c = a_.in.c - 2; c >= 0; --c)
      out = concat_channels(out, slice_channels(x, c, c + 1));
    return out;
  }

  FlowArch a_;
  std::vector<Layer> layers_;
};

using FlowModel = FlowModelT<float>;

// ---------------------------------------------------------------------------
// Autoregressive masked-conv model: raster order over pixels, then channels
// in input order (original channels first, high-frequency channel last).
// Masks are applied multiplicatively to the weights so gradients respect
// them too.
// ---------------------------------------------------------------------------

struct ArArch {
  InputSpec in;
  int layers = 5;
  int filters = 64;
  int kernel = 3;
  // when set, the last input channel (the appended high-frequency residual)
  // comes first in the factorization: every other channel may condition on
  // it, it conditions on nothing at its own position
  bool augmented = false;
};

template <typename T>
class ArModelT {
 public:
  ArModelT(const ArArch& arch, uint64_t init_seed) : a_(arch) {
    if (a_.layers < 1) throw std::invalid_argument("ar: need at least one layer");
    if (a_.kernel < 1 || a_.kernel % 2 == 0)
      throw std::invalid_argument("ar: kernel must be odd");
    if (a_.filters < a_.in.c)
      throw std::invalid_argument("ar: filters must be >= channel count");
    detail::tune_allocator();
    Rng rng(init_seed);
    const int g = a_.in.c;
    fpg_ = a_.filters / g;          // features per channel group
    const int f = fpg_ * g;
    const int k = a_.kernel;
    for (int i = 0; i < a_.layers; ++i) {
      Layer l;
      const int cin = i == 0 ? g : f;
      l.w = detail::randn_param<T>({f, cin, k, k}, std::sqrt(2.0 / (cin * k * k)), rng);
      l.b = detail::zero_param<T>({f});
      l.mask = make_mask(f, cin, k, i == 0);
      layers_.push_back(std::move(l));
    }
    out_w_ = detail::randn_param<T>({g * a_.in.q, f, 1, 1}, std::sqrt(1.0 / f), rng);
    out_b_ = detail::zero_param<T>({g * a_.in.q});
    out_mask_ = make_mask(g * a_.in.q, f, 1, false);
  }

  const ArArch& arch() const { return a_; }

  std::vector<NamedParamT<T>> named_params() {
    std::vector<NamedParamT<T>> out;
    for (size_t i = 0; i < layers_.size(); ++i) {
      out.push_back({"ar.l" + std::to_string(i) + ".w", &layers_[i].w});
      out.push_back({"ar.l" + std::to_string(i) + ".b", &layers_[i].b});
    }
    out.push_back({"ar.out.w", &out_w_});
    out.push_back({"ar.out.b", &out_b_});
    return out;
  }

  // Per-position level logits [N, C*Q, H, W]; channel c's levels live in the
  // Q-channel block starting at c*Q.
  TensorT<T> logits(const TensorT<T>& x) const {
    TensorT<T> h = x;
    for (size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      h = relu(conv2d(h, mul(l.w, l.mask), l.b, 1, (a_.kernel - 1) / 2));
    }
    return conv2d(h, mul(out_w_, out_mask_), out_b_, 1, 0);
  }

  // Log-probabilities [N, C, Q, H, W] for a value batch.
  TensorT<T> logp(const TensorT<T>& x) const {
    const int64_t n = x.shape[0];
    TensorT<T> h = reshape(logits(x), {n, a_.in.c, a_.in.q, a_.in.h, a_.in.w});
    return log_softmax(h, 2);
  }

  // Raw per-position log-probabilities of one sample, [C,Q,H,W] flattened.
  std::vector<T> sample_logp(const QuantSample& x) const {
    const std::vector<const QuantSample*> batch{&x};
    return *logp(batch_values<T>(batch, a_.in)).data;
  }

  double nll_bits(const QuantSample& x) const {
    const std::vector<const QuantSample*> batch{&x};
    const TensorT<T> picked =
        log_softmax_pick(logits(batch_values<T>(batch, a_.in)), a_.in.q, x.levels);
    double total = 0.0;
    for (const T v : *picked.data) total += static_cast<double>(v);
    return -total / (static_cast<double>(a_.in.dim()) * std::numbers::ln2);
  }

  TensorT<T> loss(const std::vector<const QuantSample*>& batch, Rng&) const {
    const int64_t n = static_cast<int64_t>(batch.size());
    std::vector<int32_t> lev;
    lev.reserve(static_cast<size_t>(n) * static_cast<size_t>(a_.in.dim()));
    for (const QuantSample* s : batch) lev.insert(lev.end(), s->levels.begin(), s->levels.end());
    const TensorT<T> picked = log_softmax_pick(logits(batch_values<T>(batch, a_.in)), a_.in.q, lev);
    const TensorT<T> nll = mul(sum(picked), TensorT<T>::scalar(T(-1)));
    return mul(nll, TensorT<T>::scalar(T(1) / static_cast<T>(n * a_.in.dim())));
  }

 private:
  struct Layer {
    TensorT<T> w, b;
    TensorT<T> mask;
  };

  // Position of channel `ch` in the factorization. Channels are consumed in
  // input order unless the input is augmented, in which case the residual
  // channel (stored last) is ranked first and the rest shift back by one.
  int channel_rank(int ch) const {
    if (!a_.augmented) return ch;
    return ch == a_.in.c - 1 ? 0 : ch + 1;
  }

  // Causality mask over a weight [cout, cin, k, k]: rows above the center
  // and positions left of it are always visible; at the center tap,
  // rank(in) < rank(out) for the first layer (strict) and <= after.
  TensorT<T> make_mask(int cout, int cin, int k, bool strict) const {
    std::vector<T> m(static_cast<size_t>(cout) * cin * k * k, T(0));
    const int mid = k / 2;
    const int g = a_.in.c;
    for (int oc = 0; oc < cout; ++oc) {
      const int og = channel_rank((cout == g * a_.in.q) ? oc / a_.in.q : oc / fpg_);
      for (int ic = 0; ic < cin; ++ic) {
        const int ig = channel_rank((cin == g) ? ic : ic / fpg_);
        for (int y = 0; y < k; ++y) {
          for (int x = 0; x < k; ++x) {
            bool on = false;
            if (y < mid || (y == mid && x < mid)) on = true;
            if (y == mid && x == mid) on = strict ? (ig < og) : (ig <= og);
            m[((static_cast<size_t>(oc) * cin + ic) * k + y) * k + x] = on ? T(1) : T(0);
          }
        }
      }
    }
    return TensorT<T>::from(std::move(m), {cout, cin, k, k});
  }

  ArArch a_;
  int fpg_ = 1;
  std::vector<Layer> layers_;
  TensorT<T> out_w_, out_b_, out_mask_;
};

using ArModel = ArModelT<float>;

}  // namespace frl
