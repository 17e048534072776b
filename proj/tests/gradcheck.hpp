#pragma once

// Finite-difference gradient verification for the double-precision tensor
// ops. Every differentiable op gets a trial function that draws a random
// shape, evaluates the op under a tape behind a fixed random weighted-sum
// head, and compares each leaf gradient against a central difference.
// Shared by the tensor unit tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "frl/rng.hpp"
#include "frl/tensor.hpp"

namespace gradcheck {

using frl::Rng;
using frl::Shape;
using DTensor = frl::TensorT<double>;

constexpr double kEps = 1e-5;   // central-difference step
constexpr double kGate = 1e-4;  // relative-error pass threshold

inline DTensor rand_tensor(Shape s, Rng& rng, double lo = -2.0, double hi = 2.0) {
  int64_t n = 1;
  for (const int64_t d : s) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return DTensor::from(std::move(v), std::move(s));
}

// magnitudes in [0.1, 2] with random sign, keeping the relu kink more than
// one difference step away from every sample point
inline DTensor rand_signed_tensor(Shape s, Rng& rng) {
  int64_t n = 1;
  for (const int64_t d : s) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = (rng.below(2) == 0 ? 1.0 : -1.0) * (0.1 + 1.9 * rng.uniform());
  return DTensor::from(std::move(v), std::move(s));
}

// relative error with a 0.01 floor: below that scale the comparison turns
// absolute, which keeps difference-quotient rounding noise (about 1e-10 at
// these loss scales) far from the gate while still flagging real defects
inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 0.01});
  return std::fabs(analytic - numeric) / denom;
}

// Max relative error between the tape gradients of fn() and central
// differences, perturbing every element of every listed input. fn must
// rebuild the whole expression from the current input values on each call
// and return a scalar.
inline double max_rel_error(const std::vector<DTensor*>& inputs,
                            const std::function<DTensor()>& fn, double eps = kEps) {
  std::vector<std::vector<double>> analytic;
  {
    frl::TapeT<double> tape;
    for (auto* t : inputs) t->requires_grad = true;
    auto grads = tape.backward(fn());
    for (auto* t : inputs) analytic.push_back(grads.at(*t));
    for (auto* t : inputs) t->requires_grad = false;
  }
  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto& vals = *inputs[i]->data;
    for (size_t j = 0; j < vals.size(); ++j) {
      const double keep = vals[j];
      vals[j] = keep + eps;
      const double up = (*fn().data)[0];
      vals[j] = keep - eps;
      const double dn = (*fn().data)[0];
      vals[j] = keep;
      worst = std::max(worst, rel_err(analytic[i][j], (up - dn) / (2.0 * eps)));
    }
  }
  return worst;
}

// fixed-weight scalar head; the weights are drawn once per trial so every
// output element carries a distinct coefficient in the loss
inline DTensor weighted(const DTensor& out, const DTensor& w) { return sum(mul(out, w)); }

struct OpCheck {
  const char* name;
  double (*run)(Rng&);  // one random trial, returns the max relative error
};

namespace trials {

inline int64_t dim(Rng& rng, int64_t lo, int64_t hi) {
  return lo + static_cast<int64_t>(rng.below(static_cast<uint64_t>(hi - lo + 1)));
}

enum class Arith { kAdd, kSub, kMul };

inline DTensor apply(Arith op, const DTensor& a, const DTensor& b) {
  switch (op) {
    case Arith::kAdd: return add(a, b);
    case Arith::kSub: return sub(a, b);
    default: return mul(a, b);
  }
}

template <Arith Op>
double arith_same(Rng& rng) {
  DTensor a = rand_tensor({dim(rng, 2, 5), dim(rng, 2, 5)}, rng);
  DTensor b = rand_tensor(a.shape, rng);
  DTensor w = rand_tensor(a.shape, rng, -1.0, 1.0);
  return max_rel_error({&a, &b}, [&] { return weighted(apply(Op, a, b), w); });
}

template <Arith Op>
double arith_scalar(Rng& rng) {
  DTensor a = rand_tensor({dim(rng, 2, 4), dim(rng, 2, 4), dim(rng, 2, 3)}, rng);
  DTensor b = rand_tensor({1}, rng);
  DTensor w = rand_tensor(a.shape, rng, -1.0, 1.0);
  return max_rel_error({&a, &b}, [&] { return weighted(apply(Op, a, b), w); });
}

template <Arith Op>
double arith_row(Rng& rng) {
  const int64_t m = dim(rng, 2, 5);
  DTensor a = rand_tensor({dim(rng, 2, 5), m}, rng);
  DTensor b = rand_tensor({m}, rng);
  DTensor w = rand_tensor(a.shape, rng, -1.0, 1.0);
  return max_rel_error({&a, &b}, [&] { return weighted(apply(Op, a, b), w); });
}

template <Arith Op>
double arith_channel(Rng& rng) {
  const int64_t c = dim(rng, 1, 3);
  DTensor a = rand_tensor({dim(rng, 1, 2), c, dim(rng, 2, 4), dim(rng, 2, 4)}, rng);
  DTensor b = rand_tensor({c}, rng);
  DTensor w = rand_tensor(a.shape, rng, -1.0, 1.0);
  return max_rel_error({&a, &b}, [&] { return weighted(apply(Op, a, b), w); });
}

inline double mul_scalar_left(Rng& rng) {
  DTensor a = rand_tensor({1}, rng);
  DTensor b = rand_tensor({dim(rng, 2, 5), dim(rng, 2, 5)}, rng);
  DTensor w = rand_tensor(b.shape, rng, -1.0, 1.0);
  return max_rel_error({&a, &b}, [&] { return weighted(mul(a, b), w); });
}

template <DTensor (*Unary)(const DTensor&)>
double unary(Rng& rng, DTensor x) {
  DTensor w = rand_tensor(x.shape, rng, -1.0, 1.0);
  return max_rel_error({&x}, [&] { return weighted(Unary(x), w); });
}

inline double relu_op(Rng& rng) {
  return unary<frl::relu>(rng, rand_signed_tensor({dim(rng, 2, 5), dim(rng, 2, 5)}, rng));
}
inline double tanh_op(Rng& rng) {
  return unary<frl::tanh>(rng, rand_tensor({dim(rng, 2, 5), dim(rng, 2, 5)}, rng));
}
inline double sigmoid_op(Rng& rng) {
  return unary<frl::sigmoid>(rng, rand_tensor({dim(rng, 2, 5), dim(rng, 2, 5)}, rng));
}
inline double exp_op(Rng& rng) {
  return unary<frl::exp>(rng, rand_tensor({dim(rng, 2, 5), dim(rng, 2, 5)}, rng));
}
inline double log_op(Rng& rng) {
  return unary<frl::log>(rng, rand_tensor({dim(rng, 2, 5), dim(rng, 2, 5)}, rng, 0.5, 2.5));
}

inline double sum_op(Rng& rng) {
  DTensor x = rand_tensor({dim(rng, 2, 5), dim(rng, 2, 5)}, rng);
  DTensor w = rand_tensor({1}, rng, -1.0, 1.0);
  return max_rel_error({&x}, [&] { return mul(sum(x), w); });
}

inline double mean_op(Rng& rng) {
  DTensor x = rand_tensor({dim(rng, 2, 5), dim(rng, 2, 5), dim(rng, 2, 3)}, rng);
  DTensor w = rand_tensor({1}, rng, -1.0, 1.0);
  return max_rel_error({&x}, [&] { return mul(mean(x), w); });
}

inline Shape rand_shape(Rng& rng) {
  const int64_t rank = dim(rng, 2, 4);
  Shape s;
  for (int64_t i = 0; i < rank; ++i) s.push_back(dim(rng, 2, 4));
  return s;
}

inline double softmax_op(Rng& rng) {
  DTensor x = rand_tensor(rand_shape(rng), rng);
  const int64_t axis = dim(rng, 0, x.rank() - 1);
  DTensor w = rand_tensor(x.shape, rng, -1.0, 1.0);
  return max_rel_error({&x}, [&] { return weighted(softmax(x, axis), w); });
}

inline double log_softmax_op(Rng& rng) {
  DTensor x = rand_tensor(rand_shape(rng), rng);
  const int64_t axis = dim(rng, 0, x.rank() - 1);
  DTensor w = rand_tensor(x.shape, rng, -1.0, 1.0);
  return max_rel_error({&x}, [&] { return weighted(log_softmax(x, axis), w); });
}

inline double reshape_op(Rng& rng) {
  const int64_t a = dim(rng, 2, 4), b = dim(rng, 2, 4), c = dim(rng, 2, 3);
  DTensor x = rand_tensor({a, b, c}, rng);
  DTensor w = rand_tensor({c, a * b}, rng, -1.0, 1.0);
  // tanh in front so the reshape sits between two recorded ops
  return max_rel_error({&x}, [&] { return weighted(reshape(frl::tanh(x), {c, a * b}), w); });
}

inline double concat_channels_op(Rng& rng) {
  const int64_t n = dim(rng, 1, 2), h = dim(rng, 2, 4), wd = dim(rng, 2, 4);
  DTensor a = rand_tensor({n, dim(rng, 1, 3), h, wd}, rng);
  DTensor b = rand_tensor({n, dim(rng, 1, 3), h, wd}, rng);
  DTensor w = rand_tensor({n, a.shape[1] + b.shape[1], h, wd}, rng, -1.0, 1.0);
  return max_rel_error({&a, &b}, [&] { return weighted(concat_channels(a, b), w); });
}

inline double slice_channels_op(Rng& rng) {
  const int64_t c = dim(rng, 2, 5);
  DTensor x = rand_tensor({dim(rng, 1, 2), c, dim(rng, 2, 4), dim(rng, 2, 4)}, rng);
  const int64_t c0 = dim(rng, 0, c - 1);
  const int64_t c1 = dim(rng, c0 + 1, c);
  DTensor w = rand_tensor({x.shape[0], c1 - c0, x.shape[2], x.shape[3]}, rng, -1.0, 1.0);
  return max_rel_error({&x}, [&] { return weighted(slice_channels(x, c0, c1), w); });
}

inline double pad_reflect_op(Rng& rng) {
  const int64_t h = dim(rng, 3, 5), wd = dim(rng, 3, 5);
  const int64_t p = dim(rng, 1, std::min<int64_t>(2, std::min(h, wd) - 1));
  DTensor x = rand_tensor({dim(rng, 1, 2), dim(rng, 1, 2), h, wd}, rng);
  DTensor w = rand_tensor({x.shape[0], x.shape[1], h + 2 * p, wd + 2 * p}, rng, -1.0, 1.0);
  return max_rel_error({&x}, [&] { return weighted(pad_reflect(x, p), w); });
}

inline double gather_op(Rng& rng) {
  DTensor x = rand_tensor({dim(rng, 2, 5), dim(rng, 2, 5)}, rng);
  // duplicate indices on purpose: the backward pass must accumulate
  std::vector<int64_t> idx(static_cast<size_t>(dim(rng, 3, 8)));
  for (auto& i : idx) i = static_cast<int64_t>(rng.below(static_cast<uint64_t>(x.numel())));
  DTensor w = rand_tensor({static_cast<int64_t>(idx.size())}, rng, -1.0, 1.0);
  return max_rel_error({&x}, [&] { return weighted(gather(x, idx), w); });
}

inline double log_softmax_pick_op(Rng& rng) {
  const int64_t n = dim(rng, 1, 2), g = dim(rng, 1, 2), q = dim(rng, 2, 4);
  const int64_t h = dim(rng, 2, 3), wd = dim(rng, 2, 3);
  DTensor x = rand_tensor({n, g * q, h, wd}, rng);
  std::vector<int32_t> levels(static_cast<size_t>(n * g * h * wd));
  for (auto& lv : levels) lv = static_cast<int32_t>(rng.below(static_cast<uint64_t>(q)));
  DTensor w = rand_tensor({n * g * h * wd}, rng, -1.0, 1.0);
  return max_rel_error({&x}, [&] { return weighted(log_softmax_pick(x, q, levels), w); });
}

inline double matmul_op(Rng& rng) {
  const int64_t m = dim(rng, 2, 4), k = dim(rng, 2, 4), n = dim(rng, 2, 4);
  DTensor a = rand_tensor({m, k}, rng);
  DTensor b = rand_tensor({k, n}, rng);
  DTensor w = rand_tensor({m, n}, rng, -1.0, 1.0);
  return max_rel_error({&a, &b}, [&] { return weighted(matmul(a, b), w); });
}

inline double conv2d_op(Rng& rng, int64_t stride, bool bias) {
  const int64_t kh = 1 + 2 * dim(rng, 0, 1);
  const int64_t pad = dim(rng, 0, kh / 2);
  const int64_t hin = dim(rng, kh + stride - 2 * pad, 6), win = dim(rng, kh + stride - 2 * pad, 6);
  DTensor x = rand_tensor({dim(rng, 1, 2), dim(rng, 1, 2), hin, win}, rng);
  DTensor w = rand_tensor({dim(rng, 1, 3), x.shape[1], kh, kh}, rng);
  const int64_t ho = (hin + 2 * pad - kh) / stride + 1;
  const int64_t wo = (win + 2 * pad - kh) / stride + 1;
  DTensor hw = rand_tensor({x.shape[0], w.shape[0], ho, wo}, rng, -1.0, 1.0);
  if (!bias)
    return max_rel_error({&x, &w}, [&] { return weighted(conv2d(x, w, stride, pad), hw); });
  DTensor b = rand_tensor({w.shape[0]}, rng);
  return max_rel_error({&x, &w, &b}, [&] { return weighted(conv2d(x, w, b, stride, pad), hw); });
}

inline double conv2d_transpose_op(Rng& rng, int64_t stride) {
  const int64_t kh = 1 + 2 * dim(rng, 0, 1);
  const int64_t pad = dim(rng, 0, kh / 2);
  const int64_t out_pad = stride > 1 ? dim(rng, 0, stride - 1) : 0;
  const int64_t h = dim(rng, 2, 4), wd = dim(rng, 2, 4);
  const int64_t ho = (h - 1) * stride - 2 * pad + kh + out_pad;
  const int64_t wo = (wd - 1) * stride - 2 * pad + kh + out_pad;
  if (ho < 1 || wo < 1) return 0.0;  // draw produced an empty output; skip
  DTensor x = rand_tensor({dim(rng, 1, 2), dim(rng, 1, 2), h, wd}, rng);
  DTensor w = rand_tensor({x.shape[1], dim(rng, 1, 3), kh, kh}, rng);
  DTensor hw = rand_tensor({x.shape[0], w.shape[1], ho, wo}, rng, -1.0, 1.0);
  return max_rel_error(
      {&x, &w}, [&] { return weighted(conv2d_transpose(x, w, stride, pad, out_pad), hw); });
}

// a small composite expression: shared subexpressions, both conv flavors and
// every nonlinearity on one tape
inline double composite(Rng& rng) {
  DTensor x = rand_tensor({1, 2, 4, 4}, rng);
  DTensor w1 = rand_tensor({3, 2, 3, 3}, rng, -0.7, 0.7);
  DTensor b1 = rand_tensor({3}, rng, -0.5, 0.5);
  DTensor w2 = rand_tensor({1, 8, 4, 2}, rng, -1.0, 1.0);
  return max_rel_error({&x, &w1, &b1}, [&] {
    DTensor h = frl::tanh(conv2d(x, w1, b1, 1, 1));
    DTensor s = softmax(slice_channels(h, 0, 2), 1);
    DTensor t = sigmoid(slice_channels(h, 1, 3));
    DTensor joined = concat_channels(s, t);  // h feeds both branches
    return mean(mul(reshape(joined, {1, 8, 4, 2}), w2));
  });
}

}  // namespace trials

inline const std::vector<OpCheck>& op_checks() {
  using namespace trials;
  static const std::vector<OpCheck> checks = {
      {"add same-shape", +[](Rng& r) { return arith_same<Arith::kAdd>(r); }},
      {"add scalar", +[](Rng& r) { return arith_scalar<Arith::kAdd>(r); }},
      {"add row", +[](Rng& r) { return arith_row<Arith::kAdd>(r); }},
      {"add channel", +[](Rng& r) { return arith_channel<Arith::kAdd>(r); }},
      {"sub same-shape", +[](Rng& r) { return arith_same<Arith::kSub>(r); }},
      {"sub scalar", +[](Rng& r) { return arith_scalar<Arith::kSub>(r); }},
      {"sub row", +[](Rng& r) { return arith_row<Arith::kSub>(r); }},
      {"sub channel", +[](Rng& r) { return arith_channel<Arith::kSub>(r); }},
      {"mul same-shape", +[](Rng& r) { return arith_same<Arith::kMul>(r); }},
      {"mul scalar right", +[](Rng& r) { return arith_scalar<Arith::kMul>(r); }},
      {"mul scalar left", +[](Rng& r) { return mul_scalar_left(r); }},
      {"relu", +[](Rng& r) { return relu_op(r); }},
      {"tanh", +[](Rng& r) { return tanh_op(r); }},
      {"sigmoid", +[](Rng& r) { return sigmoid_op(r); }},
      {"exp", +[](Rng& r) { return exp_op(r); }},
      {"log", +[](Rng& r) { return log_op(r); }},
      {"sum", +[](Rng& r) { return sum_op(r); }},
      {"mean", +[](Rng& r) { return mean_op(r); }},
      {"softmax", +[](Rng& r) { return softmax_op(r); }},
      {"log_softmax", +[](Rng& r) { return log_softmax_op(r); }},
      {"reshape", +[](Rng& r) { return reshape_op(r); }},
      {"concat_channels", +[](Rng& r) { return concat_channels_op(r); }},
      {"slice_channels", +[](Rng& r) { return slice_channels_op(r); }},
      {"pad_reflect", +[](Rng& r) { return pad_reflect_op(r); }},
      {"gather", +[](Rng& r) { return gather_op(r); }},
      {"log_softmax_pick", +[](Rng& r) { return log_softmax_pick_op(r); }},
      {"matmul", +[](Rng& r) { return matmul_op(r); }},
      {"conv2d stride 1", +[](Rng& r) { return conv2d_op(r, 1, false); }},
      {"conv2d stride 2", +[](Rng& r) { return conv2d_op(r, 2, false); }},
      {"conv2d bias stride 1", +[](Rng& r) { return conv2d_op(r, 1, true); }},
      {"conv2d bias stride 2", +[](Rng& r) { return conv2d_op(r, 2, true); }},
      {"conv2d_transpose stride 1", +[](Rng& r) { return conv2d_transpose_op(r, 1); }},
      {"conv2d_transpose stride 2", +[](Rng& r) { return conv2d_transpose_op(r, 2); }},
      {"composite graph", +[](Rng& r) { return composite(r); }},
  };
  return checks;
}

}  // namespace gradcheck
