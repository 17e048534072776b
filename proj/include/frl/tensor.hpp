#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "frl/fastmath.hpp"
#include "frl/gemm.hpp"

namespace frl {

namespace detail {

// Activation buffers in the tens of megabytes churn every step; stock glibc
// would mmap/munmap each one and pay a page-fault storm (observed as seconds
// of sys time per epoch). Keep big blocks on the heap free lists instead.
inline void tune_allocator() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, -1);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace detail

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

[[noreturn]] inline void tensor_fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

inline void tensor_require(bool cond, const std::string& msg) {
  if (!cond) tensor_fail(msg);
}

// Dense tensor over T (float for training, double for gradient checks).
// Data is shared, never mutated by ops; `node` ties the value to the tape
// that produced it so later ops can extend the graph.
template <typename T>
struct TensorT {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  int64_t node = -1;       // producing node on the tape of epoch `tape_epoch`
  uint64_t tape_epoch = 0;
  bool requires_grad = false;  // marks a trainable leaf

  TensorT() : data(std::make_shared<std::vector<T>>()) {}

  static TensorT zeros(Shape s) {
    TensorT t;
    t.shape = std::move(s);
    t.data = std::make_shared<std::vector<T>>(shape_numel(t.shape), T(0));
    return t;
  }

  static TensorT full(Shape s, T v) {
    TensorT t = zeros(std::move(s));
    for (T& x : *t.data) x = v;
    return t;
  }

  static TensorT scalar(T v) { return full({1}, v); }

  static TensorT from(std::vector<T> v, Shape s) {
    tensor_require(static_cast<int64_t>(v.size()) == shape_numel(s),
                   "tensor data size does not match shape " + shape_str(s));
    TensorT t;
    t.shape = std::move(s);
    t.data = std::make_shared<std::vector<T>>(std::move(v));
    return t;
  }

  static TensorT param(std::vector<T> v, Shape s) {
    TensorT t = from(std::move(v), std::move(s));
    t.requires_grad = true;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data->size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  T* ptr() { return data->data(); }
  const T* ptr() const { return data->data(); }

  T item() const {
    tensor_require(numel() == 1, "item() requires a one-element tensor, got " + shape_str(shape));
    return (*data)[0];
  }
};

using Tensor = TensorT<float>;

template <typename T>
struct NamedParamT {
  std::string name;
  TensorT<T>* tensor;
};

template <typename T>
class TapeT;

// Gradients returned by TapeT::backward. Leaf gradients are looked up by the
// tensor handle (its storage identity).
template <typename T>
class GradsT {
 public:
  const std::vector<T>& at(const TensorT<T>& leaf) const {
    auto it = by_storage_.find(leaf.data.get());
    tensor_require(it != by_storage_.end(), "no gradient recorded for this tensor");
    return it->second;
  }
  bool contains(const TensorT<T>& t) const { return by_storage_.count(t.data.get()) > 0; }

 private:
  friend class TapeT<T>;
  std::unordered_map<const void*, std::vector<T>> by_storage_;
};

// Reverse-mode tape (Wengert list). Ops append nodes while a tape is active;
// backward() runs the recorded closures once, in reverse, then the tape is
// spent. One tape per training step.
template <typename T>
class TapeT {
 public:
  TapeT() : epoch_(++epoch_counter_) {
    tensor_require(active_ == nullptr, "another tape is already active");
    detail::tune_allocator();
    active_ = this;
  }
  ~TapeT() {
    if (active_ == this) active_ = nullptr;
  }
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT* active() { return active_; }
  uint64_t epoch() const { return epoch_; }
  size_t size() const { return nodes_.size(); }

  // Resolves a tensor to a node id: an existing interior node, a registered
  // leaf (registering it on first sight if it wants gradients), or -1.
  int64_t input_id(const TensorT<T>& t) {
    if (t.node >= 0 && t.tape_epoch == epoch_) return t.node;
    if (!t.requires_grad) return -1;
    auto it = leaves_.find(t.data.get());
    if (it != leaves_.end()) return it->second;
    const int64_t id = fresh_node(t.numel());
    leaves_.emplace(t.data.get(), id);
    leaf_order_.push_back(t.data.get());
    return id;
  }

  int64_t fresh_node(int64_t out_size) {
    nodes_.push_back(Node{{}, out_size, nullptr});
    grads_.emplace_back();
    return static_cast<int64_t>(nodes_.size()) - 1;
  }

  void set_back(int64_t id, std::vector<int64_t> inputs, std::function<void(TapeT&)> back) {
    nodes_[id].inputs = std::move(inputs);
    nodes_[id].back = std::move(back);
  }

  // Gradient buffer for a node, allocated (zeroed) on first touch.
  std::vector<T>& grad_buf(int64_t id) {
    auto& g = grads_[id];
    if (g.empty()) g.assign(nodes_[id].out_size, T(0));
    return g;
  }

  bool grad_untouched(int64_t id) const { return grads_[id].empty(); }

  // Upstream gradient of a node; empty means "identically zero, skip".
  const std::vector<T>& grad(int64_t id) const { return grads_[id]; }

  void accum(int64_t id, const std::vector<T>& g) {
    auto& dst = grad_buf(id);
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  GradsT<T> backward(const TensorT<T>& loss) {
    tensor_require(!consumed_, "tape already consumed by backward()");
    tensor_require(loss.numel() == 1, "backward() requires a scalar loss, got " + shape_str(loss.shape));
    tensor_require(loss.node >= 0 && loss.tape_epoch == epoch_,
                   "loss tensor was not recorded on this tape");
    consumed_ = true;
    grad_buf(loss.node)[0] = T(1);
    for (int64_t id = loss.node; id >= 0; --id) {
      if (grads_[id].empty() || !nodes_[id].back) continue;
      nodes_[id].back(*this);
    }
    GradsT<T> out;
    for (const void* key : leaf_order_) {
      const int64_t id = leaves_[key];
      if (grads_[id].empty()) grads_[id].assign(nodes_[id].out_size, T(0));
      out.by_storage_.emplace(key, std::move(grads_[id]));
    }
    return out;
  }

 private:
  struct Node {
    std::vector<int64_t> inputs;
    int64_t out_size;
    std::function<void(TapeT&)> back;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  std::unordered_map<const void*, int64_t> leaves_;
  std::vector<const void*> leaf_order_;
  bool consumed_ = false;
  uint64_t epoch_;
  static inline thread_local TapeT* active_ = nullptr;
  static inline thread_local uint64_t epoch_counter_ = 0;
};

using Tape = TapeT<float>;
using Grads = GradsT<float>;

namespace detail {

template <typename T>
void check_finite(const TensorT<T>& t, const char* op) {
  // (v - v) is zero for finite v and NaN otherwise; summing keeps the scan
  // branch-free so it runs at memory speed
  T acc(0);
  for (const T v : *t.data) acc += v - v;
  if (!(acc == T(0)))
    throw std::runtime_error(std::string("non-finite value produced by ") + op);
}

// Registers `out` as the result of an op over `ins` if any input is tracked.
// `back` receives the tape and the resolved node ids (inputs..., out).
template <typename T, typename F>
void record(TensorT<T>& out, std::initializer_list<const TensorT<T>*> ins, F&& make_back) {
  TapeT<T>* tp = TapeT<T>::active();
  if (!tp) return;
  std::vector<int64_t> ids;
  ids.reserve(ins.size());
  bool any = false;
  for (const TensorT<T>* t : ins) {
    ids.push_back(tp->input_id(*t));
    any = any || ids.back() >= 0;
  }
  if (!any) return;
  const int64_t out_id = tp->fresh_node(out.numel());
  out.node = out_id;
  out.tape_epoch = tp->epoch();
  tp->set_back(out_id, ids, make_back(ids, out_id));
}

enum class BcastMode { kSame, kScalar, kRow, kChannel };

template <typename T>
BcastMode bcast_mode(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape == b.shape) return BcastMode::kSame;
  if (b.numel() == 1) return BcastMode::kScalar;
  if (a.rank() == 2 && b.rank() == 1 && b.shape[0] == a.shape[1]) return BcastMode::kRow;
  if (a.rank() == 4 && b.rank() == 1 && b.shape[0] == a.shape[1]) return BcastMode::kChannel;
  tensor_fail(std::string(op) + ": incompatible shapes " + shape_str(a.shape) + " and " +
              shape_str(b.shape));
}

// Sums `g` (shaped like `a`) down to the broadcast operand's shape, scaled by
// `sign`, accumulating into `dst`.
template <typename T>
void reduce_bcast(BcastMode mode, const Shape& a_shape, const std::vector<T>& g, T sign,
                  std::vector<T>& dst) {
  switch (mode) {
    case BcastMode::kSame:
      for (size_t i = 0; i < g.size(); ++i) dst[i] += sign * g[i];
      break;
    case BcastMode::kScalar: {
      T acc = T(0);
      for (const T v : g) acc += v;
      dst[0] += sign * acc;
      break;
    }
    case BcastMode::kRow: {
      const int64_t rows = a_shape[0], cols = a_shape[1];
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) dst[c] += sign * g[r * cols + c];
      break;
    }
    case BcastMode::kChannel: {
      const int64_t n = a_shape[0], c = a_shape[1], hw = a_shape[2] * a_shape[3];
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) {
          T acc = T(0);
          const T* src = g.data() + (i * c + j) * hw;
          for (int64_t k = 0; k < hw; ++k) acc += src[k];
          dst[j] += sign * acc;
        }
      break;
    }
  }
}

template <typename T>
void apply_bcast(BcastMode mode, const TensorT<T>& a, const TensorT<T>& b, T sign, TensorT<T>& out) {
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  const int64_t n = a.numel();
  switch (mode) {
    case BcastMode::kSame:
      for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + sign * pb[i];
      break;
    case BcastMode::kScalar: {
      const T v = sign * pb[0];
      for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + v;
      break;
    }
    case BcastMode::kRow: {
      const int64_t rows = a.shape[0], cols = a.shape[1];
      for (int64_t r = 0; r < rows; ++r) {
        const T* ra = pa + r * cols;
        T* ro = po + r * cols;
        for (int64_t j = 0; j < cols; ++j) ro[j] = ra[j] + sign * pb[j];
      }
      break;
    }
    case BcastMode::kChannel: {
      const int64_t c = a.shape[1], hw = a.shape[2] * a.shape[3];
      const int64_t planes = n / hw;
      for (int64_t p = 0; p < planes; ++p) {
        const T v = sign * pb[p % c];
        const T* src = pa + p * hw;
        T* dst = po + p * hw;
        for (int64_t k = 0; k < hw; ++k) dst[k] = src[k] + v;
      }
      break;
    }
  }
}

}  // namespace detail

// ---- arithmetic ----

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  const auto mode = detail::bcast_mode(a, b, "add");
  TensorT<T> out = TensorT<T>::zeros(a.shape);
  detail::apply_bcast(mode, a, b, T(1), out);
  detail::check_finite(out, "add");
  detail::record(out, {&a, &b}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [mode, ids, out_id, a_shape = a.shape](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      if (ids[0] >= 0) t.accum(ids[0], g);
      if (ids[1] >= 0) detail::reduce_bcast(mode, a_shape, g, T(1), t.grad_buf(ids[1]));
    };
  });
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  const auto mode = detail::bcast_mode(a, b, "sub");
  TensorT<T> out = TensorT<T>::zeros(a.shape);
  detail::apply_bcast(mode, a, b, T(-1), out);
  detail::check_finite(out, "sub");
  detail::record(out, {&a, &b}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [mode, ids, out_id, a_shape = a.shape](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      if (ids[0] >= 0) t.accum(ids[0], g);
      if (ids[1] >= 0) detail::reduce_bcast(mode, a_shape, g, T(-1), t.grad_buf(ids[1]));
    };
  });
  return out;
}

// Elementwise product; either operand may be a one-element scalar.
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  tensor_require(a.shape == b.shape || a.numel() == 1 || b.numel() == 1,
                 "mul: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  const bool a_scalar = a.numel() == 1 && a.shape != b.shape;
  const bool b_scalar = b.numel() == 1 && a.shape != b.shape;
  TensorT<T> out = TensorT<T>::zeros(a_scalar ? b.shape : a.shape);
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = (a_scalar ? pa[0] : pa[i]) * (b_scalar ? pb[0] : pb[i]);
  detail::check_finite(out, "mul");
  detail::record(out, {&a, &b}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [ids, out_id, a_scalar, b_scalar, ad = a.data, bd = b.data](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      if (ids[0] >= 0) {
        auto& da = t.grad_buf(ids[0]);
        if (a_scalar) {
          T acc = T(0);
          for (size_t i = 0; i < g.size(); ++i) acc += g[i] * (*bd)[i];
          da[0] += acc;
        } else {
          for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (b_scalar ? (*bd)[0] : (*bd)[i]);
        }
      }
      if (ids[1] >= 0) {
        auto& db = t.grad_buf(ids[1]);
        if (b_scalar) {
          T acc = T(0);
          for (size_t i = 0; i < g.size(); ++i) acc += g[i] * (*ad)[i];
          db[0] += acc;
        } else {
          for (size_t i = 0; i < g.size(); ++i) db[i] += g[i] * (a_scalar ? (*ad)[0] : (*ad)[i]);
        }
      }
    };
  });
  return out;
}

// ---- elementwise nonlinearities ----

namespace detail {

template <typename T, typename Fwd, typename MakeBack>
TensorT<T> unary_op(const TensorT<T>& x, const char* name, Fwd&& fwd, MakeBack&& make_back) {
  TensorT<T> out = TensorT<T>::zeros(x.shape);
  const T* px = x.ptr();
  T* po = out.ptr();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  detail::check_finite(out, name);
  detail::record(out, {&x}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return make_back(ids[0], out_id, x.data, out.data);
  });
  return out;
}

}  // namespace detail

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  return detail::unary_op(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](int64_t xi, int64_t oi, std::shared_ptr<std::vector<T>> xd,
         std::shared_ptr<std::vector<T>>) {
        return [xi, oi, xd](TapeT<T>& t) {
          const auto& g = t.grad(oi);
          auto& dx = t.grad_buf(xi);
          for (size_t i = 0; i < g.size(); ++i)
            if ((*xd)[i] > T(0)) dx[i] += g[i];
        };
      });
}

template <typename T>
TensorT<T> tanh(const TensorT<T>& x) {
  return detail::unary_op(
      x, "tanh", [](T v) { return std::tanh(v); },
      [](int64_t xi, int64_t oi, std::shared_ptr<std::vector<T>>,
         std::shared_ptr<std::vector<T>> od) {
        return [xi, oi, od](TapeT<T>& t) {
          const auto& g = t.grad(oi);
          auto& dx = t.grad_buf(xi);
          for (size_t i = 0; i < g.size(); ++i) {
            const T y = (*od)[i];
            dx[i] += g[i] * (T(1) - y * y);
          }
        };
      });
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  return detail::unary_op(
      x, "sigmoid",
      [](T v) {
        // evaluated at -|v| for stability at large magnitudes; float stays
        // branch-free so the loop vectorizes
        if constexpr (std::is_same_v<T, float>) {
          const float e = detail::fast_expf(-std::fabs(v));
          const float r = e / (1.0f + e);
          return v >= 0.0f ? 1.0f - r : r;
        } else {
          if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
          const T e = std::exp(v);
          return e / (T(1) + e);
        }
      },
      [](int64_t xi, int64_t oi, std::shared_ptr<std::vector<T>>,
         std::shared_ptr<std::vector<T>> od) {
        return [xi, oi, od](TapeT<T>& t) {
          const auto& g = t.grad(oi);
          auto& dx = t.grad_buf(xi);
          for (size_t i = 0; i < g.size(); ++i) {
            const T y = (*od)[i];
            dx[i] += g[i] * y * (T(1) - y);
          }
        };
      });
}

template <typename T>
TensorT<T> exp(const TensorT<T>& x) {
  return detail::unary_op(
      x, "exp", [](T v) { return detail::op_exp(v); },
      [](int64_t xi, int64_t oi, std::shared_ptr<std::vector<T>>,
         std::shared_ptr<std::vector<T>> od) {
        return [xi, oi, od](TapeT<T>& t) {
          const auto& g = t.grad(oi);
          auto& dx = t.grad_buf(xi);
          for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (*od)[i];
        };
      });
}

template <typename T>
TensorT<T> log(const TensorT<T>& x) {
  for (const T v : *x.data)
    if (!(v > T(0))) throw std::runtime_error("log: input must be strictly positive");
  return detail::unary_op(
      x, "log", [](T v) { return std::log(v); },
      [](int64_t xi, int64_t oi, std::shared_ptr<std::vector<T>> xd,
         std::shared_ptr<std::vector<T>>) {
        return [xi, oi, xd](TapeT<T>& t) {
          const auto& g = t.grad(oi);
          auto& dx = t.grad_buf(xi);
          for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / (*xd)[i];
        };
      });
}

// ---- reductions ----

template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
  T acc = T(0);
  for (const T v : *x.data) acc += v;
  TensorT<T> out = TensorT<T>::scalar(acc);
  detail::check_finite(out, "sum");
  detail::record(out, {&x}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [xi = ids[0], out_id](TapeT<T>& t) {
      const T g = t.grad(out_id)[0];
      auto& dx = t.grad_buf(xi);
      for (T& v : dx) v += g;
    };
  });
  return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x) {
  tensor_require(x.numel() > 0, "mean of empty tensor");
  T acc = T(0);
  for (const T v : *x.data) acc += v;
  const int64_t n = x.numel();
  TensorT<T> out = TensorT<T>::scalar(acc / static_cast<T>(n));
  detail::check_finite(out, "mean");
  detail::record(out, {&x}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [xi = ids[0], out_id, n](TapeT<T>& t) {
      const T g = t.grad(out_id)[0] / static_cast<T>(n);
      auto& dx = t.grad_buf(xi);
      for (T& v : dx) v += g;
    };
  });
  return out;
}

// ---- softmax family ----

namespace detail {

struct AxisIter {
  int64_t outer, len, inner;
};

inline AxisIter axis_iter(const Shape& s, int64_t axis) {
  tensor_require(axis >= 0 && axis < static_cast<int64_t>(s.size()),
                 "axis out of range for shape " + shape_str(s));
  AxisIter it{1, s[axis], 1};
  for (int64_t i = 0; i < axis; ++i) it.outer *= s[i];
  for (int64_t i = axis + 1; i < static_cast<int64_t>(s.size()); ++i) it.inner *= s[i];
  return it;
}

}  // namespace detail

// Both softmaxes iterate the reduced axis in the outer loop and the `inner`
// trailing block in the inner loop, so every pass is contiguous and
// vectorizes; per-position running values live in small scratch rows.

template <typename T>
TensorT<T> softmax(const TensorT<T>& x, int64_t axis) {
  const auto it = detail::axis_iter(x.shape, axis);
  TensorT<T> out = TensorT<T>::zeros(x.shape);
  const T* px = x.ptr();
  T* po = out.ptr();
  std::vector<T> mx(it.inner), z(it.inner);
  for (int64_t o = 0; o < it.outer; ++o) {
    const T* xb = px + o * it.len * it.inner;
    T* ob = po + o * it.len * it.inner;
    std::copy(xb, xb + it.inner, mx.begin());
    for (int64_t k = 1; k < it.len; ++k)
      for (int64_t i = 0; i < it.inner; ++i) mx[i] = std::max(mx[i], xb[k * it.inner + i]);
    std::fill(z.begin(), z.end(), T(0));
    for (int64_t k = 0; k < it.len; ++k) {
      const T* row = xb + k * it.inner;
      T* orow = ob + k * it.inner;
      for (int64_t i = 0; i < it.inner; ++i) orow[i] = row[i] - mx[i];
      detail::exp_span(orow, orow, static_cast<size_t>(it.inner));
      for (int64_t i = 0; i < it.inner; ++i) z[i] += orow[i];
    }
    for (int64_t i = 0; i < it.inner; ++i) z[i] = T(1) / z[i];
    for (int64_t k = 0; k < it.len; ++k) {
      T* orow = ob + k * it.inner;
      for (int64_t i = 0; i < it.inner; ++i) orow[i] *= z[i];
    }
  }
  detail::check_finite(out, "softmax");
  detail::record(out, {&x}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [xi = ids[0], out_id, it, od = out.data](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      auto& dx = t.grad_buf(xi);
      std::vector<T> dot(it.inner);
      for (int64_t o = 0; o < it.outer; ++o) {
        const int64_t base = o * it.len * it.inner;
        std::fill(dot.begin(), dot.end(), T(0));
        for (int64_t k = 0; k < it.len; ++k) {
          const int64_t row = base + k * it.inner;
          for (int64_t i = 0; i < it.inner; ++i) dot[i] += g[row + i] * (*od)[row + i];
        }
        for (int64_t k = 0; k < it.len; ++k) {
          const int64_t row = base + k * it.inner;
          for (int64_t i = 0; i < it.inner; ++i)
            dx[row + i] += (*od)[row + i] * (g[row + i] - dot[i]);
        }
      }
    };
  });
  return out;
}

template <typename T>
TensorT<T> log_softmax(const TensorT<T>& x, int64_t axis) {
  const auto it = detail::axis_iter(x.shape, axis);
  TensorT<T> out = TensorT<T>::zeros(x.shape);
  const T* px = x.ptr();
  T* po = out.ptr();
  std::vector<T> mx(it.inner), z(it.inner), er(it.inner);
  for (int64_t o = 0; o < it.outer; ++o) {
    const T* xb = px + o * it.len * it.inner;
    T* ob = po + o * it.len * it.inner;
    std::copy(xb, xb + it.inner, mx.begin());
    for (int64_t k = 1; k < it.len; ++k)
      for (int64_t i = 0; i < it.inner; ++i) mx[i] = std::max(mx[i], xb[k * it.inner + i]);
    std::fill(z.begin(), z.end(), T(0));
    for (int64_t k = 0; k < it.len; ++k) {
      const T* row = xb + k * it.inner;
      for (int64_t i = 0; i < it.inner; ++i) er[i] = row[i] - mx[i];
      detail::exp_span(er.data(), er.data(), static_cast<size_t>(it.inner));
      for (int64_t i = 0; i < it.inner; ++i) z[i] += er[i];
    }
    for (int64_t i = 0; i < it.inner; ++i) z[i] = std::log(z[i]) + mx[i];
    for (int64_t k = 0; k < it.len; ++k) {
      const T* row = xb + k * it.inner;
      T* orow = ob + k * it.inner;
      for (int64_t i = 0; i < it.inner; ++i) orow[i] = row[i] - z[i];
    }
  }
  detail::check_finite(out, "log_softmax");
  detail::record(out, {&x}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [xi = ids[0], out_id, it, od = out.data](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      auto& dx = t.grad_buf(xi);
      std::vector<T> gsum(it.inner), er(it.inner);
      for (int64_t o = 0; o < it.outer; ++o) {
        const int64_t base = o * it.len * it.inner;
        std::fill(gsum.begin(), gsum.end(), T(0));
        for (int64_t k = 0; k < it.len; ++k) {
          const int64_t row = base + k * it.inner;
          for (int64_t i = 0; i < it.inner; ++i) gsum[i] += g[row + i];
        }
        for (int64_t k = 0; k < it.len; ++k) {
          const int64_t row = base + k * it.inner;
          detail::exp_span(od->data() + row, er.data(), static_cast<size_t>(it.inner));
          for (int64_t i = 0; i < it.inner; ++i)
            dx[row + i] += g[row + i] - er[i] * gsum[i];
        }
      }
    };
  });
  return out;
}

// ---- shape ops ----

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape s) {
  tensor_require(shape_numel(s) == x.numel(),
                 "reshape: " + shape_str(x.shape) + " -> " + shape_str(s) + " changes element count");
  TensorT<T> out = TensorT<T>::from(*x.data, std::move(s));
  detail::record(out, {&x}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [xi = ids[0], out_id](TapeT<T>& t) { t.accum(xi, t.grad(out_id)); };
  });
  return out;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  tensor_require(a.rank() == 4 && b.rank() == 4, "concat_channels expects rank-4 tensors");
  tensor_require(a.shape[0] == b.shape[0] && a.shape[2] == b.shape[2] && a.shape[3] == b.shape[3],
                 "concat_channels: shapes " + shape_str(a.shape) + " and " + shape_str(b.shape) +
                     " differ outside the channel axis");
  const int64_t n = a.shape[0], ca = a.shape[1], cb = b.shape[1];
  const int64_t hw = a.shape[2] * a.shape[3];
  TensorT<T> out = TensorT<T>::zeros({n, ca + cb, a.shape[2], a.shape[3]});
  T* po = out.ptr();
  for (int64_t i = 0; i < n; ++i) {
    std::copy_n(a.ptr() + i * ca * hw, ca * hw, po + i * (ca + cb) * hw);
    std::copy_n(b.ptr() + i * cb * hw, cb * hw, po + i * (ca + cb) * hw + ca * hw);
  }
  detail::record(out, {&a, &b}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [ids, out_id, n, ca, cb, hw](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      for (int64_t i = 0; i < n; ++i) {
        const T* src = g.data() + i * (ca + cb) * hw;
        if (ids[0] >= 0) {
          auto& da = t.grad_buf(ids[0]);
          for (int64_t j = 0; j < ca * hw; ++j) da[i * ca * hw + j] += src[j];
        }
        if (ids[1] >= 0) {
          auto& db = t.grad_buf(ids[1]);
          for (int64_t j = 0; j < cb * hw; ++j) db[i * cb * hw + j] += src[ca * hw + j];
        }
      }
    };
  });
  return out;
}

template <typename T>
TensorT<T> slice_channels(const TensorT<T>& x, int64_t c0, int64_t c1) {
  tensor_require(x.rank() == 4, "slice_channels expects a rank-4 tensor");
  tensor_require(0 <= c0 && c0 < c1 && c1 <= x.shape[1],
                 "slice_channels: invalid range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") for " + shape_str(x.shape));
  const int64_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
  const int64_t cs = c1 - c0;
  TensorT<T> out = TensorT<T>::zeros({n, cs, x.shape[2], x.shape[3]});
  T* po = out.ptr();
  for (int64_t i = 0; i < n; ++i)
    std::copy_n(x.ptr() + (i * c + c0) * hw, cs * hw, po + i * cs * hw);
  detail::record(out, {&x}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [xi = ids[0], out_id, n, c, c0, cs, hw](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      auto& dx = t.grad_buf(xi);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < cs * hw; ++j) dx[(i * c + c0) * hw + j] += g[i * cs * hw + j];
    };
  });
  return out;
}

namespace detail {

// reflect-without-repeating-the-border (the 101 convention): -1 -> 1, n -> n-2
inline int64_t reflect101(int64_t i, int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace detail

template <typename T>
TensorT<T> pad_reflect(const TensorT<T>& x, int64_t p) {
  tensor_require(x.rank() == 4, "pad_reflect expects a rank-4 tensor");
  tensor_require(p >= 0, "pad_reflect: negative pad");
  const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  tensor_require(p <= h - 1 && p <= w - 1,
                 "pad_reflect: pad " + std::to_string(p) + " too large for " + shape_str(x.shape));
  const int64_t ho = h + 2 * p, wo = w + 2 * p;
  TensorT<T> out = TensorT<T>::zeros({n, c, ho, wo});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T* plane = px + nc * h * w;
    T* oplane = po + nc * ho * wo;
    for (int64_t y = 0; y < ho; ++y) {
      const int64_t sy = detail::reflect101(y - p, h);
      for (int64_t x2 = 0; x2 < wo; ++x2)
        oplane[y * wo + x2] = plane[sy * w + detail::reflect101(x2 - p, w)];
    }
  }
  detail::record(out, {&x}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [xi = ids[0], out_id, n, c, h, w, p, ho, wo](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      auto& dx = t.grad_buf(xi);
      for (int64_t nc = 0; nc < n * c; ++nc) {
        const T* gplane = g.data() + nc * ho * wo;
        T* dplane = dx.data() + nc * h * w;
        for (int64_t y = 0; y < ho; ++y) {
          const int64_t sy = detail::reflect101(y - p, h);
          for (int64_t x2 = 0; x2 < wo; ++x2)
            dplane[sy * w + detail::reflect101(x2 - p, w)] += gplane[y * wo + x2];
        }
      }
    };
  });
  return out;
}

// Flat gather: out[i] = x[idx[i]]. Indices are data, not differentiated.
template <typename T>
TensorT<T> gather(const TensorT<T>& x, const std::vector<int64_t>& idx) {
  const int64_t n = x.numel();
  for (const int64_t i : idx)
    tensor_require(i >= 0 && i < n, "gather: index " + std::to_string(i) + " out of range [0," +
                                        std::to_string(n) + ")");
  TensorT<T> out = TensorT<T>::zeros({static_cast<int64_t>(idx.size())});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (size_t i = 0; i < idx.size(); ++i) po[i] = px[idx[i]];
  detail::record(out, {&x}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [xi = ids[0], out_id, idx](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      auto& dx = t.grad_buf(xi);
      for (size_t i = 0; i < idx.size(); ++i) dx[idx[i]] += g[i];
    };
  });
  return out;
}

// Log-softmax over channel groups, evaluated only at chosen levels. The
// channel axis of x [N, G*q, H, W] is read as G groups of q logits; each
// (sample, group, position) fiber is normalized and the entry at that
// position's level is returned, flattened in (sample, group, position)
// order. Equivalent to reshaping to [N,G,q,H,W], log_softmax over the level
// axis and a gather, but touches only the picked entries, so the loss never
// materializes the q-times-wider intermediate or its gradient.
template <typename T>
TensorT<T> log_softmax_pick(const TensorT<T>& x, int64_t q, const std::vector<int32_t>& levels) {
  tensor_require(x.rank() == 4, "log_softmax_pick expects a rank-4 tensor");
  tensor_require(q >= 1 && x.shape[1] % q == 0,
                 "log_softmax_pick: channel count " + std::to_string(x.shape[1]) +
                     " is not a multiple of q=" + std::to_string(q));
  const int64_t n = x.shape[0], groups = x.shape[1] / q, hw = x.shape[2] * x.shape[3];
  const int64_t m = n * groups * hw;
  tensor_require(static_cast<int64_t>(levels.size()) == m,
                 "log_softmax_pick: expected " + std::to_string(m) + " levels, got " +
                     std::to_string(levels.size()));
  for (const int32_t lv : levels)
    tensor_require(lv >= 0 && lv < q, "log_softmax_pick: level " + std::to_string(lv) +
                                          " outside 0.." + std::to_string(q - 1));
  TensorT<T> out = TensorT<T>::zeros({m});
  auto logz = std::make_shared<std::vector<T>>(static_cast<size_t>(m));
  const T* px = x.ptr();
  T* po = out.ptr();
  std::vector<T> mx(hw), z(hw), er(hw);
  for (int64_t f = 0; f < n * groups; ++f) {
    const T* xb = px + f * q * hw;
    std::copy(xb, xb + hw, mx.begin());
    for (int64_t k = 1; k < q; ++k)
      for (int64_t p = 0; p < hw; ++p) mx[p] = std::max(mx[p], xb[k * hw + p]);
    std::fill(z.begin(), z.end(), T(0));
    for (int64_t k = 0; k < q; ++k) {
      const T* row = xb + k * hw;
      for (int64_t p = 0; p < hw; ++p) er[p] = row[p] - mx[p];
      detail::exp_span(er.data(), er.data(), static_cast<size_t>(hw));
      for (int64_t p = 0; p < hw; ++p) z[p] += er[p];
    }
    T* lz = logz->data() + f * hw;
    for (int64_t p = 0; p < hw; ++p) lz[p] = std::log(z[p]) + mx[p];
    const int32_t* lev = levels.data() + f * hw;
    T* ob = po + f * hw;
    for (int64_t p = 0; p < hw; ++p) ob[p] = xb[static_cast<int64_t>(lev[p]) * hw + p] - lz[p];
  }
  detail::check_finite(out, "log_softmax_pick");
  detail::record(out, {&x}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [xi = ids[0], out_id, n, groups, q, hw, xd = x.data, logz, levels](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      auto& dx = t.grad_buf(xi);
      std::vector<T> er(hw);
      for (int64_t f = 0; f < n * groups; ++f) {
        const T* xb = xd->data() + f * q * hw;
        const T* lz = logz->data() + f * hw;
        const T* gb = g.data() + f * hw;
        T* db = dx.data() + f * q * hw;
        for (int64_t k = 0; k < q; ++k) {
          const T* row = xb + k * hw;
          T* drow = db + k * hw;
          for (int64_t p = 0; p < hw; ++p) er[p] = row[p] - lz[p];
          detail::exp_span(er.data(), er.data(), static_cast<size_t>(hw));
          for (int64_t p = 0; p < hw; ++p) drow[p] -= gb[p] * er[p];
        }
        const int32_t* lev = levels.data() + f * hw;
        for (int64_t p = 0; p < hw; ++p) db[static_cast<int64_t>(lev[p]) * hw + p] += gb[p];
      }
    };
  });
  return out;
}

// ---- matmul / convolution ----

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  tensor_require(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 tensors");
  tensor_require(a.shape[1] == b.shape[0], "matmul: inner dimensions disagree, " +
                                               shape_str(a.shape) + " x " + shape_str(b.shape));
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  TensorT<T> out = TensorT<T>::zeros({m, n});
  gemm_nn(m, k, n, a.ptr(), b.ptr(), out.ptr(), false);
  detail::check_finite(out, "matmul");
  detail::record(out, {&a, &b}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [ids, out_id, m, k, n, ad = a.data, bd = b.data](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      if (ids[0] >= 0) gemm_nt(m, n, k, g.data(), bd->data(), t.grad_buf(ids[0]).data(), true);
      if (ids[1] >= 0) gemm_tn(k, m, n, ad->data(), g.data(), t.grad_buf(ids[1]).data(), true);
    };
  });
  return out;
}

namespace detail {

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], zero padding. 1x1/stride-1 convolutions
// skip the im2col staging buffer and run as a plain GEMM per sample.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, int64_t stride, int64_t pad) {
  tensor_require(x.rank() == 4 && w.rank() == 4, "conv2d expects rank-4 input and weight");
  tensor_require(x.shape[1] == w.shape[1], "conv2d: input channels " + shape_str(x.shape) +
                                               " do not match weight " + shape_str(w.shape));
  tensor_require(stride >= 1 && pad >= 0, "conv2d: invalid stride or pad");
  const int64_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const int64_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const int64_t ho = detail::conv_out_dim(h, kh, stride, pad);
  const int64_t wo = detail::conv_out_dim(wd, kw, stride, pad);
  tensor_require(ho >= 1 && wo >= 1, "conv2d: kernel larger than padded input");
  TensorT<T> out = TensorT<T>::zeros({n, cout, ho, wo});
  const bool direct = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
  const int64_t patch = cin * kh * kw;
  std::vector<T> col(direct ? 0 : patch * ho * wo);
  for (int64_t i = 0; i < n; ++i) {
    const T* xi = x.ptr() + i * cin * h * wd;
    T* oi = out.ptr() + i * cout * ho * wo;
    if (direct) {
      gemm_nn(cout, cin, ho * wo, w.ptr(), xi, oi, false);
    } else {
      im2col(xi, cin, h, wd, kh, kw, stride, pad, ho, wo, col.data());
      gemm_nn(cout, patch, ho * wo, w.ptr(), col.data(), oi, false);
    }
  }
  detail::check_finite(out, "conv2d");
  detail::record(out, {&x, &w}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [ids, out_id, n, cin, h, wd, cout, kh, kw, stride, pad, ho, wo, direct, patch,
            xd = x.data, wdat = w.data](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      std::vector<T> col(direct ? 0 : patch * ho * wo);
      std::vector<T> dcol(direct ? 0 : patch * ho * wo);
      for (int64_t i = 0; i < n; ++i) {
        const T* gi = g.data() + i * cout * ho * wo;
        const T* xi = xd->data() + i * cin * h * wd;
        if (!direct) im2col(xi, cin, h, wd, kh, kw, stride, pad, ho, wo, col.data());
        if (ids[1] >= 0) {
          T* dw = t.grad_buf(ids[1]).data();
          gemm_nt(cout, ho * wo, patch, gi, direct ? xi : col.data(), dw, true);
        }
        if (ids[0] >= 0) {
          T* dx = t.grad_buf(ids[0]).data() + i * cin * h * wd;
          if (direct) {
            gemm_tn(cin, cout, ho * wo, wdat->data(), gi, dx, true);
          } else {
            gemm_tn(patch, cout, ho * wo, wdat->data(), gi, dcol.data(), false);
            col2im_add(dcol.data(), cin, h, wd, kh, kw, stride, pad, ho, wo, dx);
          }
        }
      }
    };
  });
  return out;
}

// conv2d with a per-output-channel bias folded into the same node. b is
// rank-1 [Cout]. On the widest activation of a network a separate
// broadcast-add would double the peak memory traffic, so the bias rides
// along as a gemm epilogue here.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, int64_t stride,
                  int64_t pad) {
  tensor_require(x.rank() == 4 && w.rank() == 4, "conv2d expects rank-4 input and weight");
  tensor_require(x.shape[1] == w.shape[1], "conv2d: input channels " + shape_str(x.shape) +
                                               " do not match weight " + shape_str(w.shape));
  tensor_require(b.rank() == 1 && b.shape[0] == w.shape[0],
                 "conv2d: bias " + shape_str(b.shape) + " does not match weight " +
                     shape_str(w.shape));
  tensor_require(stride >= 1 && pad >= 0, "conv2d: invalid stride or pad");
  const int64_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const int64_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const int64_t ho = detail::conv_out_dim(h, kh, stride, pad);
  const int64_t wo = detail::conv_out_dim(wd, kw, stride, pad);
  tensor_require(ho >= 1 && wo >= 1, "conv2d: kernel larger than padded input");
  TensorT<T> out = TensorT<T>::zeros({n, cout, ho, wo});
  const bool direct = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
  const int64_t patch = cin * kh * kw;
  std::vector<T> col(direct ? 0 : patch * ho * wo);
  for (int64_t i = 0; i < n; ++i) {
    const T* xi = x.ptr() + i * cin * h * wd;
    T* oi = out.ptr() + i * cout * ho * wo;
    if (direct) {
      gemm_nn(cout, cin, ho * wo, w.ptr(), xi, oi, false);
    } else {
      im2col(xi, cin, h, wd, kh, kw, stride, pad, ho, wo, col.data());
      gemm_nn(cout, patch, ho * wo, w.ptr(), col.data(), oi, false);
    }
    for (int64_t c = 0; c < cout; ++c) {
      const T bv = b.ptr()[c];
      T* row = oi + c * ho * wo;
      for (int64_t p = 0; p < ho * wo; ++p) row[p] += bv;
    }
  }
  detail::check_finite(out, "conv2d");
  detail::record(out, {&x, &w, &b}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [ids, out_id, n, cin, h, wd, cout, kh, kw, stride, pad, ho, wo, direct, patch,
            xd = x.data, wdat = w.data](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      if (ids[2] >= 0) {
        auto& db = t.grad_buf(ids[2]);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t c = 0; c < cout; ++c) {
            const T* row = g.data() + (i * cout + c) * ho * wo;
            T acc = T(0);
            for (int64_t p = 0; p < ho * wo; ++p) acc += row[p];
            db[c] += acc;
          }
      }
      std::vector<T> col(direct ? 0 : patch * ho * wo);
      std::vector<T> dcol(direct ? 0 : patch * ho * wo);
      for (int64_t i = 0; i < n; ++i) {
        const T* gi = g.data() + i * cout * ho * wo;
        const T* xi = xd->data() + i * cin * h * wd;
        if (!direct) im2col(xi, cin, h, wd, kh, kw, stride, pad, ho, wo, col.data());
        if (ids[1] >= 0) {
          T* dw = t.grad_buf(ids[1]).data();
          gemm_nt(cout, ho * wo, patch, gi, direct ? xi : col.data(), dw, true);
        }
        if (ids[0] >= 0) {
          T* dx = t.grad_buf(ids[0]).data() + i * cin * h * wd;
          if (direct) {
            gemm_tn(cin, cout, ho * wo, wdat->data(), gi, dx, true);
          } else {
            gemm_tn(patch, cout, ho * wo, wdat->data(), gi, dcol.data(), false);
            col2im_add(dcol.data(), cin, h, wd, kh, kw, stride, pad, ho, wo, dx);
          }
        }
      }
    };
  });
  return out;
}

// Transposed convolution, the adjoint of conv2d on the spatial map.
// x: [N,Cin,H,W], w: [Cin,Cout,kh,kw];
// out dim = (in-1)*stride - 2*pad + k + out_pad.
template <typename T>
TensorT<T> conv2d_transpose(const TensorT<T>& x, const TensorT<T>& w, int64_t stride, int64_t pad,
                            int64_t out_pad) {
  tensor_require(x.rank() == 4 && w.rank() == 4, "conv2d_transpose expects rank-4 input and weight");
  tensor_require(x.shape[1] == w.shape[0], "conv2d_transpose: input channels " + shape_str(x.shape) +
                                               " do not match weight " + shape_str(w.shape));
  tensor_require(stride >= 1 && pad >= 0 && out_pad >= 0 && out_pad < stride,
                 "conv2d_transpose: invalid stride, pad or out_pad");
  const int64_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const int64_t cout = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  const int64_t ho = (h - 1) * stride - 2 * pad + kh + out_pad;
  const int64_t wo = (wd - 1) * stride - 2 * pad + kw + out_pad;
  tensor_require(ho >= 1 && wo >= 1, "conv2d_transpose: empty output");
  TensorT<T> out = TensorT<T>::zeros({n, cout, ho, wo});
  const int64_t patch = cout * kh * kw;
  std::vector<T> col(patch * h * wd);
  for (int64_t i = 0; i < n; ++i) {
    const T* xi = x.ptr() + i * cin * h * wd;
    T* oi = out.ptr() + i * cout * ho * wo;
    gemm_tn(patch, cin, h * wd, w.ptr(), xi, col.data(), false);
    col2im_add(col.data(), cout, ho, wo, kh, kw, stride, pad, h, wd, oi);
  }
  detail::check_finite(out, "conv2d_transpose");
  detail::record(out, {&x, &w}, [&](const std::vector<int64_t>& ids, int64_t out_id) {
    return [ids, out_id, n, cin, h, wd, cout, kh, kw, stride, pad, ho, wo, patch, xd = x.data,
            wdat = w.data](TapeT<T>& t) {
      const auto& g = t.grad(out_id);
      std::vector<T> col(patch * h * wd);
      for (int64_t i = 0; i < n; ++i) {
        const T* gi = g.data() + i * cout * ho * wo;
        im2col(gi, cout, ho, wo, kh, kw, stride, pad, h, wd, col.data());
        if (ids[0] >= 0) {
          T* dx = t.grad_buf(ids[0]).data() + i * cin * h * wd;
          gemm_nn(cin, patch, h * wd, wdat->data(), col.data(), dx, true);
        }
        if (ids[1] >= 0) {
          const T* xi = xd->data() + i * cin * h * wd;
          T* dw = t.grad_buf(ids[1]).data();
          gemm_nt(cin, h * wd, patch, xi, col.data(), dw, true);
        }
      }
    };
  });
  return out;
}

}  // namespace frl
