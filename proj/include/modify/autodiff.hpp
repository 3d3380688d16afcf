#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "modify/kernels.hpp"
#include "modify/tensor.hpp"

// Reverse-mode autodiff over Tensor<T>. Each primitive's vjp is expressed in
// terms of other primitives and returns graph nodes, so gradients are
// themselves differentiable (needed for the gradient penalty, which
// backpropagates through an input-gradient).
//
// Conventions:
//  - vjp closures capture parent Vars and recompute activations; they never
//    capture their own output node (no ownership cycles).
//  - an undefined Var returned from a vjp means "structurally zero gradient".

namespace modify::ad {

template <class T>
struct Node;

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor<T>& value() const { return n_->value; }
  const Shape& shape() const { return n_->value.shape(); }
  std::int64_t numel() const { return n_->value.numel(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  Node<T>* node() const { return n_.get(); }

 private:
  std::shared_ptr<Node<T>> n_;
};

template <class T>
using VjpFn =
    std::function<std::vector<Var<T>>(const Var<T>& gy, const std::vector<char>& needed)>;

template <class T>
struct Node {
  Tensor<T> value;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<Var<T>> parents;
  VjpFn<T> vjp;
};

inline std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> c{0};
  return ++c;
}

// Scoped switch that makes every op created inside behave like a constant.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(flag()) { flag() = true; }
  ~NoGradGuard() { flag() = prev_; }
  static bool active() { return flag(); }

 private:
  static bool& flag() {
    thread_local bool f = false;
    return f;
  }
  bool prev_;
};

template <class T>
Var<T> constant(Tensor<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  n->seq = next_seq();
  return Var<T>(n);
}

template <class T>
Var<T> leaf(Tensor<T> v, bool requires_grad = true) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  n->requires_grad = requires_grad && !NoGradGuard::active();
  n->seq = next_seq();
  return Var<T>(n);
}

template <class T>
Var<T> detach(const Var<T>& x) {
  return constant(x.value());
}

template <class T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, VjpFn<T> vjp) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->seq = next_seq();
  bool req = false;
  if (!NoGradGuard::active())
    for (const auto& p : parents)
      if (p.requires_grad()) req = true;
  if (req) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->vjp = std::move(vjp);
  }
  return Var<T>(n);
}

template <class T>
T scalar_value(const Var<T>& v) {
  if (v.numel() != 1) throw ShapeError("scalar_value: tensor has " + shape_str(v.shape()));
  return v.value()[0];
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor<T> out(a.shape());
  kernels::add(a.value().data(), b.value().data(), out.data(), out.numel());
  return make_op<T>(std::move(out), {a, b},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(2);
                      if (needed[0]) g[0] = gy;
                      if (needed[1]) g[1] = gy;
                      return g;
                    });
}

template <class T>
Var<T> neg(const Var<T>& x) {
  Tensor<T> out(x.shape());
  kernels::scale(T(-1), x.value().data(), out.data(), out.numel());
  return make_op<T>(std::move(out), {x},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = neg(gy);
                      return g;
                    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out(a.shape());
  kernels::sub(a.value().data(), b.value().data(), out.data(), out.numel());
  return make_op<T>(std::move(out), {a, b},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(2);
                      if (needed[0]) g[0] = gy;
                      if (needed[1]) g[1] = neg(gy);
                      return g;
                    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out(a.shape());
  kernels::mul(a.value().data(), b.value().data(), out.data(), out.numel());
  return make_op<T>(std::move(out), {a, b},
                    [a, b](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(2);
                      if (needed[0]) g[0] = mul(gy, b);
                      if (needed[1]) g[1] = mul(gy, a);
                      return g;
                    });
}

template <class T>
Var<T> scale(const Var<T>& x, T c) {
  Tensor<T> out(x.shape());
  kernels::scale(c, x.value().data(), out.data(), out.numel());
  return make_op<T>(std::move(out), {x},
                    [c](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = scale(gy, c);
                      return g;
                    });
}

template <class T>
Var<T> add_const(const Var<T>& x, T c) {
  Tensor<T> out = x.value().clone();
  T* p = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) p[i] += c;
  return make_op<T>(std::move(out), {x},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = gy;
                      return g;
                    });
}

template <class T>
Var<T> recip(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xp = x.value().data();
  T* p = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) p[i] = T(1) / xp[i];
  return make_op<T>(std::move(out), {x},
                    [x](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) {
                        Var<T> r = recip(x);
                        g[0] = neg(mul(gy, mul(r, r)));
                      }
                      return g;
                    });
}

template <class T>
Var<T> sqrt_(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xp = x.value().data();
  T* p = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) p[i] = std::sqrt(xp[i]);
  return make_op<T>(std::move(out), {x},
                    [x](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = scale(mul(gy, recip(sqrt_(x))), T(0.5));
                      return g;
                    });
}

template <class T>
Var<T> tanh_(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xp = x.value().data();
  T* p = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) p[i] = std::tanh(xp[i]);
  return make_op<T>(std::move(out), {x},
                    [x](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) {
                        Var<T> t = tanh_(x);
                        g[0] = mul(gy, add_const(neg(mul(t, t)), T(1)));
                      }
                      return g;
                    });
}

// grad = g * lrelu'(x); the mask is piecewise constant so it is captured by
// value, which keeps the second derivative exact almost everywhere.
template <class T>
Var<T> lrelu_bwd(const Var<T>& g, const Tensor<T>& x_value, T slope) {
  check_same_shape(g.value(), x_value, "lrelu_bwd");
  Tensor<T> out(g.shape());
  kernels::lrelu_mul(g.value().data(), x_value.data(), slope, out.data(), out.numel());
  return make_op<T>(std::move(out), {g},
                    [x_value, slope](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g2(1);
                      if (needed[0]) g2[0] = lrelu_bwd(gy, x_value, slope);
                      return g2;
                    });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out(x.shape());
  kernels::lrelu(x.value().data(), slope, out.data(), out.numel());
  Tensor<T> xv = x.value();
  return make_op<T>(std::move(out), {x},
                    [xv, slope](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = lrelu_bwd(gy, xv, slope);
                      return g;
                    });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return mul(x, x);
}

// True elementwise IEEE division (single rounding, so x/x == 1 exactly).
template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "div");
  Tensor<T> out(a.shape());
  const T* ap = a.value().data();
  const T* bp = b.value().data();
  T* p = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) p[i] = ap[i] / bp[i];
  return make_op<T>(std::move(out), {a, b},
                    [a, b](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(2);
                      if (needed[0]) g[0] = div(gy, b);
                      if (needed[1]) g[1] = neg(div(mul(gy, a), mul(b, b)));
                      return g;
                    });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& x, Shape s) {
  Shape orig = x.shape();
  Tensor<T> out = x.value().reshaped(std::move(s));
  return make_op<T>(std::move(out), {x},
                    [orig](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = reshape(gy, orig);
                      return g;
                    });
}

namespace detail {
// views a tensor as [d0, d1, inner]: axis-1 block arithmetic used by
// slice/unslice/concat
template <class T>
void axis1_dims(const Tensor<T>& t, std::int64_t& d0, std::int64_t& d1, std::int64_t& inner) {
  if (t.rank() < 2) throw ShapeError("axis-1 op needs rank >= 2, got " + shape_str(t.shape()));
  d0 = t.dim(0);
  d1 = t.dim(1);
  inner = 1;
  for (int i = 2; i < t.rank(); ++i) inner *= t.dim(i);
}
}  // namespace detail

template <class T>
Var<T> unslice_axis1(const Var<T>& g, int begin, int full_d1);

template <class T>
Var<T> slice_axis1(const Var<T>& x, int begin, int end) {
  std::int64_t d0, d1, inner;
  detail::axis1_dims(x.value(), d0, d1, inner);
  if (begin < 0 || end > d1 || begin >= end)
    throw ShapeError("slice_axis1 [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + shape_str(x.shape()));
  Shape os = x.shape();
  os[1] = end - begin;
  Tensor<T> out(os);
  const T* xp = x.value().data();
  T* op = out.data();
  const std::int64_t blk = (end - begin) * inner;
  for (std::int64_t i = 0; i < d0; ++i)
    std::memcpy(op + i * blk, xp + (i * d1 + begin) * inner, sizeof(T) * static_cast<std::size_t>(blk));
  int full = static_cast<int>(d1);
  return make_op<T>(std::move(out), {x},
                    [begin, full](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = unslice_axis1(gy, begin, full);
                      return g;
                    });
}

// Embeds g into a zero tensor whose axis 1 has full_d1 entries.
template <class T>
Var<T> unslice_axis1(const Var<T>& g, int begin, int full_d1) {
  std::int64_t d0, d1, inner;
  detail::axis1_dims(g.value(), d0, d1, inner);
  if (begin < 0 || begin + d1 > full_d1) throw ShapeError("unslice_axis1: block out of range");
  Shape os = g.shape();
  os[1] = full_d1;
  Tensor<T> out(os);
  const T* gp = g.value().data();
  T* op = out.data();
  const std::int64_t blk = d1 * inner;
  for (std::int64_t i = 0; i < d0; ++i)
    std::memcpy(op + (i * full_d1 + begin) * inner, gp + i * blk,
                sizeof(T) * static_cast<std::size_t>(blk));
  int b = begin, e = begin + static_cast<int>(d1);
  return make_op<T>(std::move(out), {g},
                    [b, e](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g2(1);
                      if (needed[0]) g2[0] = slice_axis1(gy, b, e);
                      return g2;
                    });
}

template <class T>
Var<T> concat_axis1(const Var<T>& a, const Var<T>& b) {
  std::int64_t ad0, ad1, ainner, bd0, bd1, binner;
  detail::axis1_dims(a.value(), ad0, ad1, ainner);
  detail::axis1_dims(b.value(), bd0, bd1, binner);
  if (ad0 != bd0 || ainner != binner || a.value().rank() != b.value().rank())
    throw ShapeError("concat_axis1: incompatible " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Shape os = a.shape();
  os[1] = static_cast<int>(ad1 + bd1);
  Tensor<T> out(os);
  const T* ap = a.value().data();
  const T* bp = b.value().data();
  T* op = out.data();
  for (std::int64_t i = 0; i < ad0; ++i) {
    std::memcpy(op + i * (ad1 + bd1) * ainner, ap + i * ad1 * ainner,
                sizeof(T) * static_cast<std::size_t>(ad1 * ainner));
    std::memcpy(op + (i * (ad1 + bd1) + ad1) * ainner, bp + i * bd1 * binner,
                sizeof(T) * static_cast<std::size_t>(bd1 * binner));
  }
  int split = static_cast<int>(ad1), total = static_cast<int>(ad1 + bd1);
  return make_op<T>(std::move(out), {a, b},
                    [split, total](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(2);
                      if (needed[0]) g[0] = slice_axis1(gy, 0, split);
                      if (needed[1]) g[1] = slice_axis1(gy, split, total);
                      return g;
                    });
}

// ---------------------------------------------------------------------------
// broadcast / reduce pairs
// ---------------------------------------------------------------------------

template <class T>
Var<T> bcast_all(const Var<T>& s, const Shape& shape);

template <class T>
Var<T> sum_all(const Var<T>& x) {
  Tensor<T> out({1});
  out[0] = kernels::sum(x.value().data(), x.value().numel());
  Shape xs = x.shape();
  return make_op<T>(std::move(out), {x},
                    [xs](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = bcast_all(gy, xs);
                      return g;
                    });
}

template <class T>
Var<T> bcast_all(const Var<T>& s, const Shape& shape) {
  if (s.numel() != 1) throw ShapeError("bcast_all expects scalar");
  Tensor<T> out = Tensor<T>::full(shape, s.value()[0]);
  return make_op<T>(std::move(out), {s},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = sum_all(gy);
                      return g;
                    });
}

template <class T>
Var<T> mean_all(const Var<T>& x) {
  return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

template <class T>
Var<T> expand_cols(const Var<T>& v, int k);

// [N,K] -> [N]
template <class T>
Var<T> sum_cols(const Var<T>& x) {
  if (x.value().rank() != 2) throw ShapeError("sum_cols expects rank 2");
  const int n = x.value().dim(0), k = x.value().dim(1);
  Tensor<T> out({n});
  const T* xp = x.value().data();
  for (int i = 0; i < n; ++i) out[i] = kernels::sum(xp + static_cast<std::int64_t>(i) * k, k);
  return make_op<T>(std::move(out), {x},
                    [k](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = expand_cols(gy, k);
                      return g;
                    });
}

// [N] -> [N,K]
template <class T>
Var<T> expand_cols(const Var<T>& v, int k) {
  if (v.value().rank() != 1) throw ShapeError("expand_cols expects rank 1");
  const int n = v.value().dim(0);
  Tensor<T> out({n, k});
  const T* vp = v.value().data();
  T* op = out.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) op[static_cast<std::int64_t>(i) * k + j] = vp[i];
  return make_op<T>(std::move(out), {v},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = sum_cols(gy);
                      return g;
                    });
}

template <class T>
Var<T> expand_rows(const Var<T>& v, int n);

// [N,K] -> [K]
template <class T>
Var<T> sum_rows(const Var<T>& x) {
  if (x.value().rank() != 2) throw ShapeError("sum_rows expects rank 2");
  const int n = x.value().dim(0), k = x.value().dim(1);
  Tensor<T> out({k});
  const T* xp = x.value().data();
  for (int i = 0; i < n; ++i) kernels::axpy(T(1), xp + static_cast<std::int64_t>(i) * k, out.data(), k);
  return make_op<T>(std::move(out), {x},
                    [n](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = expand_rows(gy, n);
                      return g;
                    });
}

// [K] -> [N,K]
template <class T>
Var<T> expand_rows(const Var<T>& v, int n) {
  if (v.value().rank() != 1) throw ShapeError("expand_rows expects rank 1");
  const int k = v.value().dim(0);
  Tensor<T> out({n, k});
  for (int i = 0; i < n; ++i)
    std::memcpy(out.data() + static_cast<std::int64_t>(i) * k, v.value().data(),
                sizeof(T) * static_cast<std::size_t>(k));
  return make_op<T>(std::move(out), {v},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = sum_rows(gy);
                      return g;
                    });
}

template <class T>
Var<T> expand_hw(const Var<T>& v, int h, int w);

// [N,C,H,W] -> [N,C]
template <class T>
Var<T> sum_hw(const Var<T>& x) {
  if (x.value().rank() != 4) throw ShapeError("sum_hw expects rank 4");
  const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), w = x.value().dim(3);
  Tensor<T> out({n, c});
  const T* xp = x.value().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < n * c; ++i) out[i] = kernels::sum(xp + i * hw, hw);
  return make_op<T>(std::move(out), {x},
                    [h, w](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = expand_hw(gy, h, w);
                      return g;
                    });
}

// [N,C] -> [N,C,H,W]
template <class T>
Var<T> expand_hw(const Var<T>& v, int h, int w) {
  if (v.value().rank() != 2) throw ShapeError("expand_hw expects rank 2");
  const int n = v.value().dim(0), c = v.value().dim(1);
  Tensor<T> out({n, c, h, w});
  const T* vp = v.value().data();
  T* op = out.data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < n * c; ++i)
    for (std::int64_t j = 0; j < hw; ++j) op[i * hw + j] = vp[i];
  return make_op<T>(std::move(out), {v},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = sum_hw(gy);
                      return g;
                    });
}

template <class T>
Var<T> expand_chan(const Var<T>& v, int n, int h, int w);

// [N,C,H,W] -> [C]  (bias gradient reduction)
template <class T>
Var<T> sum_nhw(const Var<T>& x) {
  if (x.value().rank() != 4) throw ShapeError("sum_nhw expects rank 4");
  const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), w = x.value().dim(3);
  Tensor<T> out({c});
  const T* xp = x.value().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      out[j] += kernels::sum(xp + (static_cast<std::int64_t>(i) * c + j) * hw, hw);
  int nn = n, hh = h, ww = w;
  return make_op<T>(std::move(out), {x},
                    [nn, hh, ww](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = expand_chan(gy, nn, hh, ww);
                      return g;
                    });
}

// [C] -> [N,C,H,W]
template <class T>
Var<T> expand_chan(const Var<T>& v, int n, int h, int w) {
  if (v.value().rank() != 1) throw ShapeError("expand_chan expects rank 1");
  const int c = v.value().dim(0);
  Tensor<T> out({n, c, h, w});
  const T* vp = v.value().data();
  T* op = out.data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      for (std::int64_t s = 0; s < hw; ++s) op[(static_cast<std::int64_t>(i) * c + j) * hw + s] = vp[j];
  return make_op<T>(std::move(out), {v},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = sum_nhw(gy);
                      return g;
                    });
}

template <class T>
Var<T> sum_batch(const Var<T>& x);

// [1,...] -> [N,...]
template <class T>
Var<T> repeat_batch(const Var<T>& x, int n) {
  if (x.value().rank() < 1 || x.value().dim(0) != 1)
    throw ShapeError("repeat_batch expects leading dim 1");
  Shape os = x.shape();
  os[0] = n;
  Tensor<T> out(os);
  const std::int64_t blk = x.numel();
  for (int i = 0; i < n; ++i)
    std::memcpy(out.data() + i * blk, x.value().data(), sizeof(T) * static_cast<std::size_t>(blk));
  return make_op<T>(std::move(out), {x},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = sum_batch(gy);
                      return g;
                    });
}

// [N,...] -> [1,...]
template <class T>
Var<T> sum_batch(const Var<T>& x) {
  if (x.value().rank() < 1) throw ShapeError("sum_batch expects rank >= 1");
  const int n = x.value().dim(0);
  Shape os = x.shape();
  os[0] = 1;
  Tensor<T> out(os);
  const std::int64_t blk = out.numel();
  for (int i = 0; i < n; ++i) kernels::axpy(T(1), x.value().data() + i * blk, out.data(), blk);
  return make_op<T>(std::move(out), {x},
                    [n](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = repeat_batch(gy, n);
                      return g;
                    });
}

template <class T>
Var<T> sumpool2x(const Var<T>& x);

// [N,C,H,W] -> [N,C,2H,2W], nearest
template <class T>
Var<T> upsample2x(const Var<T>& x) {
  if (x.value().rank() != 4) throw ShapeError("upsample2x expects rank 4");
  const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), w = x.value().dim(3);
  Tensor<T> out({n, c, 2 * h, 2 * w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < 2 * h; ++y)
        for (int z = 0; z < 2 * w; ++z) out.at4(i, j, y, z) = x.value().at4(i, j, y / 2, z / 2);
  return make_op<T>(std::move(out), {x},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = sumpool2x(gy);
                      return g;
                    });
}

// [N,C,2H,2W] -> [N,C,H,W], 2x2 window sums (exact adjoint of upsample2x)
template <class T>
Var<T> sumpool2x(const Var<T>& x) {
  if (x.value().rank() != 4) throw ShapeError("sumpool2x expects rank 4");
  const int n = x.value().dim(0), c = x.value().dim(1), h2 = x.value().dim(2), w2 = x.value().dim(3);
  if (h2 % 2 || w2 % 2) throw ShapeError("sumpool2x expects even spatial dims");
  const int h = h2 / 2, w = w2 / 2;
  Tensor<T> out({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < h; ++y)
        for (int z = 0; z < w; ++z)
          out.at4(i, j, y, z) = x.value().at4(i, j, 2 * y, 2 * z) + x.value().at4(i, j, 2 * y, 2 * z + 1) +
                                x.value().at4(i, j, 2 * y + 1, 2 * z) +
                                x.value().at4(i, j, 2 * y + 1, 2 * z + 1);
  return make_op<T>(std::move(out), {x},
                    [](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(1);
                      if (needed[0]) g[0] = upsample2x(gy);
                      return g;
                    });
}

// ---------------------------------------------------------------------------
// linear family: y = x W^T, g W, a^T b — closed under differentiation
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
Tensor<T> linear_xwT_raw(const Tensor<T>& x, const Tensor<T>& w) {
  const int n = x.dim(0), k = x.dim(1), m = w.dim(0);
  if (w.dim(1) != k) throw ShapeError("linear: in-dim mismatch");
  Tensor<T> out({n, m});
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < m; ++o)
      out.at2(i, o) = kernels::dot(x.data() + static_cast<std::int64_t>(i) * k,
                                   w.data() + static_cast<std::int64_t>(o) * k, k);
  return out;
}

template <class T>
Tensor<T> linear_xw_raw(const Tensor<T>& g, const Tensor<T>& w) {
  const int n = g.dim(0), m = g.dim(1), k = w.dim(1);
  if (w.dim(0) != m) throw ShapeError("linear_xw: out-dim mismatch");
  Tensor<T> out({n, k});
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < m; ++o)
      kernels::axpy(g.at2(i, o), w.data() + static_cast<std::int64_t>(o) * k,
                    out.data() + static_cast<std::int64_t>(i) * k, k);
  return out;
}

template <class T>
Tensor<T> matmul_tn_raw(const Tensor<T>& a, const Tensor<T>& b) {
  const int n = a.dim(0), m = a.dim(1), k = b.dim(1);
  if (b.dim(0) != n) throw ShapeError("matmul_tn: batch mismatch");
  Tensor<T> out({m, k});
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < m; ++o)
      kernels::axpy(a.at2(i, o), b.data() + static_cast<std::int64_t>(i) * k,
                    out.data() + static_cast<std::int64_t>(o) * k, k);
  return out;
}

}  // namespace detail

template <class T>
Var<T> linear_xw(const Var<T>& g, const Var<T>& w);
template <class T>
Var<T> matmul_tn(const Var<T>& a, const Var<T>& b);

// x:[N,K], w:[M,K] -> [N,M]
template <class T>
Var<T> linear_xwT(const Var<T>& x, const Var<T>& w) {
  return make_op<T>(detail::linear_xwT_raw(x.value(), w.value()), {x, w},
                    [x, w](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(2);
                      if (needed[0]) g[0] = linear_xw(gy, w);
                      if (needed[1]) g[1] = matmul_tn(gy, x);
                      return g;
                    });
}

// g:[N,M], w:[M,K] -> [N,K]
template <class T>
Var<T> linear_xw(const Var<T>& g, const Var<T>& w) {
  return make_op<T>(detail::linear_xw_raw(g.value(), w.value()), {g, w},
                    [g, w](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> out(2);
                      if (needed[0]) out[0] = linear_xwT(gy, w);
                      if (needed[1]) out[1] = matmul_tn(g, gy);
                      return out;
                    });
}

// a:[N,M], b:[N,K] -> [M,K]
template <class T>
Var<T> matmul_tn(const Var<T>& a, const Var<T>& b) {
  return make_op<T>(detail::matmul_tn_raw(a.value(), b.value()), {a, b},
                    [a, b](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(2);
                      if (needed[0]) g[0] = linear_xwT(b, gy);
                      if (needed[1]) g[1] = linear_xw(a, gy);
                      return g;
                    });
}

// ---------------------------------------------------------------------------
// conv family: conv2d, its input-gradient and weight-gradient — also closed
// ---------------------------------------------------------------------------

struct ConvMeta {
  int stride = 1;
  int pad = 0;
};

namespace detail {

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Intersects 0 <= ow*s - p + kw < W with 0 <= ow < Wo.
inline void ow_range(int s, int p, int kw, int w_in, int w_out, int& lo, int& hi) {
  // smallest ow with ow*s >= p - kw
  int lo_num = p - kw;
  lo = lo_num <= 0 ? 0 : (lo_num + s - 1) / s;
  // largest ow with ow*s <= W - 1 + p - kw
  int hi_num = w_in - 1 + p - kw;
  hi = hi_num < 0 ? -1 : hi_num / s;
  if (hi >= w_out) hi = w_out - 1;
}

template <class T>
Tensor<T> conv2d_raw(const Tensor<T>& x, const Tensor<T>& w, ConvMeta m) {
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != ci) throw ShapeError("conv2d: channel mismatch");
  const int ho = conv_out_dim(h, kh, m.stride, m.pad);
  const int wo = conv_out_dim(wd, kw, m.stride, m.pad);
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: empty output");
  Tensor<T> out({n, co, ho, wo});
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < co; ++oc)
      for (int icx = 0; icx < ci; ++icx)
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = w.at4(oc, icx, ky, kx);
            if (wv == T(0)) continue;
            int lo, hi;
            ow_range(m.stride, m.pad, kx, wd, wo, lo, hi);
            if (hi < lo) continue;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * m.stride - m.pad + ky;
              if (iy < 0 || iy >= h) continue;
              T* orow = &out.at4(b, oc, oy, 0);
              const T* xrow = &x.at4(b, icx, iy, 0);
              if (m.stride == 1) {
                kernels::axpy(wv, xrow + lo - m.pad + kx, orow + lo, hi - lo + 1);
              } else {
                for (int ox = lo; ox <= hi; ++ox)
                  orow[ox] += wv * xrow[ox * m.stride - m.pad + kx];
              }
            }
          }
  return out;
}

template <class T>
Tensor<T> conv2d_dx_raw(const Tensor<T>& g, const Tensor<T>& w, ConvMeta m, const Shape& xshape) {
  const int n = xshape[0], ci = xshape[1], h = xshape[2], wd = xshape[3];
  const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int ho = g.dim(2), wo = g.dim(3);
  if (g.dim(0) != n || g.dim(1) != co || w.dim(1) != ci)
    throw ShapeError("conv2d_dx: shape mismatch");
  Tensor<T> out(xshape);
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < co; ++oc)
      for (int icx = 0; icx < ci; ++icx)
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = w.at4(oc, icx, ky, kx);
            if (wv == T(0)) continue;
            int lo, hi;
            ow_range(m.stride, m.pad, kx, wd, wo, lo, hi);
            if (hi < lo) continue;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * m.stride - m.pad + ky;
              if (iy < 0 || iy >= h) continue;
              const T* grow = &g.at4(b, oc, oy, 0);
              T* xrow = &out.at4(b, icx, iy, 0);
              if (m.stride == 1) {
                kernels::axpy(wv, grow + lo, xrow + lo - m.pad + kx, hi - lo + 1);
              } else {
                for (int ox = lo; ox <= hi; ++ox)
                  xrow[ox * m.stride - m.pad + kx] += wv * grow[ox];
              }
            }
          }
  return out;
}

template <class T>
Tensor<T> conv2d_dw_raw(const Tensor<T>& x, const Tensor<T>& g, ConvMeta m, const Shape& wshape) {
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = wshape[0], kh = wshape[2], kw = wshape[3];
  const int ho = g.dim(2), wo = g.dim(3);
  if (g.dim(0) != n || g.dim(1) != co || wshape[1] != ci)
    throw ShapeError("conv2d_dw: shape mismatch");
  Tensor<T> out(wshape);
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < co; ++oc)
      for (int icx = 0; icx < ci; ++icx)
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            int lo, hi;
            ow_range(m.stride, m.pad, kx, wd, wo, lo, hi);
            if (hi < lo) continue;
            T acc = 0;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * m.stride - m.pad + ky;
              if (iy < 0 || iy >= h) continue;
              const T* grow = &g.at4(b, oc, oy, 0);
              const T* xrow = &x.at4(b, icx, iy, 0);
              if (m.stride == 1) {
                acc += kernels::dot(grow + lo, xrow + lo - m.pad + kx, hi - lo + 1);
              } else {
                for (int ox = lo; ox <= hi; ++ox)
                  acc += grow[ox] * xrow[ox * m.stride - m.pad + kx];
              }
            }
            out.at4(oc, icx, ky, kx) += acc;
          }
  return out;
}

}  // namespace detail

template <class T>
Var<T> conv2d_dx(const Var<T>& g, const Var<T>& w, ConvMeta m, const Shape& xshape);
template <class T>
Var<T> conv2d_dw(const Var<T>& x, const Var<T>& g, ConvMeta m, const Shape& wshape);

// x:[N,Ci,H,W], w:[Co,Ci,kh,kw] -> [N,Co,Ho,Wo]
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, ConvMeta m) {
  Shape xs = x.shape(), ws = w.shape();
  return make_op<T>(detail::conv2d_raw(x.value(), w.value(), m), {x, w},
                    [x, w, m, xs, ws](const Var<T>& gy, const std::vector<char>& needed) {
                      std::vector<Var<T>> g(2);
                      if (needed[0]) g[0] = conv2d_dx(gy, w, m, xs);
                      if (needed[1]) g[1] = conv2d_dw(x, gy, m, ws);
                      return g;
                    });
}

template <class T>
Var<T> conv2d_dx(const Var<T>& g, const Var<T>& w, ConvMeta m, const Shape& xshape) {
  Shape ws = w.shape();
  return make_op<T>(detail::conv2d_dx_raw(g.value(), w.value(), m, xshape), {g, w},
                    [g, w, m, ws](const Var<T>& c, const std::vector<char>& needed) {
                      std::vector<Var<T>> out(2);
                      if (needed[0]) out[0] = conv2d(c, w, m);
                      if (needed[1]) out[1] = conv2d_dw(c, g, m, ws);
                      return out;
                    });
}

template <class T>
Var<T> conv2d_dw(const Var<T>& x, const Var<T>& g, ConvMeta m, const Shape& wshape) {
  Shape xs = x.shape();
  return make_op<T>(detail::conv2d_dw_raw(x.value(), g.value(), m, wshape), {x, g},
                    [x, g, m, xs](const Var<T>& c, const std::vector<char>& needed) {
                      std::vector<Var<T>> out(2);
                      if (needed[0]) out[0] = conv2d_dx(g, c, m, xs);
                      if (needed[1]) out[1] = conv2d(x, c, m);
                      return out;
                    });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <class T>
class GradMap {
 public:
  bool contains(const Var<T>& v) const { return g_.count(v.node()) != 0; }
  Var<T> at(const Var<T>& v) const {
    auto it = g_.find(v.node());
    if (it == g_.end()) throw NumericError("no gradient recorded for node");
    return it->second;
  }
  Var<T> get_or_zero(const Var<T>& v) const {
    auto it = g_.find(v.node());
    if (it != g_.end()) return it->second;
    return constant(Tensor<T>::zeros(v.shape()));
  }
  void set(Node<T>* n, Var<T> g) { g_[n] = std::move(g); }
  Var<T> get(Node<T>* n) const {
    auto it = g_.find(n);
    return it == g_.end() ? Var<T>() : it->second;
  }

 private:
  std::unordered_map<Node<T>*, Var<T>> g_;
};

// Reverse pass from a scalar root. Returned gradients are graph nodes, so a
// scalar built from them can be backpropagated again.
template <class T>
GradMap<T> backward(const Var<T>& root) {
  if (root.numel() != 1) throw NumericError("backward expects a scalar root");
  GradMap<T> gm;
  if (!root.requires_grad()) return gm;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{root.node()};
  seen.insert(root.node());
  while (!stack.empty()) {
    Node<T>* nd = stack.back();
    stack.pop_back();
    order.push_back(nd);
    for (const auto& p : nd->parents)
      if (p.requires_grad() && seen.insert(p.node()).second) stack.push_back(p.node());
  }
  std::sort(order.begin(), order.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->seq > b->seq; });

  gm.set(root.node(), constant(Tensor<T>::full(root.shape(), T(1))));
  for (Node<T>* nd : order) {
    if (!nd->vjp) continue;
    Var<T> gy = gm.get(nd);
    if (!gy.defined()) continue;
    std::vector<char> needed(nd->parents.size());
    for (std::size_t i = 0; i < nd->parents.size(); ++i)
      needed[i] = nd->parents[i].requires_grad() ? 1 : 0;
    std::vector<Var<T>> pg = nd->vjp(gy, needed);
    for (std::size_t i = 0; i < nd->parents.size(); ++i) {
      if (!needed[i] || !pg[i].defined()) continue;
      Node<T>* pn = nd->parents[i].node();
      Var<T> cur = gm.get(pn);
      gm.set(pn, cur.defined() ? add(cur, pg[i]) : pg[i]);
    }
  }
  return gm;
}

}  // namespace modify::ad
