#pragma once

// Reverse-mode automatic differentiation over dense tensors, templated on the
// scalar type. float is used for training/inference, double for finite
// difference verification. Eigen provides all the heavy arithmetic; convolution
// forward/backward go through im2col + GEMM.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "udnet/image.hpp"  // for udnet::Error

namespace udnet::ad {

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index shape_size(const Shape& s) {
  Eigen::Index n = 1;
  for (auto d : s) n *= d;
  return n;
}

template <class S>
using Array = Eigen::Array<S, Eigen::Dynamic, 1>;
template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using RowMajorMap = Eigen::Map<Matrix<S>, 0, Eigen::Stride<1, Eigen::Dynamic>>;

template <class S>
struct Node {
  Shape shape;
  Array<S> value;
  Array<S> grad;  // sized lazily during backward
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void(Node<S>&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Array<S>::Zero(value.size());
  }
};

template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Var leaf(Shape shape, Array<S> value, bool requires_grad) {
    if (value.size() != shape_size(shape)) throw Error("Var::leaf: shape/data mismatch");
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->needs_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var constant(Shape shape, Array<S> value) {
    return leaf(std::move(shape), std::move(value), false);
  }
  static Var scalar(S v) { return constant({1}, Array<S>::Constant(1, v)); }

  bool valid() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Eigen::Index size() const { return node_->value.size(); }
  const Array<S>& value() const { return node_->value; }
  Array<S>& mutable_value() { return node_->value; }
  const Array<S>& grad() const { return node_->grad; }
  bool needs_grad() const { return node_->needs_grad; }
  std::shared_ptr<Node<S>> node() const { return node_; }

  Eigen::Index dim(size_t i) const { return node_->shape.at(i); }

 private:
  std::shared_ptr<Node<S>> node_;
};

namespace detail {

template <class S>
void check_finite(const Array<S>& v, const char* op) {
  if (!v.allFinite()) throw Error(std::string("non-finite values produced in ") + op);
}

template <class S>
Var<S> make_op(Shape shape, Array<S> value, std::vector<Var<S>> parents,
               std::function<void(Node<S>&)> backprop, const char* op) {
  check_finite(value, op);
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (auto& p : parents) {
    n->needs_grad = n->needs_grad || p.needs_grad();
    n->parents.push_back(p.node());
  }
  if (n->needs_grad) n->backprop = std::move(backprop);
  return Var<S>(std::move(n));
}

template <class S>
void accumulate(Node<S>& parent, const Array<S>& g) {
  if (!parent.needs_grad) return;
  parent.ensure_grad();
  parent.grad += g;
}

inline void require(bool cond, const char* msg) {
  if (!cond) throw Error(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch");
  return detail::make_op<S>(
      a.shape(), a.value() + b.value(), {a, b},
      [](Node<S>& n) {
        detail::accumulate(*n.parents[0], n.grad);
        detail::accumulate(*n.parents[1], n.grad);
      },
      "add");
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::require(a.shape() == b.shape(), "sub: shape mismatch");
  return detail::make_op<S>(
      a.shape(), a.value() - b.value(), {a, b},
      [](Node<S>& n) {
        detail::accumulate(*n.parents[0], n.grad);
        detail::accumulate<S>(*n.parents[1], -n.grad);
      },
      "sub");
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  detail::require(a.shape() == b.shape(), "mul: shape mismatch");
  return detail::make_op<S>(
      a.shape(), a.value() * b.value(), {a, b},
      [](Node<S>& n) {
        detail::accumulate<S>(*n.parents[0], n.grad * n.parents[1]->value);
        detail::accumulate<S>(*n.parents[1], n.grad * n.parents[0]->value);
      },
      "mul");
}

template <class S>
Var<S> add_scalar(const Var<S>& a, S c) {
  return detail::make_op<S>(
      a.shape(), a.value() + c, {a},
      [](Node<S>& n) { detail::accumulate(*n.parents[0], n.grad); }, "add_scalar");
}

template <class S>
Var<S> mul_scalar(const Var<S>& a, S c) {
  return detail::make_op<S>(
      a.shape(), a.value() * c, {a},
      [c](Node<S>& n) { detail::accumulate<S>(*n.parents[0], n.grad * c); }, "mul_scalar");
}

template <class S>
Var<S> square(const Var<S>& a) {
  return mul(a, a);
}

template <class S>
Var<S> reciprocal(const Var<S>& a) {
  return detail::make_op<S>(
      a.shape(), a.value().inverse(), {a},
      [](Node<S>& n) {
        detail::accumulate<S>(*n.parents[0], -n.grad * n.value.square());
      },
      "reciprocal");
}

template <class S>
Var<S> exp_op(const Var<S>& a) {
  return detail::make_op<S>(
      a.shape(), a.value().exp(), {a},
      [](Node<S>& n) { detail::accumulate<S>(*n.parents[0], n.grad * n.value); }, "exp");
}

template <class S>
Var<S> sqrt_op(const Var<S>& a) {
  return detail::make_op<S>(
      a.shape(), a.value().sqrt(), {a},
      [](Node<S>& n) {
        detail::accumulate<S>(*n.parents[0], n.grad / (S(2) * n.value));
      },
      "sqrt");
}

template <class S>
Var<S> log_op(const Var<S>& a) {
  return detail::make_op<S>(
      a.shape(), a.value().log(), {a},
      [](Node<S>& n) {
        detail::accumulate<S>(*n.parents[0], n.grad / n.parents[0]->value);
      },
      "log");
}

template <class S>
Var<S> leaky_relu(const Var<S>& a, S slope = S(0.2)) {
  Array<S> v = (a.value() > S(0)).select(a.value(), a.value() * slope);
  return detail::make_op<S>(
      a.shape(), std::move(v), {a},
      [slope](Node<S>& n) {
        const auto& x = n.parents[0]->value;
        detail::accumulate<S>(*n.parents[0],
                              (x > S(0)).select(n.grad, n.grad * slope));
      },
      "leaky_relu");
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
  Array<S> v = (S(1) / (S(1) + (-a.value()).exp()));
  return detail::make_op<S>(
      a.shape(), std::move(v), {a},
      [](Node<S>& n) {
        detail::accumulate<S>(*n.parents[0], n.grad * n.value * (S(1) - n.value));
      },
      "sigmoid");
}

/// Clamp with pass-through gradient strictly inside the interval.
template <class S>
Var<S> clamp(const Var<S>& a, S lo, S hi) {
  Array<S> v = a.value().cwiseMax(lo).cwiseMin(hi);
  return detail::make_op<S>(
      a.shape(), std::move(v), {a},
      [lo, hi](Node<S>& n) {
        const auto& x = n.parents[0]->value;
        Array<S> g = ((x >= lo) && (x <= hi)).select(n.grad, Array<S>::Zero(x.size()));
        detail::accumulate(*n.parents[0], g);
      },
      "clamp");
}

// ---------------------------------------------------------------------------
// reductions

template <class S>
Var<S> sum_all(const Var<S>& a) {
  return detail::make_op<S>(
      {1}, Array<S>::Constant(1, a.value().sum()), {a},
      [](Node<S>& n) {
        detail::accumulate<S>(*n.parents[0],
                              Array<S>::Constant(n.parents[0]->value.size(), n.grad[0]));
      },
      "sum_all");
}

template <class S>
Var<S> mean_all(const Var<S>& a) {
  const S inv = S(1) / static_cast<S>(a.size());
  return mul_scalar(sum_all(a), inv);
}

// ---------------------------------------------------------------------------
// shape ops

/// Channel concatenation of two [B,C,H,W] tensors.
template <class S>
Var<S> concat_channels(const Var<S>& a, const Var<S>& b) {
  detail::require(a.shape().size() == 4 && b.shape().size() == 4, "concat: rank-4 expected");
  detail::require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
                  "concat: incompatible shapes");
  const Eigen::Index B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const Eigen::Index P = a.dim(2) * a.dim(3);
  Array<S> v(B * (Ca + Cb) * P);
  for (Eigen::Index i = 0; i < B; ++i) {
    v.segment(i * (Ca + Cb) * P, Ca * P) = a.value().segment(i * Ca * P, Ca * P);
    v.segment(i * (Ca + Cb) * P + Ca * P, Cb * P) = b.value().segment(i * Cb * P, Cb * P);
  }
  return detail::make_op<S>(
      {B, Ca + Cb, a.dim(2), a.dim(3)}, std::move(v), {a, b},
      [B, Ca, Cb, P](Node<S>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.needs_grad) {
          pa.ensure_grad();
          for (Eigen::Index i = 0; i < B; ++i)
            pa.grad.segment(i * Ca * P, Ca * P) += n.grad.segment(i * (Ca + Cb) * P, Ca * P);
        }
        if (pb.needs_grad) {
          pb.ensure_grad();
          for (Eigen::Index i = 0; i < B; ++i)
            pb.grad.segment(i * Cb * P, Cb * P) +=
                n.grad.segment(i * (Ca + Cb) * P + Ca * P, Cb * P);
        }
      },
      "concat_channels");
}

/// Column slice of a [B,K] tensor.
template <class S>
Var<S> slice_cols(const Var<S>& a, Eigen::Index start, Eigen::Index len) {
  detail::require(a.shape().size() == 2, "slice_cols: rank-2 expected");
  const Eigen::Index B = a.dim(0), K = a.dim(1);
  detail::require(start >= 0 && start + len <= K, "slice_cols: out of range");
  Array<S> v(B * len);
  for (Eigen::Index i = 0; i < B; ++i)
    v.segment(i * len, len) = a.value().segment(i * K + start, len);
  return detail::make_op<S>(
      {B, len}, std::move(v), {a},
      [B, K, start, len](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (Eigen::Index i = 0; i < B; ++i)
          p.grad.segment(i * K + start, len) += n.grad.segment(i * len, len);
      },
      "slice_cols");
}

// ---------------------------------------------------------------------------
// pooling / resampling

/// Per-channel spatial mean: [B,C,H,W] -> [B,C].
template <class S>
Var<S> global_avg_pool(const Var<S>& a) {
  detail::require(a.shape().size() == 4, "global_avg_pool: rank-4 expected");
  const Eigen::Index B = a.dim(0), C = a.dim(1), P = a.dim(2) * a.dim(3);
  Array<S> v(B * C);
  for (Eigen::Index i = 0; i < B * C; ++i) v[i] = a.value().segment(i * P, P).mean();
  return detail::make_op<S>(
      {B, C}, std::move(v), {a},
      [B, C, P](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        const S inv = S(1) / static_cast<S>(P);
        for (Eigen::Index i = 0; i < B * C; ++i)
          p.grad.segment(i * P, P) += Array<S>::Constant(P, n.grad[i] * inv);
      },
      "global_avg_pool");
}

/// 2x2 average pooling, stride 2; spatial dims must be even.
template <class S>
Var<S> avg_pool2(const Var<S>& a) {
  detail::require(a.shape().size() == 4, "avg_pool2: rank-4 expected");
  const Eigen::Index B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  detail::require(H % 2 == 0 && W % 2 == 0, "avg_pool2: odd spatial dims");
  const Eigen::Index Ho = H / 2, Wo = W / 2;
  Array<S> v(B * C * Ho * Wo);
  for (Eigen::Index bc = 0; bc < B * C; ++bc) {
    const S* src = a.value().data() + bc * H * W;
    S* dst = v.data() + bc * Ho * Wo;
    for (Eigen::Index y = 0; y < Ho; ++y)
      for (Eigen::Index x = 0; x < Wo; ++x)
        dst[y * Wo + x] = (src[2 * y * W + 2 * x] + src[2 * y * W + 2 * x + 1] +
                           src[(2 * y + 1) * W + 2 * x] + src[(2 * y + 1) * W + 2 * x + 1]) /
                          S(4);
  }
  return detail::make_op<S>(
      {B, C, Ho, Wo}, std::move(v), {a},
      [B, C, H, W, Ho, Wo](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (Eigen::Index bc = 0; bc < B * C; ++bc) {
          const S* g = n.grad.data() + bc * Ho * Wo;
          S* dst = p.grad.data() + bc * H * W;
          for (Eigen::Index y = 0; y < Ho; ++y)
            for (Eigen::Index x = 0; x < Wo; ++x) {
              const S q = g[y * Wo + x] / S(4);
              dst[2 * y * W + 2 * x] += q;
              dst[2 * y * W + 2 * x + 1] += q;
              dst[(2 * y + 1) * W + 2 * x] += q;
              dst[(2 * y + 1) * W + 2 * x + 1] += q;
            }
        }
      },
      "avg_pool2");
}

/// 2x2 max pooling, stride 2; gradient routed to the argmax element.
template <class S>
Var<S> max_pool2(const Var<S>& a) {
  detail::require(a.shape().size() == 4, "max_pool2: rank-4 expected");
  const Eigen::Index B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  detail::require(H % 2 == 0 && W % 2 == 0, "max_pool2: odd spatial dims");
  const Eigen::Index Ho = H / 2, Wo = W / 2;
  Array<S> v(B * C * Ho * Wo);
  auto arg = std::make_shared<std::vector<Eigen::Index>>(B * C * Ho * Wo);
  for (Eigen::Index bc = 0; bc < B * C; ++bc) {
    const S* src = a.value().data() + bc * H * W;
    for (Eigen::Index y = 0; y < Ho; ++y)
      for (Eigen::Index x = 0; x < Wo; ++x) {
        Eigen::Index cand[4] = {2 * y * W + 2 * x, 2 * y * W + 2 * x + 1,
                                (2 * y + 1) * W + 2 * x, (2 * y + 1) * W + 2 * x + 1};
        Eigen::Index best = cand[0];
        for (int i = 1; i < 4; ++i)
          if (src[cand[i]] > src[best]) best = cand[i];
        v[bc * Ho * Wo + y * Wo + x] = src[best];
        (*arg)[bc * Ho * Wo + y * Wo + x] = bc * H * W + best;
      }
  }
  return detail::make_op<S>(
      {B, C, Ho, Wo}, std::move(v), {a},
      [arg](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (Eigen::Index i = 0; i < n.grad.size(); ++i) p.grad[(*arg)[i]] += n.grad[i];
      },
      "max_pool2");
}

/// x2 bilinear upsampling with half-pixel centre alignment.
template <class S>
Var<S> upsample_bilinear2(const Var<S>& a) {
  detail::require(a.shape().size() == 4, "upsample_bilinear2: rank-4 expected");
  const Eigen::Index B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  const Eigen::Index Ho = 2 * H, Wo = 2 * W;
  // per-axis source indices and weights
  auto coords = [](Eigen::Index n_out, Eigen::Index n_in, std::vector<Eigen::Index>& i0,
                   std::vector<Eigen::Index>& i1, std::vector<S>& w1) {
    i0.resize(n_out);
    i1.resize(n_out);
    w1.resize(n_out);
    for (Eigen::Index i = 0; i < n_out; ++i) {
      double f = (i + 0.5) * 0.5 - 0.5;
      auto lo = static_cast<Eigen::Index>(std::floor(f));
      double w = f - static_cast<double>(lo);
      i0[i] = std::clamp<Eigen::Index>(lo, 0, n_in - 1);
      i1[i] = std::clamp<Eigen::Index>(lo + 1, 0, n_in - 1);
      w1[i] = static_cast<S>(w);
    }
  };
  auto y0 = std::make_shared<std::vector<Eigen::Index>>();
  auto y1 = std::make_shared<std::vector<Eigen::Index>>();
  auto wy = std::make_shared<std::vector<S>>();
  auto x0 = std::make_shared<std::vector<Eigen::Index>>();
  auto x1 = std::make_shared<std::vector<Eigen::Index>>();
  auto wx = std::make_shared<std::vector<S>>();
  coords(Ho, H, *y0, *y1, *wy);
  coords(Wo, W, *x0, *x1, *wx);

  Array<S> v(B * C * Ho * Wo);
  for (Eigen::Index bc = 0; bc < B * C; ++bc) {
    const S* src = a.value().data() + bc * H * W;
    S* dst = v.data() + bc * Ho * Wo;
    for (Eigen::Index y = 0; y < Ho; ++y)
      for (Eigen::Index x = 0; x < Wo; ++x) {
        const S a00 = src[(*y0)[y] * W + (*x0)[x]], a01 = src[(*y0)[y] * W + (*x1)[x]];
        const S a10 = src[(*y1)[y] * W + (*x0)[x]], a11 = src[(*y1)[y] * W + (*x1)[x]];
        const S u = (*wy)[y], t = (*wx)[x];
        dst[y * Wo + x] = (S(1) - u) * ((S(1) - t) * a00 + t * a01) +
                          u * ((S(1) - t) * a10 + t * a11);
      }
  }
  return detail::make_op<S>(
      {B, C, Ho, Wo}, std::move(v), {a},
      [B, C, H, W, Ho, Wo, y0, y1, wy, x0, x1, wx](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (Eigen::Index bc = 0; bc < B * C; ++bc) {
          S* dst = p.grad.data() + bc * H * W;
          const S* g = n.grad.data() + bc * Ho * Wo;
          for (Eigen::Index y = 0; y < Ho; ++y)
            for (Eigen::Index x = 0; x < Wo; ++x) {
              const S u = (*wy)[y], t = (*wx)[x], gv = g[y * Wo + x];
              dst[(*y0)[y] * W + (*x0)[x]] += (S(1) - u) * (S(1) - t) * gv;
              dst[(*y0)[y] * W + (*x1)[x]] += (S(1) - u) * t * gv;
              dst[(*y1)[y] * W + (*x0)[x]] += u * (S(1) - t) * gv;
              dst[(*y1)[y] * W + (*x1)[x]] += u * t * gv;
            }
        }
      },
      "upsample_bilinear2");
}

// ---------------------------------------------------------------------------
// broadcasting over channels: v is [B,C], x is [B,C,H,W]

template <class S>
Var<S> bc_add(const Var<S>& x, const Var<S>& v) {
  detail::require(x.shape().size() == 4 && v.shape().size() == 2, "bc_add: bad ranks");
  detail::require(x.dim(0) == v.dim(0) && x.dim(1) == v.dim(1), "bc_add: shape mismatch");
  const Eigen::Index BC = x.dim(0) * x.dim(1), P = x.dim(2) * x.dim(3);
  Array<S> out = x.value();
  for (Eigen::Index i = 0; i < BC; ++i) out.segment(i * P, P) += v.value()[i];
  return detail::make_op<S>(
      x.shape(), std::move(out), {x, v},
      [BC, P](Node<S>& n) {
        detail::accumulate(*n.parents[0], n.grad);
        auto& pv = *n.parents[1];
        if (pv.needs_grad) {
          pv.ensure_grad();
          for (Eigen::Index i = 0; i < BC; ++i) pv.grad[i] += n.grad.segment(i * P, P).sum();
        }
      },
      "bc_add");
}

template <class S>
Var<S> bc_mul(const Var<S>& x, const Var<S>& v) {
  detail::require(x.shape().size() == 4 && v.shape().size() == 2, "bc_mul: bad ranks");
  detail::require(x.dim(0) == v.dim(0) && x.dim(1) == v.dim(1), "bc_mul: shape mismatch");
  const Eigen::Index BC = x.dim(0) * x.dim(1), P = x.dim(2) * x.dim(3);
  Array<S> out = x.value();
  for (Eigen::Index i = 0; i < BC; ++i) out.segment(i * P, P) *= v.value()[i];
  return detail::make_op<S>(
      x.shape(), std::move(out), {x, v},
      [BC, P](Node<S>& n) {
        auto& px = *n.parents[0];
        auto& pv = *n.parents[1];
        if (px.needs_grad) {
          px.ensure_grad();
          for (Eigen::Index i = 0; i < BC; ++i)
            px.grad.segment(i * P, P) += n.grad.segment(i * P, P) * pv.value[i];
        }
        if (pv.needs_grad) {
          pv.ensure_grad();
          for (Eigen::Index i = 0; i < BC; ++i)
            pv.grad[i] += (n.grad.segment(i * P, P) * px.value.segment(i * P, P)).sum();
        }
      },
      "bc_mul");
}

// ---------------------------------------------------------------------------
// linear / convolution

/// Fully connected layer: x [B,In], w [Out,In] (row-major flat), b [Out].
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  detail::require(x.shape().size() == 2 && w.shape().size() == 2 && b.shape().size() == 1,
                  "linear: bad ranks");
  const Eigen::Index B = x.dim(0), In = x.dim(1), Out = w.dim(0);
  detail::require(w.dim(1) == In && b.dim(0) == Out, "linear: shape mismatch");

  using CMap = Eigen::Map<const Matrix<S>>;
  using RMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  CMap Xm(x.value().data(), In, B);     // column b = sample b
  RMap Wm(w.value().data(), Out, In);
  Matrix<S> Om = Wm * Xm;               // (Out x B)
  Om.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(b.value().data(), Out);
  Array<S> out = Eigen::Map<Array<S>>(Om.data(), Out * B);  // flat = b*Out + o

  return detail::make_op<S>(
      {B, Out}, std::move(out), {x, w, b},
      [B, In, Out](Node<S>& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        auto& pb = *n.parents[2];
        Eigen::Map<const Matrix<S>> Gm(n.grad.data(), Out, B);
        RMap Wm(pw.value.data(), Out, In);
        if (px.needs_grad) {
          px.ensure_grad();
          Eigen::Map<Matrix<S>> dXm(px.grad.data(), In, B);
          dXm.noalias() += Wm.transpose() * Gm;
        }
        if (pw.needs_grad) {
          pw.ensure_grad();
          Eigen::Map<const Matrix<S>> Xm(px.value.data(), In, B);
          Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dWm(
              pw.grad.data(), Out, In);
          dWm.noalias() += Gm * Xm.transpose();
        }
        if (pb.needs_grad) {
          pb.ensure_grad();
          Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(pb.grad.data(), Out).noalias() +=
              Gm.rowwise().sum();
        }
      },
      "linear");
}

namespace detail {

// col is (Cin*k*k x H*W); row index = (c*k + ky)*k + kx, zero padding.
template <class S>
void im2col(const S* src, Eigen::Index C, Eigen::Index H, Eigen::Index W, Eigen::Index k,
            Matrix<S>& col) {
  const Eigen::Index pad = k / 2;
  col.setZero(C * k * k, H * W);
  for (Eigen::Index c = 0; c < C; ++c)
    for (Eigen::Index ky = 0; ky < k; ++ky)
      for (Eigen::Index kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (c * k + ky) * k + kx;
        for (Eigen::Index y = 0; y < H; ++y) {
          const Eigen::Index sy = y + ky - pad;
          if (sy < 0 || sy >= H) continue;
          const Eigen::Index x_lo = std::max<Eigen::Index>(0, pad - kx);
          const Eigen::Index x_hi = std::min(W, W + pad - kx);
          for (Eigen::Index x = x_lo; x < x_hi; ++x)
            col(row, y * W + x) = src[c * H * W + sy * W + x + kx - pad];
        }
      }
}

template <class S>
void col2im_accumulate(const Matrix<S>& col, Eigen::Index C, Eigen::Index H, Eigen::Index W,
                       Eigen::Index k, S* dst) {
  const Eigen::Index pad = k / 2;
  for (Eigen::Index c = 0; c < C; ++c)
    for (Eigen::Index ky = 0; ky < k; ++ky)
      for (Eigen::Index kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (c * k + ky) * k + kx;
        for (Eigen::Index y = 0; y < H; ++y) {
          const Eigen::Index sy = y + ky - pad;
          if (sy < 0 || sy >= H) continue;
          const Eigen::Index x_lo = std::max<Eigen::Index>(0, pad - kx);
          const Eigen::Index x_hi = std::min(W, W + pad - kx);
          for (Eigen::Index x = x_lo; x < x_hi; ++x)
            dst[c * H * W + sy * W + x + kx - pad] += col(row, y * W + x);
        }
      }
}

}  // namespace detail

/// 2-D convolution, stride 1, zero padding k/2 (same-size output).
/// x [B,Cin,H,W]; w [Cout,Cin,k,k] flat row-major; b [Cout]; k odd (1 or 3).
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, Eigen::Index k) {
  detail::require(x.shape().size() == 4 && w.shape().size() == 4 && b.shape().size() == 1,
                  "conv2d: bad ranks");
  const Eigen::Index B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Eigen::Index Cout = w.dim(0);
  detail::require(w.dim(1) == Cin && w.dim(2) == k && w.dim(3) == k, "conv2d: weight shape mismatch");
  detail::require(b.dim(0) == Cout, "conv2d: bias shape mismatch");
  detail::require(k % 2 == 1, "conv2d: kernel must be odd");

  using RMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  RMap Wm(w.value().data(), Cout, Cin * k * k);
  Array<S> out(B * Cout * H * W);
  Matrix<S> col;
  for (Eigen::Index i = 0; i < B; ++i) {
    detail::im2col(x.value().data() + i * Cin * H * W, Cin, H, W, k, col);
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Om(
        out.data() + i * Cout * H * W, Cout, H * W);
    Om.noalias() = Wm * col;
    Om.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(b.value().data(), Cout);
  }
  return detail::make_op<S>(
      {B, Cout, H, W}, std::move(out), {x, w, b},
      [B, Cin, H, W, Cout, k](Node<S>& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        auto& pb = *n.parents[2];
        RMap Wm(pw.value.data(), Cout, Cin * k * k);
        if (px.needs_grad) px.ensure_grad();
        if (pw.needs_grad) pw.ensure_grad();
        if (pb.needs_grad) pb.ensure_grad();
        Matrix<S> col, dcol;
        for (Eigen::Index i = 0; i < B; ++i) {
          Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Gm(
              n.grad.data() + i * Cout * H * W, Cout, H * W);
          if (pw.needs_grad) {
            detail::im2col(px.value.data() + i * Cin * H * W, Cin, H, W, k, col);
            Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dWm(
                pw.grad.data(), Cout, Cin * k * k);
            dWm.noalias() += Gm * col.transpose();
          }
          if (pb.needs_grad) {
            Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(pb.grad.data(), Cout).noalias() +=
                Gm.rowwise().sum();
          }
          if (px.needs_grad) {
            dcol.noalias() = Wm.transpose() * Gm;
            detail::col2im_accumulate(dcol, Cin, H, W, k, px.grad.data() + i * Cin * H * W);
          }
        }
      },
      "conv2d");
}

// ---------------------------------------------------------------------------
// backward pass

template <class S>
void backward(const Var<S>& root) {
  detail::require(root.size() == 1, "backward: root must be scalar");
  if (!root.needs_grad()) return;
  // iterative topological order
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<S>* p = n->parents[idx++].get();
      if (p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad();
  root.node()->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backprop && n->grad.size() == n->value.size()) n->backprop(*n);
  }
}

}  // namespace udnet::ad
