#pragma once

// Shared fixtures for the unit tests: random image generation and a
// finite-difference gradient checker for the autodiff stack.

#include <cmath>
#include <random>

#include "udnet/autodiff.hpp"
#include "udnet/image.hpp"

namespace testutil {

inline udnet::ImageTensor random_image(int c, int h, int w, std::uint64_t seed,
                                       double lo = 0.0, double hi = 1.0) {
  udnet::ImageTensor img(c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data[i] = u(rng);
  return img;
}

inline udnet::ImageTensor constant_image(int c, int h, int w, double v) {
  udnet::ImageTensor img(c, h, w);
  img.data.setConstant(v);
  return img;
}

inline double max_abs_diff(const udnet::ImageTensor& a, const udnet::ImageTensor& b) {
  return (a.data - b.data).abs().maxCoeff();
}

using DVar = udnet::ad::Var<double>;
using DArray = udnet::ad::Array<double>;

inline DVar random_var(udnet::ad::Shape shape, std::uint64_t seed, double lo = -1.0,
                       double hi = 1.0, bool requires_grad = true) {
  DArray v(udnet::ad::shape_size(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
  return DVar::leaf(std::move(shape), std::move(v), requires_grad);
}

/// Central finite differences on every element of every leaf, against the
/// analytic gradient. Returns the worst relative error, with an absolute
/// floor so near-zero gradients do not blow up the ratio.
template <class Fn>
double gradcheck(std::vector<DVar> leaves, Fn&& loss_fn, double step = 1e-5) {
  DVar loss = loss_fn();
  if (loss.size() != 1) throw udnet::Error("gradcheck: loss must be scalar");
  for (auto& l : leaves) {
    auto n = l.node();
    n->ensure_grad();
    n->grad.setZero();
  }
  udnet::ad::backward(loss);

  double worst = 0.0;
  for (auto& leaf : leaves) {
    auto node = leaf.node();
    for (Eigen::Index i = 0; i < node->value.size(); ++i) {
      const double orig = node->value[i];
      node->value[i] = orig + step;
      const double up = loss_fn().value()[0];
      node->value[i] = orig - step;
      const double dn = loss_fn().value()[0];
      node->value[i] = orig;
      const double fd = (up - dn) / (2.0 * step);
      const double an = node->grad[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace testutil
