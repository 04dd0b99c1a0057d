#pragma once

// Conditional-VAE enhancer: two U-Net branches (prior on the degraded image,
// posterior on image+reference), Gaussian heads over a 20-dim latent space,
// latent broadcast and probabilistic adaptive instance normalization feeding
// an output block.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "udnet/autodiff.hpp"

namespace udnet::nn {

using ad::Shape;
using ad::Var;

struct ArchDescriptor {
  int latent_dim = 20;
  int base_width = 32;
  double width_factor = 1.0;
  bool softplus_scale = false;  // squash b through softplus before PAdaIN

  std::array<int, 4> widths() const {
    std::array<int, 4> w{};
    for (int i = 0; i < 4; ++i)
      w[i] = std::max(1, static_cast<int>(std::lround(base_width * (1 << i) * width_factor)));
    return w;
  }
  int feature_channels() const { return widths()[0]; }

  bool operator==(const ArchDescriptor&) const = default;
};

/// Ordered, named parameter registry; the order defines the checkpoint layout.
template <class S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var<S> var;
  };

  explicit ParamStore(std::uint64_t init_seed = 0) : rng_(init_seed) {}

  /// He-normal initialised parameter (fan_in from shape) or zeros for biases.
  Var<S> create(const std::string& name, Shape shape, double fan_in) {
    ad::Array<S> v(ad::shape_size(shape));
    if (fan_in > 0) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(dist(rng_));
    } else {
      v.setZero();
    }
    Var<S> p = Var<S>::leaf(std::move(shape), std::move(v), true);
    entries_.push_back({name, p});
    return p;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const auto& e : entries_) n += e.var.size();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) {
      auto n = e.var.node();
      n->ensure_grad();
      n->grad.setZero();
    }
  }

 private:
  std::vector<Entry> entries_;
  std::mt19937_64 rng_;
};

template <class S>
struct ConvLayer {
  Var<S> w, b;
  Eigen::Index k = 3;

  static ConvLayer create(ParamStore<S>& store, const std::string& name, Eigen::Index cin,
                          Eigen::Index cout, Eigen::Index k) {
    ConvLayer l;
    l.k = k;
    l.w = store.create(name + ".w", {cout, cin, k, k}, static_cast<double>(cin * k * k));
    l.b = store.create(name + ".b", {cout}, 0.0);
    return l;
  }
  Var<S> operator()(const Var<S>& x) const { return ad::conv2d(x, w, b, k); }
};

template <class S>
struct LinearLayer {
  Var<S> w, b;

  static LinearLayer create(ParamStore<S>& store, const std::string& name, Eigen::Index in,
                            Eigen::Index out) {
    LinearLayer l;
    l.w = store.create(name + ".w", {out, in}, static_cast<double>(in));
    l.b = store.create(name + ".b", {out}, 0.0);
    return l;
  }
  Var<S> operator()(const Var<S>& x) const { return ad::linear(x, w, b); }
};

/// 4-scale encoder-decoder with skip connections; returns features with
/// widths()[0] channels at input resolution. Spatial dims must divide by 8.
template <class S>
struct UNet {
  ConvLayer<S> enc0, enc1, enc2, enc3, dec2, dec1, dec0;

  static UNet create(ParamStore<S>& store, const std::string& name, Eigen::Index in_channels,
                     const ArchDescriptor& arch) {
    auto w = arch.widths();
    UNet u;
    u.enc0 = ConvLayer<S>::create(store, name + ".enc0", in_channels, w[0], 3);
    u.enc1 = ConvLayer<S>::create(store, name + ".enc1", w[0], w[1], 3);
    u.enc2 = ConvLayer<S>::create(store, name + ".enc2", w[1], w[2], 3);
    u.enc3 = ConvLayer<S>::create(store, name + ".enc3", w[2], w[3], 3);
    u.dec2 = ConvLayer<S>::create(store, name + ".dec2", w[3] + w[2], w[2], 3);
    u.dec1 = ConvLayer<S>::create(store, name + ".dec1", w[2] + w[1], w[1], 3);
    u.dec0 = ConvLayer<S>::create(store, name + ".dec0", w[1] + w[0], w[0], 3);
    return u;
  }

  Var<S> operator()(const Var<S>& x) const {
    if (x.shape().size() != 4) throw Error("unet: rank-4 input expected");
    if (x.dim(2) % 8 != 0 || x.dim(3) % 8 != 0)
      throw Error("unet: spatial dims must be divisible by 8");
    auto f0 = ad::leaky_relu(enc0(x));
    auto f1 = ad::leaky_relu(enc1(ad::avg_pool2(f0)));
    auto f2 = ad::leaky_relu(enc2(ad::avg_pool2(f1)));
    auto f3 = ad::leaky_relu(enc3(ad::avg_pool2(f2)));
    auto d2 = ad::leaky_relu(dec2(ad::concat_channels(ad::upsample_bilinear2(f3), f2)));
    auto d1 = ad::leaky_relu(dec1(ad::concat_channels(ad::upsample_bilinear2(d2), f1)));
    auto d0 = ad::leaky_relu(dec0(ad::concat_channels(ad::upsample_bilinear2(d1), f0)));
    return d0;
  }
};

/// Diagonal Gaussian over the latent space; mean and log-variance are [B,N].
template <class S>
struct GaussianVar {
  Var<S> mean, log_var;
};

/// Pooled features -> (mean-distribution, std-distribution) parameter pairs.
template <class S>
struct DistributionHead {
  LinearLayer<S> head_m, head_s;
  int latent_dim = 20;

  static DistributionHead create(ParamStore<S>& store, const std::string& name,
                                 Eigen::Index channels, int latent_dim) {
    DistributionHead h;
    h.latent_dim = latent_dim;
    h.head_m = LinearLayer<S>::create(store, name + ".m", channels, 2 * latent_dim);
    h.head_s = LinearLayer<S>::create(store, name + ".s", channels, 2 * latent_dim);
    return h;
  }

  std::pair<GaussianVar<S>, GaussianVar<S>> operator()(const Var<S>& features) const {
    auto pooled = ad::global_avg_pool(features);
    auto split = [&](const Var<S>& h) {
      GaussianVar<S> g;
      g.mean = ad::slice_cols(h, 0, latent_dim);
      g.log_var = ad::clamp(ad::slice_cols(h, latent_dim, latent_dim), S(-10), S(10));
      return g;
    };
    return {split(head_m(pooled)), split(head_s(pooled))};
  }
};

/// Reparameterised draw: z = mean + exp(log_var/2) * eps, eps given.
template <class S>
Var<S> sample_gaussian(const GaussianVar<S>& g, const Var<S>& eps) {
  auto sigma = ad::exp_op(ad::mul_scalar(g.log_var, S(0.5)));
  return ad::add(g.mean, ad::mul(sigma, eps));
}

/// PAdaIN: b * (x - mu(x)) / sigma(x) + a with per-channel spatial statistics.
template <class S>
Var<S> padain(const Var<S>& features, const Var<S>& a, const Var<S>& b, S eps = S(1e-5)) {
  auto mu = ad::global_avg_pool(features);
  auto diff = ad::bc_add(features, ad::mul_scalar(mu, S(-1)));
  auto var = ad::global_avg_pool(ad::mul(diff, diff));
  auto sigma = ad::sqrt_op(ad::add_scalar(var, eps));
  auto norm = ad::bc_mul(diff, ad::reciprocal(sigma));
  return ad::bc_add(ad::bc_mul(norm, b), a);
}

template <class S>
struct OutputBlock {
  ConvLayer<S> c1, c2;

  static OutputBlock create(ParamStore<S>& store, const std::string& name, Eigen::Index channels) {
    OutputBlock o;
    const Eigen::Index mid = std::max<Eigen::Index>(3, channels / 2);
    o.c1 = ConvLayer<S>::create(store, name + ".c1", channels, mid, 3);
    o.c2 = ConvLayer<S>::create(store, name + ".c2", mid, 3, 3);
    return o;
  }
  Var<S> operator()(const Var<S>& f) const { return ad::sigmoid(c2(ad::leaky_relu(c1(f)))); }
};

/// log(1 + e^x); adequate for the clamped log-variance range seen here.
template <class S>
Var<S> softplus(const Var<S>& x) {
  return ad::log_op(ad::add_scalar(ad::exp_op(x), S(1)));
}

template <class S>
struct Model {
  ArchDescriptor arch;
  ParamStore<S> store;
  UNet<S> prior_unet, posterior_unet;
  DistributionHead<S> prior_head, posterior_head;
  LinearLayer<S> broadcast_a, broadcast_b;
  OutputBlock<S> output_block;
  // identity-initialised 3x3 merge convolutions for the trainable colour path
  bool colour_trainable = false;
  ConvLayer<S> colour_gw, colour_wp, colour_r, colour_h, colour_l;

  explicit Model(const ArchDescriptor& a, std::uint64_t init_seed = 1234,
                 bool with_colour_module = false)
      : arch(a), store(init_seed), colour_trainable(with_colour_module) {
    const Eigen::Index C = arch.feature_channels();
    prior_unet = UNet<S>::create(store, "prior", 3, arch);
    posterior_unet = UNet<S>::create(store, "posterior", 6, arch);
    prior_head = DistributionHead<S>::create(store, "prior_head", C, arch.latent_dim);
    posterior_head = DistributionHead<S>::create(store, "posterior_head", C, arch.latent_dim);
    broadcast_a = LinearLayer<S>::create(store, "broadcast_a", arch.latent_dim, C);
    broadcast_b = LinearLayer<S>::create(store, "broadcast_b", arch.latent_dim, C);
    output_block = OutputBlock<S>::create(store, "output", C);
    if (colour_trainable) {
      // scaled identity init so the initial behaviour matches the
      // parameter-free averaging variant
      auto ident = [&](const std::string& name, S scale) {
        ConvLayer<S> l = ConvLayer<S>::create(store, name, 3, 3, 3);
        auto& w = l.w.node()->value;
        w.setZero();
        for (Eigen::Index c = 0; c < 3; ++c) w[(c * 3 + c) * 9 + 4] = scale;
        return l;
      };
      colour_gw = ident("colour.gw", S(0.5));
      colour_wp = ident("colour.wp", S(0.5));
      colour_r = ident("colour.r", S(1) / S(3));
      colour_h = ident("colour.h", S(1) / S(3));
      colour_l = ident("colour.l", S(1) / S(3));
    }
  }

  struct TrainOutput {
    Var<S> y_hat;
    GaussianVar<S> posterior_m, posterior_s;
    GaussianVar<S> prior_m, prior_s;
  };

  /// Decodes prior features with the given latent pair (a and b are [B,N]
  /// latent samples, broadcast to channel space inside).
  Var<S> decode(const Var<S>& prior_features, const Var<S>& a_latent,
                const Var<S>& b_latent) const {
    auto a = broadcast_a(a_latent);
    auto b = broadcast_b(b_latent);
    if (arch.softplus_scale) b = softplus(b);
    return output_block(padain(prior_features, a, b));
  }

  /// Full training-time forward pass. eps_a/eps_b are [B,N] standard-normal
  /// draws supplied by the caller (reparameterisation noise).
  TrainOutput forward_train(const Var<S>& x, const Var<S>& y_ref, const Var<S>& eps_a,
                            const Var<S>& eps_b) const {
    TrainOutput out;
    auto prior_features = prior_unet(x);
    std::tie(out.prior_m, out.prior_s) = prior_head(prior_features);
    auto posterior_features = posterior_unet(ad::concat_channels(x, y_ref));
    std::tie(out.posterior_m, out.posterior_s) = posterior_head(posterior_features);
    auto a_latent = sample_gaussian(out.posterior_m, eps_a);
    auto b_latent = sample_gaussian(out.posterior_s, eps_b);
    out.y_hat = decode(prior_features, a_latent, b_latent);
    return out;
  }
};

/// Fixed, non-trainable convolutional stack used by the perceptual loss:
/// 3->16->32->64 channels with leaky_relu and x2 average pooling between
/// stages. Weights come from a fixed seed or a weights file.
template <class S>
struct FeatureNet {
  Var<S> w1, b1, w2, b2, w3, b3;

  static FeatureNet from_seed(std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    auto init = [&](Shape shape, double fan_in) {
      ad::Array<S> v(ad::shape_size(shape));
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(dist(rng));
      return Var<S>::constant(std::move(shape), std::move(v));
    };
    FeatureNet f;
    f.w1 = init({16, 3, 3, 3}, 27.0);
    f.b1 = Var<S>::constant({16}, ad::Array<S>::Zero(16));
    f.w2 = init({32, 16, 3, 3}, 144.0);
    f.b2 = Var<S>::constant({32}, ad::Array<S>::Zero(32));
    f.w3 = init({64, 32, 3, 3}, 288.0);
    f.b3 = Var<S>::constant({64}, ad::Array<S>::Zero(64));
    return f;
  }

  std::vector<Var<S>> stages(const Var<S>& x) const {
    auto s1 = ad::leaky_relu(ad::conv2d(x, w1, b1, 3));
    auto s2 = ad::leaky_relu(ad::conv2d(ad::avg_pool2(s1), w2, b2, 3));
    auto s3 = ad::leaky_relu(ad::conv2d(ad::avg_pool2(s2), w3, b3, 3));
    return {s1, s2, s3};
  }
};

}  // namespace udnet::nn
