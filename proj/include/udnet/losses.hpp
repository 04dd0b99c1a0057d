#pragma once

#include <algorithm>

#include "udnet/network.hpp"

namespace udnet::losses {

using ad::Var;
using nn::GaussianVar;

enum class KlDirection { prior_to_posterior, posterior_to_prior };

struct LossWeights {
  double lambda = 0.1;    // perceptual weight
  double beta = 5e-4;     // KL weight
  long kl_warmup_steps = 1000;
  KlDirection kl_direction = KlDirection::prior_to_posterior;
};

template <class S>
struct LossBreakdown {
  Var<S> l_mse, l_perc, l_m, l_s, total;
};

template <class S>
Var<S> mse_loss(const Var<S>& pred, const Var<S>& target) {
  if (pred.shape() != target.shape()) throw Error("mse_loss: shape mismatch");
  return ad::mean_all(ad::square(ad::sub(pred, target)));
}

/// Sum over stages of MSE between fixed feature-net activations. Gradients
/// reach pred only; the target branch is detached by construction (the target
/// is supplied as a constant Var).
template <class S>
Var<S> perceptual_loss(const Var<S>& pred, const Var<S>& target, const nn::FeatureNet<S>& net) {
  if (pred.shape() != target.shape()) throw Error("perceptual_loss: shape mismatch");
  auto ps = net.stages(pred);
  Var<S> t_detached = Var<S>::constant(target.shape(), target.value());
  auto ts = net.stages(t_detached);
  Var<S> total = mse_loss(ps[0], ts[0]);
  for (size_t i = 1; i < ps.size(); ++i) total = ad::add(total, mse_loss(ps[i], ts[i]));
  return total;
}

/// Closed-form diagonal-Gaussian KL(p||q), summed over latent dims, averaged
/// over the batch.
template <class S>
Var<S> kl_gaussian(const GaussianVar<S>& p, const GaussianVar<S>& q) {
  if (p.mean.shape() != q.mean.shape() || p.log_var.shape() != q.log_var.shape())
    throw Error("kl_gaussian: dimension mismatch");
  const auto N = p.mean.dim(1);
  // (lq - lp)/2 + (exp(lp) + (mp - mq)^2) / (2 exp(lq)) - 1/2, elementwise
  auto half_diff = ad::mul_scalar(ad::sub(q.log_var, p.log_var), S(0.5));
  auto num = ad::add(ad::exp_op(p.log_var), ad::square(ad::sub(p.mean, q.mean)));
  auto ratio = ad::mul_scalar(ad::mul(num, ad::exp_op(ad::mul_scalar(q.log_var, S(-1)))), S(0.5));
  auto elems = ad::add_scalar(ad::add(half_diff, ratio), S(-0.5));
  // mean over everything times N = sum over dims, mean over batch
  return ad::mul_scalar(ad::mean_all(elems), static_cast<S>(N));
}

/// Total objective: L = L_mse + lambda L_perc + beta_eff (L_m + L_s) with
/// beta_eff = beta * min(1, step / kl_warmup_steps).
template <class S>
LossBreakdown<S> total_loss(const Var<S>& y_hat, const Var<S>& y_ref,
                            const GaussianVar<S>& posterior_m, const GaussianVar<S>& posterior_s,
                            const GaussianVar<S>& prior_m, const GaussianVar<S>& prior_s,
                            const LossWeights& weights, long step,
                            const nn::FeatureNet<S>* feature_net) {
  LossBreakdown<S> out;
  out.l_mse = mse_loss(y_hat, y_ref);
  if (feature_net && weights.lambda > 0) {
    out.l_perc = perceptual_loss(y_hat, y_ref, *feature_net);
  } else {
    out.l_perc = Var<S>::scalar(S(0));
  }
  auto kl = [&](const GaussianVar<S>& prior, const GaussianVar<S>& post) {
    return weights.kl_direction == KlDirection::prior_to_posterior ? kl_gaussian(prior, post)
                                                                   : kl_gaussian(post, prior);
  };
  out.l_m = kl(prior_m, posterior_m);
  out.l_s = kl(prior_s, posterior_s);
  const double warm =
      weights.kl_warmup_steps > 0
          ? std::min(1.0, static_cast<double>(step) / static_cast<double>(weights.kl_warmup_steps))
          : 1.0;
  const S beta_eff = static_cast<S>(weights.beta * warm);
  out.total = ad::add(
      ad::add(out.l_mse, ad::mul_scalar(out.l_perc, static_cast<S>(weights.lambda))),
      ad::mul_scalar(ad::add(out.l_m, out.l_s), beta_eff));
  return out;
}

}  // namespace udnet::losses
