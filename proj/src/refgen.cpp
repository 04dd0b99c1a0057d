#include "udnet/refgen.hpp"

#include <cmath>
#include <random>

namespace udnet {

namespace {
void require_rgb(const ImageTensor& img, const char* op) {
  if (img.space != ColourSpace::RGB || img.channels != 3)
    throw Error(std::string(op) + ": expected RGB input");
}
}  // namespace

ImageTensor adjust_contrast(const ImageTensor& img, double alpha) {
  require_rgb(img, "adjust_contrast");
  ImageTensor out = img;
  for (int c = 0; c < 3; ++c) {
    double m = img.channel(c).mean();
    out.channel(c) = ((img.channel(c) - m) * alpha + img.channel(c)).cwiseMin(1.0).cwiseMax(0.0);
  }
  return out;
}

ImageTensor adjust_saturation(const ImageTensor& img, double alpha) {
  require_rgb(img, "adjust_saturation");
  ImageTensor out = img;
  const Eigen::Index n = img.plane_size();
  Eigen::ArrayXd m = (img.channel(0) + img.channel(1) + img.channel(2)) / 3.0;
  for (int c = 0; c < 3; ++c) {
    auto x = img.data.segment(c * n, n);
    out.data.segment(c * n, n) = ((x - m) * alpha + x).cwiseMin(1.0).cwiseMax(0.0);
  }
  return out;
}

ImageTensor gamma_correct(const ImageTensor& img, double gamma) {
  if (gamma <= 0.0) throw Error("gamma_correct: gamma must be positive");
  ImageTensor out = img;
  out.data = img.data.pow(gamma);
  return out;
}

ReferenceSet generate_reference_set(const ImageTensor& img, const RefGenParams& params,
                                    bool colour_correct_refs, std::uint64_t seed) {
  require_rgb(img, "generate_reference_set");
  if (params.num_labels < 1) throw Error("generate_reference_set: num_labels must be >= 1");
  if (params.gamma <= 0.0) throw Error("generate_reference_set: gamma must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> alpha_dist(params.alpha_min, params.alpha_max);
  std::uniform_real_distribution<double> gamma_dist(params.gamma_min, params.gamma_max);

  ReferenceSet set;
  set.raw = img;
  set.refs.reserve(params.num_labels);
  for (int i = 0; i < params.num_labels; ++i) {
    // cycle contrast -> saturation -> gamma; re-sample coefficients when
    // randomize is on (and always past the first cycle)
    bool resample = params.randomize || i >= 3;
    double ca = params.contrast_alpha, sa = params.saturation_alpha, g = params.gamma;
    if (resample) {
      ca = alpha_dist(rng);
      sa = alpha_dist(rng);
      g = gamma_dist(rng);
    }
    ImageTensor ref;
    switch (i % 3) {
      case 0: ref = adjust_contrast(img, ca); break;
      case 1: ref = adjust_saturation(img, sa); break;
      default: ref = gamma_correct(img, g); break;
    }
    if (colour_correct_refs) ref = colour_correct(ref);
    set.refs.push_back(std::move(ref));
  }
  return set;
}

}  // namespace udnet
