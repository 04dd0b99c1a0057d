#pragma once

#include <cstdint>
#include <vector>

#include "udnet/colourcorr.hpp"
#include "udnet/image.hpp"

namespace udnet {

struct RefGenParams {
  double contrast_alpha = 0.5;
  double saturation_alpha = 0.5;
  double gamma = 0.7;
  bool randomize = false;
  double alpha_min = 0.25, alpha_max = 0.75;
  double gamma_min = 0.5, gamma_max = 0.9;
  int num_labels = 3;
};

struct ReferenceSet {
  ImageTensor raw;
  std::vector<ImageTensor> refs;
};

/// y = (x - m) * alpha + x with m the per-channel global mean; clamped.
ImageTensor adjust_contrast(const ImageTensor& img, double alpha);

/// Same linear form with m the per-pixel across-channel mean; clamped.
ImageTensor adjust_saturation(const ImageTensor& img, double alpha);

/// y = x^gamma element-wise; gamma must be positive.
ImageTensor gamma_correct(const ImageTensor& img, double gamma);

/// Generates num_labels reference maps by cycling contrast / saturation /
/// gamma adjustments, optionally colour-corrected. Deterministic given seed.
ReferenceSet generate_reference_set(const ImageTensor& img, const RefGenParams& params,
                                    bool colour_correct_refs, std::uint64_t seed);

}  // namespace udnet
