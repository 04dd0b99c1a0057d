#pragma once

#include "udnet/image.hpp"

namespace udnet {

struct StretchParams {
  double p_low = 0.5;    // percentile, in [0,100)
  double p_high = 99.5;  // percentile, in (p_low,100]
};

/// Percentile with linear interpolation between order statistics.
double percentile(const Eigen::ArrayXd& values, double p);

/// Scales every channel towards the grand mean of the channel means.
ImageTensor gray_world_balance(const ImageTensor& img);

/// Scales every channel so its robust maximum (p_high percentile) becomes 1.
ImageTensor white_patch_balance(const ImageTensor& img, double p_high = 99.5);

/// Pixel-wise average of the Gray World and White Patch balances.
ImageTensor dual_statistic_balance(const ImageTensor& img, double p_high = 99.5);

/// Linear map sending the p_low/p_high percentiles to [lo_target, hi_target],
/// clipped. Constant channels pass through unchanged.
Eigen::ArrayXd stretch_channel(const Eigen::ArrayXd& values, double p_low,
                               double p_high, double lo_target, double hi_target);

/// Stretches S and I of an HSI image in place-semantics; H passes through
/// untouched. Exposed separately so the H-preservation contract is testable.
ImageTensor stretch_hsi(const ImageTensor& hsi, const StretchParams& params);

/// Stretch in RGB, HSI (H preserved) and Lab (L only), averaged back in RGB.
ImageTensor multi_colour_stretch(const ImageTensor& img, const StretchParams& params);

/// dual_statistic_balance followed by multi_colour_stretch.
ImageTensor colour_correct(const ImageTensor& img, const StretchParams& params = {});

}  // namespace udnet
