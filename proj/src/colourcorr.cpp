#include "udnet/colourcorr.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace udnet {

namespace {
void require_rgb(const ImageTensor& img, const char* op) {
  if (img.space != ColourSpace::RGB || img.channels != 3)
    throw Error(std::string(op) + ": expected RGB input");
}
}  // namespace

double percentile(const Eigen::ArrayXd& values, double p) {
  if (values.size() == 0) throw Error("percentile: empty input");
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  double pos = (p / 100.0) * (static_cast<double>(v.size()) - 1.0);
  auto lo = static_cast<size_t>(std::floor(pos));
  auto hi = static_cast<size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

ImageTensor gray_world_balance(const ImageTensor& img) {
  require_rgb(img, "gray_world_balance");
  ImageTensor out = img;
  Eigen::Array3d means;
  for (int c = 0; c < 3; ++c) means[c] = img.channel(c).mean();
  if ((means <= 0.0).any()) throw Error("gray_world_balance: degenerate channel (zero mean)");
  const double grand = means.mean();
  for (int c = 0; c < 3; ++c)
    out.channel(c) = (img.channel(c) * (grand / means[c])).cwiseMin(1.0).cwiseMax(0.0);
  return out;
}

ImageTensor white_patch_balance(const ImageTensor& img, double p_high) {
  require_rgb(img, "white_patch_balance");
  ImageTensor out = img;
  for (int c = 0; c < 3; ++c) {
    double m = percentile(img.channel(c), p_high);
    if (m <= 0.0) throw Error("white_patch_balance: degenerate channel (zero maximum)");
    out.channel(c) = (img.channel(c) / m).cwiseMin(1.0).cwiseMax(0.0);
  }
  return out;
}

ImageTensor dual_statistic_balance(const ImageTensor& img, double p_high) {
  ImageTensor gw = gray_world_balance(img);
  ImageTensor wp = white_patch_balance(img, p_high);
  ImageTensor out = gw;
  out.data = 0.5 * (gw.data + wp.data);
  return out;
}

Eigen::ArrayXd stretch_channel(const Eigen::ArrayXd& values, double p_low,
                               double p_high, double lo_target, double hi_target) {
  if (!(p_low < p_high)) throw Error("stretch_channel: p_low must be < p_high");
  double lo = percentile(values, p_low);
  double hi = percentile(values, p_high);
  if (hi <= lo) return values;  // constant (or degenerate) channel
  double scale = (hi_target - lo_target) / (hi - lo);
  return ((values - lo) * scale + lo_target).cwiseMin(hi_target).cwiseMax(lo_target);
}

ImageTensor stretch_hsi(const ImageTensor& hsi, const StretchParams& params) {
  if (hsi.space != ColourSpace::HSI) throw Error("stretch_hsi: expected HSI input");
  ImageTensor out = hsi;  // H plane copied verbatim
  out.channel(1) = stretch_channel(hsi.channel(1), params.p_low, params.p_high, 0.0, 1.0);
  out.channel(2) = stretch_channel(hsi.channel(2), params.p_low, params.p_high, 0.0, 1.0);
  return out;
}

ImageTensor multi_colour_stretch(const ImageTensor& img, const StretchParams& params) {
  require_rgb(img, "multi_colour_stretch");

  ImageTensor rgb = img;
  for (int c = 0; c < 3; ++c)
    rgb.channel(c) = stretch_channel(img.channel(c), params.p_low, params.p_high, 0.0, 1.0);

  ImageTensor hsi_path = hsi_to_rgb(stretch_hsi(rgb_to_hsi(img), params));

  ImageTensor lab = rgb_to_lab(img);
  lab.channel(0) = stretch_channel(lab.channel(0), params.p_low, params.p_high, 0.0, 100.0);
  ImageTensor lab_path = lab_to_rgb(lab);

  ImageTensor out = img;
  out.data = ((rgb.data + hsi_path.data + lab_path.data) / 3.0).cwiseMin(1.0).cwiseMax(0.0);
  return out;
}

ImageTensor colour_correct(const ImageTensor& img, const StretchParams& params) {
  return multi_colour_stretch(dual_statistic_balance(img, params.p_high), params);
}

}  // namespace udnet
