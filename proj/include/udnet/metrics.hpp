#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "udnet/image.hpp"

namespace udnet::metrics {

/// ITU-R 601 luminance plane.
Eigen::ArrayXd luminance(const ImageTensor& img);

/// 10*log10(1/MSE) over all channels, capped at 100 dB for identical images.
double psnr(const ImageTensor& pred, const ImageTensor& ref);

/// Mean local SSIM on luminance; 11x11 Gaussian window sigma 1.5, K1=0.01,
/// K2=0.03, dynamic range 1.
double ssim(const ImageTensor& pred, const ImageTensor& ref);

/// Gradient magnitude similarity deviation on luminance after a x2 average
/// pool; Prewitt gradients, c=0.0026 for unit dynamic range. Lower is better.
double gmsd(const ImageTensor& pred, const ImageTensor& ref);

struct UiqmParams {
  double trim_alpha = 0.1;   // asymmetric alpha-trim fraction per side
  int block = 8;             // EME / AMEE block size
  double c1 = 0.0282, c2 = 0.2953, c3 = 3.5753;
  double plip_gamma = 1026.0;
};

double uicm(const ImageTensor& img, const UiqmParams& p = {});
double uism(const ImageTensor& img, const UiqmParams& p = {});
double uiconm(const ImageTensor& img, const UiqmParams& p = {});
double uiqm(const ImageTensor& img, const UiqmParams& p = {});

struct MetricRow {
  std::string name;
  std::optional<double> psnr, ssim, gmsd;  // absent when no reference paired
  double uiqm, uicm, uism, uiconm;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::optional<double> mean_psnr, mean_ssim, mean_gmsd;
  double mean_uiqm = 0, mean_uicm = 0, mean_uism = 0, mean_uiconm = 0;
};

/// Scores every image in pred_dir; full-reference metrics are computed where a
/// reference with a matching stem (optionally minus a trailing "_udnet")
/// exists in ref_dir. Writes a CSV with one row per image plus a mean row.
MetricReport score(const std::filesystem::path& pred_dir,
                   const std::filesystem::path& ref_dir,  // empty -> no-reference only
                   const std::filesystem::path& out_csv);

}  // namespace udnet::metrics
