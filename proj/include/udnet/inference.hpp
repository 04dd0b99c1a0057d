#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "udnet/network.hpp"
#include "udnet/trainer.hpp"

namespace udnet::inference {

enum class Mode { map, sample };

struct EnhanceResult {
  std::vector<ImageTensor> images;
  std::vector<double> log_densities;  // non-increasing; parallel to images
};

/// Enhances one image. "map" decodes the prior means (the Gaussian mode) and
/// returns one image; "sample" draws num_samples latent pairs, re-runs only
/// broadcast + PAdaIN + output block per draw, and returns the images ordered
/// by descending prior log-density (index 0 = maximum-probability estimate).
/// Inputs whose sides are not multiples of 8 are reflect-padded internally.
EnhanceResult enhance(const ImageTensor& img, const nn::Model<float>& model, Mode mode,
                      int num_samples, std::uint64_t seed);

/// Enhances every readable image in in_dir; per-file failures are logged and
/// skipped. Returns the number of images processed (error if zero).
int enhance_dir(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                const nn::Model<float>& model, Mode mode, int num_samples, std::uint64_t seed);

}  // namespace udnet::inference
