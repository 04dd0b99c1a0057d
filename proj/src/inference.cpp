#include "udnet/inference.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "udnet/image_io.hpp"

namespace udnet::inference {

namespace fs = std::filesystem;
using FloatVar = ad::Var<float>;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

int pad_to8(int n) { return (n + 7) / 8 * 8; }

/// Reflect padding (no edge repeat) on the bottom/right.
ImageTensor pad_reflect(const ImageTensor& img, int ph, int pw) {
  if (ph == img.height && pw == img.width) return img;
  ImageTensor out(img.channels, ph, pw, img.space);
  auto mirror = [](int i, int n) {
    if (i < n) return i;
    int m = 2 * n - 2 - i;  // reflect about the last valid index
    return std::max(0, m);
  };
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x)
        out.at(c, y, x) = img.at(c, mirror(y, img.height), mirror(x, img.width));
  return out;
}

ImageTensor crop_top_left(const ad::Array<float>& data, int h, int w, int ph, int pw) {
  ImageTensor out(3, h, w, ColourSpace::RGB);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) =
            static_cast<double>(data[(static_cast<Eigen::Index>(c) * ph + y) * pw + x]);
  return out;
}

double gaussian_log_density(const ad::Array<float>& z, const ad::Array<float>& mean,
                            const ad::Array<float>& log_var) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double lv = log_var[i];
    const double d = static_cast<double>(z[i]) - static_cast<double>(mean[i]);
    lp += -0.5 * (d * d / std::exp(lv) + lv + kLog2Pi);
  }
  return lp;
}

}  // namespace

EnhanceResult enhance(const ImageTensor& img, const nn::Model<float>& model, Mode mode,
                      int num_samples, std::uint64_t seed) {
  if (img.space != ColourSpace::RGB || img.channels != 3)
    throw Error("enhance: expected RGB input");
  if (num_samples < 1) throw Error("enhance: num_samples must be >= 1");

  const int h = img.height, w = img.width;
  const int ph = pad_to8(h), pw = pad_to8(w);
  ImageTensor padded = pad_reflect(img, ph, pw);

  ad::Array<float> x_data = padded.data.cast<float>();
  auto x = FloatVar::constant({1, 3, ph, pw}, std::move(x_data));

  auto prior_features = model.prior_unet(x);
  auto [prior_m, prior_s] = model.prior_head(prior_features);
  const int latent = model.arch.latent_dim;

  EnhanceResult result;
  if (mode == Mode::map) {
    auto a = FloatVar::constant({1, latent}, prior_m.mean.value());
    auto b = FloatVar::constant({1, latent}, prior_s.mean.value());
    auto y = model.decode(prior_features, a, b);
    result.images.push_back(crop_top_left(y.value(), h, w, ph, pw));
    result.log_densities.push_back(gaussian_log_density(prior_m.mean.value(), prior_m.mean.value(),
                                                        prior_m.log_var.value()) +
                                   gaussian_log_density(prior_s.mean.value(), prior_s.mean.value(),
                                                        prior_s.log_var.value()));
    return result;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  struct Draw {
    ImageTensor image;
    double log_density;
  };
  std::vector<Draw> draws;
  draws.reserve(num_samples);
  for (int s = 0; s < num_samples; ++s) {
    ad::Array<float> za(latent), zb(latent);
    for (int i = 0; i < latent; ++i)
      za[i] = prior_m.mean.value()[i] + std::exp(0.5f * prior_m.log_var.value()[i]) * normal(rng);
    for (int i = 0; i < latent; ++i)
      zb[i] = prior_s.mean.value()[i] + std::exp(0.5f * prior_s.log_var.value()[i]) * normal(rng);
    double lp = gaussian_log_density(za, prior_m.mean.value(), prior_m.log_var.value()) +
                gaussian_log_density(zb, prior_s.mean.value(), prior_s.log_var.value());
    auto a = FloatVar::constant({1, latent}, std::move(za));
    auto b = FloatVar::constant({1, latent}, std::move(zb));
    auto y = model.decode(prior_features, a, b);
    draws.push_back({crop_top_left(y.value(), h, w, ph, pw), lp});
  }
  std::stable_sort(draws.begin(), draws.end(),
                   [](const Draw& a, const Draw& b) { return a.log_density > b.log_density; });
  for (auto& d : draws) {
    result.images.push_back(std::move(d.image));
    result.log_densities.push_back(d.log_density);
  }
  return result;
}

int enhance_dir(const fs::path& in_dir, const fs::path& out_dir, const nn::Model<float>& model,
                Mode mode, int num_samples, std::uint64_t seed) {
  if (!fs::is_directory(in_dir)) throw Error("enhance_dir: not a directory: " + in_dir.string());
  fs::create_directories(out_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".png" || ext == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("enhance_dir: no images in " + in_dir.string());

  int processed = 0;
  for (const auto& f : files) {
    try {
      ImageTensor img = load_image(f);
      auto res = enhance(img, model, mode, num_samples, trainer::mix_seed(seed, processed));
      const std::string stem = f.stem().string();
      if (mode == Mode::map) {
        save_image(res.images[0], out_dir / (stem + "_udnet.png"));
      } else {
        for (size_t i = 0; i < res.images.size(); ++i)
          save_image(res.images[i], out_dir / (stem + "_udnet_" + std::to_string(i) + ".png"));
      }
      ++processed;
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
    }
  }
  if (processed == 0) throw Error("enhance_dir: no image could be processed");
  return processed;
}

}  // namespace udnet::inference
