#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace udnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ColourSpace { RGB, HSI, Lab };

/// Channel-major floating-point image. data layout: [c][y][x], so element
/// (c, y, x) lives at c*height*width + y*width + x.
struct ImageTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  Eigen::ArrayXd data;
  ColourSpace space = ColourSpace::RGB;

  ImageTensor() = default;
  ImageTensor(int c, int h, int w, ColourSpace s = ColourSpace::RGB)
      : channels(c), height(h), width(w),
        data(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(c) * h * w)),
        space(s) {
    if (c < 1 || h < 1 || w < 1) throw Error("ImageTensor: non-positive dimensions");
  }

  Eigen::Index plane_size() const { return static_cast<Eigen::Index>(height) * width; }
  Eigen::Index size() const { return data.size(); }

  double& at(int c, int y, int x) { return data[c * plane_size() + static_cast<Eigen::Index>(y) * width + x]; }
  double at(int c, int y, int x) const { return data[c * plane_size() + static_cast<Eigen::Index>(y) * width + x]; }

  /// View of one channel plane as a flat array.
  auto channel(int c) { return data.segment(c * plane_size(), plane_size()); }
  auto channel(int c) const { return data.segment(c * plane_size(), plane_size()); }

  bool same_shape(const ImageTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

struct ChannelStats {
  Eigen::ArrayXd mean, std_dev, max, min;  // one entry per channel
};

ChannelStats channel_stats(const ImageTensor& img);

ImageTensor rgb_to_hsi(const ImageTensor& img);
ImageTensor hsi_to_rgb(const ImageTensor& img);
ImageTensor rgb_to_lab(const ImageTensor& img);
ImageTensor lab_to_rgb(const ImageTensor& img);

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

}  // namespace udnet
