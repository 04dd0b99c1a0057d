#include "udnet/image.hpp"

#include <algorithm>
#include <cmath>

namespace udnet {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// sRGB transfer (D65)
double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}
double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;
constexpr double kLabEps = 216.0 / 24389.0;
constexpr double kLabKappa = 24389.0 / 27.0;

double lab_f(double t) {
  return t > kLabEps ? std::cbrt(t) : (kLabKappa * t + 16.0) / 116.0;
}
double lab_finv(double ft) {
  double t3 = ft * ft * ft;
  return t3 > kLabEps ? t3 : (116.0 * ft - 16.0) / kLabKappa;
}

void require_space(const ImageTensor& img, ColourSpace s, const char* op) {
  if (img.space != s) throw Error(std::string(op) + ": wrong source colour space");
  if (img.channels != 3) throw Error(std::string(op) + ": expected 3 channels");
}
}  // namespace

ChannelStats channel_stats(const ImageTensor& img) {
  ChannelStats st;
  st.mean.resize(img.channels);
  st.std_dev.resize(img.channels);
  st.max.resize(img.channels);
  st.min.resize(img.channels);
  for (int c = 0; c < img.channels; ++c) {
    auto ch = img.channel(c);
    st.mean[c] = ch.mean();
    st.std_dev[c] = std::sqrt((ch - st.mean[c]).square().mean());
    st.max[c] = ch.maxCoeff();
    st.min[c] = ch.minCoeff();
  }
  return st;
}

ImageTensor rgb_to_hsi(const ImageTensor& img) {
  require_space(img, ColourSpace::RGB, "rgb_to_hsi");
  ImageTensor out(3, img.height, img.width, ColourSpace::HSI);
  const Eigen::Index n = img.plane_size();
  for (Eigen::Index i = 0; i < n; ++i) {
    double r = img.data[i], g = img.data[n + i], b = img.data[2 * n + i];
    double intensity = (r + g + b) / 3.0;
    double mn = std::min({r, g, b});
    double h = 0.0, s = 0.0;
    if (intensity > 0.0) {
      s = 1.0 - mn / intensity;
      if (s > 0.0) {
        double num = 0.5 * ((r - g) + (r - b));
        double den = std::sqrt((r - g) * (r - g) + (r - b) * (g - b));
        if (den > 0.0) {
          double cosv = std::min(1.0, std::max(-1.0, num / den));
          h = std::acos(cosv);
          if (b > g) h = kTwoPi - h;
          if (h >= kTwoPi) h = 0.0;
        }
      }
    }
    out.data[i] = h;
    out.data[n + i] = s;
    out.data[2 * n + i] = intensity;
  }
  return out;
}

ImageTensor hsi_to_rgb(const ImageTensor& img) {
  require_space(img, ColourSpace::HSI, "hsi_to_rgb");
  ImageTensor out(3, img.height, img.width, ColourSpace::RGB);
  const Eigen::Index n = img.plane_size();
  const double third = kTwoPi / 3.0;  // 120 degrees
  for (Eigen::Index i = 0; i < n; ++i) {
    double h = img.data[i], s = img.data[n + i], in = img.data[2 * n + i];
    double r, g, b;
    auto sector = [&](double hh, double& x, double& y, double& z) {
      // x is the channel entering its minimum, y the dominant one
      x = in * (1.0 - s);
      y = in * (1.0 + s * std::cos(hh) / std::cos(kPi / 3.0 - hh));
      z = 3.0 * in - x - y;
    };
    if (h < third) {
      sector(h, b, r, g);
    } else if (h < 2.0 * third) {
      sector(h - third, r, g, b);
    } else {
      sector(h - 2.0 * third, g, b, r);
    }
    out.data[i] = clamp01(r);
    out.data[n + i] = clamp01(g);
    out.data[2 * n + i] = clamp01(b);
  }
  return out;
}

ImageTensor rgb_to_lab(const ImageTensor& img) {
  require_space(img, ColourSpace::RGB, "rgb_to_lab");
  ImageTensor out(3, img.height, img.width, ColourSpace::Lab);
  const Eigen::Index n = img.plane_size();
  for (Eigen::Index i = 0; i < n; ++i) {
    double r = srgb_to_linear(img.data[i]);
    double g = srgb_to_linear(img.data[n + i]);
    double b = srgb_to_linear(img.data[2 * n + i]);
    double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
    out.data[i] = 116.0 * fy - 16.0;
    out.data[n + i] = 500.0 * (fx - fy);
    out.data[2 * n + i] = 200.0 * (fy - fz);
  }
  return out;
}

ImageTensor lab_to_rgb(const ImageTensor& img) {
  require_space(img, ColourSpace::Lab, "lab_to_rgb");
  ImageTensor out(3, img.height, img.width, ColourSpace::RGB);
  const Eigen::Index n = img.plane_size();
  for (Eigen::Index i = 0; i < n; ++i) {
    double L = img.data[i], a = img.data[n + i], bb = img.data[2 * n + i];
    double fy = (L + 16.0) / 116.0;
    double fx = fy + a / 500.0;
    double fz = fy - bb / 200.0;
    double x = kXn * lab_finv(fx);
    double y = kYn * (L > kLabKappa * kLabEps ? fy * fy * fy : L / kLabKappa);
    double z = kZn * lab_finv(fz);
    double r = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
    double g = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
    double b = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
    out.data[i] = clamp01(linear_to_srgb(std::max(0.0, r)));
    out.data[n + i] = clamp01(linear_to_srgb(std::max(0.0, g)));
    out.data[2 * n + i] = clamp01(linear_to_srgb(std::max(0.0, b)));
  }
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw Error("resize_bilinear: non-positive target size");
  if (out_h == img.height && out_w == img.width) return img;
  ImageTensor out(img.channels, out_h, out_w, img.space);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      double fy = (y + 0.5) * sy - 0.5;
      int y0 = static_cast<int>(std::floor(fy));
      double wy = fy - y0;
      int y0c = std::clamp(y0, 0, img.height - 1);
      int y1c = std::clamp(y0 + 1, 0, img.height - 1);
      for (int x = 0; x < out_w; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        int x0 = static_cast<int>(std::floor(fx));
        double wx = fx - x0;
        int x0c = std::clamp(x0, 0, img.width - 1);
        int x1c = std::clamp(x0 + 1, 0, img.width - 1);
        double v00 = img.at(c, y0c, x0c), v01 = img.at(c, y0c, x1c);
        double v10 = img.at(c, y1c, x0c), v11 = img.at(c, y1c, x1c);
        out.at(c, y, x) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                          wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  }
  return out;
}

}  // namespace udnet
