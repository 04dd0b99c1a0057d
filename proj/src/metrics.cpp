#include "udnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include "udnet/image_io.hpp"
#include "udnet/parallel.hpp"

namespace udnet::metrics {

namespace fs = std::filesystem;

namespace {

void require_pair(const ImageTensor& a, const ImageTensor& b, const char* op) {
  if (!a.same_shape(b)) throw Error(std::string(op) + ": shape mismatch");
}

using Plane = Eigen::ArrayXXd;  // (height x width)

Plane to_plane(const Eigen::ArrayXd& flat, int h, int w) {
  Plane p(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) p(y, x) = flat[static_cast<Eigen::Index>(y) * w + x];
  return p;
}

/// 'same' correlation; zero padding by default, edge-replicate on request
/// (replicate keeps gradients of constant images exactly zero).
Plane filter_same(const Plane& img, const Plane& kernel, bool replicate = false) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int kh = static_cast<int>(kernel.rows()), kw = static_cast<int>(kernel.cols());
  const int oy = kh / 2, ox = kw / 2;
  Plane out = Plane::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int ky = 0; ky < kh; ++ky) {
        int sy = y + ky - oy;
        if (replicate) sy = std::clamp(sy, 0, h - 1);
        else if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int sx = x + kx - ox;
          if (replicate) sx = std::clamp(sx, 0, w - 1);
          else if (sx < 0 || sx >= w) continue;
          acc += img(sy, sx) * kernel(ky, kx);
        }
      }
      out(y, x) = acc;
    }
  return out;
}

/// 'valid' correlation.
Plane filter_valid(const Plane& img, const Plane& kernel) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int kh = static_cast<int>(kernel.rows()), kw = static_cast<int>(kernel.cols());
  if (h < kh || w < kw) throw Error("filter: image smaller than window");
  Plane out(h - kh + 1, w - kw + 1);
  for (int y = 0; y + kh <= h; ++y)
    for (int x = 0; x + kw <= w; ++x) {
      double acc = 0;
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) acc += img(y + ky, x + kx) * kernel(ky, kx);
      out(y, x) = acc;
    }
  return out;
}

Plane gaussian_window(int size, double sigma) {
  Plane k(size, size);
  const double c = (size - 1) / 2.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      k(y, x) = std::exp(-((y - c) * (y - c) + (x - c) * (x - c)) / (2.0 * sigma * sigma));
  k /= k.sum();
  return k;
}

Plane avg_pool2(const Plane& p) {
  const int h = static_cast<int>(p.rows()) / 2, w = static_cast<int>(p.cols()) / 2;
  if (h < 1 || w < 1) return p;
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out(y, x) = (p(2 * y, 2 * x) + p(2 * y, 2 * x + 1) + p(2 * y + 1, 2 * x) +
                   p(2 * y + 1, 2 * x + 1)) / 4.0;
  return out;
}

double trimmed_mean(std::vector<double> v, double alpha) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  const auto t = static_cast<size_t>(std::floor(alpha * static_cast<double>(n)));
  if (2 * t >= n) return v[n / 2];
  double acc = 0;
  for (size_t i = t; i < n - t; ++i) acc += v[i];
  return acc / static_cast<double>(n - 2 * t);
}

}  // namespace

Eigen::ArrayXd luminance(const ImageTensor& img) {
  if (img.channels != 3) throw Error("luminance: expected 3 channels");
  return 0.299 * img.channel(0) + 0.587 * img.channel(1) + 0.114 * img.channel(2);
}

double psnr(const ImageTensor& pred, const ImageTensor& ref) {
  require_pair(pred, ref, "psnr");
  const double mse = (pred.data - ref.data).square().mean();
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageTensor& pred, const ImageTensor& ref) {
  require_pair(pred, ref, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, kK1 = 0.01, kK2 = 0.03, kL = 1.0;
  if (pred.height < kWin || pred.width < kWin) throw Error("ssim: image smaller than window");
  const double c1 = (kK1 * kL) * (kK1 * kL), c2 = (kK2 * kL) * (kK2 * kL);

  Plane a = to_plane(luminance(pred), pred.height, pred.width);
  Plane b = to_plane(luminance(ref), ref.height, ref.width);
  Plane win = gaussian_window(kWin, kSigma);

  Plane mu_a = filter_valid(a, win), mu_b = filter_valid(b, win);
  Plane mu_aa = mu_a * mu_a, mu_bb = mu_b * mu_b, mu_ab = mu_a * mu_b;
  Plane sigma_aa = filter_valid(a * a, win) - mu_aa;
  Plane sigma_bb = filter_valid(b * b, win) - mu_bb;
  Plane sigma_ab = filter_valid(a * b, win) - mu_ab;

  Plane num = (2.0 * mu_ab + c1) * (2.0 * sigma_ab + c2);
  Plane den = (mu_aa + mu_bb + c1) * (sigma_aa + sigma_bb + c2);
  return (num / den).mean();
}

double gmsd(const ImageTensor& pred, const ImageTensor& ref) {
  require_pair(pred, ref, "gmsd");
  constexpr double kC = 0.0026;
  Plane a = avg_pool2(to_plane(luminance(pred), pred.height, pred.width));
  Plane b = avg_pool2(to_plane(luminance(ref), ref.height, ref.width));

  Plane px(3, 3), py(3, 3);
  px << 1, 0, -1, 1, 0, -1, 1, 0, -1;
  px /= 3.0;
  py = px.transpose().eval();

  Plane ga = (filter_same(a, px, true).square() + filter_same(a, py, true).square()).sqrt();
  Plane gb = (filter_same(b, px, true).square() + filter_same(b, py, true).square()).sqrt();

  Plane sim = (2.0 * ga * gb + kC) / (ga.square() + gb.square() + kC);
  const double mean = sim.mean();
  return std::sqrt((sim - mean).square().mean());
}

double uicm(const ImageTensor& img, const UiqmParams& p) {
  if (img.channels != 3) throw Error("uicm: expected RGB");
  Eigen::ArrayXd rg = img.channel(0) - img.channel(1);
  Eigen::ArrayXd yb = 0.5 * (img.channel(0) + img.channel(1)) - img.channel(2);
  auto stats = [&](const Eigen::ArrayXd& v) {
    std::vector<double> vals(v.data(), v.data() + v.size());
    double mu = trimmed_mean(std::move(vals), p.trim_alpha);
    double var = (v - mu).square().mean();
    return std::pair<double, double>(mu, var);
  };
  auto [mu_rg, var_rg] = stats(rg);
  auto [mu_yb, var_yb] = stats(yb);
  return -0.0268 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) +
         0.1586 * std::sqrt(var_rg + var_yb);
}

double uism(const ImageTensor& img, const UiqmParams& p) {
  if (img.channels != 3) throw Error("uism: expected RGB");
  if (img.height < p.block || img.width < p.block) throw Error("uism: image smaller than block");
  Plane sx(3, 3), sy(3, 3);
  sx << 1, 0, -1, 2, 0, -2, 1, 0, -1;
  sy << 1, 2, 1, 0, 0, 0, -1, -2, -1;
  const double weights[3] = {0.299, 0.587, 0.114};
  const int bh = img.height / p.block, bw = img.width / p.block;
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    Plane ch = to_plane(img.channel(c), img.height, img.width);
    Plane edge = (filter_same(ch, sx).square() + filter_same(ch, sy).square()).sqrt();
    double eme = 0;
    for (int by = 0; by < bh; ++by)
      for (int bx = 0; bx < bw; ++bx) {
        auto blk = edge.block(by * p.block, bx * p.block, p.block, p.block);
        double mx = blk.maxCoeff(), mn = blk.minCoeff();
        // threshold absorbs accumulation noise so flat blocks contribute 0
        if (mn > 1e-12 && mx > mn) eme += std::log(mx / mn);
      }
    eme *= 2.0 / (bh * bw);
    total += weights[c] * eme;
  }
  return total;
}

double uiconm(const ImageTensor& img, const UiqmParams& p) {
  if (img.channels != 3) throw Error("uiconm: expected RGB");
  if (img.height < p.block || img.width < p.block) throw Error("uiconm: image smaller than block");
  const double g = p.plip_gamma;
  // PLIP operations on 8-bit-equivalent values
  Plane lum = to_plane(luminance(img), img.height, img.width) * 255.0;
  const int bh = img.height / p.block, bw = img.width / p.block;
  double s = 0;
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx) {
      auto blk = lum.block(by * p.block, bx * p.block, p.block, p.block);
      double mx = blk.maxCoeff(), mn = blk.minCoeff();
      if (mx <= mn) continue;  // degenerate block contributes 0
      double top = g * (mx - mn) / (g - mn);
      double bottom = mx + mn - mx * mn / g;
      if (bottom <= 0) continue;
      double w = top / bottom;
      if (w > 0) s += w * std::log(w);
    }
  const double inv_blocks = 1.0 / (bh * bw);
  // PLIP scalar multiplication of the block average
  return g - g * std::pow(1.0 - s / g, inv_blocks);
}

double uiqm(const ImageTensor& img, const UiqmParams& p) {
  return p.c1 * uicm(img, p) + p.c2 * uism(img, p) + p.c3 * uiconm(img, p);
}

MetricReport score(const fs::path& pred_dir, const fs::path& ref_dir, const fs::path& out_csv) {
  if (!fs::is_directory(pred_dir)) throw Error("score: not a directory: " + pred_dir.string());
  std::vector<fs::path> preds;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".png" || ext == ".ppm") preds.push_back(e.path());
  }
  std::sort(preds.begin(), preds.end());
  if (preds.empty()) throw Error("score: no images in " + pred_dir.string());

  std::map<std::string, fs::path> refs;
  const bool have_refs = !ref_dir.empty();
  if (have_refs) {
    if (!fs::is_directory(ref_dir)) throw Error("score: not a directory: " + ref_dir.string());
    for (const auto& e : fs::directory_iterator(ref_dir))
      if (e.is_regular_file()) refs[e.path().stem().string()] = e.path();
  }

  MetricReport report;
  report.rows.resize(preds.size());
  parallel_for(static_cast<int>(preds.size()), [&](int i) {
    const auto& pp = preds[static_cast<size_t>(i)];
    ImageTensor pred = load_image(pp);
    MetricRow row;
    row.name = pp.filename().string();
    row.uicm = uicm(pred);
    row.uism = uism(pred);
    row.uiconm = uiconm(pred);
    UiqmParams up;
    row.uiqm = up.c1 * row.uicm + up.c2 * row.uism + up.c3 * row.uiconm;
    if (have_refs) {
      std::string stem = pp.stem().string();
      auto it = refs.find(stem);
      if (it == refs.end() && stem.size() > 6 && stem.ends_with("_udnet"))
        it = refs.find(stem.substr(0, stem.size() - 6));
      if (it != refs.end()) {
        ImageTensor ref = load_image(it->second);
        row.psnr = psnr(pred, ref);
        row.ssim = ssim(pred, ref);
        row.gmsd = gmsd(pred, ref);
      } else {
        std::cerr << "warning: no reference paired for " << pp.filename() << "\n";
      }
    }
    report.rows[static_cast<size_t>(i)] = std::move(row);
  });
  double s_psnr = 0, s_ssim = 0, s_gmsd = 0;
  int n_full = 0;
  for (const auto& row : report.rows) {
    if (row.psnr) {
      s_psnr += *row.psnr;
      s_ssim += *row.ssim;
      s_gmsd += *row.gmsd;
      ++n_full;
    }
    report.mean_uiqm += row.uiqm;
    report.mean_uicm += row.uicm;
    report.mean_uism += row.uism;
    report.mean_uiconm += row.uiconm;
  }
  const double n = static_cast<double>(report.rows.size());
  report.mean_uiqm /= n;
  report.mean_uicm /= n;
  report.mean_uism /= n;
  report.mean_uiconm /= n;
  if (n_full > 0) {
    report.mean_psnr = s_psnr / n_full;
    report.mean_ssim = s_ssim / n_full;
    report.mean_gmsd = s_gmsd / n_full;
  }

  std::ofstream csv(out_csv);
  if (!csv) throw Error("unwritable path: " + out_csv.string());
  csv.precision(8);
  const bool full_cols = have_refs;
  csv << "name";
  if (full_cols) csv << ",psnr,ssim,gmsd";
  csv << ",uiqm,uicm,uism,uiconm\n";
  auto opt = [](std::optional<double> v) {
    return v ? std::to_string(*v) : std::string();
  };
  for (const auto& r : report.rows) {
    csv << r.name;
    if (full_cols) csv << "," << opt(r.psnr) << "," << opt(r.ssim) << "," << opt(r.gmsd);
    csv << "," << r.uiqm << "," << r.uicm << "," << r.uism << "," << r.uiconm << "\n";
  }
  csv << "mean";
  if (full_cols) csv << "," << opt(report.mean_psnr) << "," << opt(report.mean_ssim) << "," << opt(report.mean_gmsd);
  csv << "," << report.mean_uiqm << "," << report.mean_uicm << "," << report.mean_uism << ","
      << report.mean_uiconm << "\n";
  return report;
}

}  // namespace udnet::metrics
