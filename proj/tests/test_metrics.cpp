#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "udnet/image_io.hpp"
#include "udnet/metrics.hpp"

using namespace udnet;
namespace fs = std::filesystem;

namespace {

using Plane = Eigen::ArrayXXd;

Plane lum_plane(const ImageTensor& img) {
  Plane p(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      p(y, x) = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
  return p;
}

// naive 'valid' correlation, double loop
Plane corr_valid(const Plane& img, const Plane& k) {
  Plane out(img.rows() - k.rows() + 1, img.cols() - k.cols() + 1);
  for (int y = 0; y < out.rows(); ++y)
    for (int x = 0; x < out.cols(); ++x) {
      double acc = 0;
      for (int ky = 0; ky < k.rows(); ++ky)
        for (int kx = 0; kx < k.cols(); ++kx) acc += img(y + ky, x + kx) * k(ky, kx);
      out(y, x) = acc;
    }
  return out;
}

// naive 'same' correlation with edge replication
Plane corr_replicate(const Plane& img, const Plane& k) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int ky = 0; ky < k.rows(); ++ky)
        for (int kx = 0; kx < k.cols(); ++kx) {
          int sy = std::clamp(y + static_cast<int>(ky) - 1, 0, h - 1);
          int sx = std::clamp(x + static_cast<int>(kx) - 1, 0, w - 1);
          acc += img(sy, sx) * k(ky, kx);
        }
      out(y, x) = acc;
    }
  return out;
}

double psnr_oracle(const ImageTensor& a, const ImageTensor& b) {
  double acc = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        double d = a.at(c, y, x) - b.at(c, y, x);
        acc += d * d;
      }
  double mse = acc / (3.0 * a.height * a.width);
  if (mse <= 0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim_oracle(const ImageTensor& pa, const ImageTensor& pb) {
  Plane a = lum_plane(pa), b = lum_plane(pb);
  Plane win(11, 11);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x)
      win(y, x) = std::exp(-((y - 5.0) * (y - 5.0) + (x - 5.0) * (x - 5.0)) / (2 * 1.5 * 1.5));
  win /= win.sum();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  Plane mu_a = corr_valid(a, win), mu_b = corr_valid(b, win);
  Plane saa = corr_valid(a * a, win) - mu_a * mu_a;
  Plane sbb = corr_valid(b * b, win) - mu_b * mu_b;
  Plane sab = corr_valid(a * b, win) - mu_a * mu_b;
  Plane m = ((2 * mu_a * mu_b + c1) * (2 * sab + c2)) /
            ((mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2));
  return m.mean();
}

double gmsd_oracle(const ImageTensor& pa, const ImageTensor& pb) {
  auto pool = [](const Plane& p) {
    const int h = static_cast<int>(p.rows()) / 2, w = static_cast<int>(p.cols()) / 2;
    if (h < 1 || w < 1) return p;
    Plane out(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out(y, x) = (p(2 * y, 2 * x) + p(2 * y, 2 * x + 1) + p(2 * y + 1, 2 * x) +
                     p(2 * y + 1, 2 * x + 1)) / 4.0;
    return out;
  };
  Plane a = pool(lum_plane(pa)), b = pool(lum_plane(pb));
  Plane px(3, 3);
  px << 1, 0, -1, 1, 0, -1, 1, 0, -1;
  px /= 3.0;
  Plane py = px.transpose().eval();
  Plane ga = (corr_replicate(a, px).square() + corr_replicate(a, py).square()).sqrt();
  Plane gb = (corr_replicate(b, px).square() + corr_replicate(b, py).square()).sqrt();
  Plane sim = (2 * ga * gb + 0.0026) / (ga.square() + gb.square() + 0.0026);
  double mean = sim.mean();
  return std::sqrt((sim - mean).square().mean());
}

}  // namespace

TEST_CASE("psnr matches a brute-force oracle and known values") {
  for (int t = 0; t < 20; ++t) {
    int h = 4 + t % 13, w = 4 + (t * 7) % 13;
    ImageTensor a = testutil::random_image(3, h, w, 100 + t);
    ImageTensor b = testutil::random_image(3, h, w, 200 + t);
    CHECK(std::abs(metrics::psnr(a, b) - psnr_oracle(a, b)) < 1e-9);
  }
  ImageTensor x = testutil::random_image(3, 8, 8, 1);
  CHECK(metrics::psnr(x, x) == 100.0);
  // uniform 0.5 error: mse = 0.25 -> 10*log10(4) dB
  ImageTensor z = testutil::constant_image(3, 8, 8, 0.0);
  ImageTensor h5 = testutil::constant_image(3, 8, 8, 0.5);
  CHECK(metrics::psnr(z, h5) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
  ImageTensor small = testutil::random_image(3, 4, 4, 2);
  CHECK_THROWS_AS(metrics::psnr(x, small), Error);
}

TEST_CASE("ssim matches a brute-force oracle") {
  for (int t = 0; t < 20; ++t) {
    int h = 11 + t % 6, w = 11 + (t * 5) % 6;
    ImageTensor a = testutil::random_image(3, h, w, 300 + t);
    ImageTensor b = testutil::random_image(3, h, w, 400 + t);
    CHECK(std::abs(metrics::ssim(a, b) - ssim_oracle(a, b)) < 1e-6);
  }
}

TEST_CASE("ssim identity, symmetry, and anticorrelation sign") {
  ImageTensor a = testutil::random_image(3, 16, 16, 5);
  CHECK(metrics::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  ImageTensor b = testutil::random_image(3, 16, 16, 6);
  CHECK(metrics::ssim(a, b) == doctest::Approx(metrics::ssim(b, a)).epsilon(1e-12));
  // structurally inverted pattern around the mean scores negative
  ImageTensor inv = a;
  inv.data = 1.0 - a.data;
  CHECK(metrics::ssim(a, inv) < 0.0);
  ImageTensor tiny = testutil::random_image(3, 8, 8, 7);
  CHECK_THROWS_AS(metrics::ssim(tiny, tiny), Error);
}

TEST_CASE("gmsd matches a brute-force oracle") {
  for (int t = 0; t < 20; ++t) {
    int h = 6 + t % 11, w = 6 + (t * 3) % 11;
    ImageTensor a = testutil::random_image(3, h, w, 500 + t);
    ImageTensor b = testutil::random_image(3, h, w, 600 + t);
    CHECK(std::abs(metrics::gmsd(a, b) - gmsd_oracle(a, b)) < 1e-7);
  }
}

TEST_CASE("gmsd identity and constants score zero") {
  ImageTensor a = testutil::random_image(3, 16, 16, 8);
  CHECK(metrics::gmsd(a, a) == doctest::Approx(0.0).epsilon(1e-12));
  ImageTensor c1 = testutil::constant_image(3, 16, 16, 0.2);
  ImageTensor c2 = testutil::constant_image(3, 16, 16, 0.9);
  CHECK(metrics::gmsd(c1, c2) == doctest::Approx(0.0).epsilon(1e-12));
  ImageTensor b = testutil::random_image(3, 16, 16, 9);
  CHECK(metrics::gmsd(a, b) > 0.0);
  CHECK(metrics::gmsd(a, b) == doctest::Approx(metrics::gmsd(b, a)).epsilon(1e-12));
}

TEST_CASE("uiqm components vanish on constant images") {
  ImageTensor c = testutil::constant_image(3, 16, 16, 0.42);
  CHECK(metrics::uicm(c) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(metrics::uism(c) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(metrics::uiconm(c) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(metrics::uiqm(c) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("uicm follows the trimmed-statistics formula") {
  // grey image: rg and yb are identically zero
  ImageTensor grey = testutil::constant_image(3, 8, 8, 0.5);
  CHECK(metrics::uicm(grey) == doctest::Approx(0.0));
  // uniform colour cast: zero variance, pure mean penalty
  ImageTensor cast(3, 8, 8);
  cast.data.setZero();
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      cast.at(0, y, x) = 0.6;  // rg = 0.2, yb = 0.5*(0.6+0.4)-0.4 = 0.1
      cast.at(1, y, x) = 0.4;
      cast.at(2, y, x) = 0.4;
    }
  double expect = -0.0268 * std::sqrt(0.2 * 0.2 + 0.1 * 0.1);
  CHECK(metrics::uicm(cast) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("uism rewards edge content") {
  ImageTensor flat = testutil::constant_image(3, 16, 16, 0.5);
  ImageTensor textured = testutil::random_image(3, 16, 16, 10, 0.1, 0.9);
  CHECK(metrics::uism(textured) > metrics::uism(flat));
  CHECK(metrics::uism(flat) == 0.0);
}

TEST_CASE("uiconm responds to local contrast") {
  ImageTensor flat = testutil::constant_image(3, 16, 16, 0.5);
  ImageTensor check(3, 16, 16);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) check.at(c, y, x) = ((x + y) % 2) ? 0.9 : 0.1;
  CHECK(metrics::uiconm(flat) == 0.0);
  CHECK(metrics::uiconm(check) != 0.0);
}

TEST_CASE("uiqm is the documented linear combination") {
  ImageTensor img = testutil::random_image(3, 16, 16, 11);
  double expect = 0.0282 * metrics::uicm(img) + 0.2953 * metrics::uism(img) +
                  3.5753 * metrics::uiconm(img);
  CHECK(metrics::uiqm(img) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("score produces a full-reference csv with a mean row") {
  auto base = fs::temp_directory_path() / "udnet_test_metrics" / "full";
  fs::remove_all(base);
  fs::create_directories(base / "pred");
  fs::create_directories(base / "ref");
  for (int i = 0; i < 3; ++i) {
    ImageTensor img = testutil::random_image(3, 16, 16, 700 + i);
    save_image(img, base / "pred" / ("img" + std::to_string(i) + ".png"));
    save_image(img, base / "ref" / ("img" + std::to_string(i) + ".png"));
  }
  auto csv_path = base / "out.csv";
  auto report = metrics::score(base / "pred", base / "ref", csv_path);
  REQUIRE(report.rows.size() == 3);
  // predictions equal references exactly
  CHECK(*report.mean_psnr == doctest::Approx(100.0));
  CHECK(*report.mean_ssim == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(*report.mean_gmsd == doctest::Approx(0.0).epsilon(1e-9));

  std::ifstream csv(csv_path);
  std::string line;
  std::getline(csv, line);
  CHECK(line == "name,psnr,ssim,gmsd,uiqm,uicm,uism,uiconm");
  int rows = 0;
  std::string last;
  while (std::getline(csv, line)) {
    ++rows;
    last = line;
  }
  CHECK(rows == 4);  // 3 images + mean
  CHECK(last.substr(0, 5) == "mean,");
}

TEST_CASE("score pairs udnet-suffixed predictions with plain references") {
  auto base = fs::temp_directory_path() / "udnet_test_metrics" / "suffix";
  fs::remove_all(base);
  fs::create_directories(base / "pred");
  fs::create_directories(base / "ref");
  ImageTensor img = testutil::random_image(3, 16, 16, 800);
  save_image(img, base / "pred" / "scene_udnet.png");
  save_image(img, base / "ref" / "scene.png");
  auto report = metrics::score(base / "pred", base / "ref", base / "out.csv");
  REQUIRE(report.rows.size() == 1);
  REQUIRE(report.rows[0].psnr.has_value());
  CHECK(*report.rows[0].psnr == 100.0);
}

TEST_CASE("score without references emits uiqm-only columns") {
  auto base = fs::temp_directory_path() / "udnet_test_metrics" / "noref";
  fs::remove_all(base);
  fs::create_directories(base / "pred");
  save_image(testutil::random_image(3, 16, 16, 900), base / "pred" / "a.png");
  auto report = metrics::score(base / "pred", {}, base / "out.csv");
  CHECK_FALSE(report.rows[0].psnr.has_value());
  CHECK_FALSE(report.mean_psnr.has_value());
  std::ifstream csv(base / "out.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "name,uiqm,uicm,uism,uiconm");
}

TEST_CASE("unpaired predictions keep their no-reference row") {
  auto base = fs::temp_directory_path() / "udnet_test_metrics" / "unpaired";
  fs::remove_all(base);
  fs::create_directories(base / "pred");
  fs::create_directories(base / "ref");
  save_image(testutil::random_image(3, 16, 16, 901), base / "pred" / "lonely.png");
  save_image(testutil::random_image(3, 16, 16, 902), base / "ref" / "other.png");
  auto report = metrics::score(base / "pred", base / "ref", base / "out.csv");
  REQUIRE(report.rows.size() == 1);
  CHECK_FALSE(report.rows[0].psnr.has_value());
  CHECK_FALSE(report.mean_psnr.has_value());
}
