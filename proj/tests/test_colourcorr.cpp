#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "udnet/colourcorr.hpp"

using namespace udnet;

TEST_CASE("percentile interpolates linearly between order statistics") {
  Eigen::ArrayXd v(5);
  v << 0.5, 0.1, 0.3, 0.2, 0.4;  // sorted: .1 .2 .3 .4 .5
  CHECK(percentile(v, 0) == doctest::Approx(0.1));
  CHECK(percentile(v, 100) == doctest::Approx(0.5));
  CHECK(percentile(v, 50) == doctest::Approx(0.3));
  CHECK(percentile(v, 25) == doctest::Approx(0.2));
  CHECK(percentile(v, 12.5) == doctest::Approx(0.15));
}

TEST_CASE("gray world leaves grey images unchanged") {
  ImageTensor img = testutil::constant_image(3, 4, 4, 0.3);
  ImageTensor out = gray_world_balance(img);
  CHECK(testutil::max_abs_diff(img, out) < 1e-12);
}

TEST_CASE("gray world equalizes a single pixel to the grand mean") {
  ImageTensor img(3, 1, 1);
  img.at(0, 0, 0) = 0.1;
  img.at(1, 0, 0) = 0.2;
  img.at(2, 0, 0) = 0.3;
  ImageTensor out = gray_world_balance(img);
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.2));
  CHECK(out.at(1, 0, 0) == doctest::Approx(0.2));
  CHECK(out.at(2, 0, 0) == doctest::Approx(0.2));
}

TEST_CASE("gray world output channel means are equal when no clamping fires") {
  for (int t = 0; t < 100; ++t) {
    // values in [0.1, 0.4]: scales stay close to 1, nothing clamps
    ImageTensor img = testutil::random_image(3, 8, 8, 3000 + t, 0.1, 0.4);
    ImageTensor out = gray_world_balance(img);
    ChannelStats s = channel_stats(out);
    CHECK(std::abs(s.mean[0] - s.mean[1]) < 1e-6);
    CHECK(std::abs(s.mean[1] - s.mean[2]) < 1e-6);
    CHECK(out.data.maxCoeff() < 1.0);  // confirms no clamping happened
  }
}

TEST_CASE("gray world rejects a zero-mean channel") {
  ImageTensor img = testutil::constant_image(3, 2, 2, 0.5);
  img.channel(1).setZero();
  CHECK_THROWS_AS(gray_world_balance(img), Error);
}

TEST_CASE("white patch scales robust maxima to one") {
  for (int t = 0; t < 100; ++t) {
    ImageTensor img = testutil::random_image(3, 8, 8, 4000 + t, 0.05, 0.9);
    ImageTensor out = white_patch_balance(img, 100.0);
    ChannelStats s = channel_stats(out);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(s.max[c] - 1.0) < 1e-6);
  }
}

TEST_CASE("white patch constant image becomes one") {
  ImageTensor img = testutil::constant_image(3, 4, 4, 0.5);
  ImageTensor out = white_patch_balance(img, 100.0);
  CHECK(out.data.minCoeff() == doctest::Approx(1.0));
}

TEST_CASE("white patch leaves full-range images unchanged") {
  ImageTensor img = testutil::random_image(3, 4, 4, 9);
  for (int c = 0; c < 3; ++c) img.at(c, 0, 0) = 1.0;
  ImageTensor out = white_patch_balance(img, 100.0);
  CHECK(testutil::max_abs_diff(img, out) < 1e-12);
}

TEST_CASE("white patch rejects an all-zero channel") {
  ImageTensor img = testutil::constant_image(3, 2, 2, 0.5);
  img.channel(0).setZero();
  CHECK_THROWS_AS(white_patch_balance(img, 100.0), Error);
}

TEST_CASE("dual statistic balance averages the two branches") {
  ImageTensor img = testutil::random_image(3, 6, 6, 21, 0.05, 0.9);
  ImageTensor gw = gray_world_balance(img);
  ImageTensor wp = white_patch_balance(img, 100.0);
  ImageTensor dsb = dual_statistic_balance(img, 100.0);
  for (Eigen::Index i = 0; i < img.data.size(); ++i)
    CHECK(dsb.data[i] == doctest::Approx(0.5 * (gw.data[i] + wp.data[i])).epsilon(1e-12));
}

TEST_CASE("dual statistic balance is identity on a grey full-range image") {
  ImageTensor img(3, 1, 2);
  for (int c = 0; c < 3; ++c) {
    img.at(c, 0, 0) = 0.5;
    img.at(c, 0, 1) = 1.0;
  }
  // channel means and maxima all equal; both branches near identity
  ImageTensor out = dual_statistic_balance(img, 100.0);
  CHECK(testutil::max_abs_diff(img, out) < 1e-12);
}

TEST_CASE("stretch_channel maps percentiles to targets") {
  Eigen::ArrayXd v(5);
  v << 0.2, 0.3, 0.4, 0.5, 0.6;
  Eigen::ArrayXd out = stretch_channel(v, 0, 100, 0, 1);
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[4] == doctest::Approx(1.0));
  CHECK(out[2] == doctest::Approx(0.5));
}

TEST_CASE("stretch_channel passes constants through") {
  Eigen::ArrayXd v = Eigen::ArrayXd::Constant(10, 0.42);
  Eigen::ArrayXd out = stretch_channel(v, 0.5, 99.5, 0, 1);
  CHECK((out - v).abs().maxCoeff() == 0.0);
}

TEST_CASE("stretch_channel is monotone and idempotent") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::ArrayXd v(64);
  for (int i = 0; i < 64; ++i) v[i] = u(rng);
  Eigen::ArrayXd once = stretch_channel(v, 0, 100, 0, 1);
  // order preserved
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j)
      if (v[i] < v[j]) CHECK(once[i] <= once[j] + 1e-12);
  Eigen::ArrayXd twice = stretch_channel(once, 0, 100, 0, 1);
  CHECK((twice - once).abs().maxCoeff() < 1e-12);
}

TEST_CASE("hue channel is bit-identical through the HSI stretch") {
  ImageTensor img = testutil::random_image(3, 8, 8, 33);
  ImageTensor hsi = rgb_to_hsi(img);
  ImageTensor stretched = stretch_hsi(hsi, StretchParams{0, 100});
  for (Eigen::Index i = 0; i < hsi.plane_size(); ++i)
    CHECK(stretched.data[i] == hsi.data[i]);  // exact bit equality
}

TEST_CASE("multi colour stretch leaves constants unchanged") {
  ImageTensor img = testutil::constant_image(3, 8, 8, 0.5);
  ImageTensor out = multi_colour_stretch(img, StretchParams{0, 100});
  CHECK(testutil::max_abs_diff(img, out) < 1e-6);  // HSI round-trip precision
}

TEST_CASE("multi colour stretch expands a low-contrast ramp") {
  ImageTensor img(3, 1, 16);
  for (int x = 0; x < 16; ++x) {
    double v = 0.4 + 0.2 * x / 15.0;
    for (int c = 0; c < 3; ++c) img.at(c, 0, x) = v;
  }
  ImageTensor out = multi_colour_stretch(img, StretchParams{0, 100});
  ChannelStats s = channel_stats(out);
  for (int c = 0; c < 3; ++c) CHECK(s.max[c] - s.min[c] > 0.7);
}

TEST_CASE("colour_correct stays in range and equalizes casts") {
  // greenish cast
  ImageTensor img = testutil::random_image(3, 12, 12, 44, 0.0, 0.1);
  img.channel(0) = img.channel(0) + 0.15;  // means ~0.2
  img.channel(1) = img.channel(1) + 0.55;  // means ~0.6
  img.channel(2) = img.channel(2) + 0.25;  // means ~0.3
  ImageTensor out = colour_correct(img);
  CHECK(out.data.minCoeff() >= 0.0);
  CHECK(out.data.maxCoeff() <= 1.0);
  ChannelStats s = channel_stats(out);
  CHECK(std::abs(s.mean[0] - s.mean[1]) < 0.1);
  CHECK(std::abs(s.mean[1] - s.mean[2]) < 0.1);
}

TEST_CASE("colour_correct on a constant image yields equal channels") {
  ImageTensor img(3, 4, 4);
  img.channel(0).setConstant(0.2);
  img.channel(1).setConstant(0.5);
  img.channel(2).setConstant(0.8);
  ImageTensor out = colour_correct(img);
  for (Eigen::Index i = 0; i < out.plane_size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(out.data[out.plane_size() + i]));
    CHECK(out.data[i] == doctest::Approx(out.data[2 * out.plane_size() + i]));
  }
}

TEST_CASE("colour_correct output in [0,1] for random inputs") {
  for (int t = 0; t < 20; ++t) {
    ImageTensor img = testutil::random_image(3, 10, 10, 5000 + t);
    ImageTensor out = colour_correct(img);
    CHECK(out.data.minCoeff() >= 0.0);
    CHECK(out.data.maxCoeff() <= 1.0);
  }
}
