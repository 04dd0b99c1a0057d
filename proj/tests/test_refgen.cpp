#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "udnet/refgen.hpp"

using namespace udnet;

TEST_CASE("contrast adjustment with alpha 0 is the identity") {
  ImageTensor img = testutil::random_image(3, 6, 6, 1);
  ImageTensor out = adjust_contrast(img, 0.0);
  CHECK((img.data - out.data).abs().maxCoeff() == 0.0);
}

TEST_CASE("constant channels are fixed points of contrast adjustment") {
  ImageTensor img = testutil::constant_image(3, 4, 4, 0.5);
  ImageTensor out = adjust_contrast(img, 0.9);
  CHECK(testutil::max_abs_diff(img, out) < 1e-12);
}

TEST_CASE("contrast example: {0.2, 0.8} with alpha 0.5") {
  ImageTensor img(3, 1, 2);
  for (int c = 0; c < 3; ++c) {
    img.at(c, 0, 0) = 0.2;
    img.at(c, 0, 1) = 0.8;
  }
  ImageTensor out = adjust_contrast(img, 0.5);
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.05));
  CHECK(out.at(0, 0, 1) == doctest::Approx(0.95));
}

TEST_CASE("contrast preserves channel means absent clamping") {
  ImageTensor img = testutil::random_image(3, 8, 8, 7, 0.3, 0.7);
  ImageTensor out = adjust_contrast(img, 0.5);
  ChannelStats a = channel_stats(img), b = channel_stats(out);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(a.mean[c] - b.mean[c]) < 1e-6);
}

TEST_CASE("saturation adjustment leaves grey pixels fixed") {
  ImageTensor img = testutil::constant_image(3, 4, 4, 0.37);
  ImageTensor out = adjust_saturation(img, 1.7);
  CHECK(testutil::max_abs_diff(img, out) < 1e-12);
}

TEST_CASE("saturation adjustment with alpha 0 is the identity") {
  ImageTensor img = testutil::random_image(3, 5, 5, 2);
  ImageTensor out = adjust_saturation(img, 0.0);
  CHECK((img.data - out.data).abs().maxCoeff() == 0.0);
}

TEST_CASE("saturation example: (0.6,0.3,0.3) with alpha 1") {
  ImageTensor img(3, 1, 1);
  img.at(0, 0, 0) = 0.6;
  img.at(1, 0, 0) = 0.3;
  img.at(2, 0, 0) = 0.3;
  ImageTensor out = adjust_saturation(img, 1.0);
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.8));
  CHECK(out.at(1, 0, 0) == doctest::Approx(0.2));
  CHECK(out.at(2, 0, 0) == doctest::Approx(0.2));
}

TEST_CASE("gamma 1 is the identity and endpoints are fixed") {
  ImageTensor img = testutil::random_image(3, 4, 4, 3);
  img.at(0, 0, 0) = 0.0;
  img.at(0, 0, 1) = 1.0;
  ImageTensor out = gamma_correct(img, 1.0);
  CHECK(testutil::max_abs_diff(img, out) < 1e-12);
  ImageTensor out2 = gamma_correct(img, 0.63);
  CHECK(out2.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(out2.at(0, 0, 1) == doctest::Approx(1.0));
}

TEST_CASE("gamma example: 0.25^0.5 = 0.5") {
  ImageTensor img = testutil::constant_image(3, 1, 1, 0.25);
  ImageTensor out = gamma_correct(img, 0.5);
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.5));
}

TEST_CASE("non-positive gamma is rejected") {
  ImageTensor img = testutil::constant_image(3, 1, 1, 0.5);
  CHECK_THROWS_AS(gamma_correct(img, 0.0), Error);
  CHECK_THROWS_AS(gamma_correct(img, -1.0), Error);
}

TEST_CASE("default reference set composes the three documented transforms") {
  ImageTensor img = testutil::random_image(3, 8, 8, 11);
  RefGenParams p;
  ReferenceSet set = generate_reference_set(img, p, /*colour_correct_refs=*/false, 0);
  REQUIRE(set.refs.size() == 3);
  CHECK(testutil::max_abs_diff(set.refs[0], adjust_contrast(img, p.contrast_alpha)) == 0.0);
  CHECK(testutil::max_abs_diff(set.refs[1], adjust_saturation(img, p.saturation_alpha)) == 0.0);
  CHECK(testutil::max_abs_diff(set.refs[2], gamma_correct(img, p.gamma)) == 0.0);
}

TEST_CASE("colour-corrected reference set matches colour_correct of each map") {
  ImageTensor img = testutil::random_image(3, 8, 8, 12);
  RefGenParams p;
  ReferenceSet plain = generate_reference_set(img, p, false, 0);
  ReferenceSet corrected = generate_reference_set(img, p, true, 0);
  for (size_t i = 0; i < 3; ++i)
    CHECK(testutil::max_abs_diff(corrected.refs[i], colour_correct(plain.refs[i])) == 0.0);
}

TEST_CASE("single label gives one contrast map") {
  ImageTensor img = testutil::random_image(3, 8, 8, 13);
  RefGenParams p;
  p.num_labels = 1;
  ReferenceSet set = generate_reference_set(img, p, false, 0);
  REQUIRE(set.refs.size() == 1);
  CHECK(testutil::max_abs_diff(set.refs[0], adjust_contrast(img, p.contrast_alpha)) == 0.0);
}

TEST_CASE("more than three labels cycles with resampled parameters") {
  ImageTensor img = testutil::random_image(3, 8, 8, 14);
  RefGenParams p;
  p.num_labels = 6;
  ReferenceSet set = generate_reference_set(img, p, false, 42);
  REQUIRE(set.refs.size() == 6);
  for (const auto& r : set.refs) {
    CHECK(r.height == img.height);
    CHECK(r.data.minCoeff() >= 0.0);
    CHECK(r.data.maxCoeff() <= 1.0);
  }
  // resampled parameters differ from the defaults
  CHECK(testutil::max_abs_diff(set.refs[3], set.refs[0]) > 0.0);
}

TEST_CASE("same seed gives bitwise-identical reference sets") {
  ImageTensor img = testutil::random_image(3, 8, 8, 15);
  RefGenParams p;
  p.randomize = true;
  ReferenceSet a = generate_reference_set(img, p, true, 99);
  ReferenceSet b = generate_reference_set(img, p, true, 99);
  REQUIRE(a.refs.size() == b.refs.size());
  for (size_t i = 0; i < a.refs.size(); ++i)
    CHECK((a.refs[i].data - b.refs[i].data).abs().maxCoeff() == 0.0);
}

TEST_CASE("randomized sets differ across seeds") {
  ImageTensor img = testutil::random_image(3, 8, 8, 16);
  RefGenParams p;
  p.randomize = true;
  ReferenceSet a = generate_reference_set(img, p, false, 1);
  ReferenceSet b = generate_reference_set(img, p, false, 2);
  double diff = 0;
  for (size_t i = 0; i < a.refs.size(); ++i)
    diff += (a.refs[i].data - b.refs[i].data).abs().maxCoeff();
  CHECK(diff > 0.0);
}

TEST_CASE("all outputs stay in [0,1]") {
  for (int t = 0; t < 10; ++t) {
    ImageTensor img = testutil::random_image(3, 6, 6, 6000 + t);
    RefGenParams p;
    p.randomize = true;
    ReferenceSet set = generate_reference_set(img, p, true, t);
    for (const auto& r : set.refs) {
      CHECK(r.data.minCoeff() >= 0.0);
      CHECK(r.data.maxCoeff() <= 1.0);
    }
  }
}
