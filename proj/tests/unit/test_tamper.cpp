#include <doctest.h>

#include <cmath>

#include "vidsig/tamper.hpp"

using namespace vidsig;

namespace {

VideoTensor numbered_frames(int n, int c = 1, int h = 4, int w = 4) {
  VideoTensor v(n, c, h, w);
  for (int t = 0; t < n; ++t)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) v.at(t, ch, y, x) = static_cast<float>(t) / n + 0.001f * x;
  return v;
}

bool frames_equal(const VideoTensor& a, int ta, const VideoTensor& b, int tb) {
  return a.frame(ta).v == b.frame(tb).v;
}

}  // namespace

TEST_SUITE("tamper") {

TEST_CASE("frame_drop removes exactly the chosen frame") {
  auto v = numbered_frames(4);
  auto out = frame_drop(v, 1);  // [f0,f1,f2,f3] minus f1 -> [f0,f2,f3]
  REQUIRE(out.n == 3);
  CHECK(frames_equal(out, 0, v, 0));
  CHECK(frames_equal(out, 1, v, 2));
  CHECK(frames_equal(out, 2, v, 3));
}

TEST_CASE("frame_drop refuses to empty the video") {
  auto v = numbered_frames(1);
  CHECK_THROWS_AS(frame_drop(v, 0), ConfigError);
}

TEST_CASE("frame_swap exchanges two distinct frames") {
  auto v = numbered_frames(3);
  auto out = frame_swap(v, 0, 2);  // [f0,f1,f2] -> [f2,f1,f0]
  REQUIRE(out.n == 3);
  CHECK(frames_equal(out, 0, v, 2));
  CHECK(frames_equal(out, 1, v, 1));
  CHECK(frames_equal(out, 2, v, 0));
  CHECK_THROWS_AS(frame_swap(v, 1, 1), ConfigError);
}

TEST_CASE("frame_insert duplicates the source frame at the target position") {
  auto v = numbered_frames(3);
  auto out = frame_insert(v, 0, 2);  // [f0,f1,f2] -> [f0,f1,f0,f2]
  REQUIRE(out.n == 4);
  CHECK(frames_equal(out, 0, v, 0));
  CHECK(frames_equal(out, 1, v, 1));
  CHECK(frames_equal(out, 2, v, 0));
  CHECK(frames_equal(out, 3, v, 2));
}

TEST_CASE("frame_insert_gaussian grows the video by one clamped noise frame") {
  auto v = numbered_frames(3, 3, 8, 8);
  auto out = frame_insert_gaussian(v, 1, 77);
  REQUIRE(out.n == 4);
  CHECK(frames_equal(out, 0, v, 0));
  CHECK(frames_equal(out, 2, v, 1));
  CHECK(frames_equal(out, 3, v, 2));
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(out.at(1, 0, y, x) >= 0.0f);
      CHECK(out.at(1, 0, y, x) <= 1.0f);
    }
}

TEST_CASE("gaussian insert frame has near-zero pre-clamp mean") {
  const int c = 3, h = 32, w = 32;
  auto f = gaussian_frame(c, h, w, 123);
  double mean = 0;
  for (float x : f.v) mean += x;
  mean /= f.v.size();
  CHECK(std::abs(mean) <= 3.0 / std::sqrt(static_cast<double>(c) * h * w));
}

TEST_CASE("frame_average collapses the window to its mean") {
  auto v = numbered_frames(4);
  auto out = frame_average(v, 2, 1);  // [f0, (f1+f2)/2, f3]
  REQUIRE(out.n == 3);
  CHECK(frames_equal(out, 0, v, 0));
  CHECK(frames_equal(out, 2, v, 3));
  auto f1 = v.frame(1), f2 = v.frame(2);
  for (std::size_t e = 0; e < f1.v.size(); ++e)
    CHECK(out.frame(1).v[e] == doctest::Approx((f1.v[e] + f2.v[e]) / 2).epsilon(1e-7));
}

TEST_CASE("frame_average degenerate cases") {
  auto v = numbered_frames(4);
  auto same = frame_average(v, 1, 2);  // n=1: identity
  REQUIRE(same.n == 4);
  CHECK(same.v == v.v);

  VideoTensor constant(5, 1, 4, 4, 0.25f);
  auto out = frame_average(constant, 3, 1);
  REQUIRE(out.n == 3);  // N - n + 1
  for (float x : out.v) CHECK(x == 0.25f);

  CHECK_THROWS_AS(frame_average(v, 3, 2), ConfigError);  // i + n > N
  CHECK_THROWS_AS(frame_average(v, 0, 0), ConfigError);
}

TEST_CASE("output frame-count contract for all temporal attacks") {
  auto v = numbered_frames(6);
  CHECK(frame_drop(v, 3).n == 5);
  CHECK(frame_swap(v, 1, 4).n == 6);
  CHECK(frame_insert(v, 2, 5).n == 7);
  CHECK(frame_insert_gaussian(v, 0, 1).n == 7);
  CHECK(frame_average(v, 4, 1).n == 3);
}

TEST_CASE("temporal attacks copy surviving frames bit-exactly") {
  Rng rng(4);
  auto v = random_uniform<float>(6, 3, 8, 8, rng);
  auto dropped = frame_drop(v, 2);
  for (int t = 0, src = 0; t < dropped.n; ++t, ++src) {
    if (src == 2) ++src;
    CHECK(frames_equal(dropped, t, v, src));
  }
  auto avg = frame_average(v, 3, 2);  // frames 0,1 then mean then 5
  CHECK(frames_equal(avg, 0, v, 0));
  CHECK(frames_equal(avg, 1, v, 1));
  CHECK(frames_equal(avg, 3, v, 5));
}

TEST_CASE("null spatial attacks are the identity") {
  Rng rng(5);
  auto v = random_uniform<float>(2, 3, 8, 8, rng);
  CHECK(gaussian_noise(v, 0.0, 9).v == v.v);
  CHECK(salt_pepper(v, 0.0, 9).v == v.v);
  CHECK(crop_resize(v, 1.0).v == v.v);
}

TEST_CASE("attacks are deterministic given the seed") {
  Rng rng(6);
  auto v = random_uniform<float>(4, 3, 16, 16, rng);
  CHECK(gaussian_noise(v, 0.05, 42).v == gaussian_noise(v, 0.05, 42).v);
  CHECK(salt_pepper(v, 0.1, 42).v == salt_pepper(v, 0.1, 42).v);
  CHECK(gaussian_noise(v, 0.05, 42).v != gaussian_noise(v, 0.05, 43).v);
  AttackSpec spec = AttackSpec::parse("fd:seed=7");
  CHECK(apply_attack(v, spec).v == apply_attack(v, spec).v);
}

TEST_CASE("blur of a constant image returns the same constant") {
  VideoTensor v(1, 3, 16, 16, 0.42f);
  auto out = gaussian_blur(v, 5, 1.0);
  for (float x : out.v) CHECK(x == doctest::Approx(0.42f).epsilon(1e-6));
}

TEST_CASE("blur validates kernel parameters") {
  VideoTensor v(1, 1, 8, 8, 0.5f);
  CHECK_THROWS_AS(gaussian_blur(v, 4, 1.0), ConfigError);   // even kernel
  CHECK_THROWS_AS(gaussian_blur(v, 5, 0.0), ConfigError);   // sigma <= 0
  CHECK(default_blur_ksize(1.0) == 5);                      // 2*ceil(2s)+1
  CHECK(default_blur_ksize(2.0) == 9);
}

TEST_CASE("salt and pepper hits the expected pixel fraction") {
  VideoTensor v(1, 1, 64, 64, 0.5f);
  const double p = 0.5;
  auto out = salt_pepper(v, p, 31);
  int flipped = 0;
  for (float x : out.v) flipped += (x == 0.0f || x == 1.0f);
  const double n = static_cast<double>(out.v.size());
  const double se = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(flipped / n - p) <= 3 * se);
  CHECK_THROWS_AS(salt_pepper(v, 1.5, 1), ConfigError);
}

TEST_CASE("crop_resize validates its fraction and stays in range") {
  Rng rng(8);
  auto v = random_uniform<float>(2, 3, 16, 16, rng);
  CHECK_THROWS_AS(crop_resize(v, 0.0), ConfigError);
  CHECK_THROWS_AS(crop_resize(v, 1.5), ConfigError);
  auto out = crop_resize(v, 0.5);
  REQUIRE(out.same_shape(v));
  for (float x : out.v) {
    CHECK(x >= 0.0f);
    CHECK(x <= 1.0f);
  }
}

TEST_CASE("attack spec grammar round-trips") {
  auto fa = AttackSpec::parse("fa:n=5,i=2");
  CHECK(fa.kind == AttackKind::FrameAverage);
  CHECK(fa.n == 5);
  CHECK(fa.i == 2);
  CHECK(fa.to_string() == "fa:n=5");

  auto noise = AttackSpec::parse("gauss_noise:sigma=0.1,seed=9");
  CHECK(noise.sigma == doctest::Approx(0.1));
  CHECK(noise.seed == 9);

  CHECK_THROWS_AS(AttackSpec::parse("bogus"), ConfigError);
  CHECK_THROWS_AS(AttackSpec::parse("fa:n"), ConfigError);
  CHECK_THROWS_AS(AttackSpec::parse("fa:q=1"), ConfigError);
}

TEST_CASE("apply_attack draws valid indices from the seed") {
  Rng rng(10);
  auto v = random_uniform<float>(5, 3, 8, 8, rng);
  for (const char* s : {"fd", "fs", "fi", "fig", "fa:n=3", "gauss_noise:sigma=0.02",
                        "gauss_blur:sigma=1.0", "salt_pepper:p=0.05", "crop_resize:fraction=0.75"}) {
    auto spec = AttackSpec::parse(s);
    spec.seed = 123;
    auto out = apply_attack(v, spec);
    CHECK(out.all_finite());
    for (float x : out.v) {
      REQUIRE(x >= 0.0f);
      REQUIRE(x <= 1.0f);
    }
  }
}

}  // TEST_SUITE
