#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "textmania/baseline_aug.hpp"
#include "textmania/errors.hpp"
#include "textmania/image.hpp"
#include "textmania/rng.hpp"

using namespace textmania;

namespace {

Image make_image(int c, int h, int w, float start = 0.0f, float step = 1.0f) {
  Image img = Image::zeros(c, h, w);
  for (int i = 0; i < img.data.size(); ++i)
    img.data[i] = start + step * static_cast<float>(i);
  return img;
}

Image constant_image(int c, int h, int w, float value) {
  Image img = Image::zeros(c, h, w);
  img.data.setConstant(value);
  return img;
}

int count_different(const Image& a, const Image& b) {
  int n = 0;
  for (int i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) ++n;
  return n;
}

}  // namespace

TEST_CASE("mixup is the convex combination with carried labels") {
  const Image x1 = constant_image(1, 2, 2, 1.0f);
  const Image x2 = constant_image(1, 2, 2, 3.0f);
  const auto mix = mixup(x1, 0, x2, 1, 0.25f);
  CHECK(mix.lambda == 0.25f);
  CHECK(mix.label_a == 0);
  CHECK(mix.label_b == 1);
  for (int i = 0; i < mix.mixed.data.size(); ++i) {
    CHECK(mix.mixed.data[i] == doctest::Approx(0.25f * 1.0f + 0.75f * 3.0f));
  }

  CHECK(mixup(x1, 0, x2, 1, 1.0f).mixed.data.isApprox(x1.data));
  CHECK(mixup(x1, 0, x2, 1, 0.0f).mixed.data.isApprox(x2.data));

  CHECK_THROWS_AS(mixup(x1, 0, x2, 1, 1.5f), ConfigError);
  CHECK_THROWS_AS(mixup(x1, 0, x2, 1, -0.1f), ConfigError);
  const Image wrong = constant_image(1, 2, 3, 0.0f);
  CHECK_THROWS_AS(mixup(x1, 0, wrong, 1, 0.5f), ShapeError);
}

TEST_CASE("manifold mixup mixes hidden vectors the same way") {
  Eigen::VectorXf h1(3), h2(3);
  h1 << 1, 2, 3;
  h2 << 5, 6, 7;
  const auto mix = manifold_mixup(h1, 0, h2, 2, 0.5f, 1);
  CHECK(mix.mixed[0] == doctest::Approx(3.0f));
  CHECK(mix.mixed[1] == doctest::Approx(4.0f));
  CHECK(mix.mixed[2] == doctest::Approx(5.0f));
  CHECK(mix.label_a == 0);
  CHECK(mix.label_b == 2);

  Eigen::VectorXf wrong(2);
  wrong.setZero();
  CHECK_THROWS_AS(manifold_mixup(h1, 0, wrong, 1, 0.5f, 3), ShapeError);
}

TEST_CASE("cutmix box targets the requested area before clipping") {
  Rng rng = derive_rng(0, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const Box box = sample_cutmix_box(32, 32, 0.75f, rng);
    CHECK(box.x0 >= 0);
    CHECK(box.y0 >= 0);
    CHECK(box.x1 <= 32);
    CHECK(box.y1 <= 32);
    // sqrt(1 - 0.75) = 0.5 exactly: 16 x 16 target, clipping only shrinks.
    CHECK(box.area() <= 16 * 16);
    CHECK(box.area() > 0);
  }

  const Box empty = sample_cutmix_box(32, 32, 1.0f, rng);
  CHECK(empty.area() == 0);
}

TEST_CASE("cutmix recomputes lambda exactly from the pasted area") {
  const Image zeros = constant_image(3, 32, 32, 0.0f);
  const Image ones = constant_image(3, 32, 32, 1.0f);
  Rng rng = derive_rng(1, 1);

  for (int trial = 0; trial < 50; ++trial) {
    const float requested = 0.4f + 0.01f * static_cast<float>(trial);
    const auto mix = cutmix(zeros, 0, ones, 1, requested, rng);
    // Every pasted pixel is a 1 in every channel; count one channel.
    int pasted = 0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (mix.mixed.at(0, y, x) == 1.0f) ++pasted;
    const float expected = 1.0f - static_cast<float>(pasted) / (32.0f * 32.0f);
    CHECK(mix.lambda == expected);
    CHECK(mix.label_a == 0);
    CHECK(mix.label_b == 1);
  }
}

TEST_CASE("cutmix with lambda one returns the first image untouched") {
  const Image x1 = make_image(1, 4, 4);
  const Image x2 = constant_image(1, 4, 4, -1.0f);
  Rng rng = derive_rng(2, 2);
  const auto mix = cutmix(x1, 3, x2, 5, 1.0f, rng);
  CHECK(mix.lambda == 1.0f);
  CHECK(std::memcmp(mix.mixed.data.data(), x1.data.data(),
                    sizeof(float) * x1.data.size()) == 0);
}

TEST_CASE("cutmix output pixels come from one of the two inputs") {
  const Image x1 = make_image(2, 8, 8, 0.0f, 1.0f);
  const Image x2 = make_image(2, 8, 8, 1000.0f, 1.0f);
  Rng rng = derive_rng(3, 3);
  const auto mix = cutmix(x1, 0, x2, 1, 0.6f, rng);
  for (int i = 0; i < mix.mixed.data.size(); ++i) {
    const bool from_a = mix.mixed.data[i] == x1.data[i];
    const bool from_b = mix.mixed.data[i] == x2.data[i];
    CHECK((from_a || from_b));
  }
}

TEST_CASE("cutout alters at most the mask area and nothing else") {
  const Image ones = constant_image(3, 32, 32, 1.0f);
  Rng rng = derive_rng(4, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const Image out = cutout(ones, 16, rng);
    const int changed = count_different(ones, out) / 3;  // per-channel count
    CHECK(changed <= 256);
    CHECK(changed >= 8 * 8);  // worst corner clip keeps half each way
    // Changed pixels are exactly the zero fill.
    for (int i = 0; i < out.data.size(); ++i) {
      CHECK((out.data[i] == 1.0f || out.data[i] == 0.0f));
    }
  }
}

TEST_CASE("cutout options are validated") {
  const Image ones = constant_image(2, 8, 8, 1.0f);
  Rng rng = derive_rng(5, 5);

  const Image same = cutout(ones, 0, rng);
  CHECK(count_different(ones, same) == 0);

  CHECK_THROWS_AS(cutout(ones, -1, rng), ConfigError);
  CHECK_THROWS_AS(cutout(ones, 4, rng, {1.0f}), ShapeError);

  const Image filled = cutout(ones, 4, rng, {0.25f, 0.75f});
  bool saw_fill0 = false, saw_fill1 = false;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      if (filled.at(0, y, x) == 0.25f) saw_fill0 = true;
      if (filled.at(1, y, x) == 0.75f) saw_fill1 = true;
    }
  CHECK(saw_fill0);
  CHECK(saw_fill1);
}

TEST_CASE("beta draws match the analytic moments") {
  Rng rng = derive_rng(6, 6);
  const int n = 20000;

  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const float b = draw_beta(1.0f, rng);
    REQUIRE(b >= 0.0f);
    REQUIRE(b <= 1.0f);
    sum += b;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));

  // Beta(2, 2): mean 1/2, variance 1/20.
  double sum2 = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double b = draw_beta(2.0f, rng);
    sum2 += b;
    sumsq += b * b;
  }
  const double mean = sum2 / n;
  const double var = sumsq / n - mean * mean;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
  CHECK(var == doctest::Approx(0.05).epsilon(0.1));

  CHECK_THROWS_AS(draw_beta(0.0f, rng), ConfigError);
  CHECK_THROWS_AS(draw_beta(-1.0f, rng), ConfigError);
}

TEST_CASE("hflip mirrors columns and is an involution") {
  const Image img = make_image(1, 2, 3);
  const Image flipped = hflip(img);
  CHECK(flipped.at(0, 0, 0) == img.at(0, 0, 2));
  CHECK(flipped.at(0, 0, 1) == img.at(0, 0, 1));
  CHECK(flipped.at(0, 0, 2) == img.at(0, 0, 0));
  CHECK(flipped.at(0, 1, 0) == img.at(0, 1, 2));
  const Image twice = hflip(flipped);
  CHECK(std::memcmp(twice.data.data(), img.data.data(),
                    sizeof(float) * img.data.size()) == 0);
}

TEST_CASE("pad_crop is a pure translation with zero borders") {
  const Image img = make_image(1, 5, 5, 1.0f);  // distinct nonzero values
  Rng rng = derive_rng(7, 7);
  const int pad = 2;
  for (int trial = 0; trial < 20; ++trial) {
    const Image out = pad_crop(img, pad, rng);
    REQUIRE(out.height == 5);
    REQUIRE(out.width == 5);
    // The output must equal the padded image shifted by some in-range
    // offset; distinct pixel values make the match unique.
    bool matched = false;
    for (int dy = -pad; dy <= pad && !matched; ++dy) {
      for (int dx = -pad; dx <= pad && !matched; ++dx) {
        bool ok = true;
        for (int y = 0; y < 5 && ok; ++y) {
          for (int x = 0; x < 5 && ok; ++x) {
            const int sy = y + dy, sx = x + dx;
            const float want = (sy >= 0 && sy < 5 && sx >= 0 && sx < 5)
                                   ? img.at(0, sy, sx)
                                   : 0.0f;
            ok = out.at(0, y, x) == want;
          }
        }
        matched = ok;
      }
    }
    CHECK(matched);
  }

  const Image same = pad_crop(img, 0, rng);
  CHECK(count_different(img, same) == 0);
  CHECK_THROWS_AS(pad_crop(img, -1, rng), ConfigError);
}

TEST_CASE("rotation by zero degrees is the identity") {
  const Image img = make_image(2, 6, 6, -3.0f, 0.5f);
  const Image out = rotate_bilinear(img, 0.0f);
  for (int i = 0; i < img.data.size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("rotation by 90 degrees maps the grid exactly") {
  // 2x2 image: quarter turn permutes the four pixels around the center.
  Image img = Image::zeros(1, 2, 2);
  img.at(0, 0, 0) = 1.0f;
  img.at(0, 0, 1) = 2.0f;
  img.at(0, 1, 0) = 3.0f;
  img.at(0, 1, 1) = 4.0f;
  const Image out = rotate_bilinear(img, 90.0f);
  // Inverse mapping sx = cos*dx + sin*dy + cx, sy = -sin*dx + cos*dy + cy
  // with theta = 90 sends out(0,0) to img(1,0) and so on around the center.
  CHECK(out.at(0, 0, 0) == doctest::Approx(3.0f).epsilon(1e-4));
  CHECK(out.at(0, 0, 1) == doctest::Approx(1.0f).epsilon(1e-4));
  CHECK(out.at(0, 1, 0) == doctest::Approx(4.0f).epsilon(1e-4));
  CHECK(out.at(0, 1, 1) == doctest::Approx(2.0f).epsilon(1e-4));
}

TEST_CASE("normalize_image applies the per-channel affine map") {
  Image img = Image::zeros(2, 1, 2);
  img.at(0, 0, 0) = 1.0f;
  img.at(0, 0, 1) = 3.0f;
  img.at(1, 0, 0) = 10.0f;
  img.at(1, 0, 1) = 20.0f;
  const Image out = normalize_image(img, {1.0f, 10.0f}, {2.0f, 5.0f});
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.0f));
  CHECK(out.at(0, 0, 1) == doctest::Approx(1.0f));
  CHECK(out.at(1, 0, 0) == doctest::Approx(0.0f));
  CHECK(out.at(1, 0, 1) == doctest::Approx(2.0f));

  CHECK_THROWS_AS(normalize_image(img, {1.0f}, {2.0f, 5.0f}), ShapeError);
  CHECK_THROWS_AS(normalize_image(img, {1.0f, 10.0f}, {2.0f, 0.0f}),
                  ConfigError);
}

TEST_CASE("transform stacks validate their step names") {
  TransformConfig unknown;
  unknown.name = "sharpen";
  CHECK_THROWS_AS(TransformStack({unknown}), ConfigError);
  TransformConfig bad_flip;
  bad_flip.name = "flip";
  bad_flip.prob = 1.5f;
  CHECK_THROWS_AS(TransformStack({bad_flip}), ConfigError);
  CHECK_NOTHROW(baseline_transform_stack({}));
}

TEST_CASE("flip probability endpoints behave deterministically") {
  const Image img = make_image(3, 8, 8);
  Rng rng = derive_rng(8, 8);

  TransformConfig always;
  always.name = "flip";
  always.prob = 1.0f;
  const TransformStack flip_always({always});
  const Image flipped = flip_always.apply(img, rng);
  CHECK(count_different(flipped, hflip(img)) == 0);

  TransformConfig never;
  never.name = "flip";
  never.prob = 0.0f;
  const TransformStack flip_never({never});
  const Image same = flip_never.apply(img, rng);
  CHECK(count_different(same, img) == 0);
}

TEST_CASE("empty transform stack is the identity") {
  const Image img = make_image(1, 4, 4);
  Rng rng = derive_rng(9, 9);
  const TransformStack stack({});
  const Image out = stack.apply(img, rng);
  CHECK(count_different(out, img) == 0);
}

TEST_CASE("normalize inside a stack matches the direct call") {
  const Image img = make_image(2, 3, 3, 0.1f, 0.05f);
  TransformConfig norm;
  norm.name = "normalize";
  norm.mean = {0.5f, 0.5f};
  norm.std = {0.25f, 0.25f};
  const TransformStack stack({norm});
  Rng rng = derive_rng(10, 10);
  const Image a = stack.apply(img, rng);
  const Image b = normalize_image(img, norm.mean, norm.std);
  CHECK(count_different(a, b) == 0);
}
