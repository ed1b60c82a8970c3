#include "textmania/baseline_aug.hpp"

#include <algorithm>
#include <cmath>

#include "textmania/errors.hpp"

namespace textmania {

namespace {

void check_lambda(float lambda) {
  if (!(lambda >= 0.0f && lambda <= 1.0f)) {
    throw ConfigError("lambda must lie in [0, 1], got " +
                      std::to_string(lambda));
  }
}

// Marsaglia-Tsang; the a < 1 case boosts through Gamma(a + 1).
double gamma_sample(double a, Rng& rng) {
  if (a < 1.0) {
    const double u = uniform_real(rng);
    return gamma_sample(a + 1.0, rng) * std::pow(u, 1.0 / a);
  }
  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double z = draw_normal(rng);
    double v = 1.0 + c * z;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform_real(rng);
    if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) {
      return d * v;
    }
  }
}

}  // namespace

MixResult<Image> mixup(const Image& x1, int y1, const Image& x2, int y2,
                       float lambda) {
  check_lambda(lambda);
  require_same_shape(x1, x2);
  MixResult<Image> out;
  out.mixed = x1;
  out.mixed.data = lambda * x1.data + (1.0f - lambda) * x2.data;
  out.label_a = y1;
  out.label_b = y2;
  out.lambda = lambda;
  return out;
}

MixResult<Eigen::VectorXf> manifold_mixup(const Eigen::VectorXf& h1, int y1,
                                          const Eigen::VectorXf& h2, int y2,
                                          float lambda, int layer_id) {
  check_lambda(lambda);
  if (h1.size() != h2.size()) {
    throw ShapeError("hidden activations at layer " +
                     std::to_string(layer_id) + " differ in size: " +
                     std::to_string(h1.size()) + " vs " +
                     std::to_string(h2.size()));
  }
  MixResult<Eigen::VectorXf> out;
  out.mixed = lambda * h1 + (1.0f - lambda) * h2;
  out.label_a = y1;
  out.label_b = y2;
  out.lambda = lambda;
  return out;
}

Box sample_cutmix_box(int width, int height, float lambda, Rng& rng) {
  if (width <= 0 || height <= 0) {
    throw ShapeError("cutmix needs a nonempty image");
  }
  if (lambda >= 1.0f) {
    return Box{};
  }
  const double ratio = std::sqrt(1.0 - static_cast<double>(lambda));
  const int cut_w =
      static_cast<int>(std::floor(width * ratio + 0.5));
  const int cut_h =
      static_cast<int>(std::floor(height * ratio + 0.5));
  if (cut_w <= 0 || cut_h <= 0) {
    return Box{};
  }
  // With an in-image center and a split half-extent the clipped box always
  // keeps positive area; the redraw loop covers the contract anyway.
  for (int tries = 0; tries < 1000; ++tries) {
    const int cx = static_cast<int>(uniform_index(rng, width));
    const int cy = static_cast<int>(uniform_index(rng, height));
    Box box;
    box.x0 = std::max(0, cx - cut_w / 2);
    box.x1 = std::min(width, cx + (cut_w - cut_w / 2));
    box.y0 = std::max(0, cy - cut_h / 2);
    box.y1 = std::min(height, cy + (cut_h - cut_h / 2));
    if (box.area() > 0) {
      return box;
    }
  }
  throw DataError("could not draw a nondegenerate cutmix box");
}

MixResult<Image> cutmix(const Image& x1, int y1, const Image& x2, int y2,
                        float lambda, Rng& rng) {
  check_lambda(lambda);
  require_same_shape(x1, x2);
  MixResult<Image> out;
  out.mixed = x1;
  out.label_a = y1;
  out.label_b = y2;
  const Box box = sample_cutmix_box(x1.width, x1.height, lambda, rng);
  if (box.area() == 0) {
    out.lambda = 1.0f;
    return out;
  }
  for (int c = 0; c < x1.channels; ++c) {
    for (int y = box.y0; y < box.y1; ++y) {
      for (int x = box.x0; x < box.x1; ++x) {
        out.mixed.at(c, y, x) = x2.at(c, y, x);
      }
    }
  }
  out.lambda = 1.0f - static_cast<float>(box.area()) /
                          (static_cast<float>(x1.width) * x1.height);
  return out;
}

Image cutout(const Image& x, int mask_size, Rng& rng,
             const std::vector<float>& fill) {
  if (mask_size < 0) {
    throw ConfigError("cutout mask size must be >= 0, got " +
                      std::to_string(mask_size));
  }
  if (!fill.empty() && static_cast<int>(fill.size()) != x.channels) {
    throw ShapeError("cutout fill has " + std::to_string(fill.size()) +
                     " values for " + std::to_string(x.channels) +
                     " channels");
  }
  Image out = x;
  if (mask_size == 0) {
    return out;
  }
  const int cx = static_cast<int>(uniform_index(rng, x.width));
  const int cy = static_cast<int>(uniform_index(rng, x.height));
  const int x0 = std::max(0, cx - mask_size / 2);
  const int x1 = std::min(x.width, cx + (mask_size - mask_size / 2));
  const int y0 = std::max(0, cy - mask_size / 2);
  const int y1 = std::min(x.height, cy + (mask_size - mask_size / 2));
  for (int c = 0; c < x.channels; ++c) {
    const float v = fill.empty() ? 0.0f : fill[static_cast<std::size_t>(c)];
    for (int y = y0; y < y1; ++y) {
      for (int xx = x0; xx < x1; ++xx) {
        out.at(c, y, xx) = v;
      }
    }
  }
  return out;
}

float draw_beta(float a, Rng& rng) {
  if (!(a > 0.0f)) {
    throw ConfigError("beta parameter must be > 0, got " + std::to_string(a));
  }
  const double x = gamma_sample(a, rng);
  const double y = gamma_sample(a, rng);
  const double s = x + y;
  if (s <= 0.0) {
    return 0.5f;
  }
  return static_cast<float>(x / s);
}

Image hflip(const Image& x) {
  Image out = x;
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < x.height; ++y) {
      for (int xx = 0; xx < x.width; ++xx) {
        out.at(c, y, xx) = x.at(c, y, x.width - 1 - xx);
      }
    }
  }
  return out;
}

Image pad_crop(const Image& x, int pad, Rng& rng) {
  if (pad < 0) {
    throw ConfigError("pad must be >= 0, got " + std::to_string(pad));
  }
  if (pad == 0) {
    return x;
  }
  const int oy = static_cast<int>(uniform_index(rng, 2 * pad + 1));
  const int ox = static_cast<int>(uniform_index(rng, 2 * pad + 1));
  Image out = Image::zeros(x.channels, x.height, x.width);
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < x.height; ++y) {
      for (int xx = 0; xx < x.width; ++xx) {
        // Source coordinate in the zero-padded image, shifted back.
        const int sy = y + oy - pad;
        const int sx = xx + ox - pad;
        if (sy >= 0 && sy < x.height && sx >= 0 && sx < x.width) {
          out.at(c, y, xx) = x.at(c, sy, sx);
        }
      }
    }
  }
  return out;
}

Image rotate_bilinear(const Image& x, float degrees) {
  constexpr double kPi = 3.14159265358979323846;
  const double theta = static_cast<double>(degrees) * kPi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double cy = (x.height - 1) / 2.0;
  const double cx = (x.width - 1) / 2.0;
  Image out = Image::zeros(x.channels, x.height, x.width);
  for (int y = 0; y < x.height; ++y) {
    for (int xx = 0; xx < x.width; ++xx) {
      // Inverse rotation of the output coordinate around the center.
      const double dx = xx - cx;
      const double dy = y - cy;
      const double sx = cos_t * dx + sin_t * dy + cx;
      const double sy = -sin_t * dx + cos_t * dy + cy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      for (int c = 0; c < x.channels; ++c) {
        double acc = 0.0;
        for (int ky = 0; ky <= 1; ++ky) {
          for (int kx = 0; kx <= 1; ++kx) {
            const int px = x0 + kx;
            const int py = y0 + ky;
            if (px < 0 || px >= x.width || py < 0 || py >= x.height) continue;
            const double w = (kx == 0 ? 1.0 - fx : fx) *
                             (ky == 0 ? 1.0 - fy : fy);
            acc += w * x.at(c, py, px);
          }
        }
        out.at(c, y, xx) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Image normalize_image(const Image& x, const std::vector<float>& mean,
                      const std::vector<float>& std) {
  if (static_cast<int>(mean.size()) != x.channels ||
      static_cast<int>(std.size()) != x.channels) {
    throw ShapeError("normalize needs one mean/std per channel (" +
                     std::to_string(x.channels) + "), got " +
                     std::to_string(mean.size()) + "/" +
                     std::to_string(std.size()));
  }
  for (float s : std) {
    if (s == 0.0f) {
      throw ConfigError("normalize std must be nonzero");
    }
  }
  Image out = x;
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < x.height; ++y) {
      for (int xx = 0; xx < x.width; ++xx) {
        out.at(c, y, xx) = (x.at(c, y, xx) - mean[static_cast<std::size_t>(c)]) /
                           std[static_cast<std::size_t>(c)];
      }
    }
  }
  return out;
}

TransformStack::TransformStack(std::vector<TransformConfig> steps)
    : steps_(std::move(steps)) {
  for (const auto& step : steps_) {
    if (step.name != "flip" && step.name != "pad_crop" &&
        step.name != "rotation" && step.name != "normalize") {
      throw ConfigError("unknown transform '" + step.name +
                        "' (expected flip, pad_crop, rotation or normalize)");
    }
    if (step.name == "flip" &&
        (!(step.prob >= 0.0f) || !(step.prob <= 1.0f))) {
      throw ConfigError("flip prob must lie in [0, 1], got " +
                        std::to_string(step.prob));
    }
  }
}

Image TransformStack::apply(const Image& x, Rng& rng) const {
  Image out = x;
  for (const auto& step : steps_) {
    if (step.name == "flip") {
      if (uniform_real(rng) < step.prob) {
        out = hflip(out);
      }
    } else if (step.name == "pad_crop") {
      out = pad_crop(out, step.pad, rng);
    } else if (step.name == "rotation") {
      const float angle = static_cast<float>(
          (uniform_real(rng) * 2.0 - 1.0) * step.degrees);
      out = rotate_bilinear(out, angle);
    } else {
      out = normalize_image(out, step.mean, step.std);
    }
  }
  return out;
}

TransformStack baseline_transform_stack(std::vector<TransformConfig> config) {
  return TransformStack(std::move(config));
}

}  // namespace textmania
