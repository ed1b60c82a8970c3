#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "textmania/image.hpp"
#include "textmania/rng.hpp"

namespace textmania {

// Two-label mix with the loss contract
// loss = lambda * loss(label_a) + (1 - lambda) * loss(label_b).
template <typename T>
struct MixResult {
  T mixed;
  int label_a = 0;
  int label_b = 0;
  float lambda = 1.0f;
};

// lambda * x1 + (1 - lambda) * x2, labels carried for the mixed loss.
MixResult<Image> mixup(const Image& x1, int y1, const Image& x2, int y2,
                       float lambda);

// Same convex combination on hidden activations at a chosen layer.
MixResult<Eigen::VectorXf> manifold_mixup(const Eigen::VectorXf& h1, int y1,
                                          const Eigen::VectorXf& h2, int y2,
                                          float lambda, int layer_id);

// Inclusive-exclusive pixel rectangle [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  int area() const { return (x1 - x0) * (y1 - y0); }
};

// Box whose target area is (1 - lambda) of the image, centered uniformly and
// clipped at the borders; degenerate clips are redrawn. lambda >= 1 maps to
// an empty box.
Box sample_cutmix_box(int width, int height, float lambda, Rng& rng);

// Replace x1's box region with x2's. The returned lambda is recomputed from
// the actually pasted area, so it is exact after clipping.
MixResult<Image> cutmix(const Image& x1, int y1, const Image& x2, int y2,
                        float lambda, Rng& rng);

// Square mask of side mask_size at a uniform center, clipped at borders,
// filled with zeros or a per-channel value. Labels are untouched by contract.
Image cutout(const Image& x, int mask_size, Rng& rng,
             const std::vector<float>& fill = {});

// Beta(a, a) sample for the mix weights.
float draw_beta(float a, Rng& rng);

// Primitive input transforms.
Image hflip(const Image& x);
Image pad_crop(const Image& x, int pad, Rng& rng);
Image rotate_bilinear(const Image& x, float degrees);
Image normalize_image(const Image& x, const std::vector<float>& mean,
                      const std::vector<float>& std);

struct TransformConfig {
  std::string name;  // "flip" | "pad_crop" | "rotation" | "normalize"
  float prob = 0.5f;              // flip
  int pad = 4;                    // pad_crop
  float degrees = 15.0f;          // rotation: uniform in [-degrees, degrees]
  std::vector<float> mean, std;   // normalize
};

// Deterministic composition of the named primitives; empty list is identity.
class TransformStack {
 public:
  explicit TransformStack(std::vector<TransformConfig> steps);

  Image apply(const Image& x, Rng& rng) const;
  const std::vector<TransformConfig>& steps() const { return steps_; }

 private:
  std::vector<TransformConfig> steps_;
};

TransformStack baseline_transform_stack(std::vector<TransformConfig> config);

}  // namespace textmania
