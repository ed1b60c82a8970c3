#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "textmania/delta_table.hpp"
#include "textmania/rng.hpp"

namespace textmania {

enum class ProjectionMode { kIdentity, kLearnedLinear };

// Affine map from text-embedding space (in_dim) to the target feature space
// (out_dim). Identity is only valid when the dims agree and carries no
// parameters.
struct ProjectionSpec {
  ProjectionMode mode = ProjectionMode::kIdentity;
  int in_dim = 0;
  int out_dim = 0;
  Eigen::MatrixXf weight;  // out_dim x in_dim, learned mode only
  Eigen::VectorXf bias;    // out_dim, learned mode only

  static ProjectionSpec identity(int dim);
  // Uniform fan-in init for the weight, zero bias.
  static ProjectionSpec learned_linear(int in_dim, int out_dim, uint64_t seed);
};

Eigen::VectorXf project(const ProjectionSpec& spec,
                        const Eigen::Ref<const Eigen::VectorXf>& v);

// Mixing weight distribution: alpha = clamp(|z * std + mean|, min, max)
// with z standard normal. The absolute value keeps the attribute direction
// unflipped; the lower clamp guarantees a nonzero perturbation.
struct AlphaDistribution {
  float mean = 0.0f;
  float std = 1.0f;
  float min_clamp = 0.1f;
  float max_clamp = 2.0f;
};

float sample_alpha(const AlphaDistribution& dist, Rng& rng);

enum class AugmentVariant {
  kTextMania,        // stored difference row
  kRandomNoise,      // fresh standard-normal vector of the table dim
  kDirectEmbedding,  // variant-prompt embedding e_T1
  kConcatEmbedding,  // [e_T0 ; e_T1], twice the table dim
};

std::string variant_name(AugmentVariant v);
AugmentVariant variant_from_name(const std::string& name);

enum class ComboSampling { kUniformOverCombos };

struct AugmentorConfig {
  AlphaDistribution alpha;
  float apply_prob = 1.0f;
  ComboSampling combo_sampling = ComboSampling::kUniformOverCombos;
  AugmentVariant variant = AugmentVariant::kTextMania;
};

// Dimension of the vector fed to the projection under this config.
int variant_input_dim(const AugmentorConfig& config, const DeltaTable& table);

// The core update: f + alpha * proj(delta). The sample's label is not
// part of the signature because augmentation never changes it.
Eigen::VectorXf augment_feature(const Eigen::Ref<const Eigen::VectorXf>& f,
                                const Eigen::Ref<const Eigen::VectorXf>& delta,
                                float alpha, const ProjectionSpec& spec);

// Source vector for one sample under the configured variant.
Eigen::VectorXf make_variant_vector(const AugmentorConfig& config,
                                    const DeltaTable& table, int class_id,
                                    int combo_id, Rng& rng);

// What per_batch_augment did to each sample, kept so the training step can
// backpropagate into the projection and tests can replay decisions.
struct SampleAugmentRecord {
  bool applied = false;
  float alpha = 0.0f;
  Eigen::VectorXf source;  // vector fed to the projection
};

struct BatchAugmentRecord {
  std::vector<SampleAugmentRecord> samples;
};

// Augment each row of `features` independently with probability apply_prob:
// a combo is drawn uniformly, the variant vector is projected, scaled by a
// fresh alpha and added. Labels index the table's class list and are
// returned unchanged by construction. Draw order per sample is fixed
// (apply gate, combo, variant vector, alpha), so a fixed RNG stream replays
// bit-identically.
Eigen::MatrixXf per_batch_augment(const Eigen::MatrixXf& features,
                                  const std::vector<int>& labels,
                                  const DeltaTable& table,
                                  const AugmentorConfig& config,
                                  const ProjectionSpec& proj, Rng& rng,
                                  BatchAugmentRecord* record = nullptr);

struct ProjectionGrads {
  Eigen::MatrixXf weight;
  Eigen::VectorXf bias;
};

// d(loss)/d(W, b) given d(loss)/d(augmented features). The augmented
// feature is f + alpha * (W v + b), so dW += alpha * g v^T and
// db += alpha * g per applied sample; the gradient w.r.t. f itself is the
// incoming gradient unchanged.
void accumulate_projection_grads(const ProjectionSpec& spec,
                                 const BatchAugmentRecord& record,
                                 const Eigen::MatrixXf& feature_grads,
                                 ProjectionGrads* grads);

}  // namespace textmania
