#include "textmania/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "textmania/errors.hpp"

namespace textmania {

namespace {

void check_dims(int in_dim, int out_dim) {
  if (in_dim <= 0 || out_dim <= 0) {
    throw ConfigError("projection dims must be positive, got in=" +
                      std::to_string(in_dim) +
                      " out=" + std::to_string(out_dim));
  }
}

void check_alpha(const AlphaDistribution& d) {
  if (!(d.std > 0.0f)) {
    throw ConfigError("alpha std must be > 0, got " + std::to_string(d.std));
  }
  if (!(d.min_clamp >= 0.0f) || !(d.max_clamp >= d.min_clamp)) {
    throw ConfigError("alpha clamps must satisfy 0 <= min <= max, got min=" +
                      std::to_string(d.min_clamp) +
                      " max=" + std::to_string(d.max_clamp));
  }
}

}  // namespace

ProjectionSpec ProjectionSpec::identity(int dim) {
  check_dims(dim, dim);
  ProjectionSpec spec;
  spec.mode = ProjectionMode::kIdentity;
  spec.in_dim = dim;
  spec.out_dim = dim;
  return spec;
}

ProjectionSpec ProjectionSpec::learned_linear(int in_dim, int out_dim,
                                              std::uint64_t seed) {
  check_dims(in_dim, out_dim);
  ProjectionSpec spec;
  spec.mode = ProjectionMode::kLearnedLinear;
  spec.in_dim = in_dim;
  spec.out_dim = out_dim;
  spec.weight.resize(out_dim, in_dim);
  spec.bias = Eigen::VectorXf::Zero(out_dim);
  Rng rng = derive_rng(seed, fnv1a64("projection-init"));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (int r = 0; r < out_dim; ++r) {
    for (int c = 0; c < in_dim; ++c) {
      spec.weight(r, c) =
          static_cast<float>((uniform_real(rng) * 2.0 - 1.0) * bound);
    }
  }
  return spec;
}

Eigen::VectorXf project(const ProjectionSpec& spec,
                        const Eigen::Ref<const Eigen::VectorXf>& v) {
  if (static_cast<int>(v.size()) != spec.in_dim) {
    throw ShapeError("projection expects input of dim " +
                     std::to_string(spec.in_dim) + ", got " +
                     std::to_string(v.size()));
  }
  if (spec.mode == ProjectionMode::kIdentity) {
    return v;
  }
  return spec.weight * v + spec.bias;
}

float sample_alpha(const AlphaDistribution& dist, Rng& rng) {
  check_alpha(dist);
  const double z = draw_normal(rng);
  const double raw = std::abs(z * static_cast<double>(dist.std) +
                              static_cast<double>(dist.mean));
  return static_cast<float>(
      std::clamp(raw, static_cast<double>(dist.min_clamp),
                 static_cast<double>(dist.max_clamp)));
}

std::string variant_name(AugmentVariant v) {
  switch (v) {
    case AugmentVariant::kTextMania:
      return "textmania";
    case AugmentVariant::kRandomNoise:
      return "random_noise";
    case AugmentVariant::kDirectEmbedding:
      return "direct_embedding";
    case AugmentVariant::kConcatEmbedding:
      return "concat_embedding";
  }
  throw ConfigError("unknown augment variant enum value");
}

AugmentVariant variant_from_name(const std::string& name) {
  if (name == "textmania") return AugmentVariant::kTextMania;
  if (name == "random_noise") return AugmentVariant::kRandomNoise;
  if (name == "direct_embedding") return AugmentVariant::kDirectEmbedding;
  if (name == "concat_embedding") return AugmentVariant::kConcatEmbedding;
  throw ConfigError("unknown augment variant '" + name +
                    "' (expected textmania, random_noise, direct_embedding "
                    "or concat_embedding)");
}

int variant_input_dim(const AugmentorConfig& config, const DeltaTable& table) {
  const int d = table.header.dim;
  return config.variant == AugmentVariant::kConcatEmbedding ? 2 * d : d;
}

Eigen::VectorXf augment_feature(const Eigen::Ref<const Eigen::VectorXf>& f,
                                const Eigen::Ref<const Eigen::VectorXf>& delta,
                                float alpha, const ProjectionSpec& spec) {
  if (static_cast<int>(f.size()) != spec.out_dim) {
    throw ShapeError("feature dim " + std::to_string(f.size()) +
                     " does not match projection output dim " +
                     std::to_string(spec.out_dim));
  }
  return f + alpha * project(spec, delta);
}

Eigen::VectorXf make_variant_vector(const AugmentorConfig& config,
                                    const DeltaTable& table, int class_id,
                                    int combo_id, Rng& rng) {
  const int row = table.row_index(class_id, combo_id);
  const int d = table.header.dim;
  switch (config.variant) {
    case AugmentVariant::kTextMania:
      return table.deltas.row(row).transpose();
    case AugmentVariant::kRandomNoise: {
      Eigen::VectorXf v(d);
      for (int i = 0; i < d; ++i) {
        v(i) = static_cast<float>(draw_normal(rng));
      }
      return v;
    }
    case AugmentVariant::kDirectEmbedding:
      if (!table.header.has_variants) {
        throw ConfigError(
            "direct_embedding needs variant embeddings; rebuild the table "
            "with stored embeddings");
      }
      return table.variants.row(row).transpose();
    case AugmentVariant::kConcatEmbedding: {
      if (!table.header.has_bases || !table.header.has_variants) {
        throw ConfigError(
            "concat_embedding needs base and variant embeddings; rebuild "
            "the table with stored embeddings");
      }
      Eigen::VectorXf v(2 * d);
      v.head(d) = table.bases.row(class_id).transpose();
      v.tail(d) = table.variants.row(row).transpose();
      return v;
    }
  }
  throw ConfigError("unknown augment variant enum value");
}

Eigen::MatrixXf per_batch_augment(const Eigen::MatrixXf& features,
                                  const std::vector<int>& labels,
                                  const DeltaTable& table,
                                  const AugmentorConfig& config,
                                  const ProjectionSpec& proj, Rng& rng,
                                  BatchAugmentRecord* record) {
  check_alpha(config.alpha);
  if (!(config.apply_prob >= 0.0f) || !(config.apply_prob <= 1.0f)) {
    throw ConfigError("apply_prob must lie in [0, 1], got " +
                      std::to_string(config.apply_prob));
  }
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n) {
    throw ShapeError("batch has " + std::to_string(n) + " features but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (variant_input_dim(config, table) != proj.in_dim) {
    throw ShapeError("variant vectors have dim " +
                     std::to_string(variant_input_dim(config, table)) +
                     " but the projection expects " +
                     std::to_string(proj.in_dim));
  }
  if (static_cast<int>(features.cols()) != proj.out_dim) {
    throw ShapeError("features have dim " + std::to_string(features.cols()) +
                     " but the projection outputs " +
                     std::to_string(proj.out_dim));
  }
  const int num_combos = table.header.num_combos();

  Eigen::MatrixXf out(features.rows(), features.cols());
  if (record != nullptr) {
    record->samples.assign(n, SampleAugmentRecord{});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const bool applied = uniform_real(rng) < config.apply_prob;
    if (!applied) {
      out.row(i) = features.row(i);
      continue;
    }
    const int combo =
        static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(
                                                num_combos)));
    Eigen::VectorXf source =
        make_variant_vector(config, table, labels[i], combo, rng);
    const float alpha = sample_alpha(config.alpha, rng);
    out.row(i) =
        augment_feature(features.row(i).transpose(), source, alpha, proj)
            .transpose();
    if (record != nullptr) {
      auto& rec = (*record).samples[i];
      rec.applied = true;
      rec.alpha = alpha;
      rec.source = std::move(source);
    }
  }
  return out;
}

void accumulate_projection_grads(const ProjectionSpec& spec,
                                 const BatchAugmentRecord& record,
                                 const Eigen::MatrixXf& feature_grads,
                                 ProjectionGrads* grads) {
  if (spec.mode != ProjectionMode::kLearnedLinear) {
    return;
  }
  if (static_cast<std::size_t>(feature_grads.rows()) !=
      record.samples.size()) {
    throw ShapeError("gradient batch has " +
                     std::to_string(feature_grads.rows()) +
                     " rows but the record covers " +
                     std::to_string(record.samples.size()) + " samples");
  }
  if (grads->weight.rows() != spec.out_dim ||
      grads->weight.cols() != spec.in_dim) {
    grads->weight = Eigen::MatrixXf::Zero(spec.out_dim, spec.in_dim);
    grads->bias = Eigen::VectorXf::Zero(spec.out_dim);
  }
  for (std::size_t i = 0; i < record.samples.size(); ++i) {
    const auto& rec = record.samples[i];
    if (!rec.applied) continue;
    const Eigen::VectorXf g =
        rec.alpha * feature_grads.row(static_cast<Eigen::Index>(i)).transpose();
    grads->weight.noalias() += g * rec.source.transpose();
    grads->bias += g;
  }
}

}  // namespace textmania
