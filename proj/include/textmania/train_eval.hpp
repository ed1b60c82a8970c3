#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "textmania/augment.hpp"
#include "textmania/baseline_aug.hpp"
#include "textmania/dataset.hpp"
#include "textmania/delta_table.hpp"
#include "textmania/imbalance.hpp"
#include "textmania/nets.hpp"

namespace textmania {

struct OptimConfig {
  float lr = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  float lr_min = 0.0f;
  std::string schedule = "cosine";  // "cosine" | "constant"
};

// Comparison augmentation applied before the feature-space step: mix-based
// ops run first (input or hidden), the difference-vector addition last, so
// it always acts on the actual classifier input.
struct BaselineConfig {
  std::string kind = "none";  // none|mixup|cutmix|manifold_mixup|cutout
  float beta_a = 1.0f;        // Beta(a, a); manifold mixup conventionally 2.0
  int cutout_size = 16;
  std::vector<TransformConfig> transforms;  // input pipeline, images only
};

struct TrainConfig {
  std::string model_id = "linear";
  int epochs = 10;
  int batch_size = 128;
  std::uint64_t seed = 0;
  OptimConfig optim;
  bool augment_enabled = false;
  AugmentorConfig augment;
  std::string proj_mode = "auto";  // "identity" | "learned" | "auto"
  BaselineConfig baseline;
  bool eval_each_epoch = false;
  std::string delta_table_path;  // provenance only; the table is passed in
};

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
std::string train_config_hash(const TrainConfig& config);

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> eval_top1;
};

struct RunReport {
  double top1 = 0.0;
  double top5 = 0.0;
  std::optional<double> many, medium, few;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string model_id;
  std::string variant;  // "none" or the augment variant name
  std::vector<EpochStat> curve;
  double wall_time_sec = 0.0;
};

nlohmann::json report_to_json(const RunReport& report);
void write_curve_csv(const std::string& path,
                     const std::vector<EpochStat>& curve);

struct TrainResult {
  std::unique_ptr<Model> model;
  ProjectionSpec proj;
  RunReport report;
};

// Full training loop. The delta table is required when augmentation is
// enabled and must agree with the dataset's class list. The partition, when
// given, adds per-set accuracies to the report.
TrainResult train(const TrainConfig& config, const Dataset& train_view,
                  const Dataset& eval_view, const DeltaTable* table = nullptr,
                  const ClassSetPartition* partition = nullptr);

// Top-1/Top-5 and optional per-set accuracies; never augments.
void evaluate(Model& model, const Dataset& eval_view,
              const ClassSetPartition* partition, RunReport* report);

// Trains only a linear head (plus the projection, if learned) on frozen
// feature vectors.
TrainResult linear_probe(const TrainConfig& config, const Dataset& train_feats,
                         const Dataset& eval_feats,
                         const DeltaTable* table = nullptr,
                         const ClassSetPartition* partition = nullptr);

// Mean cross entropy of logits against (lambda, y_a, y_b) mixed targets and
// its gradient; y_b == y_a with lambda 1 is the plain case.
double mixed_cross_entropy(const Eigen::MatrixXf& logits,
                           const std::vector<int>& y_a,
                           const std::vector<int>& y_b, float lambda,
                           Eigen::MatrixXf* dlogits);

float cosine_lr(const OptimConfig& optim, int epoch, int total_epochs);

}  // namespace textmania
