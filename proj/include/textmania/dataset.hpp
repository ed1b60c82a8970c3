#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "textmania/image.hpp"

namespace textmania {

// In-memory classification dataset. Rows of x are flattened CHW images when
// channels > 0, plain feature vectors otherwise.
struct Dataset {
  Eigen::MatrixXf x;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  int channels = 0;
  int height = 0;
  int width = 0;

  bool is_image() const { return channels > 0; }
  int size() const { return static_cast<int>(x.rows()); }
  int num_classes() const { return static_cast<int>(class_names.size()); }

  std::vector<int> class_counts() const;
  Dataset subset(const std::vector<int>& indices) const;
  Image image(int i) const;
  void set_image(int i, const Image& img);
};

// CIFAR-100 binary pair (train.bin / test.bin, one coarse byte, one fine
// byte, 3072 pixel bytes per record). Pixels are scaled to [0, 1]. Class
// names come from fine_label_names.txt next to the data or from
// classes_path.
Dataset load_cifar100(const std::string& dir, bool train,
                      const std::string& classes_path = "");

std::vector<std::string> load_class_names(const std::string& path);

// Gaussian features around per-class centroids plus a uniformly weighted
// attribute-direction offset; the generating process matches what the
// difference-vector table recovers exactly under the toy encoder.
Dataset make_synthetic_dataset(const Eigen::MatrixXf& centroids,
                               const std::vector<std::string>& class_names,
                               const Eigen::MatrixXf& attr_dirs,
                               const std::vector<int>& counts,
                               float attr_scale, float noise_std,
                               std::uint64_t seed);

// TMFT file: frozen feature matrix with labels and class names.
void save_features(std::ostream& os, const Eigen::MatrixXf& feats,
                   const std::vector<int>& labels,
                   const std::vector<std::string>& class_names);
void save_features(const std::string& path, const Eigen::MatrixXf& feats,
                   const std::vector<int>& labels,
                   const std::vector<std::string>& class_names);
Dataset load_features(std::istream& is);
Dataset load_features(const std::string& path);

// Reproducible description of a training view: which indices of the base
// split were kept, per class, plus a hash to pin the selection.
struct DatasetManifest {
  std::string base;
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;
  std::vector<int> counts;
  std::vector<std::vector<int>> per_class_indices;
  std::string indices_hash;
};

std::uint64_t manifest_indices_hash(
    const std::vector<std::vector<int>>& per_class_indices);

void write_dataset_manifest(const std::string& path,
                            const DatasetManifest& manifest);
DatasetManifest read_dataset_manifest(const std::string& path);

// Flattens the per-class lists in class order and subsets the base split.
// Validates the hash, index ranges and that each index has the class it is
// listed under.
Dataset apply_manifest(const Dataset& base, const DatasetManifest& manifest);

}  // namespace textmania
