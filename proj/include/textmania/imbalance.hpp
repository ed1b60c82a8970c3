#pragma once

#include <cstdint>
#include <vector>

#include "textmania/rng.hpp"

namespace textmania {

// Exponential-decay long-tail profile. counts[k] = round(n_max * mu^(k/(K-1)))
// with mu = 1/imbalance_factor, so counts[0] == n_max and
// counts[K-1] == round(n_max / imbalance_factor).
struct LongTailSpec {
  int n_max = 0;
  int num_classes = 0;
  double imbalance_factor = 1.0;
  std::uint64_t seed = 0;
};

// Same count for every class; values below 1 are read as a fraction of the
// available per-class samples.
struct ScarceSpec {
  double per_class = 0.0;
  std::uint64_t seed = 0;
};

struct ClassSetPartition {
  std::vector<int> many;    // count > many_threshold
  std::vector<int> medium;  // few_threshold <= count <= many_threshold
  std::vector<int> few;     // count < few_threshold
  int many_threshold = 100;
  int few_threshold = 20;
};

// Round-half-up with a floor of one sample so no class ends up empty.
std::vector<int> longtail_counts(const LongTailSpec& spec);

// Per-class counts for a scarce view of a dataset whose classes hold
// `available` samples each.
std::vector<int> scarce_counts(const ScarceSpec& spec, int available,
                               int num_classes);

ClassSetPartition partition_class_sets(const std::vector<int>& train_counts,
                                       int many_threshold = 100,
                                       int few_threshold = 20);

// Uniform without-replacement draw of counts[c] training indices per class,
// deterministic in the seed. `labels` maps dataset index -> class id; the
// returned lists are ascending within each class.
std::vector<std::vector<int>> subsample_per_class(
    const std::vector<int>& labels, const std::vector<int>& counts,
    std::uint64_t seed);

// "Two classes first, then a sample within each": both class draws are
// uniform over classes regardless of how many samples each class holds.
class ClassBalancedPairSampler {
 public:
  ClassBalancedPairSampler(std::vector<std::vector<int>> per_class_indices,
                           std::uint64_t seed);

  std::pair<int, int> next();

 private:
  std::vector<std::vector<int>> per_class_;
  Rng rng_;
};

}  // namespace textmania
