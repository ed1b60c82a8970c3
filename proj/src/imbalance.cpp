#include "textmania/imbalance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "textmania/errors.hpp"

namespace textmania {

namespace {

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

}  // namespace

std::vector<int> longtail_counts(const LongTailSpec& spec) {
  if (spec.n_max < 1) {
    throw ConfigError("long-tail n_max must be >= 1, got " +
                      std::to_string(spec.n_max));
  }
  if (!(spec.imbalance_factor >= 1.0)) {
    throw ConfigError("imbalance factor must be >= 1, got " +
                      std::to_string(spec.imbalance_factor));
  }
  if (spec.num_classes < 2 && spec.imbalance_factor > 1.0) {
    throw ConfigError("a long tail needs at least 2 classes, got " +
                      std::to_string(spec.num_classes));
  }
  if (spec.num_classes < 1) {
    throw ConfigError("num_classes must be >= 1, got " +
                      std::to_string(spec.num_classes));
  }
  const int k = spec.num_classes;
  const double mu = 1.0 / spec.imbalance_factor;
  std::vector<int> counts(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double expo = k > 1 ? static_cast<double>(i) / (k - 1) : 0.0;
    counts[static_cast<std::size_t>(i)] =
        std::max(1, round_half_up(spec.n_max * std::pow(mu, expo)));
  }
  return counts;
}

std::vector<int> scarce_counts(const ScarceSpec& spec, int available,
                               int num_classes) {
  if (num_classes < 1) {
    throw ConfigError("num_classes must be >= 1, got " +
                      std::to_string(num_classes));
  }
  if (available < 1) {
    throw DataError("classes must hold at least 1 sample, got " +
                    std::to_string(available));
  }
  if (!(spec.per_class > 0.0)) {
    throw ConfigError("scarce per-class value must be positive, got " +
                      std::to_string(spec.per_class));
  }
  const int count = spec.per_class < 1.0
                        ? round_half_up(spec.per_class * available)
                        : round_half_up(spec.per_class);
  if (count < 1 || count > available) {
    throw DataError("scarce count " + std::to_string(count) +
                    " outside [1, " + std::to_string(available) + "]");
  }
  return std::vector<int>(static_cast<std::size_t>(num_classes), count);
}

ClassSetPartition partition_class_sets(const std::vector<int>& train_counts,
                                       int many_threshold,
                                       int few_threshold) {
  ClassSetPartition part;
  part.many_threshold = many_threshold;
  part.few_threshold = few_threshold;
  for (std::size_t c = 0; c < train_counts.size(); ++c) {
    const int id = static_cast<int>(c);
    if (train_counts[c] > many_threshold) {
      part.many.push_back(id);
    } else if (train_counts[c] >= few_threshold) {
      part.medium.push_back(id);
    } else {
      part.few.push_back(id);
    }
  }
  return part;
}

std::vector<std::vector<int>> subsample_per_class(
    const std::vector<int>& labels, const std::vector<int>& counts,
    std::uint64_t seed) {
  const int num_classes = static_cast<int>(counts.size());
  std::vector<std::vector<int>> pools(counts.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) {
      throw DataError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(num_classes) + ")");
    }
    pools[static_cast<std::size_t>(y)].push_back(static_cast<int>(i));
  }
  std::vector<std::vector<int>> chosen(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    auto& pool = pools[c];
    const int want = counts[c];
    if (want < 0 || static_cast<std::size_t>(want) > pool.size()) {
      throw DataError("class " + std::to_string(c) + " has " +
                      std::to_string(pool.size()) + " samples, requested " +
                      std::to_string(want));
    }
    Rng rng = derive_rng(seed, static_cast<std::uint64_t>(c));
    fisher_yates_shuffle(pool, rng);
    chosen[c].assign(pool.begin(), pool.begin() + want);
    std::sort(chosen[c].begin(), chosen[c].end());
  }
  return chosen;
}

ClassBalancedPairSampler::ClassBalancedPairSampler(
    std::vector<std::vector<int>> per_class_indices, std::uint64_t seed)
    : per_class_(std::move(per_class_indices)),
      rng_(derive_rng(seed, fnv1a64("class-balanced-pairs"))) {
  if (per_class_.empty()) {
    throw DataError("sampler needs at least one class");
  }
  for (std::size_t c = 0; c < per_class_.size(); ++c) {
    if (per_class_[c].empty()) {
      throw DataError("class " + std::to_string(c) + " is empty");
    }
  }
}

std::pair<int, int> ClassBalancedPairSampler::next() {
  const auto pick = [this]() {
    const auto c = uniform_index(rng_, per_class_.size());
    const auto& pool = per_class_[c];
    return pool[uniform_index(rng_, pool.size())];
  };
  const int a = pick();
  const int b = pick();
  return {a, b};
}

}  // namespace textmania
