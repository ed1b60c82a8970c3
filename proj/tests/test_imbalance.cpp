#include <algorithm>
#include <set>
#include <vector>

#include "doctest.h"
#include "textmania/errors.hpp"
#include "textmania/imbalance.hpp"

using namespace textmania;

TEST_CASE("long-tail endpoints obey the imbalance factor law") {
  LongTailSpec spec;
  spec.n_max = 500;
  spec.num_classes = 100;
  spec.imbalance_factor = 100.0;
  const auto counts = longtail_counts(spec);
  REQUIRE(counts.size() == 100);
  CHECK(counts.front() == 500);
  CHECK(counts.back() == 5);  // N_1 / N_K = 100

  for (size_t i = 1; i < counts.size(); ++i) {
    CHECK(counts[i] <= counts[i - 1]);
    CHECK(counts[i] >= 1);
  }
}

TEST_CASE("two-class long-tail is the exact endpoint pair") {
  LongTailSpec spec;
  spec.n_max = 500;
  spec.num_classes = 2;
  spec.imbalance_factor = 50.0;
  const auto counts = longtail_counts(spec);
  REQUIRE(counts.size() == 2);
  CHECK(counts[0] == 500);
  CHECK(counts[1] == 10);
}

TEST_CASE("imbalance factor one is the balanced profile") {
  LongTailSpec spec;
  spec.n_max = 42;
  spec.num_classes = 7;
  spec.imbalance_factor = 1.0;
  const auto counts = longtail_counts(spec);
  for (int c : counts) CHECK(c == 42);
}

TEST_CASE("tiny tail counts floor at one sample") {
  LongTailSpec spec;
  spec.n_max = 10;
  spec.num_classes = 10;
  spec.imbalance_factor = 100.0;
  const auto counts = longtail_counts(spec);
  CHECK(counts.back() == 1);
  for (int c : counts) CHECK(c >= 1);
}

TEST_CASE("long-tail specs are validated") {
  LongTailSpec spec;
  spec.n_max = 0;
  spec.num_classes = 10;
  spec.imbalance_factor = 10.0;
  CHECK_THROWS_AS(longtail_counts(spec), ConfigError);
  spec.n_max = 100;
  spec.imbalance_factor = 0.5;
  CHECK_THROWS_AS(longtail_counts(spec), ConfigError);
  spec.imbalance_factor = 10.0;
  spec.num_classes = 1;
  CHECK_THROWS_AS(longtail_counts(spec), ConfigError);
  spec.num_classes = 0;
  spec.imbalance_factor = 1.0;
  CHECK_THROWS_AS(longtail_counts(spec), ConfigError);
}

TEST_CASE("scarce counts read fractions against the available pool") {
  ScarceSpec spec;
  spec.per_class = 50;
  CHECK(scarce_counts(spec, 500, 3) == std::vector<int>{50, 50, 50});

  spec.per_class = 0.1;
  CHECK(scarce_counts(spec, 500, 2) == std::vector<int>{50, 50});

  spec.per_class = 0.5;
  CHECK(scarce_counts(spec, 10, 1) == std::vector<int>{5});

  // Exactly 1.0 is an absolute count of one sample, not a fraction.
  spec.per_class = 1.0;
  CHECK(scarce_counts(spec, 500, 1) == std::vector<int>{1});
}

TEST_CASE("scarce counts reject impossible requests") {
  ScarceSpec spec;
  spec.per_class = 501;
  CHECK_THROWS_AS(scarce_counts(spec, 500, 1), DataError);
  spec.per_class = 0.0;
  CHECK_THROWS_AS(scarce_counts(spec, 500, 1), ConfigError);
  spec.per_class = 0.0001;
  CHECK_THROWS_AS(scarce_counts(spec, 100, 1), DataError);
}

TEST_CASE("class sets split at the documented boundaries") {
  // Boundary law: counts above 100 are Many, 20..100 inclusive are Medium,
  // below 20 are Few.
  const std::vector<int> counts = {101, 100, 21, 20, 19, 1};
  const ClassSetPartition p = partition_class_sets(counts);
  CHECK(p.many == std::vector<int>{0});
  CHECK(p.medium == std::vector<int>{1, 2, 3});
  CHECK(p.few == std::vector<int>{4, 5});
}

TEST_CASE("partition covers every class exactly once") {
  LongTailSpec spec;
  spec.n_max = 500;
  spec.num_classes = 100;
  spec.imbalance_factor = 100.0;
  const auto counts = longtail_counts(spec);
  const ClassSetPartition p = partition_class_sets(counts);
  std::set<int> seen;
  for (int c : p.many) seen.insert(c);
  for (int c : p.medium) seen.insert(c);
  for (int c : p.few) seen.insert(c);
  CHECK(seen.size() == 100);
  CHECK(p.many.size() + p.medium.size() + p.few.size() == 100);
  CHECK_FALSE(p.many.empty());
  CHECK_FALSE(p.medium.empty());
  CHECK_FALSE(p.few.empty());
}

TEST_CASE("subsample_per_class draws the requested counts without replacement") {
  // 3 classes with 10, 6 and 4 samples laid out round-robin.
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) labels.push_back(0);
  for (int i = 0; i < 6; ++i) labels.push_back(1);
  for (int i = 0; i < 4; ++i) labels.push_back(2);

  const std::vector<int> counts = {5, 6, 2};
  const auto picked = subsample_per_class(labels, counts, 123);
  REQUIRE(picked.size() == 3);
  for (size_t c = 0; c < picked.size(); ++c) {
    CHECK(static_cast<int>(picked[c].size()) == counts[c]);
    CHECK(std::is_sorted(picked[c].begin(), picked[c].end()));
    std::set<int> unique(picked[c].begin(), picked[c].end());
    CHECK(unique.size() == picked[c].size());
    for (int idx : picked[c]) {
      CHECK(labels[static_cast<size_t>(idx)] == static_cast<int>(c));
    }
  }

  // Selecting the full pool is the identity selection.
  CHECK(picked[1] == std::vector<int>{10, 11, 12, 13, 14, 15});

  // Deterministic in the seed.
  CHECK(subsample_per_class(labels, counts, 123) == picked);
  CHECK(subsample_per_class(labels, counts, 124) != picked);

  const std::vector<int> too_many = {11, 1, 1};
  CHECK_THROWS_AS(subsample_per_class(labels, too_many, 0), DataError);
}

TEST_CASE("class-balanced pairs ignore class sizes") {
  // Two classes, 99 vs 1 samples. Class draws must still be 50/50.
  std::vector<std::vector<int>> per_class(2);
  for (int i = 0; i < 99; ++i) per_class[0].push_back(i);
  per_class[1].push_back(99);

  ClassBalancedPairSampler sampler(per_class, 7);
  int first_from_small = 0;
  int second_from_small = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto [a, b] = sampler.next();
    CHECK(a >= 0);
    CHECK(a <= 99);
    CHECK(b >= 0);
    CHECK(b <= 99);
    if (a == 99) ++first_from_small;
    if (b == 99) ++second_from_small;
  }
  CHECK(first_from_small / static_cast<double>(draws) ==
        doctest::Approx(0.5).epsilon(0.04));
  CHECK(second_from_small / static_cast<double>(draws) ==
        doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("class-balanced sampler needs at least one class") {
  CHECK_THROWS_AS(ClassBalancedPairSampler({}, 0), DataError);
  CHECK_THROWS_AS(ClassBalancedPairSampler({{0, 1}, {}}, 0), DataError);
}
