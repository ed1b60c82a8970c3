#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "textmania/augment.hpp"
#include "textmania/delta_table.hpp"
#include "textmania/encoder.hpp"

namespace textmania {

// Pairwise-cosine statistics of difference rows, grouped by attribute combo:
// "within" pools pairs sharing a combo, "across" pairs from different combos.
struct ClusterReport {
  struct GroupStat {
    std::string attr;
    double mean = 0.0;
    double stddev = 0.0;
    long pairs = 0;
  };

  double within_mean = 0.0;
  double within_std = 0.0;
  std::optional<double> across_mean, across_std;
  std::vector<GroupStat> per_attr;
  long skipped_zero_rows = 0;
  std::string backend_id;
  std::string table_hash;
};

// Statistics over raw rows, or over projected rows when proj is given.
ClusterReport cluster_score(const DeltaTable& table,
                            const ProjectionSpec* proj = nullptr);

// cosine(embed(attribute words), difference row) for every class/combo pair.
// Zero-norm rows yield absent entries rather than a value.
struct DirectVsDeltaReport {
  struct Entry {
    std::string class_name;
    std::string combo;
    std::optional<double> cosine;
  };

  std::vector<Entry> entries;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  long defined = 0;
  long undefined = 0;
  std::string backend_id;
  std::string table_hash;
};

DirectVsDeltaReport direct_vs_delta_cosine(const DeltaTable& table,
                                           EncoderBackend& backend);

void write_direct_vs_delta_csv(const std::string& path,
                               const DirectVsDeltaReport& report);

// Exact (quadratic) t-SNE with perplexity calibration, deterministic in the
// seed. Returns n x 2 coordinates.
Eigen::MatrixXf tsne_coords(const Eigen::MatrixXf& vectors, double perplexity,
                            std::uint64_t seed, int iters = 500);

// Coordinates + group labels to CSV; optionally renders a scatter PNG when
// built with libpng (png_path empty skips the image).
void tsne_emit(const Eigen::MatrixXf& vectors,
               const std::vector<std::string>& group_labels,
               double perplexity, std::uint64_t seed,
               const std::string& csv_path, const std::string& png_path = "",
               int iters = 500);

bool png_supported();

}  // namespace textmania
