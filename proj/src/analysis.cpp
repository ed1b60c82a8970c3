#include "textmania/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "textmania/errors.hpp"
#include "textmania/prompt.hpp"
#include "textmania/rng.hpp"

#if defined(TEXTMANIA_HAVE_PNG)
#include <png.h>
#endif

namespace textmania {

namespace {

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
  long count = 0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  out.count = static_cast<long>(xs.size());
  if (xs.empty()) {
    return out;
  }
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - out.mean) * (x - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(xs.size()));
  return out;
}

std::optional<double> cosine(const Eigen::VectorXf& a,
                             const Eigen::VectorXf& b) {
  const double na = a.cast<double>().norm();
  const double nb = b.cast<double>().norm();
  if (na == 0.0 || nb == 0.0) {
    return std::nullopt;
  }
  return a.cast<double>().dot(b.cast<double>()) / (na * nb);
}

}  // namespace

ClusterReport cluster_score(const DeltaTable& table,
                            const ProjectionSpec* proj) {
  const int num_classes = table.header.num_classes();
  const int num_combos = table.header.num_combos();
  if (num_classes < 2) {
    throw ConfigError("cluster statistics need at least 2 classes, got " +
                      std::to_string(num_classes));
  }
  if (num_combos < 1) {
    throw ConfigError("cluster statistics need at least 1 attribute combo");
  }

  ClusterReport report;
  report.backend_id = table.header.backend_id;
  std::ostringstream hash;
  hash << "0x" << std::hex << table_hash(table);
  report.table_hash = hash.str();

  // Projected (or raw) rows, nullopt where the row has zero norm.
  std::vector<std::optional<Eigen::VectorXf>> rows(
      static_cast<std::size_t>(table.deltas.rows()));
  for (Eigen::Index r = 0; r < table.deltas.rows(); ++r) {
    Eigen::VectorXf v = table.deltas.row(r).transpose();
    if (proj != nullptr) {
      v = project(*proj, v);
    }
    if (v.norm() == 0.0f) {
      ++report.skipped_zero_rows;
      continue;
    }
    rows[static_cast<std::size_t>(r)] = std::move(v);
  }

  std::vector<double> within_all, across_all;
  for (int g = 0; g < num_combos; ++g) {
    std::vector<double> group;
    for (int a = 0; a < num_classes; ++a) {
      const auto& ra = rows[static_cast<std::size_t>(a * num_combos + g)];
      if (!ra.has_value()) continue;
      for (int b = a + 1; b < num_classes; ++b) {
        const auto& rb = rows[static_cast<std::size_t>(b * num_combos + g)];
        if (!rb.has_value()) continue;
        const auto c = cosine(*ra, *rb);
        if (c.has_value()) {
          group.push_back(*c);
          within_all.push_back(*c);
        }
      }
    }
    const MeanStd ms = mean_std(group);
    report.per_attr.push_back({join_combo(table.header.combos[
                                   static_cast<std::size_t>(g)]),
                               ms.mean, ms.stddev, ms.count});
  }
  for (int g = 0; g < num_combos; ++g) {
    for (int h = g + 1; h < num_combos; ++h) {
      for (int a = 0; a < num_classes; ++a) {
        const auto& ra = rows[static_cast<std::size_t>(a * num_combos + g)];
        if (!ra.has_value()) continue;
        for (int b = 0; b < num_classes; ++b) {
          const auto& rb = rows[static_cast<std::size_t>(b * num_combos + h)];
          if (!rb.has_value()) continue;
          const auto c = cosine(*ra, *rb);
          if (c.has_value()) {
            across_all.push_back(*c);
          }
        }
      }
    }
  }

  const MeanStd within = mean_std(within_all);
  report.within_mean = within.mean;
  report.within_std = within.stddev;
  if (num_combos >= 2 && !across_all.empty()) {
    const MeanStd across = mean_std(across_all);
    report.across_mean = across.mean;
    report.across_std = across.stddev;
  }
  return report;
}

DirectVsDeltaReport direct_vs_delta_cosine(const DeltaTable& table,
                                           EncoderBackend& backend) {
  if (!table.header.has_bases) {
    throw ConfigError(
        "direct-vs-delta comparison needs a table built with stored "
        "embeddings");
  }
  if (backend.id() != table.header.backend_id) {
    throw ConfigError("table was built with backend '" +
                      table.header.backend_id + "', got '" + backend.id() +
                      "'");
  }
  DirectVsDeltaReport report;
  report.backend_id = backend.id();
  std::ostringstream hash;
  hash << "0x" << std::hex << table_hash(table);
  report.table_hash = hash.str();

  double sum = 0.0;
  report.min = std::numeric_limits<double>::infinity();
  report.max = -std::numeric_limits<double>::infinity();
  for (std::size_t ci = 0; ci < table.header.class_names.size(); ++ci) {
    for (std::size_t gi = 0; gi < table.header.combos.size(); ++gi) {
      DirectVsDeltaReport::Entry entry;
      entry.class_name = table.header.class_names[ci];
      entry.combo = join_combo(table.header.combos[gi]);
      const Eigen::VectorXf word =
          embed_text(backend, entry.combo).vector;
      const Eigen::VectorXf delta =
          lookup(table, static_cast<int>(ci), static_cast<int>(gi));
      entry.cosine = cosine(word, delta);
      if (entry.cosine.has_value()) {
        sum += *entry.cosine;
        report.min = std::min(report.min, *entry.cosine);
        report.max = std::max(report.max, *entry.cosine);
        ++report.defined;
      } else {
        ++report.undefined;
      }
      report.entries.push_back(std::move(entry));
    }
  }
  report.mean = report.defined > 0 ? sum / report.defined : 0.0;
  if (report.defined == 0) {
    report.min = 0.0;
    report.max = 0.0;
  }
  return report;
}

void write_direct_vs_delta_csv(const std::string& path,
                               const DirectVsDeltaReport& report) {
  std::ofstream os(path);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  os << "class,combo,cosine\n";
  for (const auto& e : report.entries) {
    os << e.class_name << "," << e.combo << ",";
    if (e.cosine.has_value()) {
      os << *e.cosine;
    }
    os << "\n";
  }
}

Eigen::MatrixXf tsne_coords(const Eigen::MatrixXf& vectors, double perplexity,
                            std::uint64_t seed, int iters) {
  const int n = static_cast<int>(vectors.rows());
  if (!(perplexity > 0.0)) {
    throw ConfigError("perplexity must be > 0, got " +
                      std::to_string(perplexity));
  }
  if (n < 3 * perplexity) {
    throw InputError("t-SNE needs at least 3*perplexity points, got " +
                     std::to_string(n) + " for perplexity " +
                     std::to_string(perplexity));
  }
  const Eigen::MatrixXd x = vectors.cast<double>();
  Eigen::MatrixXd d2(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();
    }
  }

  // Per-point precision search so each conditional distribution hits the
  // target entropy log(perplexity).
  const double target_h = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    Eigen::VectorXd row(n);
    for (int iter = 0; iter < 64; ++iter) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        row(j) = j == i ? 0.0 : std::exp(-beta * d2(i, j));
        sum += row(j);
      }
      if (sum <= 0.0) {
        row.setConstant(1.0 / (n - 1));
        row(i) = 0.0;
        break;
      }
      double h = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i || row(j) <= 0.0) continue;
        const double pj = row(j) / sum;
        h -= pj * std::log(pj);
      }
      row /= sum;
      const double diff = h - target_h;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    p.row(i) = row.transpose();
  }
  p = (p + p.transpose()).eval() / (2.0 * n);
  p = p.cwiseMax(1e-12);

  Rng rng = derive_rng(seed, fnv1a64("tsne-init"));
  Eigen::MatrixXd y(n, 2);
  for (int i = 0; i < n; ++i) {
    y(i, 0) = draw_normal(rng) * 1e-4;
    y(i, 1) = draw_normal(rng) * 1e-4;
  }
  Eigen::MatrixXd vel = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  const int exaggerate_until = std::min(250, iters / 4);
  const double lr = std::max(50.0, static_cast<double>(n) / 12.0);
  for (int it = 0; it < iters; ++it) {
    const double exaggeration = it < exaggerate_until ? 12.0 : 1.0;
    const double momentum = it < exaggerate_until ? 0.5 : 0.8;
    Eigen::MatrixXd w(n, n);
    double zsum = 0.0;
    for (int i = 0; i < n; ++i) {
      w(i, i) = 0.0;
      for (int j = i + 1; j < n; ++j) {
        const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        w(i, j) = v;
        w(j, i) = v;
        zsum += 2.0 * v;
      }
    }
    zsum = std::max(zsum, 1e-12);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(w(i, j) / zsum, 1e-12);
        const double mult = (exaggeration * p(i, j) - q) * w(i, j);
        grad.row(i) += 4.0 * mult * (y.row(i) - y.row(j));
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 2; ++k) {
        const bool same_sign = (grad(i, k) > 0.0) == (vel(i, k) > 0.0);
        gains(i, k) = same_sign ? gains(i, k) * 0.8 : gains(i, k) + 0.2;
        gains(i, k) = std::max(gains(i, k), 0.01);
        vel(i, k) = momentum * vel(i, k) - lr * gains(i, k) * grad(i, k);
      }
    }
    y += vel;
    y.rowwise() -= y.colwise().mean();
  }
  return y.cast<float>();
}

namespace {

#if defined(TEXTMANIA_HAVE_PNG)

void write_scatter_png(const std::string& path, const Eigen::MatrixXf& coords,
                       const std::vector<std::string>& groups) {
  constexpr int kSide = 600;
  constexpr int kMargin = 20;
  static const unsigned char kPalette[][3] = {
      {214, 39, 40},  {31, 119, 180}, {44, 160, 44},  {255, 127, 14},
      {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127},
      {188, 189, 34},  {23, 190, 207}, {174, 199, 232}, {255, 152, 150},
      {152, 223, 138}, {255, 187, 120}, {197, 176, 213}, {196, 156, 148}};
  std::map<std::string, int> group_ids;
  std::vector<int> ids(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    ids[i] = static_cast<int>(
        group_ids.emplace(groups[i], group_ids.size()).first->second);
  }
  const float min_x = coords.col(0).minCoeff();
  const float max_x = coords.col(0).maxCoeff();
  const float min_y = coords.col(1).minCoeff();
  const float max_y = coords.col(1).maxCoeff();
  const float span_x = std::max(max_x - min_x, 1e-6f);
  const float span_y = std::max(max_y - min_y, 1e-6f);

  std::vector<unsigned char> canvas(static_cast<std::size_t>(kSide) * kSide *
                                        3,
                                    255);
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    const int px = kMargin + static_cast<int>((coords(i, 0) - min_x) /
                                              span_x * (kSide - 2 * kMargin));
    const int py = kMargin + static_cast<int>((coords(i, 1) - min_y) /
                                              span_y * (kSide - 2 * kMargin));
    const auto* rgb =
        kPalette[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) %
                 (sizeof(kPalette) / sizeof(kPalette[0]))];
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int xx = px + dx;
        const int yy = py + dy;
        if (xx < 0 || xx >= kSide || yy < 0 || yy >= kSide) continue;
        unsigned char* pix =
            &canvas[(static_cast<std::size_t>(yy) * kSide + xx) * 3];
        pix[0] = rgb[0];
        pix[1] = rgb[1];
        pix[2] = rgb[2];
      }
    }
  }

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (fp == nullptr) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    if (png != nullptr) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("png write failed for '" + path + "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, kSide, kSide, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int row = 0; row < kSide; ++row) {
    png_write_row(png,
                  &canvas[static_cast<std::size_t>(row) * kSide * 3]);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

#endif  // TEXTMANIA_HAVE_PNG

}  // namespace

bool png_supported() {
#if defined(TEXTMANIA_HAVE_PNG)
  return true;
#else
  return false;
#endif
}

void tsne_emit(const Eigen::MatrixXf& vectors,
               const std::vector<std::string>& group_labels,
               double perplexity, std::uint64_t seed,
               const std::string& csv_path, const std::string& png_path,
               int iters) {
  if (group_labels.size() != static_cast<std::size_t>(vectors.rows())) {
    throw ShapeError("group labels and vectors disagree in count");
  }
  const Eigen::MatrixXf coords = tsne_coords(vectors, perplexity, seed, iters);
  std::ofstream os(csv_path);
  if (!os) {
    throw DataError("cannot open '" + csv_path + "' for writing");
  }
  os << "x,y,group\n";
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    os << coords(i, 0) << "," << coords(i, 1) << ","
       << group_labels[static_cast<std::size_t>(i)] << "\n";
  }
  if (!png_path.empty()) {
#if defined(TEXTMANIA_HAVE_PNG)
    write_scatter_png(png_path, coords, group_labels);
#else
    throw ConfigError("built without PNG support; use the CSV output");
#endif
  }
}

}  // namespace textmania
