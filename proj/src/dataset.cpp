#include "textmania/dataset.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "textmania/binio.hpp"
#include "textmania/errors.hpp"
#include "textmania/rng.hpp"

namespace textmania {

std::vector<int> Dataset::class_counts() const {
  std::vector<int> counts(class_names.size(), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes()) {
      throw DataError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(num_classes()) + ")");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.class_names = class_names;
  out.channels = channels;
  out.height = height;
  out.width = width;
  out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= size()) {
      throw DataError("index " + std::to_string(idx) + " outside [0, " +
                      std::to_string(size()) + ")");
    }
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(idx);
    out.labels[i] = labels[static_cast<std::size_t>(idx)];
  }
  return out;
}

Image Dataset::image(int i) const {
  if (!is_image()) {
    throw DataError("dataset holds plain features, not images");
  }
  Image img;
  img.channels = channels;
  img.height = height;
  img.width = width;
  img.data = x.row(i).transpose();
  return img;
}

void Dataset::set_image(int i, const Image& img) {
  if (img.channels != channels || img.height != height ||
      img.width != width) {
    throw ShapeError("image shape does not match dataset shape");
  }
  x.row(i) = img.data.transpose();
}

std::vector<std::string> load_class_names(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw DataError("cannot open class list '" + path + "'");
  }
  std::vector<std::string> names;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (!line.empty()) {
      names.push_back(line);
    }
  }
  if (names.empty()) {
    throw DataError("class list '" + path + "' is empty");
  }
  return names;
}

Dataset load_cifar100(const std::string& dir, bool train,
                      const std::string& classes_path) {
  const std::string bin = dir + (train ? "/train.bin" : "/test.bin");
  std::ifstream is(bin, std::ios::binary);
  if (!is) {
    throw DataError("cannot open '" + bin + "'");
  }
  const int expected = train ? 50000 : 10000;
  constexpr int kPixels = 3 * 32 * 32;
  constexpr int kRecord = 2 + kPixels;

  Dataset out;
  out.channels = 3;
  out.height = 32;
  out.width = 32;
  out.x.resize(expected, kPixels);
  out.labels.resize(static_cast<std::size_t>(expected));
  std::vector<unsigned char> record(kRecord);
  for (int i = 0; i < expected; ++i) {
    is.read(reinterpret_cast<char*>(record.data()), kRecord);
    if (!is) {
      throw FormatError("'" + bin + "' truncated at record " +
                        std::to_string(i) + " of " + std::to_string(expected));
    }
    out.labels[static_cast<std::size_t>(i)] = record[1];  // fine label
    for (int p = 0; p < kPixels; ++p) {
      out.x(i, p) = static_cast<float>(record[static_cast<std::size_t>(p) + 2]) /
                    255.0f;
    }
  }
  is.peek();
  if (!is.eof()) {
    throw FormatError("'" + bin + "' has trailing bytes after " +
                      std::to_string(expected) + " records");
  }

  std::string names_path = classes_path;
  if (names_path.empty()) {
    names_path = dir + "/fine_label_names.txt";
  }
  out.class_names = load_class_names(names_path);
  if (out.class_names.size() != 100) {
    throw FormatError("expected 100 class names, got " +
                      std::to_string(out.class_names.size()));
  }
  return out;
}

Dataset make_synthetic_dataset(const Eigen::MatrixXf& centroids,
                               const std::vector<std::string>& class_names,
                               const Eigen::MatrixXf& attr_dirs,
                               const std::vector<int>& counts,
                               float attr_scale, float noise_std,
                               std::uint64_t seed) {
  const int k = static_cast<int>(centroids.rows());
  if (k < 1 || static_cast<int>(class_names.size()) != k ||
      static_cast<int>(counts.size()) != k) {
    throw ConfigError("centroids, class names and counts must agree");
  }
  if (attr_dirs.rows() > 0 && attr_dirs.cols() != centroids.cols()) {
    throw ShapeError("attribute directions and centroids differ in dim");
  }
  if (noise_std < 0.0f || attr_scale < 0.0f) {
    throw ConfigError("attr_scale and noise_std must be >= 0");
  }
  int total = 0;
  for (int c : counts) {
    if (c < 0) {
      throw ConfigError("counts must be >= 0");
    }
    total += c;
  }
  Dataset out;
  out.class_names = class_names;
  out.x.resize(total, centroids.cols());
  out.labels.resize(static_cast<std::size_t>(total));
  int row = 0;
  for (int c = 0; c < k; ++c) {
    Rng rng = derive_rng(seed, fnv1a64("synthetic") ^
                                   static_cast<std::uint64_t>(c));
    for (int i = 0; i < counts[static_cast<std::size_t>(c)]; ++i) {
      Eigen::VectorXf v = centroids.row(c).transpose();
      if (attr_dirs.rows() > 0 && attr_scale > 0.0f) {
        const auto a = uniform_index(
            rng, static_cast<std::uint64_t>(attr_dirs.rows()));
        const float w = static_cast<float>(uniform_real(rng)) * attr_scale;
        v += w * attr_dirs.row(static_cast<Eigen::Index>(a)).transpose();
      }
      for (Eigen::Index d = 0; d < v.size(); ++d) {
        v(d) += noise_std * static_cast<float>(draw_normal(rng));
      }
      out.x.row(row) = v.transpose();
      out.labels[static_cast<std::size_t>(row)] = c;
      ++row;
    }
  }
  return out;
}

namespace {

constexpr char kFeatMagic[4] = {'T', 'M', 'F', 'T'};
constexpr std::uint16_t kFeatVersion = 1;

}  // namespace

void save_features(std::ostream& os, const Eigen::MatrixXf& feats,
                   const std::vector<int>& labels,
                   const std::vector<std::string>& class_names) {
  if (static_cast<std::size_t>(feats.rows()) != labels.size()) {
    throw ShapeError("feature rows and labels differ in count");
  }
  nlohmann::json header = {
      {"rows", feats.rows()},
      {"dim", feats.cols()},
      {"class_names", class_names},
  };
  os.write(kFeatMagic, 4);
  binio::write_le<std::uint16_t>(os, kFeatVersion);
  binio::write_string(os, header.dump());
  for (int y : labels) {
    binio::write_le<std::int32_t>(os, y);
  }
  binio::write_matrix_payload(os, feats);
  if (!os) {
    throw FormatError("feature file write failed");
  }
}

void save_features(const std::string& path, const Eigen::MatrixXf& feats,
                   const std::vector<int>& labels,
                   const std::vector<std::string>& class_names) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  save_features(os, feats, labels, class_names);
}

Dataset load_features(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kFeatMagic, 4)) {
    throw FormatError("bad feature file magic number");
  }
  const auto version = binio::read_le<std::uint16_t>(is, "feature version");
  if (version != kFeatVersion) {
    throw FormatError("unsupported feature file version " +
                      std::to_string(version));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(binio::read_string(is, "feature header"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("feature header is not valid JSON: ") +
                      e.what());
  }
  Dataset out;
  Eigen::Index rows = 0, dim = 0;
  try {
    rows = header.at("rows").get<Eigen::Index>();
    dim = header.at("dim").get<Eigen::Index>();
    out.class_names = header.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("feature header missing field: ") +
                      e.what());
  }
  if (rows < 0 || dim < 1) {
    throw FormatError("implausible feature file shape");
  }
  out.labels.resize(static_cast<std::size_t>(rows));
  for (auto& y : out.labels) {
    y = binio::read_le<std::int32_t>(is, "feature label");
  }
  out.x = binio::read_matrix_payload(is, rows, dim, "feature payload");
  is.peek();
  if (!is.eof()) {
    throw FormatError("feature file has trailing bytes");
  }
  for (int y : out.labels) {
    if (y < 0 || y >= out.num_classes()) {
      throw FormatError("feature label " + std::to_string(y) +
                        " outside class list");
    }
  }
  return out;
}

Dataset load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw DataError("cannot open feature file '" + path + "'");
  }
  return load_features(is);
}

std::uint64_t manifest_indices_hash(
    const std::vector<std::vector<int>>& per_class_indices) {
  std::string bytes;
  for (const auto& cls : per_class_indices) {
    for (int idx : cls) {
      const auto v = static_cast<std::uint32_t>(idx);
      for (int b = 0; b < 4; ++b) {
        bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
      }
    }
    bytes.push_back('\n');
  }
  return fnv1a64(bytes);
}

void write_dataset_manifest(const std::string& path,
                            const DatasetManifest& manifest) {
  nlohmann::json j = {
      {"base", manifest.base},
      {"seed", manifest.seed},
      {"class_names", manifest.class_names},
      {"counts", manifest.counts},
      {"indices", manifest.per_class_indices},
  };
  std::ostringstream hash;
  hash << std::hex << manifest_indices_hash(manifest.per_class_indices);
  j["indices_hash"] = "0x" + hash.str();
  std::ofstream os(path);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  os << j.dump(2) << "\n";
  if (!os) {
    throw DataError("manifest write failed");
  }
}

DatasetManifest read_dataset_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw DataError("cannot open manifest '" + path + "'");
  }
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.base = j.at("base").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.counts = j.at("counts").get<std::vector<int>>();
    m.per_class_indices =
        j.at("indices").get<std::vector<std::vector<int>>>();
    m.indices_hash = j.at("indices_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest missing field: ") + e.what());
  }
  std::ostringstream hash;
  hash << std::hex << manifest_indices_hash(m.per_class_indices);
  if (m.indices_hash != "0x" + hash.str()) {
    throw FormatError("manifest indices hash mismatch (file says " +
                      m.indices_hash + ")");
  }
  if (m.counts.size() != m.per_class_indices.size()) {
    throw FormatError("manifest counts and index lists disagree");
  }
  for (std::size_t c = 0; c < m.counts.size(); ++c) {
    if (static_cast<std::size_t>(m.counts[c]) !=
        m.per_class_indices[c].size()) {
      throw FormatError("manifest count mismatch for class " +
                        std::to_string(c));
    }
  }
  return m;
}

Dataset apply_manifest(const Dataset& base, const DatasetManifest& manifest) {
  if (manifest.class_names != base.class_names) {
    throw ConfigError("manifest class list does not match the base dataset");
  }
  std::vector<int> flat;
  for (std::size_t c = 0; c < manifest.per_class_indices.size(); ++c) {
    for (int idx : manifest.per_class_indices[c]) {
      if (idx < 0 || idx >= base.size()) {
        throw DataError("manifest index " + std::to_string(idx) +
                        " outside the base split");
      }
      if (base.labels[static_cast<std::size_t>(idx)] !=
          static_cast<int>(c)) {
        throw DataError("manifest lists index " + std::to_string(idx) +
                        " under class " + std::to_string(c) +
                        " but the base split disagrees");
      }
      flat.push_back(idx);
    }
  }
  return base.subset(flat);
}

}  // namespace textmania
