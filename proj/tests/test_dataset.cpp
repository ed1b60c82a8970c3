#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "textmania/dataset.hpp"
#include "textmania/errors.hpp"
#include "textmania/rng.hpp"

using namespace textmania;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("textmania_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// One CIFAR-style eval split: 10000 records of coarse, fine, 3072 pixels.
std::string fake_cifar_bytes(int records) {
  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(records) * 3074);
  for (int i = 0; i < records; ++i) {
    bytes.push_back(static_cast<char>(i % 20));   // coarse label, ignored
    bytes.push_back(static_cast<char>(i % 100));  // fine label
    for (int p = 0; p < 3072; ++p) {
      bytes.push_back(static_cast<char>((i * 7 + p * 13) % 256));
    }
  }
  return bytes;
}

std::string hundred_names() {
  std::string out;
  for (int i = 0; i < 100; ++i) {
    out += "c" + std::to_string(i / 10) + std::to_string(i % 10) + "\n";
  }
  return out;
}

Dataset tiny_feature_dataset() {
  Dataset d;
  d.class_names = {"ant", "bee"};
  d.x.resize(5, 3);
  d.x << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14;
  d.labels = {0, 1, 0, 1, 1};
  return d;
}

bool bitwise_equal(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0;
}

}  // namespace

TEST_CASE("dataset accessors, subsetting and validation") {
  Dataset d = tiny_feature_dataset();
  CHECK(d.size() == 5);
  CHECK(d.num_classes() == 2);
  CHECK_FALSE(d.is_image());
  const auto counts = d.class_counts();
  CHECK(counts == std::vector<int>{2, 3});

  const Dataset sub = d.subset({4, 0});
  CHECK(sub.size() == 2);
  CHECK(sub.labels == std::vector<int>{1, 0});
  CHECK(sub.x(0, 0) == 12.0f);
  CHECK(sub.x(1, 2) == 2.0f);
  CHECK(sub.class_names == d.class_names);

  CHECK_THROWS_AS(d.subset({5}), DataError);
  CHECK_THROWS_AS(d.subset({-1}), DataError);
  CHECK_THROWS_AS(d.image(0), DataError);

  Dataset bad = d;
  bad.labels[0] = 7;
  CHECK_THROWS_AS(bad.class_counts(), DataError);
}

TEST_CASE("image rows convert to and from Image") {
  Dataset d;
  d.class_names = {"a", "b"};
  d.channels = 2;
  d.height = 2;
  d.width = 2;
  d.x.resize(2, 8);
  d.x.setZero();
  d.labels = {0, 1};

  Image img = Image::zeros(2, 2, 2);
  for (int i = 0; i < 8; ++i) img.data[i] = static_cast<float>(i + 1);
  d.set_image(1, img);
  const Image back = d.image(1);
  CHECK(back.channels == 2);
  CHECK(back.at(1, 1, 0) == 7.0f);
  CHECK(std::memcmp(back.data.data(), img.data.data(),
                    sizeof(float) * 8) == 0);
  CHECK(d.image(0).data.isZero(0.0f));

  const Image wrong = Image::zeros(1, 2, 2);
  CHECK_THROWS_AS(d.set_image(0, wrong), ShapeError);
}

TEST_CASE("class name lists strip line endings and reject empties") {
  TempDir dir("classnames");
  write_file(dir.file("names.txt"), "apple\r\nbee \n\ncrab\n");
  const auto names = load_class_names(dir.file("names.txt"));
  CHECK(names == std::vector<std::string>{"apple", "bee", "crab"});

  write_file(dir.file("empty.txt"), "\n\n");
  CHECK_THROWS_AS(load_class_names(dir.file("empty.txt")), DataError);
  CHECK_THROWS_AS(load_class_names(dir.file("missing.txt")), DataError);
}

TEST_CASE("cifar loader parses the binary record layout") {
  TempDir dir("cifar");
  const std::string bytes = fake_cifar_bytes(10000);
  write_file(dir.file("test.bin"), bytes);
  write_file(dir.file("fine_label_names.txt"), hundred_names());

  const Dataset d = load_cifar100(dir.path.string(), false);
  CHECK(d.size() == 10000);
  CHECK(d.channels == 3);
  CHECK(d.height == 32);
  CHECK(d.width == 32);
  CHECK(d.num_classes() == 100);
  CHECK(d.class_names[0] == "c00");
  CHECK(d.class_names[99] == "c99");
  CHECK(d.labels[0] == 0);
  CHECK(d.labels[123] == 23);
  CHECK(d.labels[9999] == 99);
  // Fine label comes from the second byte; pixels are scaled by 255.
  CHECK(d.x(0, 0) == static_cast<float>((0 * 7 + 0 * 13) % 256) / 255.0f);
  CHECK(d.x(5, 17) == static_cast<float>((5 * 7 + 17 * 13) % 256) / 255.0f);
  CHECK(d.x.minCoeff() >= 0.0f);
  CHECK(d.x.maxCoeff() <= 1.0f);

  const auto counts = d.class_counts();
  for (int c = 0; c < 100; ++c) CHECK(counts[static_cast<std::size_t>(c)] == 100);
}

TEST_CASE("cifar loader rejects malformed files") {
  TempDir dir("cifar_bad");
  write_file(dir.file("fine_label_names.txt"), hundred_names());
  const std::string bytes = fake_cifar_bytes(10000);

  write_file(dir.file("test.bin"), bytes.substr(0, bytes.size() - 10));
  CHECK_THROWS_AS(load_cifar100(dir.path.string(), false), FormatError);

  write_file(dir.file("test.bin"), bytes + "x");
  CHECK_THROWS_AS(load_cifar100(dir.path.string(), false), FormatError);

  write_file(dir.file("test.bin"), bytes);
  write_file(dir.file("three.txt"), "a\nb\nc\n");
  CHECK_THROWS_AS(load_cifar100(dir.path.string(), false, dir.file("three.txt")),
                  FormatError);

  CHECK_THROWS_AS(load_cifar100((dir.path / "nowhere").string(), false),
                  DataError);
}

TEST_CASE("synthetic datasets follow the generating recipe") {
  Eigen::MatrixXf centroids(2, 4);
  centroids << 1, 0, 0, 0, 0, 1, 0, 0;
  Eigen::MatrixXf dirs(1, 4);
  dirs << 0, 0, 2, 0;
  const std::vector<std::string> names = {"ant", "bee"};

  const Dataset d =
      make_synthetic_dataset(centroids, names, dirs, {3, 2}, 0.5f, 0.0f, 9);
  REQUIRE(d.size() == 5);
  CHECK(d.labels == std::vector<int>{0, 0, 0, 1, 1});
  CHECK(d.class_names == names);

  // With zero noise every sample is centroid + w * dir for one w per draw,
  // and w stays inside [0, attr_scale).
  for (int i = 0; i < d.size(); ++i) {
    const int y = d.labels[static_cast<std::size_t>(i)];
    const Eigen::VectorXf resid =
        d.x.row(i).transpose() - centroids.row(y).transpose();
    const float w = resid(2) / 2.0f;
    CHECK(w >= 0.0f);
    CHECK(w < 0.5f);
    const Eigen::VectorXf rebuilt = w * dirs.row(0).transpose();
    CHECK((resid - rebuilt).cwiseAbs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("synthetic generation is seeded and per-class independent") {
  Eigen::MatrixXf centroids(2, 3);
  centroids << 5, 0, 0, 0, 5, 0;
  Eigen::MatrixXf dirs(2, 3);
  dirs << 1, 1, 0, 0, 1, 1;
  const std::vector<std::string> names = {"ant", "bee"};

  const Dataset a =
      make_synthetic_dataset(centroids, names, dirs, {4, 3}, 1.0f, 0.3f, 11);
  const Dataset b =
      make_synthetic_dataset(centroids, names, dirs, {4, 3}, 1.0f, 0.3f, 11);
  const Dataset c =
      make_synthetic_dataset(centroids, names, dirs, {4, 3}, 1.0f, 0.3f, 12);
  CHECK(bitwise_equal(a.x, b.x));
  CHECK_FALSE(bitwise_equal(a.x, c.x));

  // Each class draws from its own stream, so class 1 is untouched by the
  // class 0 count.
  const Dataset shrunk =
      make_synthetic_dataset(centroids, names, dirs, {1, 3}, 1.0f, 0.3f, 11);
  CHECK(bitwise_equal(shrunk.x.bottomRows(3), a.x.bottomRows(3)));

  // No attribute directions and no noise collapses to the centroids.
  const Eigen::MatrixXf no_dirs(0, 3);
  const Dataset plain =
      make_synthetic_dataset(centroids, names, no_dirs, {2, 1}, 1.0f, 0.0f, 0);
  CHECK(bitwise_equal(plain.x.row(0), centroids.row(0)));
  CHECK(bitwise_equal(plain.x.row(2), centroids.row(1)));
}

TEST_CASE("synthetic dataset inputs are validated") {
  Eigen::MatrixXf centroids(2, 3);
  centroids.setZero();
  const Eigen::MatrixXf dirs(0, 3);
  const std::vector<std::string> names = {"a", "b"};

  CHECK_THROWS_AS(make_synthetic_dataset(centroids, {"a"}, dirs, {1, 1}, 1, 0, 0),
                  ConfigError);
  CHECK_THROWS_AS(make_synthetic_dataset(centroids, names, dirs, {1}, 1, 0, 0),
                  ConfigError);
  CHECK_THROWS_AS(
      make_synthetic_dataset(centroids, names, dirs, {1, -1}, 1, 0, 0),
      ConfigError);
  CHECK_THROWS_AS(
      make_synthetic_dataset(centroids, names, dirs, {1, 1}, 1, -0.1f, 0),
      ConfigError);
  Eigen::MatrixXf wrong_dirs(1, 4);
  wrong_dirs.setZero();
  CHECK_THROWS_AS(
      make_synthetic_dataset(centroids, names, wrong_dirs, {1, 1}, 1, 0, 0),
      ShapeError);
}

TEST_CASE("feature files round trip bitwise") {
  const Dataset d = tiny_feature_dataset();
  std::stringstream buf;
  save_features(buf, d.x, d.labels, d.class_names);

  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "TMFT");

  std::stringstream in(bytes);
  const Dataset back = load_features(in);
  CHECK(bitwise_equal(back.x, d.x));
  CHECK(back.labels == d.labels);
  CHECK(back.class_names == d.class_names);
  CHECK_FALSE(back.is_image());
}

TEST_CASE("feature files validate labels and trailing bytes") {
  const Dataset d = tiny_feature_dataset();
  std::stringstream buf;
  save_features(buf, d.x, d.labels, d.class_names);
  const std::string bytes = buf.str();

  std::stringstream trailing(bytes + "!");
  CHECK_THROWS_AS(load_features(trailing), FormatError);

  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_features(truncated), FormatError);

  std::string wrong_magic = bytes;
  wrong_magic[0] = 'Z';
  std::stringstream bad(wrong_magic);
  CHECK_THROWS_AS(load_features(bad), FormatError);

  std::stringstream oob;
  save_features(oob, d.x, {0, 1, 0, 1, 5}, d.class_names);
  CHECK_THROWS_AS(load_features(oob), FormatError);

  std::stringstream sink;
  CHECK_THROWS_AS(save_features(sink, d.x, {0, 1}, d.class_names), ShapeError);
  CHECK_THROWS_AS(load_features("/nonexistent/file.tmft"), DataError);
}

TEST_CASE("feature files round trip through the filesystem") {
  TempDir dir("features");
  const Dataset d = tiny_feature_dataset();
  save_features(dir.file("f.tmft"), d.x, d.labels, d.class_names);
  const Dataset back = load_features(dir.file("f.tmft"));
  CHECK(bitwise_equal(back.x, d.x));
}

TEST_CASE("manifest hash is order-sensitive and deterministic") {
  const std::vector<std::vector<int>> a = {{1, 2}, {7}};
  const std::vector<std::vector<int>> b = {{2, 1}, {7}};
  const std::vector<std::vector<int>> c = {{1}, {2, 7}};
  CHECK(manifest_indices_hash(a) == manifest_indices_hash(a));
  CHECK(manifest_indices_hash(a) != manifest_indices_hash(b));
  CHECK(manifest_indices_hash(a) != manifest_indices_hash(c));
}

TEST_CASE("manifests round trip and verify their hash") {
  TempDir dir("manifest");
  DatasetManifest m;
  m.base = "cifar100-train";
  m.seed = 42;
  m.class_names = {"ant", "bee"};
  m.counts = {2, 1};
  m.per_class_indices = {{0, 2}, {3}};

  write_dataset_manifest(dir.file("m.json"), m);
  const DatasetManifest back = read_dataset_manifest(dir.file("m.json"));
  CHECK(back.base == m.base);
  CHECK(back.seed == 42);
  CHECK(back.class_names == m.class_names);
  CHECK(back.counts == m.counts);
  CHECK(back.per_class_indices == m.per_class_indices);
  CHECK(back.indices_hash.substr(0, 2) == "0x");

  // Editing an index without refreshing the hash must be caught.
  std::ifstream is(dir.file("m.json"));
  nlohmann::json j;
  is >> j;
  is.close();
  j["indices"][1][0] = 4;
  write_file(dir.file("tampered.json"), j.dump());
  CHECK_THROWS_AS(read_dataset_manifest(dir.file("tampered.json")),
                  FormatError);

  write_file(dir.file("not_json.json"), "{nope");
  CHECK_THROWS_AS(read_dataset_manifest(dir.file("not_json.json")),
                  FormatError);
  CHECK_THROWS_AS(read_dataset_manifest(dir.file("absent.json")), DataError);
}

TEST_CASE("apply_manifest selects rows class by class") {
  Dataset base = tiny_feature_dataset();  // labels {0,1,0,1,1}
  DatasetManifest m;
  m.base = "x";
  m.class_names = base.class_names;
  m.counts = {1, 2};
  m.per_class_indices = {{2}, {4, 1}};

  const Dataset view = apply_manifest(base, m);
  REQUIRE(view.size() == 3);
  CHECK(view.labels == std::vector<int>{0, 1, 1});
  CHECK((view.x.row(0) == base.x.row(2)));
  CHECK((view.x.row(1) == base.x.row(4)));
  CHECK((view.x.row(2) == base.x.row(1)));

  DatasetManifest wrong_names = m;
  wrong_names.class_names = {"ant", "wasp"};
  CHECK_THROWS_AS(apply_manifest(base, wrong_names), ConfigError);

  DatasetManifest oob = m;
  oob.per_class_indices = {{9}, {4, 1}};
  CHECK_THROWS_AS(apply_manifest(base, oob), DataError);

  DatasetManifest mislabeled = m;
  mislabeled.per_class_indices = {{1}, {4, 3}};  // index 1 has class 1
  CHECK_THROWS_AS(apply_manifest(base, mislabeled), DataError);
}

TEST_CASE("manifest count mismatches are rejected on read") {
  TempDir dir("manifest_counts");
  DatasetManifest m;
  m.base = "x";
  m.seed = 0;
  m.class_names = {"a"};
  m.counts = {1};
  m.per_class_indices = {{0, 1}};
  write_dataset_manifest(dir.file("m.json"), m);
  CHECK_THROWS_AS(read_dataset_manifest(dir.file("m.json")), FormatError);
}
