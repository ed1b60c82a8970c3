#include "textmania/delta_table.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "textmania/binio.hpp"
#include "textmania/errors.hpp"
#include "textmania/rng.hpp"

namespace textmania {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'M', 'D', 'T'};
constexpr uint16_t kVersion = 1;

}  // namespace

int DeltaTable::row_index(int class_id, int combo_id) const {
  if (class_id < 0 || class_id >= header.num_classes()) {
    throw KeyError("class id " + std::to_string(class_id) +
                   " outside table range [0, " +
                   std::to_string(header.num_classes()) + ")");
  }
  if (combo_id < 0 || combo_id >= header.num_combos()) {
    throw KeyError("combo id " + std::to_string(combo_id) +
                   " outside table range [0, " +
                   std::to_string(header.num_combos()) + ")");
  }
  return class_id * header.num_combos() + combo_id;
}

DeltaTable build_table(const EncoderBackend& backend,
                       const std::vector<TextVariantPair>& variants,
                       bool store_bases, uint64_t build_seed) {
  if (variants.empty()) {
    throw ConfigError("cannot build a table from an empty variant list");
  }

  DeltaTable table;
  auto& header = table.header;
  header.backend_id = backend.id();
  header.dim = backend.dim();
  header.template_id = variants.front().template_id;
  header.build_seed = build_seed;
  header.has_bases = store_bases;
  header.has_variants = store_bases;

  // Derive the class and combo orderings from the variant list and check
  // that it is a full class-major grid over one template.
  for (const auto& v : variants) {
    if (v.template_id != header.template_id) {
      throw ConfigError("variants mix templates '" + header.template_id +
                        "' and '" + v.template_id + "'");
    }
    if (header.class_names.empty() ||
        header.class_names.back() != v.class_name) {
      header.class_names.push_back(v.class_name);
    }
  }
  const int num_classes = header.num_classes();
  if (static_cast<int>(variants.size()) % num_classes != 0) {
    throw ConfigError("variant list is not a full class x combo grid");
  }
  const int num_combos = static_cast<int>(variants.size()) / num_classes;
  for (int j = 0; j < num_combos; ++j) {
    header.combos.push_back(variants[j].attr_combo);
  }
  for (int c = 0; c < num_classes; ++c) {
    for (int j = 0; j < num_combos; ++j) {
      const auto& v = variants[c * num_combos + j];
      if (v.class_name != header.class_names[c] ||
          v.attr_combo != header.combos[j]) {
        throw ConfigError(
            "variant list is not class-major with a consistent combo order");
      }
    }
  }

  table.deltas.resize(header.rows(), header.dim);
  if (store_bases) {
    table.bases.resize(num_classes, header.dim);
    table.variants.resize(header.rows(), header.dim);
  }

  for (int c = 0; c < num_classes; ++c) {
    const auto& first = variants[c * num_combos];
    Eigen::VectorXd base = backend.embed_precise(first.t0);
    if (base.size() != header.dim) {
      throw ShapeError("backend emitted dim " + std::to_string(base.size()) +
                       " for base text, table dim is " +
                       std::to_string(header.dim));
    }
    if (store_bases) {
      table.bases.row(c) = embed_text(backend, first.t0).vector.transpose();
    }
    for (int j = 0; j < num_combos; ++j) {
      const auto& v = variants[c * num_combos + j];
      if (v.t0 != first.t0) {
        throw ConfigError("class '" + v.class_name +
                          "' has inconsistent base texts");
      }
      Eigen::VectorXd variant = backend.embed_precise(v.t1);
      if (variant.size() != base.size()) {
        throw ShapeError("embedding dim mismatch inside one table build");
      }
      int row = c * num_combos + j;
      table.deltas.row(row) = (variant - base).cast<float>().transpose();
      if (store_bases) {
        table.variants.row(row) =
            embed_text(backend, v.t1).vector.transpose();
      }
    }
  }
  if (!table.deltas.allFinite()) {
    throw BackendError("backend produced non-finite difference rows");
  }
  return table;
}

void save_table(const DeltaTable& table, std::ostream& os) {
  json h;
  h["backend_id"] = table.header.backend_id;
  h["dim"] = table.header.dim;
  h["template_id"] = table.header.template_id;
  h["class_names"] = table.header.class_names;
  h["combos"] = table.header.combos;
  h["build_seed"] = table.header.build_seed;
  h["rows"] = table.header.rows();
  h["has_bases"] = table.header.has_bases;
  h["has_variants"] = table.header.has_variants;

  os.write(kMagic, 4);
  binio::write_le<uint16_t>(os, kVersion);
  binio::write_string(os, h.dump());
  binio::write_matrix_payload(os, table.deltas);
  if (table.header.has_bases) binio::write_matrix_payload(os, table.bases);
  if (table.header.has_variants)
    binio::write_matrix_payload(os, table.variants);
}

void save_table(const DeltaTable& table, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  save_table(table, os);
  if (!os) {
    throw DataError("write failed for '" + path + "'");
  }
}

DeltaTable load_table(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic number, not a delta table file");
  }
  auto version = binio::read_le<uint16_t>(is, "version");
  if (version != kVersion) {
    throw FormatError("unsupported table version " + std::to_string(version));
  }
  std::string header_json = binio::read_string(is, "header");
  json h = json::parse(header_json, nullptr, false);
  if (h.is_discarded()) {
    throw FormatError("header block is not valid JSON");
  }

  DeltaTable table;
  auto& header = table.header;
  try {
    header.backend_id = h.at("backend_id").get<std::string>();
    header.dim = h.at("dim").get<int>();
    header.template_id = h.at("template_id").get<std::string>();
    header.class_names = h.at("class_names").get<std::vector<std::string>>();
    header.combos = h.at("combos").get<std::vector<AttrCombo>>();
    header.build_seed = h.at("build_seed").get<uint64_t>();
    header.has_bases = h.at("has_bases").get<bool>();
    header.has_variants = h.at("has_variants").get<bool>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("header field missing or mistyped: ") +
                      e.what());
  }
  if (header.dim <= 0) {
    throw FormatError("header declares non-positive dim " +
                      std::to_string(header.dim));
  }
  const auto declared_rows = h.at("rows").get<int64_t>();
  if (declared_rows != header.rows()) {
    throw FormatError("header row count " + std::to_string(declared_rows) +
                      " differs from classes x combos = " +
                      std::to_string(header.rows()));
  }

  table.deltas =
      binio::read_matrix_payload(is, header.rows(), header.dim, "deltas");
  if (header.has_bases) {
    table.bases = binio::read_matrix_payload(is, header.num_classes(),
                                             header.dim, "bases");
  }
  if (header.has_variants) {
    table.variants =
        binio::read_matrix_payload(is, header.rows(), header.dim, "variants");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after matrix payload at offset " +
                      std::to_string(is.tellg()));
  }
  if (!table.deltas.allFinite()) {
    throw FormatError("table contains non-finite difference rows");
  }
  return table;
}

DeltaTable load_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw DataError("cannot open '" + path + "' for reading");
  }
  return load_table(is);
}

Eigen::VectorXf lookup(const DeltaTable& table, int class_id, int combo_id) {
  return table.deltas.row(table.row_index(class_id, combo_id)).transpose();
}

uint64_t table_hash(const DeltaTable& table) {
  std::ostringstream os(std::ios::binary);
  save_table(table, os);
  std::string bytes = os.str();
  return fnv1a64_bytes(bytes.data(), bytes.size());
}

}  // namespace textmania
