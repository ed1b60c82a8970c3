#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "textmania/encoder.hpp"
#include "textmania/prompt.hpp"

namespace textmania {

// Precomputed lookup table of difference vectors, one row per
// (class, combo) pair in class-major order. Immutable once built, so it can
// be shared across training workers without locks.
struct DeltaTableHeader {
  std::string backend_id;
  int dim = 0;
  std::string template_id;
  std::vector<std::string> class_names;
  std::vector<AttrCombo> combos;
  uint64_t build_seed = 0;
  bool has_bases = false;     // base-prompt embeddings, one row per class
  bool has_variants = false;  // variant-prompt embeddings, one row per pair

  int num_classes() const { return static_cast<int>(class_names.size()); }
  int num_combos() const { return static_cast<int>(combos.size()); }
  int rows() const { return num_classes() * num_combos(); }
};

struct DeltaTable {
  DeltaTableHeader header;
  Eigen::MatrixXf deltas;    // rows() x dim
  Eigen::MatrixXf bases;     // num_classes() x dim, empty unless has_bases
  Eigen::MatrixXf variants;  // rows() x dim, empty unless has_variants

  int row_index(int class_id, int combo_id) const;
};

// Embed every pair and store variant minus base. The subtraction is
// accumulated at double precision before the float32 store, so backends with
// additive pooling cancel shared tokens exactly. store_bases additionally
// keeps the raw base and variant embeddings, which the direct/concat
// augmentation variants need.
DeltaTable build_table(const EncoderBackend& backend,
                       const std::vector<TextVariantPair>& variants,
                       bool store_bases = false, uint64_t build_seed = 0);

// Binary container: magic "TMDT", u16 version, length-prefixed UTF-8 JSON
// header, then the raw float32 row-major matrices. Little-endian by
// definition; save/load round-trips bitwise.
void save_table(const DeltaTable& table, const std::string& path);
void save_table(const DeltaTable& table, std::ostream& os);
DeltaTable load_table(const std::string& path);
DeltaTable load_table(std::istream& is);

// The stored difference row for (class_id, combo_id).
Eigen::VectorXf lookup(const DeltaTable& table, int class_id, int combo_id);

// Content hash of the serialized table, used to bind analysis outputs to
// their data provenance.
uint64_t table_hash(const DeltaTable& table);

}  // namespace textmania
