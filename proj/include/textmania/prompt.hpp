#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace textmania {

// A prompt pattern with one required "{class}" slot and one optional
// "{attr}" slot, e.g. "a photo of a {attr} {class}".
struct PromptTemplate {
  std::string id;
  std::string pattern;
};

// The three shipped templates; "photo" is the default.
const std::vector<PromptTemplate>& builtin_templates();
const PromptTemplate& find_template(const std::string& id);

enum class ComboPolicy {
  kSingleOnly,
  kSingleAndColorSizePairs,
};

struct AttributeVocabulary {
  std::vector<std::string> colors;
  std::vector<std::string> sizes;
  ComboPolicy combo_policy = ComboPolicy::kSingleAndColorSizePairs;

  // Entries must be lowercase, nonempty and unique within a category.
  void validate() const;
};

// 11 colors and 5 sizes; see README for the lists.
AttributeVocabulary default_vocabulary();

// An attribute combination in rendered word order (size before color).
using AttrCombo = std::vector<std::string>;

std::string join_combo(const AttrCombo& combo);

// Base text / attribute-variant text pair for one class and one combo.
// t0 is the empty-attribute rendering; t1 adds the combo words.
struct TextVariantPair {
  std::string class_name;
  AttrCombo attr_combo;
  std::string t0;
  std::string t1;
  std::string template_id;
};

// Substitute class and attributes into the template. Whitespace is
// normalized and the article directly before the filled slots is adjusted
// a/an by the fixed initial-vowel rule. Empty attrs produce the base form.
std::string render_prompt(const PromptTemplate& tmpl,
                          const std::string& class_name,
                          const AttrCombo& attrs);

// Remove the combo words from a rendered variant and re-normalize
// (whitespace and articles). strip_attributes(t1, combo) == t0 for every
// pair produced by enumerate_variants.
std::string strip_attributes(const std::string& text, const AttrCombo& combo);

// All combos implied by the vocabulary policy, in lexicographic word-sequence
// order. Pair combos are ordered size-before-color, matching rendered text.
std::vector<AttrCombo> enumerate_combos(const AttributeVocabulary& vocab);

// One pair per (class x combo), class-major, combos lexicographic.
// Deterministic: identical inputs give byte-identical output.
std::vector<TextVariantPair> enumerate_variants(
    const std::vector<std::string>& classes, const AttributeVocabulary& vocab,
    const PromptTemplate& tmpl);

// UTF-8 audit export, one record per line: class \t combo \t t0 \t t1.
void write_variants_tsv(std::ostream& os,
                        const std::vector<TextVariantPair>& pairs);

}  // namespace textmania
