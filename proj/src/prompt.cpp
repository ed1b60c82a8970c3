#include "textmania/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_set>

#include "textmania/errors.hpp"

namespace textmania {

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string w;
  while (iss >> w) out.push_back(w);
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

bool starts_with_vowel(const std::string& w) {
  if (w.empty()) return false;
  char c = static_cast<char>(std::tolower(static_cast<unsigned char>(w[0])));
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

// Fixed a/an rule: an article token agrees with the first letter of the
// following word. No other grammar correction is attempted.
void fix_articles(std::vector<std::string>& words) {
  for (size_t i = 0; i + 1 < words.size(); ++i) {
    if (words[i] == "a" || words[i] == "an") {
      words[i] = starts_with_vowel(words[i + 1]) ? "an" : "a";
    }
  }
}

std::string normalize(const std::string& s) {
  auto words = split_words(s);
  fix_articles(words);
  return join_words(words);
}

struct SlotScan {
  int class_slots = 0;
  int attr_slots = 0;
};

SlotScan scan_slots(const std::string& pattern) {
  SlotScan scan;
  size_t pos = 0;
  while ((pos = pattern.find('{', pos)) != std::string::npos) {
    size_t end = pattern.find('}', pos);
    if (end == std::string::npos) {
      throw TemplateError("unterminated slot in pattern: " + pattern);
    }
    std::string name = pattern.substr(pos + 1, end - pos - 1);
    if (name == "class") {
      ++scan.class_slots;
    } else if (name == "attr") {
      ++scan.attr_slots;
    } else {
      throw TemplateError("unknown slot {" + name + "} in pattern: " +
                          pattern);
    }
    pos = end + 1;
  }
  return scan;
}

std::string replace_all(std::string s, const std::string& from,
                        const std::string& to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

void check_category(const std::vector<std::string>& entries,
                    const char* category) {
  std::unordered_set<std::string> seen;
  for (const auto& e : entries) {
    if (e.empty()) {
      throw ConfigError(std::string("empty entry in attribute category ") +
                        category);
    }
    for (char c : e) {
      if (std::isupper(static_cast<unsigned char>(c))) {
        throw ConfigError("attribute '" + e + "' in category " + category +
                          " must be lowercase");
      }
    }
    if (!seen.insert(e).second) {
      throw ConfigError("duplicate attribute '" + e + "' in category " +
                        category);
    }
  }
}

}  // namespace

const std::vector<PromptTemplate>& builtin_templates() {
  static const std::vector<PromptTemplate> templates = {
      {"photo", "a photo of a {attr} {class}"},
      {"picture", "a picture of a {attr} {class}"},
      {"sketch", "a sketch of a {attr} {class}"},
  };
  return templates;
}

const PromptTemplate& find_template(const std::string& id) {
  for (const auto& t : builtin_templates()) {
    if (t.id == id) return t;
  }
  throw KeyError("unknown prompt template id '" + id + "'");
}

void AttributeVocabulary::validate() const {
  check_category(colors, "colors");
  check_category(sizes, "sizes");
}

AttributeVocabulary default_vocabulary() {
  AttributeVocabulary vocab;
  vocab.colors = {"red",  "orange", "yellow", "green", "blue", "purple",
                  "pink", "brown",  "black",  "white", "gray"};
  vocab.sizes = {"tiny", "small", "big", "large", "gigantic"};
  vocab.combo_policy = ComboPolicy::kSingleAndColorSizePairs;
  return vocab;
}

std::string join_combo(const AttrCombo& combo) { return join_words(combo); }

std::string render_prompt(const PromptTemplate& tmpl,
                          const std::string& class_name,
                          const AttrCombo& attrs) {
  if (class_name.empty()) {
    throw InputError("class name must be nonempty");
  }
  SlotScan scan = scan_slots(tmpl.pattern);
  if (scan.class_slots != 1) {
    throw TemplateError("pattern must contain exactly one {class} slot: " +
                        tmpl.pattern);
  }
  if (scan.attr_slots > 1) {
    throw TemplateError("pattern may contain at most one {attr} slot: " +
                        tmpl.pattern);
  }
  if (!attrs.empty() && scan.attr_slots == 0) {
    throw TemplateError("attributes given but pattern has no {attr} slot: " +
                        tmpl.pattern);
  }
  std::string s = replace_all(tmpl.pattern, "{class}", class_name);
  s = replace_all(s, "{attr}", join_words(attrs));
  return normalize(s);
}

std::string strip_attributes(const std::string& text, const AttrCombo& combo) {
  auto words = split_words(text);
  for (const auto& attr : combo) {
    auto it = std::find(words.begin(), words.end(), attr);
    if (it != words.end()) words.erase(it);
  }
  fix_articles(words);
  return join_words(words);
}

std::vector<AttrCombo> enumerate_combos(const AttributeVocabulary& vocab) {
  vocab.validate();
  if (vocab.colors.empty() && vocab.sizes.empty()) {
    throw ConfigError("attribute vocabulary is empty");
  }
  std::vector<AttrCombo> combos;
  for (const auto& c : vocab.colors) combos.push_back({c});
  for (const auto& s : vocab.sizes) combos.push_back({s});
  if (vocab.combo_policy == ComboPolicy::kSingleAndColorSizePairs) {
    // Size precedes color in rendered text ("small brown dog").
    for (const auto& s : vocab.sizes)
      for (const auto& c : vocab.colors) combos.push_back({s, c});
  }
  std::sort(combos.begin(), combos.end());
  return combos;
}

std::vector<TextVariantPair> enumerate_variants(
    const std::vector<std::string>& classes, const AttributeVocabulary& vocab,
    const PromptTemplate& tmpl) {
  if (classes.empty()) {
    throw ConfigError("class list is empty");
  }
  auto combos = enumerate_combos(vocab);
  std::vector<TextVariantPair> pairs;
  pairs.reserve(classes.size() * combos.size());
  for (const auto& cls : classes) {
    std::string t0 = render_prompt(tmpl, cls, {});
    for (const auto& combo : combos) {
      TextVariantPair pair;
      pair.class_name = cls;
      pair.attr_combo = combo;
      pair.t0 = t0;
      pair.t1 = render_prompt(tmpl, cls, combo);
      pair.template_id = tmpl.id;
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

void write_variants_tsv(std::ostream& os,
                        const std::vector<TextVariantPair>& pairs) {
  for (const auto& p : pairs) {
    os << p.class_name << '\t' << join_combo(p.attr_combo) << '\t' << p.t0
       << '\t' << p.t1 << '\n';
  }
}

}  // namespace textmania
