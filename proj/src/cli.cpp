#include "textmania/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "textmania/analysis.hpp"
#include "textmania/dataset.hpp"
#include "textmania/delta_table.hpp"
#include "textmania/encoder.hpp"
#include "textmania/errors.hpp"
#include "textmania/imbalance.hpp"
#include "textmania/nets.hpp"
#include "textmania/prompt.hpp"
#include "textmania/train_eval.hpp"

namespace textmania {
namespace {

using nlohmann::json;

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw DataError("cannot open '" + path + "'");
  }
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  os << text;
  if (!os) {
    throw DataError("write to '" + path + "' failed");
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw DataError("cannot create directory '" + dir + "': " + ec.message());
  }
}

std::string hex_hash(std::uint64_t h) {
  std::ostringstream os;
  os << "0x" << std::hex << h;
  return os.str();
}

std::shared_ptr<EncoderBackend> resolve_backend(const std::string& id) {
  auto& reg = EncoderRegistry::global();
  reg.load_adapters_from_env();
  return reg.get(id);
}

json cluster_report_to_json(const ClusterReport& r) {
  json per = json::array();
  for (const auto& g : r.per_attr) {
    per.push_back({{"attr", g.attr},
                   {"mean", g.mean},
                   {"stddev", g.stddev},
                   {"pairs", g.pairs}});
  }
  json across = nullptr;
  if (r.across_mean.has_value()) {
    across = {{"mean", *r.across_mean}, {"std", *r.across_std}};
  }
  return {{"within_attr_cosine", {{"mean", r.within_mean}, {"std", r.within_std}}},
          {"across_attr_cosine", across},
          {"per_attr", per},
          {"skipped_zero_rows", r.skipped_zero_rows},
          {"backend_id", r.backend_id},
          {"table_hash", r.table_hash}};
}

// ---------------------------------------------------------------- build-table

struct BuildTableOpts {
  std::string backend = "toy-hash:64";
  std::string classes_file;
  std::vector<std::string> class_list;
  std::string template_id = "photo";
  std::string colors_csv;
  std::string sizes_csv;
  bool colors_given = false;
  bool sizes_given = false;
  std::string combo_policy = "pairs";
  bool store_bases = false;
  std::uint64_t seed = 0;
  std::string out;
  std::string tsv;
};

int run_build_table(const BuildTableOpts& o) {
  auto backend = resolve_backend(o.backend);
  std::vector<std::string> classes;
  if (!o.classes_file.empty()) {
    classes = load_class_names(o.classes_file);
  }
  classes.insert(classes.end(), o.class_list.begin(), o.class_list.end());
  if (classes.empty()) {
    throw ConfigError("no classes given; pass --classes FILE or --class NAME");
  }

  AttributeVocabulary vocab = default_vocabulary();
  if (o.colors_given) vocab.colors = split_csv(o.colors_csv);
  if (o.sizes_given) vocab.sizes = split_csv(o.sizes_csv);
  if (o.combo_policy == "single") {
    vocab.combo_policy = ComboPolicy::kSingleOnly;
  } else if (o.combo_policy != "pairs") {
    throw ConfigError("combo policy must be 'single' or 'pairs', got '" +
                      o.combo_policy + "'");
  }

  const PromptTemplate& tmpl = find_template(o.template_id);
  auto variants = enumerate_variants(classes, vocab, tmpl);
  DeltaTable table = build_table(*backend, variants, o.store_bases, o.seed);
  save_table(table, o.out);
  if (!o.tsv.empty()) {
    std::ofstream os(o.tsv);
    if (!os) {
      throw DataError("cannot open '" + o.tsv + "' for writing");
    }
    write_variants_tsv(os, variants);
  }

  json summary = {{"out", o.out},
                  {"backend_id", table.header.backend_id},
                  {"dim", table.header.dim},
                  {"classes", table.header.num_classes()},
                  {"combos", table.header.num_combos()},
                  {"rows", table.header.rows()},
                  {"stored_bases", table.header.has_bases},
                  {"table_hash", hex_hash(table_hash(table))}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// --------------------------------------------------------------- make-dataset

struct MakeDatasetOpts {
  std::string base = "cifar100";
  std::string data_dir;
  std::string classes_file;
  double longtail_if = 0.0;
  int n_max = 500;
  double scarce_per_class = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int run_make_dataset(const MakeDatasetOpts& o) {
  if (o.base != "cifar100") {
    throw ConfigError("unknown base '" + o.base + "' (expected cifar100)");
  }
  if (o.data_dir.empty()) {
    throw ConfigError("--data-dir is required for base cifar100");
  }
  if ((o.longtail_if > 0.0) == (o.scarce_per_class > 0.0)) {
    throw ConfigError(
        "pass exactly one of --longtail-if and --scarce-per-class");
  }

  Dataset train = load_cifar100(o.data_dir, true, o.classes_file);
  std::vector<int> counts;
  std::string profile;
  if (o.longtail_if > 0.0) {
    LongTailSpec spec;
    spec.n_max = o.n_max;
    spec.num_classes = train.num_classes();
    spec.imbalance_factor = o.longtail_if;
    spec.seed = o.seed;
    counts = longtail_counts(spec);
    profile = "longtail";
  } else {
    ScarceSpec spec;
    spec.per_class = o.scarce_per_class;
    spec.seed = o.seed;
    const auto available = train.class_counts();
    counts.reserve(available.size());
    for (int a : available) {
      counts.push_back(scarce_counts(spec, a, 1)[0]);
    }
    profile = "scarce";
  }

  DatasetManifest manifest;
  manifest.base = o.base;
  manifest.seed = o.seed;
  manifest.class_names = train.class_names;
  manifest.counts = counts;
  manifest.per_class_indices = subsample_per_class(train.labels, counts, o.seed);

  ensure_dir(o.out);
  const std::string path = o.out + "/manifest.json";
  write_dataset_manifest(path, manifest);

  int total = 0;
  for (int c : counts) total += c;
  json summary = {{"manifest", path},
                  {"profile", profile},
                  {"classes", train.num_classes()},
                  {"total", total},
                  {"max_count", counts.front()},
                  {"min_count", counts.back()},
                  {"indices_hash",
                   hex_hash(manifest_indices_hash(manifest.per_class_indices))}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------- train

struct TrainOpts {
  std::string config_file;
  std::string out_dir = ".";
};

struct LoadedData {
  Dataset train;
  Dataset eval;
  std::optional<DeltaTable> table;
  std::optional<ClassSetPartition> partition;
};

// The "data" section of a training config names the inputs the config runs
// on: base (cifar100 | features | synthetic), dir, optional manifest and
// classes_file for cifar100, train_features/eval_features for frozen
// features, a synthetic block for table-derived toy data, and table for the
// difference-vector file.
LoadedData load_data_section(const json& cfg, const TrainConfig& tc) {
  if (!cfg.contains("data")) {
    throw ConfigError("training config needs a data section");
  }
  const json& d = cfg.at("data");
  LoadedData out;

  std::string table_path = d.value("table", tc.delta_table_path);
  if (!table_path.empty()) {
    out.table = load_table(table_path);
  }

  const std::string base = d.value("base", std::string("cifar100"));
  if (base == "cifar100") {
    const std::string dir = d.value("dir", std::string());
    if (dir.empty()) {
      throw ConfigError("data.dir is required for base cifar100");
    }
    const std::string classes = d.value("classes_file", std::string());
    Dataset full = load_cifar100(dir, true, classes);
    out.eval = load_cifar100(dir, false, classes);
    if (d.contains("manifest")) {
      auto manifest = read_dataset_manifest(d.at("manifest").get<std::string>());
      out.train = apply_manifest(full, manifest);
      out.partition = partition_class_sets(manifest.counts);
    } else {
      out.partition = partition_class_sets(full.class_counts());
      out.train = std::move(full);
    }
  } else if (base == "features") {
    out.train = load_features(d.at("train_features").get<std::string>());
    out.eval = load_features(d.at("eval_features").get<std::string>());
    out.partition = partition_class_sets(out.train.class_counts());
  } else if (base == "synthetic") {
    if (!out.table.has_value() || !out.table->header.has_bases) {
      throw ConfigError(
          "synthetic data needs data.table built with --store-bases");
    }
    const DeltaTable& t = *out.table;
    json s = d.value("synthetic", json::object());
    std::vector<int> counts;
    if (s.contains("counts")) {
      counts = s.at("counts").get<std::vector<int>>();
    } else {
      counts.assign(t.header.class_names.size(), 50);
    }
    const int eval_per_class = s.value("eval_per_class", 100);
    const float attr_scale = s.value("attr_scale", 1.0f);
    const float noise_std = s.value("noise_std", 0.25f);
    const std::uint64_t data_seed = s.value("seed", tc.seed);
    const std::uint64_t eval_seed = s.value("eval_seed", data_seed + 1);
    const Eigen::MatrixXf attr_dirs =
        t.deltas.topRows(t.header.num_combos());
    out.train = make_synthetic_dataset(t.bases, t.header.class_names,
                                       attr_dirs, counts, attr_scale,
                                       noise_std, data_seed);
    const std::vector<int> eval_counts(t.header.class_names.size(),
                                       eval_per_class);
    out.eval = make_synthetic_dataset(t.bases, t.header.class_names, attr_dirs,
                                      eval_counts, attr_scale, noise_std,
                                      eval_seed);
    out.partition = partition_class_sets(counts);
  } else {
    throw ConfigError("unknown data.base '" + base +
                      "' (expected cifar100, features or synthetic)");
  }
  return out;
}

void write_run_outputs(const std::string& out_dir, const TrainResult& res,
                       const std::string& model_id, const Dataset& train) {
  ensure_dir(out_dir);
  const json rep = report_to_json(res.report);
  write_text_file(out_dir + "/report.json", rep.dump(2) + "\n");
  write_curve_csv(out_dir + "/curve.csv", res.report.curve);
  save_checkpoint(out_dir + "/model.tmck", *res.model, model_id,
                  static_cast<int>(train.x.cols()), train.channels,
                  train.height, train.width,
                  static_cast<int>(train.class_names.size()));
  std::cout << rep.dump(2) << "\n";
}

int run_train(const TrainOpts& o) {
  const json cfg = load_json_file(o.config_file);
  const TrainConfig tc = train_config_from_json(cfg);
  LoadedData data = load_data_section(cfg, tc);
  TrainResult res =
      train(tc, data.train, data.eval,
            data.table.has_value() ? &*data.table : nullptr,
            data.partition.has_value() ? &*data.partition : nullptr);
  write_run_outputs(o.out_dir, res, tc.model_id, data.train);
  return 0;
}

// ----------------------------------------------------------------------- eval

struct EvalOpts {
  std::string checkpoint;
  std::string base = "cifar100";
  std::string data_dir;
  std::string classes_file;
  std::string features;
  std::string manifest;
  std::string out;
};

int run_eval(const EvalOpts& o) {
  auto model = load_checkpoint(o.checkpoint);
  Dataset eval;
  if (o.base == "cifar100") {
    if (o.data_dir.empty()) {
      throw ConfigError("--data-dir is required for base cifar100");
    }
    eval = load_cifar100(o.data_dir, false, o.classes_file);
  } else if (o.base == "features") {
    if (o.features.empty()) {
      throw ConfigError("--features is required for base features");
    }
    eval = load_features(o.features);
  } else {
    throw ConfigError("unknown base '" + o.base +
                      "' (expected cifar100 or features)");
  }

  std::optional<ClassSetPartition> partition;
  if (!o.manifest.empty()) {
    auto manifest = read_dataset_manifest(o.manifest);
    partition = partition_class_sets(manifest.counts);
  }

  RunReport report;
  report.model_id = model->id();
  report.variant = "none";
  evaluate(*model, eval, partition.has_value() ? &*partition : nullptr,
           &report);
  const json j = report_to_json(report);
  if (!o.out.empty()) {
    write_text_file(o.out, j.dump(2) + "\n");
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------- probe

struct ProbeOpts {
  std::string features;
  std::string eval_features;
  std::string table;
  std::string config_file;
  std::string out_dir = ".";
};

int run_probe(const ProbeOpts& o) {
  Dataset train_feats = load_features(o.features);
  Dataset eval_feats = load_features(o.eval_features);

  TrainConfig tc;
  if (!o.config_file.empty()) {
    tc = train_config_from_json(load_json_file(o.config_file));
  }
  std::optional<DeltaTable> table;
  const std::string table_path =
      !o.table.empty() ? o.table : tc.delta_table_path;
  if (!table_path.empty()) {
    table = load_table(table_path);
  }

  const ClassSetPartition partition =
      partition_class_sets(train_feats.class_counts());
  TrainResult res =
      linear_probe(tc, train_feats, eval_feats,
                   table.has_value() ? &*table : nullptr, &partition);
  write_run_outputs(o.out_dir, res, "linear", train_feats);
  return 0;
}

// -------------------------------------------------------------------- analyze

struct AnalyzeOpts {
  std::string table;
  std::string cluster_json;
  std::string dvd_csv;
  std::string tsne_csv;
  std::string png;
  double perplexity = 5.0;
  std::uint64_t seed = 0;
  int iters = 500;
};

int run_analyze(const AnalyzeOpts& o) {
  DeltaTable table = load_table(o.table);
  json summary;

  if (!o.cluster_json.empty()) {
    const ClusterReport report = cluster_score(table);
    const json j = cluster_report_to_json(report);
    write_text_file(o.cluster_json, j.dump(2) + "\n");
    summary["cluster"] = j;
  }

  if (!o.dvd_csv.empty()) {
    auto backend = resolve_backend(table.header.backend_id);
    const DirectVsDeltaReport report = direct_vs_delta_cosine(table, *backend);
    write_direct_vs_delta_csv(o.dvd_csv, report);
    summary["direct_vs_delta"] = {{"csv", o.dvd_csv},
                                  {"mean", report.mean},
                                  {"min", report.min},
                                  {"max", report.max},
                                  {"defined", report.defined},
                                  {"undefined", report.undefined}};
  }

  if (!o.tsne_csv.empty()) {
    std::vector<std::string> groups;
    groups.reserve(static_cast<std::size_t>(table.header.rows()));
    for (int c = 0; c < table.header.num_classes(); ++c) {
      for (const auto& combo : table.header.combos) {
        groups.push_back(join_combo(combo));
      }
    }
    tsne_emit(table.deltas, groups, o.perplexity, o.seed, o.tsne_csv, o.png,
              o.iters);
    summary["tsne"] = {{"csv", o.tsne_csv},
                       {"png", o.png.empty() ? json(nullptr) : json(o.png)},
                       {"points", table.header.rows()}};
  }

  summary["backend_id"] = table.header.backend_id;
  summary["table_hash"] = hex_hash(table_hash(table));
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// --------------------------------------------------------------- ablate-attrs

struct AblateOpts {
  std::string preset = "toy";
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int epochs = -1;
  int seeds = 1;
  // cifar preset only
  std::string data_dir;
  std::string backend = "toy-hash:64";
  std::string model = "resnet-small";
  double longtail_if = 100.0;
};

struct AblationRow {
  std::string name;
  const DeltaTable* table;  // null disables augmentation
};

json run_ablation_grid(const std::vector<AblationRow>& rows,
                       const TrainConfig& base_config,
                       const Dataset& train_set, const Dataset& eval_set,
                       const ClassSetPartition& partition,
                       const std::vector<std::uint64_t>& seeds,
                       const std::string& out_dir) {
  ensure_dir(out_dir);
  json grid = json::array();
  for (const auto& row : rows) {
    double sum_top1 = 0.0;
    json runs = json::array();
    for (std::uint64_t seed : seeds) {
      TrainConfig tc = base_config;
      tc.seed = seed;
      tc.augment_enabled = row.table != nullptr;
      TrainResult res = train(tc, train_set, eval_set, row.table, &partition);
      json rep = report_to_json(res.report);
      rep["config"] = row.name;
      const std::string suffix =
          seeds.size() > 1 ? "_seed" + std::to_string(seed) : "";
      write_text_file(out_dir + "/report_" + row.name + suffix + ".json",
                      rep.dump(2) + "\n");
      runs.push_back(std::move(rep));
      sum_top1 += res.report.top1;
    }
    grid.push_back({{"config", row.name},
                    {"mean_top1", sum_top1 / static_cast<double>(seeds.size())},
                    {"runs", runs}});
  }
  write_text_file(out_dir + "/grid.json", grid.dump(2) + "\n");
  return grid;
}

// Small linear-classifier study on synthetic features derived from the toy
// encoder's own table: the four rows differ only in which attribute
// categories the training-time table offers.
int run_ablate_toy(const AblateOpts& o) {
  const int dim = 16;
  const std::vector<std::string> classes = {"sparrow", "terrier", "tabby"};
  ToyHashEncoder backend(dim);
  const PromptTemplate& tmpl = find_template("photo");

  AttributeVocabulary both = default_vocabulary();
  AttributeVocabulary color_only = both;
  color_only.sizes.clear();
  AttributeVocabulary size_only = both;
  size_only.colors.clear();

  const DeltaTable table_both = build_table(
      backend, enumerate_variants(classes, both, tmpl), true, o.seed);
  const DeltaTable table_color = build_table(
      backend, enumerate_variants(classes, color_only, tmpl), true, o.seed);
  const DeltaTable table_size = build_table(
      backend, enumerate_variants(classes, size_only, tmpl), true, o.seed);

  // Data carries offsets along every attribute direction; the per-row tables
  // then only partially explain the variation they model.
  const Eigen::MatrixXf attr_dirs =
      table_both.deltas.topRows(table_both.header.num_combos());
  const std::vector<int> counts = {60, 24, 6};
  const std::vector<int> eval_counts(classes.size(), 100);
  const Dataset train_set = make_synthetic_dataset(
      table_both.bases, classes, attr_dirs, counts, 1.0f, 0.25f, o.seed);
  const Dataset eval_set =
      make_synthetic_dataset(table_both.bases, classes, attr_dirs, eval_counts,
                             1.0f, 0.25f, o.seed + 1);
  const ClassSetPartition partition = partition_class_sets(counts);

  TrainConfig tc;
  tc.model_id = "linear";
  tc.epochs = o.epochs > 0 ? o.epochs : 12;
  tc.batch_size = 16;
  tc.optim.lr = 0.05f;
  tc.optim.weight_decay = 1e-4f;

  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < std::max(1, o.seeds); ++i) {
    seeds.push_back(o.seed + static_cast<std::uint64_t>(i));
  }
  const std::vector<AblationRow> rows = {{"none", nullptr},
                                         {"color", &table_color},
                                         {"size", &table_size},
                                         {"both", &table_both}};
  const json grid = run_ablation_grid(rows, tc, train_set, eval_set, partition,
                                      seeds, o.out_dir);
  std::cout << grid.dump(2) << "\n";
  return 0;
}

int run_ablate_cifar(const AblateOpts& o) {
  if (o.data_dir.empty()) {
    throw ConfigError("--data-dir is required for the cifar preset");
  }
  auto backend = resolve_backend(o.backend);

  Dataset full = load_cifar100(o.data_dir, true);
  const Dataset eval_set = load_cifar100(o.data_dir, false);

  LongTailSpec spec;
  spec.n_max = 500;
  spec.num_classes = full.num_classes();
  spec.imbalance_factor = o.longtail_if;
  spec.seed = o.seed;
  const std::vector<int> counts = longtail_counts(spec);

  DatasetManifest manifest;
  manifest.base = "cifar100";
  manifest.seed = o.seed;
  manifest.class_names = full.class_names;
  manifest.counts = counts;
  manifest.per_class_indices =
      subsample_per_class(full.labels, counts, o.seed);
  const Dataset train_set = apply_manifest(full, manifest);
  const ClassSetPartition partition = partition_class_sets(counts);

  const PromptTemplate& tmpl = find_template("photo");
  AttributeVocabulary both = default_vocabulary();
  AttributeVocabulary color_only = both;
  color_only.sizes.clear();
  AttributeVocabulary size_only = both;
  size_only.colors.clear();
  const auto& classes = full.class_names;
  const DeltaTable table_both = build_table(
      *backend, enumerate_variants(classes, both, tmpl), false, o.seed);
  const DeltaTable table_color = build_table(
      *backend, enumerate_variants(classes, color_only, tmpl), false, o.seed);
  const DeltaTable table_size = build_table(
      *backend, enumerate_variants(classes, size_only, tmpl), false, o.seed);

  TrainConfig tc;
  tc.model_id = o.model;
  tc.epochs = o.epochs > 0 ? o.epochs : 30;
  tc.batch_size = 128;

  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < std::max(1, o.seeds); ++i) {
    seeds.push_back(o.seed + static_cast<std::uint64_t>(i));
  }
  const std::vector<AblationRow> rows = {{"none", nullptr},
                                         {"color", &table_color},
                                         {"size", &table_size},
                                         {"both", &table_both}};
  const json grid = run_ablation_grid(rows, tc, train_set, eval_set, partition,
                                      seeds, o.out_dir);
  std::cout << grid.dump(2) << "\n";
  return 0;
}

int run_ablate(const AblateOpts& o) {
  if (o.preset == "toy") return run_ablate_toy(o);
  if (o.preset == "cifar") return run_ablate_cifar(o);
  throw ConfigError("unknown preset '" + o.preset +
                    "' (expected toy or cifar)");
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{
      "Text-driven visual-feature augmentation: difference-vector tables, "
      "dataset construction, training and analysis"};
  app.require_subcommand(1);

  BuildTableOpts bt;
  auto* build_table_cmd = app.add_subcommand(
      "build-table", "Embed prompt variants and store the difference table");
  build_table_cmd->add_option("--backend", bt.backend, "Text encoder id")
      ->capture_default_str();
  build_table_cmd->add_option("--classes", bt.classes_file,
                              "File with one class name per line");
  build_table_cmd->add_option("--class", bt.class_list,
                              "Class name (repeatable)");
  build_table_cmd->add_option("--template", bt.template_id, "Prompt template id")
      ->capture_default_str();
  build_table_cmd->add_option("--colors", bt.colors_csv,
                              "Comma-separated color override; empty clears");
  build_table_cmd->add_option("--sizes", bt.sizes_csv,
                              "Comma-separated size override; empty clears");
  build_table_cmd
      ->add_option("--combo-policy", bt.combo_policy,
                   "Attribute combos: single or pairs")
      ->capture_default_str();
  build_table_cmd->add_flag("--store-bases", bt.store_bases,
                            "Keep base and variant embeddings in the file");
  build_table_cmd->add_option("--seed", bt.seed, "Build seed (provenance)")
      ->capture_default_str();
  build_table_cmd->add_option("--out", bt.out, "Output table path")->required();
  build_table_cmd->add_option("--tsv", bt.tsv, "Audit TSV of prompt variants");

  MakeDatasetOpts md;
  auto* make_dataset_cmd = app.add_subcommand(
      "make-dataset", "Subsample a training split into a manifest");
  make_dataset_cmd->add_option("--base", md.base, "Base dataset")
      ->capture_default_str();
  make_dataset_cmd->add_option("--data-dir", md.data_dir,
                               "Directory with the base dataset binaries");
  make_dataset_cmd->add_option("--classes", md.classes_file,
                               "Class-name file override");
  make_dataset_cmd->add_option("--longtail-if", md.longtail_if,
                               "Imbalance factor for a long-tail profile");
  make_dataset_cmd->add_option("--n-max", md.n_max,
                               "Head-class count for the long-tail profile")
      ->capture_default_str();
  make_dataset_cmd->add_option(
      "--scarce-per-class", md.scarce_per_class,
      "Per-class count; values below 1 are a fraction of the available");
  make_dataset_cmd->add_option("--seed", md.seed, "Subsampling seed")
      ->capture_default_str();
  make_dataset_cmd->add_option("--out", md.out, "Output directory")->required();

  TrainOpts tr;
  auto* train_cmd =
      app.add_subcommand("train", "Train a classifier from a JSON config");
  train_cmd->add_option("--config", tr.config_file, "Training config JSON")
      ->required();
  train_cmd->add_option("--out-dir", tr.out_dir,
                        "Directory for report.json, curve.csv and model.tmck")
      ->capture_default_str();

  EvalOpts ev;
  auto* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint on a test split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")
      ->required();
  eval_cmd->add_option("--base", ev.base, "Dataset kind")->capture_default_str();
  eval_cmd->add_option("--data-dir", ev.data_dir,
                       "Directory with the base dataset binaries");
  eval_cmd->add_option("--classes", ev.classes_file, "Class-name file override");
  eval_cmd->add_option("--features", ev.features,
                       "Feature file for base features");
  eval_cmd->add_option("--manifest", ev.manifest,
                       "Training manifest for per-set accuracies");
  eval_cmd->add_option("--out", ev.out, "Also write the report JSON here");

  ProbeOpts pr;
  auto* probe_cmd = app.add_subcommand(
      "probe", "Train a linear head on frozen feature files");
  probe_cmd->add_option("--features", pr.features, "Training feature file")
      ->required();
  probe_cmd->add_option("--eval-features", pr.eval_features,
                        "Evaluation feature file")
      ->required();
  probe_cmd->add_option("--table", pr.table, "Difference-vector table");
  probe_cmd->add_option("--config", pr.config_file, "Training config JSON");
  probe_cmd->add_option("--out-dir", pr.out_dir, "Output directory")
      ->capture_default_str();

  AnalyzeOpts an;
  auto* analyze_cmd =
      app.add_subcommand("analyze", "Cluster, cosine and t-SNE table reports");
  analyze_cmd->add_option("--table", an.table, "Difference-vector table")
      ->required();
  auto* analyses = analyze_cmd->add_option_group("analyses");
  analyses->add_option("--cluster", an.cluster_json,
                       "Write the cluster report JSON here");
  analyses->add_option("--direct-vs-delta", an.dvd_csv,
                       "Write the direct-vs-difference cosine CSV here");
  analyses->add_option("--tsne", an.tsne_csv,
                       "Write t-SNE coordinates CSV here");
  analyses->require_option(1, 0);
  analyze_cmd->add_option("--png", an.png, "Scatter image for --tsne");
  analyze_cmd->add_option("--perplexity", an.perplexity, "t-SNE perplexity")
      ->capture_default_str();
  analyze_cmd->add_option("--seed", an.seed, "t-SNE seed")
      ->capture_default_str();
  analyze_cmd->add_option("--iters", an.iters, "t-SNE iterations")
      ->capture_default_str();

  AblateOpts ab;
  auto* ablate_cmd = app.add_subcommand(
      "ablate-attrs",
      "Run the none/color/size/both attribute-category grid");
  ablate_cmd->add_option("--preset", ab.preset, "toy or cifar")
      ->capture_default_str();
  ablate_cmd->add_option("--out-dir", ab.out_dir, "Output directory")
      ->capture_default_str();
  ablate_cmd->add_option("--seed", ab.seed, "Base seed")->capture_default_str();
  ablate_cmd->add_option("--epochs", ab.epochs,
                         "Override the preset epoch count");
  ablate_cmd->add_option("--seeds", ab.seeds, "Number of seeds per config")
      ->capture_default_str();
  ablate_cmd->add_option("--data-dir", ab.data_dir,
                         "CIFAR-100 directory (cifar preset)");
  ablate_cmd->add_option("--backend", ab.backend,
                         "Text encoder id (cifar preset)")
      ->capture_default_str();
  ablate_cmd->add_option("--model", ab.model, "Classifier (cifar preset)")
      ->capture_default_str();
  ablate_cmd->add_option("--longtail-if", ab.longtail_if,
                         "Imbalance factor (cifar preset)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    json err = {{"error", {{"type", "usage"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  }

  bt.colors_given = build_table_cmd->count("--colors") > 0;
  bt.sizes_given = build_table_cmd->count("--sizes") > 0;

  try {
    if (app.got_subcommand(build_table_cmd)) return run_build_table(bt);
    if (app.got_subcommand(make_dataset_cmd)) return run_make_dataset(md);
    if (app.got_subcommand(train_cmd)) return run_train(tr);
    if (app.got_subcommand(eval_cmd)) return run_eval(ev);
    if (app.got_subcommand(probe_cmd)) return run_probe(pr);
    if (app.got_subcommand(analyze_cmd)) return run_analyze(an);
    if (app.got_subcommand(ablate_cmd)) return run_ablate(ab);
  } catch (const Error& e) {
    json err = {{"error", {{"type", e.type()}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err = {{"error", {{"type", "internal"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 2;
}

int cli_dispatch(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.push_back("textmania");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& a : full) argv.push_back(a.c_str());
  return cli_dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace textmania
