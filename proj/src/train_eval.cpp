#include "textmania/train_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "textmania/errors.hpp"

namespace textmania {

namespace {

constexpr double kPi = 3.14159265358979323846;

const std::vector<std::string> kBaselineKinds = {
    "none", "mixup", "cutmix", "manifold_mixup", "cutout"};

void check_baseline(const BaselineConfig& b) {
  if (std::find(kBaselineKinds.begin(), kBaselineKinds.end(), b.kind) ==
      kBaselineKinds.end()) {
    throw ConfigError("unknown baseline '" + b.kind +
                      "' (expected none, mixup, cutmix, manifold_mixup or "
                      "cutout)");
  }
  if (b.kind == "mixup" || b.kind == "cutmix" || b.kind == "manifold_mixup") {
    if (!(b.beta_a > 0.0f)) {
      throw ConfigError("beta parameter must be > 0, got " +
                        std::to_string(b.beta_a));
    }
  }
  if (b.kind == "cutout" && b.cutout_size < 0) {
    throw ConfigError("cutout size must be >= 0");
  }
}

void sgd_step(Eigen::MatrixXf& value, Eigen::MatrixXf& grad,
              Eigen::MatrixXf& momentum, float lr, float mom, float wd) {
  if (wd > 0.0f) {
    grad += wd * value;
  }
  momentum = mom * momentum + grad;
  value -= lr * momentum;
}

nlohmann::json transforms_to_json(const std::vector<TransformConfig>& steps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : steps) {
    nlohmann::json j = {{"name", s.name}};
    if (s.name == "flip") j["prob"] = s.prob;
    if (s.name == "pad_crop") j["pad"] = s.pad;
    if (s.name == "rotation") j["degrees"] = s.degrees;
    if (s.name == "normalize") {
      j["mean"] = s.mean;
      j["std"] = s.std;
    }
    arr.push_back(j);
  }
  return arr;
}

std::vector<TransformConfig> transforms_from_json(const nlohmann::json& arr) {
  std::vector<TransformConfig> steps;
  for (const auto& j : arr) {
    TransformConfig s;
    s.name = j.at("name").get<std::string>();
    s.prob = j.value("prob", s.prob);
    s.pad = j.value("pad", s.pad);
    s.degrees = j.value("degrees", s.degrees);
    s.mean = j.value("mean", s.mean);
    s.std = j.value("std", s.std);
    steps.push_back(std::move(s));
  }
  return steps;
}

}  // namespace

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {
      {"model", c.model_id},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"eval_each_epoch", c.eval_each_epoch},
      {"delta_table", c.delta_table_path},
      {"optim",
       {{"lr", c.optim.lr},
        {"momentum", c.optim.momentum},
        {"weight_decay", c.optim.weight_decay},
        {"lr_min", c.optim.lr_min},
        {"schedule", c.optim.schedule}}},
      {"augment",
       {{"enabled", c.augment_enabled},
        {"variant", variant_name(c.augment.variant)},
        {"apply_prob", c.augment.apply_prob},
        {"alpha",
         {{"mean", c.augment.alpha.mean},
          {"std", c.augment.alpha.std},
          {"min", c.augment.alpha.min_clamp},
          {"max", c.augment.alpha.max_clamp}}},
        {"proj", {{"mode", c.proj_mode}}},
        {"combine_with", c.baseline.kind}}},
      {"baseline",
       {{"mixup",
         {{"enabled", c.baseline.kind == "mixup"},
          {"beta_a", c.baseline.beta_a}}},
        {"cutmix",
         {{"enabled", c.baseline.kind == "cutmix"},
          {"beta_a", c.baseline.beta_a}}},
        {"manimixup",
         {{"enabled", c.baseline.kind == "manifold_mixup"},
          {"beta_a", c.baseline.beta_a}}},
        {"cutout",
         {{"enabled", c.baseline.kind == "cutout"},
          {"size", c.baseline.cutout_size}}},
        {"transforms", transforms_to_json(c.baseline.transforms)}}},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.model_id = j.value("model", c.model_id);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.eval_each_epoch = j.value("eval_each_epoch", c.eval_each_epoch);
    c.delta_table_path = j.value("delta_table", c.delta_table_path);
    if (j.contains("optim")) {
      const auto& o = j.at("optim");
      c.optim.lr = o.value("lr", c.optim.lr);
      c.optim.momentum = o.value("momentum", c.optim.momentum);
      c.optim.weight_decay = o.value("weight_decay", c.optim.weight_decay);
      c.optim.lr_min = o.value("lr_min", c.optim.lr_min);
      c.optim.schedule = o.value("schedule", c.optim.schedule);
    }
    if (j.contains("baseline")) {
      const auto& b = j.at("baseline");
      c.baseline.kind = b.value("kind", c.baseline.kind);
      int enabled = 0;
      const auto take = [&](const char* key, const char* kind) {
        if (!b.contains(key)) return;
        const auto& op = b.at(key);
        if (op.value("enabled", false)) {
          c.baseline.kind = kind;
          ++enabled;
        }
        if (std::string(key) == "cutout") {
          c.baseline.cutout_size = op.value("size", c.baseline.cutout_size);
        } else if (op.contains("beta_a") &&
                   (op.value("enabled", false) || enabled == 0)) {
          c.baseline.beta_a = op.at("beta_a").get<float>();
        }
      };
      take("mixup", "mixup");
      take("cutmix", "cutmix");
      take("manimixup", "manifold_mixup");
      take("cutout", "cutout");
      if (enabled > 1) {
        throw ConfigError("enable at most one baseline augmentation");
      }
      if (b.contains("transforms")) {
        c.baseline.transforms = transforms_from_json(b.at("transforms"));
      }
    }
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      c.augment_enabled = a.value("enabled", c.augment_enabled);
      if (a.contains("variant")) {
        c.augment.variant =
            variant_from_name(a.at("variant").get<std::string>());
      }
      c.augment.apply_prob = a.value("apply_prob", c.augment.apply_prob);
      if (a.contains("alpha")) {
        const auto& al = a.at("alpha");
        c.augment.alpha.mean = al.value("mean", c.augment.alpha.mean);
        c.augment.alpha.std = al.value("std", c.augment.alpha.std);
        c.augment.alpha.min_clamp = al.value("min", c.augment.alpha.min_clamp);
        c.augment.alpha.max_clamp = al.value("max", c.augment.alpha.max_clamp);
      }
      if (a.contains("proj")) {
        c.proj_mode = a.at("proj").value("mode", c.proj_mode);
      }
      const std::string combine = a.value("combine_with", std::string());
      if (!combine.empty() && combine != "none") {
        c.baseline.kind =
            combine == "manimixup" ? "manifold_mixup" : combine;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  if (c.proj_mode != "auto" && c.proj_mode != "identity" &&
      c.proj_mode != "learned") {
    throw ConfigError("proj mode must be auto, identity or learned, got '" +
                      c.proj_mode + "'");
  }
  check_baseline(c.baseline);
  return c;
}

std::string train_config_hash(const TrainConfig& config) {
  std::ostringstream hex;
  hex << "0x" << std::hex << fnv1a64(train_config_to_json(config).dump());
  return hex.str();
}

nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json per_set;
  per_set["many"] = r.many.has_value() ? nlohmann::json(*r.many)
                                       : nlohmann::json(nullptr);
  per_set["medium"] = r.medium.has_value() ? nlohmann::json(*r.medium)
                                           : nlohmann::json(nullptr);
  per_set["few"] =
      r.few.has_value() ? nlohmann::json(*r.few) : nlohmann::json(nullptr);
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& s : r.curve) {
    curve.push_back({{"epoch", s.epoch},
                     {"train_loss", s.train_loss},
                     {"eval_top1", s.eval_top1.has_value()
                                       ? nlohmann::json(*s.eval_top1)
                                       : nlohmann::json(nullptr)}});
  }
  return {{"top1", r.top1},
          {"top5", r.top5},
          {"per_set", per_set},
          {"seed", r.seed},
          {"config_hash", r.config_hash},
          {"model_id", r.model_id},
          {"variant", r.variant},
          {"curve", curve},
          {"wall_time_sec", r.wall_time_sec}};
}

void write_curve_csv(const std::string& path,
                     const std::vector<EpochStat>& curve) {
  std::ofstream os(path);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  os << "epoch,train_loss,eval_top1\n";
  for (const auto& s : curve) {
    os << s.epoch << "," << s.train_loss << ",";
    if (s.eval_top1.has_value()) {
      os << *s.eval_top1;
    }
    os << "\n";
  }
}

float cosine_lr(const OptimConfig& optim, int epoch, int total_epochs) {
  if (optim.schedule == "constant") {
    return optim.lr;
  }
  if (optim.schedule != "cosine") {
    throw ConfigError("unknown schedule '" + optim.schedule +
                      "' (expected cosine or constant)");
  }
  if (total_epochs <= 0) {
    return optim.lr;
  }
  const double t = static_cast<double>(epoch) / total_epochs;
  return static_cast<float>(optim.lr_min +
                            0.5 * (optim.lr - optim.lr_min) *
                                (1.0 + std::cos(kPi * t)));
}

double mixed_cross_entropy(const Eigen::MatrixXf& logits,
                           const std::vector<int>& y_a,
                           const std::vector<int>& y_b, float lambda,
                           Eigen::MatrixXf* dlogits) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = logits.cols();
  if (y_a.size() != static_cast<std::size_t>(n) || y_b.size() != y_a.size()) {
    throw ShapeError("labels and logits disagree in count");
  }
  if (dlogits != nullptr) {
    dlogits->resize(n, k);
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = y_a[static_cast<std::size_t>(i)];
    const int b = y_b[static_cast<std::size_t>(i)];
    if (a < 0 || a >= k || b < 0 || b >= k) {
      throw KeyError("label outside [0, " + std::to_string(k) + ")");
    }
    const float mx = logits.row(i).maxCoeff();
    const Eigen::ArrayXd e =
        (logits.row(i).transpose().array().cast<double>() - mx).exp();
    const double z = e.sum();
    const double lse = mx + std::log(z);
    loss += lambda * (lse - logits(i, a)) +
            (1.0 - lambda) * (lse - logits(i, b));
    if (dlogits != nullptr) {
      dlogits->row(i) = (e / z).cast<float>().matrix().transpose();
      (*dlogits)(i, a) -= lambda;
      (*dlogits)(i, b) -= 1.0f - lambda;
    }
  }
  loss /= static_cast<double>(n);
  if (dlogits != nullptr) {
    *dlogits /= static_cast<float>(n);
  }
  return loss;
}

void evaluate(Model& model, const Dataset& eval_view,
              const ClassSetPartition* partition, RunReport* report) {
  const int n = eval_view.size();
  if (n == 0) {
    throw DataError("evaluation set is empty");
  }
  const int k = eval_view.num_classes();
  const int topk = std::min(5, k);
  std::vector<long> class_total(static_cast<std::size_t>(k), 0);
  std::vector<long> class_correct(static_cast<std::size_t>(k), 0);
  long correct5 = 0;
  const int batch = 256;
  std::vector<int> idx_buf(static_cast<std::size_t>(k));
  for (int start = 0; start < n; start += batch) {
    const int bn = std::min(batch, n - start);
    const Eigen::MatrixXf logits =
        model.logits(model.features(eval_view.x.middleRows(start, bn), false));
    for (int i = 0; i < bn; ++i) {
      const int y = eval_view.labels[static_cast<std::size_t>(start + i)];
      ++class_total[static_cast<std::size_t>(y)];
      Eigen::Index arg = 0;
      logits.row(i).maxCoeff(&arg);
      if (static_cast<int>(arg) == y) {
        ++class_correct[static_cast<std::size_t>(y)];
      }
      std::iota(idx_buf.begin(), idx_buf.end(), 0);
      std::partial_sort(idx_buf.begin(), idx_buf.begin() + topk,
                        idx_buf.end(), [&](int l, int r) {
                          if (logits(i, l) != logits(i, r)) {
                            return logits(i, l) > logits(i, r);
                          }
                          return l < r;
                        });
      for (int t = 0; t < topk; ++t) {
        if (idx_buf[static_cast<std::size_t>(t)] == y) {
          ++correct5;
          break;
        }
      }
    }
  }
  const long correct1 =
      std::accumulate(class_correct.begin(), class_correct.end(), 0L);
  report->top1 = 100.0 * static_cast<double>(correct1) / n;
  report->top5 = 100.0 * static_cast<double>(correct5) / n;
  if (partition != nullptr) {
    const auto set_accuracy =
        [&](const std::vector<int>& classes) -> std::optional<double> {
      long total = 0, correct = 0;
      for (int c : classes) {
        if (c < 0 || c >= k) {
          throw KeyError("partition class " + std::to_string(c) +
                         " outside [0, " + std::to_string(k) + ")");
        }
        total += class_total[static_cast<std::size_t>(c)];
        correct += class_correct[static_cast<std::size_t>(c)];
      }
      if (total == 0) {
        return std::nullopt;
      }
      return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
    };
    report->many = set_accuracy(partition->many);
    report->medium = set_accuracy(partition->medium);
    report->few = set_accuracy(partition->few);
  }
}

TrainResult train(const TrainConfig& config, const Dataset& train_view,
                  const Dataset& eval_view, const DeltaTable* table,
                  const ClassSetPartition* partition) {
  const auto t0 = std::chrono::steady_clock::now();
  if (config.epochs < 0 || config.batch_size < 1) {
    throw ConfigError("epochs must be >= 0 and batch size >= 1");
  }
  check_baseline(config.baseline);
  if (train_view.class_names != eval_view.class_names) {
    throw ConfigError("train and eval views disagree on the class list");
  }
  const bool use_aug = config.augment_enabled;
  if (use_aug) {
    if (table == nullptr) {
      throw ConfigError("augmentation enabled but no difference table given");
    }
    if (table->header.class_names != train_view.class_names) {
      throw ConfigError(
          "difference table and dataset disagree on the class list");
    }
  }
  const bool needs_image = config.baseline.kind == "cutmix" ||
                           config.baseline.kind == "cutout" ||
                           !config.baseline.transforms.empty();
  if (needs_image && !train_view.is_image()) {
    throw ConfigError("baseline '" + config.baseline.kind +
                      "' and input transforms need image data");
  }

  auto model = make_model(config.model_id,
                          static_cast<int>(train_view.x.cols()),
                          train_view.channels, train_view.height,
                          train_view.width, train_view.num_classes(),
                          config.seed);

  ProjectionSpec proj;
  Eigen::MatrixXf proj_w_mom, proj_b_mom;
  bool learned_proj = false;
  if (use_aug) {
    const int d_c = variant_input_dim(config.augment, *table);
    const int d_t = model->feature_dim();
    std::string mode = config.proj_mode;
    if (mode == "auto") {
      mode = d_c == d_t ? "identity" : "learned";
    }
    if (mode == "identity") {
      if (d_c != d_t) {
        throw ConfigError("identity projection needs matching dims, got " +
                          std::to_string(d_c) + " -> " + std::to_string(d_t));
      }
      proj = ProjectionSpec::identity(d_t);
    } else {
      proj = ProjectionSpec::learned_linear(
          d_c, d_t, config.seed ^ fnv1a64("projection"));
      proj_w_mom = Eigen::MatrixXf::Zero(d_t, d_c);
      proj_b_mom = Eigen::MatrixXf::Zero(d_t, 1);
      learned_proj = true;
    }
  }

  RunReport report;
  report.seed = config.seed;
  report.config_hash = train_config_hash(config);
  report.model_id = config.model_id;
  report.variant = use_aug ? variant_name(config.augment.variant) : "none";

  TransformStack transforms(config.baseline.transforms);

  const int n = train_view.size();
  if (config.epochs > 0 && n == 0) {
    throw DataError("training view is empty");
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const float lr = cosine_lr(config.optim, epoch, config.epochs);
    const auto ue = static_cast<std::uint64_t>(epoch);
    Rng shuffle_rng = derive_rng(config.seed, fnv1a64("shuffle") ^ ue);
    Rng transform_rng = derive_rng(config.seed, fnv1a64("transform") ^ ue);
    Rng mix_rng = derive_rng(config.seed, fnv1a64("mix") ^ ue);
    Rng aug_rng = derive_rng(config.seed, fnv1a64("augment") ^ ue);
    fisher_yates_shuffle(order, shuffle_rng);

    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int bn = std::min(config.batch_size, n - start);
      Eigen::MatrixXf xb(bn, train_view.x.cols());
      std::vector<int> ya(static_cast<std::size_t>(bn));
      for (int i = 0; i < bn; ++i) {
        const int src = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = train_view.x.row(src);
        ya[static_cast<std::size_t>(i)] =
            train_view.labels[static_cast<std::size_t>(src)];
      }

      if (train_view.is_image() && !config.baseline.transforms.empty()) {
        Image img;
        img.channels = train_view.channels;
        img.height = train_view.height;
        img.width = train_view.width;
        for (int i = 0; i < bn; ++i) {
          img.data = xb.row(i).transpose();
          xb.row(i) = transforms.apply(img, transform_rng).data.transpose();
        }
      }

      std::vector<int> yb = ya;
      float lambda = 1.0f;
      ManifoldMixHook hook;
      const std::string& kind = config.baseline.kind;
      if (kind == "mixup" || kind == "cutmix" || kind == "manifold_mixup") {
        std::vector<int> partner(static_cast<std::size_t>(bn));
        std::iota(partner.begin(), partner.end(), 0);
        fisher_yates_shuffle(partner, mix_rng);
        for (int i = 0; i < bn; ++i) {
          yb[static_cast<std::size_t>(i)] =
              ya[static_cast<std::size_t>(partner[static_cast<std::size_t>(i)])];
        }
        lambda = draw_beta(config.baseline.beta_a, mix_rng);
        int mix_layer = 0;
        if (kind == "manifold_mixup") {
          mix_layer = static_cast<int>(uniform_index(
              mix_rng,
              static_cast<std::uint64_t>(model->num_mix_layers()) + 1));
        }
        if (kind == "cutmix") {
          const Box box = sample_cutmix_box(train_view.width,
                                            train_view.height, lambda,
                                            mix_rng);
          if (box.area() == 0) {
            lambda = 1.0f;
          } else {
            const int spatial = train_view.height * train_view.width;
            Eigen::MatrixXf mixed = xb;
            for (int i = 0; i < bn; ++i) {
              const int p = partner[static_cast<std::size_t>(i)];
              for (int c = 0; c < train_view.channels; ++c) {
                for (int y = box.y0; y < box.y1; ++y) {
                  const int off = c * spatial + y * train_view.width;
                  mixed.block(i, off + box.x0, 1, box.x1 - box.x0) =
                      xb.block(p, off + box.x0, 1, box.x1 - box.x0);
                }
              }
            }
            xb = std::move(mixed);
            lambda = 1.0f - static_cast<float>(box.area()) /
                                (static_cast<float>(train_view.width) *
                                 train_view.height);
          }
        } else if (kind == "mixup" || mix_layer == 0) {
          Eigen::MatrixXf mixed(bn, xb.cols());
          for (int i = 0; i < bn; ++i) {
            mixed.row(i) =
                lambda * xb.row(i) +
                (1.0f - lambda) * xb.row(partner[static_cast<std::size_t>(i)]);
          }
          xb = std::move(mixed);
        } else {
          hook.active = true;
          hook.layer_id = mix_layer;
          hook.partner = partner;
          hook.lambda = lambda;
        }
      } else if (kind == "cutout") {
        for (int i = 0; i < bn; ++i) {
          Image img;
          img.channels = train_view.channels;
          img.height = train_view.height;
          img.width = train_view.width;
          img.data = xb.row(i).transpose();
          xb.row(i) =
              cutout(img, config.baseline.cutout_size, mix_rng).data
                  .transpose();
        }
      }

      Eigen::MatrixXf feats =
          model->features(xb, true, hook.active ? &hook : nullptr);
      BatchAugmentRecord rec;
      if (use_aug) {
        feats = per_batch_augment(feats, ya, *table, config.augment, proj,
                                  aug_rng, &rec);
      }
      const Eigen::MatrixXf logits = model->logits(feats);
      Eigen::MatrixXf dlogits;
      loss_sum += mixed_cross_entropy(logits, ya, yb, lambda, &dlogits);
      ++batches;

      model->zero_grads();
      const Eigen::MatrixXf dfeats = model->backward_head(dlogits);
      ProjectionGrads pgrads;
      if (use_aug && learned_proj) {
        accumulate_projection_grads(proj, rec, dfeats, &pgrads);
      }
      model->backward_trunk(dfeats);

      for (Param* p : model->params()) {
        sgd_step(p->value, p->grad, p->momentum, lr, config.optim.momentum,
                 config.optim.weight_decay);
      }
      if (use_aug && learned_proj) {
        Eigen::MatrixXf bias_grad = pgrads.bias;
        sgd_step(proj.weight, pgrads.weight, proj_w_mom, lr,
                 config.optim.momentum, config.optim.weight_decay);
        Eigen::MatrixXf bias_value = proj.bias;
        sgd_step(bias_value, bias_grad, proj_b_mom, lr,
                 config.optim.momentum, config.optim.weight_decay);
        proj.bias = bias_value;
      }
    }

    EpochStat stat;
    stat.epoch = epoch;
    stat.train_loss = batches > 0 ? loss_sum / batches : 0.0;
    if (config.eval_each_epoch) {
      RunReport probe;
      evaluate(*model, eval_view, nullptr, &probe);
      stat.eval_top1 = probe.top1;
    }
    report.curve.push_back(stat);
  }

  evaluate(*model, eval_view, partition, &report);
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  TrainResult result;
  result.model = std::move(model);
  result.proj = std::move(proj);
  result.report = std::move(report);
  return result;
}

TrainResult linear_probe(const TrainConfig& config,
                         const Dataset& train_feats,
                         const Dataset& eval_feats, const DeltaTable* table,
                         const ClassSetPartition* partition) {
  if (train_feats.x.cols() != eval_feats.x.cols()) {
    throw ShapeError("frozen train/eval features differ in dim: " +
                     std::to_string(train_feats.x.cols()) + " vs " +
                     std::to_string(eval_feats.x.cols()));
  }
  TrainConfig c = config;
  c.model_id = "linear";
  c.baseline.kind = "none";
  c.baseline.transforms.clear();
  return train(c, train_feats, eval_feats, table, partition);
}

}  // namespace textmania
