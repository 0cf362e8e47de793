#pragma once

// Experiment orchestration. An experiment is a grid of cells
// (model, share, scale, seed); each cell trains on a whole-image share of
// the training split, keeps the epoch with the best validation mIoU and is
// scored on the test split (or validation split for the scale sweep).
// Cell results are cached as JSON so interrupted sweeps resume.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "spectra/common.hpp"
#include "spectra/data.hpp"
#include "spectra/hdc.hpp"
#include "spectra/liunet.hpp"
#include "spectra/metrics.hpp"
#include "spectra/synthetic.hpp"
#include "spectra/training.hpp"

namespace spectra::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class ModelKind { liunet, minirocket, hdc_minirocket };

inline constexpr ModelKind kAllModels[] = {ModelKind::liunet, ModelKind::minirocket, ModelKind::hdc_minirocket};

inline std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::liunet: return "liunet";
    case ModelKind::minirocket: return "minirocket";
    case ModelKind::hdc_minirocket: return "hdc-minirocket";
  }
  return "?";
}

inline ModelKind parse_model(std::string_view s) {
  if (s == "liunet") return ModelKind::liunet;
  if (s == "minirocket") return ModelKind::minirocket;
  if (s == "hdc-minirocket") return ModelKind::hdc_minirocket;
  throw ArgumentError("unknown model '" + std::string(s) + "' (expected liunet, minirocket or hdc-minirocket)");
}

inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Shortest round-trip text for a double.
inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  double back = 0;
  for (int prec = 6; prec <= 17; ++prec) {
    std::ostringstream t;
    t << std::setprecision(prec) << v;
    std::istringstream(t.str()) >> back;
    if (back == v) return t.str();
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  fs::path manifest;
  std::vector<ModelKind> models = {ModelKind::minirocket};
  std::vector<int> shares = {100};
  std::vector<double> scales = {hdc::kDefaultScale};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::size_t workers = 1;
  bool standardize_features = false;
  std::size_t bias_fit_samples = 0;
  bool allow_missing = false;
  fs::path out = "runs";
  bool resume = false;

  void validate() const {
    if (seeds.empty()) throw ArgumentError("config: at least one seed is required");
    if (shares.empty()) throw ArgumentError("config: at least one share is required");
    if (models.empty()) throw ArgumentError("config: at least one model is required");
    for (int p : shares)
      if (std::find(std::begin(data::kSharePercents), std::end(data::kSharePercents), p) ==
          std::end(data::kSharePercents))
        throw ArgumentError("config: share " + std::to_string(p) + " not in {5,10,25,50,75,100}");
    for (double s : scales)
      if (!(s >= 0.0)) throw ArgumentError("config: scales must be nonnegative");
    for (auto m : models)
      if (m == ModelKind::hdc_minirocket && scales.empty())
        throw ArgumentError("config: hdc-minirocket requires at least one scale");
    if (workers == 0) throw ArgumentError("config: workers must be positive");
  }

  training::TrainConfig train_config(ModelKind model, std::uint64_t seed) const {
    training::TrainConfig c;
    c.learning_rate = model == ModelKind::liunet ? training::kLiuNetLearningRate : training::kRocketLearningRate;
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (learning_rate) c.learning_rate = *learning_rate;
    c.seed = seed;
    c.workers = workers;
    c.standardize_features = standardize_features;
    c.bias_fit_samples = bias_fit_samples;
    return c;
  }

  // Everything that influences results; worker count, output location and
  // resume do not.
  json result_json() const {
    json j;
    j["manifest"] = manifest.string();
    j["models"] = json::array();
    for (auto m : models) j["models"].push_back(to_string(m));
    j["shares"] = shares;
    j["scales"] = scales;
    j["seeds"] = seeds;
    if (epochs) j["epochs"] = *epochs;
    if (batch_size) j["batch_size"] = *batch_size;
    if (learning_rate) j["learning_rate"] = *learning_rate;
    j["standardize_features"] = standardize_features;
    j["bias_fit_samples"] = bias_fit_samples;
    j["allow_missing"] = allow_missing;
    return j;
  }

  json to_json() const {
    auto j = result_json();
    j["workers"] = workers;
    j["out"] = out.string();
    j["resume"] = resume;
    return j;
  }

  std::string hash() const { return fnv1a_hex(result_json().dump()); }

  // Settings a single cell's result depends on (the grid and worker count
  // do not), so a cached cell stays valid when the grid grows.
  std::string cell_hash() const {
    json j;
    j["manifest"] = manifest.string();
    if (epochs) j["epochs"] = *epochs;
    if (batch_size) j["batch_size"] = *batch_size;
    if (learning_rate) j["learning_rate"] = *learning_rate;
    j["standardize_features"] = standardize_features;
    j["bias_fit_samples"] = bias_fit_samples;
    j["allow_missing"] = allow_missing;
    return fnv1a_hex(j.dump());
  }

  // Fields present in j override this config.
  void merge_json(const json& j) {
    try {
      if (j.contains("manifest")) manifest = j["manifest"].get<std::string>();
      if (j.contains("models")) {
        models.clear();
        for (const auto& m : j["models"]) models.push_back(parse_model(m.get<std::string>()));
      }
      if (j.contains("model")) models = {parse_model(j["model"].get<std::string>())};
      if (j.contains("shares")) shares = j["shares"].get<std::vector<int>>();
      if (j.contains("scales")) scales = j["scales"].get<std::vector<double>>();
      if (j.contains("seeds")) seeds = j["seeds"].get<std::vector<std::uint64_t>>();
      if (j.contains("epochs")) epochs = j["epochs"].get<std::size_t>();
      if (j.contains("batch_size")) batch_size = j["batch_size"].get<std::size_t>();
      if (j.contains("learning_rate")) learning_rate = j["learning_rate"].get<double>();
      if (j.contains("workers")) workers = j["workers"].get<std::size_t>();
      if (j.contains("standardize_features")) standardize_features = j["standardize_features"].get<bool>();
      if (j.contains("bias_fit_samples")) bias_fit_samples = j["bias_fit_samples"].get<std::size_t>();
      if (j.contains("allow_missing")) allow_missing = j["allow_missing"].get<bool>();
      if (j.contains("out")) out = j["out"].get<std::string>();
      if (j.contains("resume")) resume = j["resume"].get<bool>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("config: ") + e.what());
    }
  }
};

inline ExperimentConfig load_config(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  ExperimentConfig c;
  try {
    c.merge_json(json::parse(bytes.begin(), bytes.end()));
  } catch (const json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Dataset

struct Dataset {
  data::DatasetManifest manifest;
  std::vector<std::string> train_ids;  // present on disk, manifest order
  std::map<std::string, data::SampleSet> train_images;
  data::SampleSet val;
  data::SampleSet test;

  std::size_t classes() const { return manifest.class_count; }
  std::size_t length() const { return manifest.effective_bands(); }

  data::SampleSet train_set(std::span<const std::string> ids) const {
    data::SampleSet out;
    out.length = length();
    for (const auto& id : ids) out.append(train_images.at(id));
    return out;
  }
};

// Normalization bounds are taken from the manifest when present, otherwise
// fitted on the training images (and only kept in memory).
inline Dataset load_dataset(const fs::path& manifest_path, bool allow_missing) {
  Dataset ds;
  ds.manifest = data::load_manifest(manifest_path);
  const auto missing = data::missing_images(ds.manifest);
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    if (!allow_missing) throw Error("dataset " + ds.manifest.name + ": missing image files: " + list);
    for (const auto& id : missing)
      if (ds.manifest.image(id).split != data::Split::train)
        throw Error("dataset " + ds.manifest.name + ": missing validation/test image '" + id + "'");
    warn("dataset " + ds.manifest.name + ": skipping missing training images: " + list);
  }
  for (const auto& id : ds.manifest.image_ids(data::Split::train))
    if (std::find(missing.begin(), missing.end(), id) == missing.end()) ds.train_ids.push_back(id);
  if (ds.train_ids.empty()) throw Error("dataset " + ds.manifest.name + ": no training images available");

  if (!ds.manifest.normalization) {
    warn("manifest has no normalization bounds; fitting them on the training split (run `ingest` to persist)");
    std::vector<data::HyperspectralCube> raw;
    for (const auto& id : ds.train_ids)
      raw.push_back(data::load_cube(ds.manifest.resolve(ds.manifest.image(id)), ds.manifest));
    ds.manifest.normalization = data::fit_normalization(raw, ds.manifest);
  }
  for (const auto& id : ds.train_ids) {
    const std::string one[] = {id};
    ds.train_images.emplace(id, data::load_samples(ds.manifest, one));
  }
  const auto val_ids = ds.manifest.image_ids(data::Split::val);
  const auto test_ids = ds.manifest.image_ids(data::Split::test);
  ds.val = data::load_samples(ds.manifest, val_ids);
  ds.test = data::load_samples(ds.manifest, test_ids);
  if (ds.val.empty()) throw Error("dataset " + ds.manifest.name + ": validation split has no labeled pixels");
  if (ds.test.empty()) throw Error("dataset " + ds.manifest.name + ": test split has no labeled pixels");
  return ds;
}

// ---------------------------------------------------------------------------
// Cells

struct CellKey {
  ModelKind model = ModelKind::minirocket;
  int share = 100;
  std::optional<double> scale;  // hdc-minirocket only (minirocket is scale 0)
  std::uint64_t seed = 0;
  data::Split eval_split = data::Split::test;

  std::string id() const {
    std::string s = to_string(model) + "_p" + std::to_string(share);
    if (scale) s += "_s" + format_number(*scale);
    return s + "_seed" + std::to_string(seed) + "_" + std::string(data::to_string(eval_split));
  }
};

inline CellKey make_key(ModelKind model, int share, double scale, std::uint64_t seed, data::Split split) {
  CellKey k{model, share, std::nullopt, seed, split};
  if (model == ModelKind::hdc_minirocket) k.scale = scale;
  if (model == ModelKind::minirocket) k.scale = 0.0;
  return k;
}

struct CellResult {
  CellKey key;
  metrics::ConfusionMatrix cm;
  std::vector<std::size_t> train_class_counts;
  std::vector<std::string> train_images;
  std::size_t best_epoch = 0;
  std::vector<training::EpochLog> log;
};

struct TrainedModel {
  ModelKind kind = ModelKind::minirocket;
  std::variant<liunet::LiuNetParams, training::RocketModel> model;

  std::vector<int> predict(const data::SampleSet& samples, std::size_t workers) const {
    if (const auto* p = std::get_if<liunet::LiuNetParams>(&model)) return training::predict(*p, samples, workers);
    return training::predict(std::get<training::RocketModel>(model), samples, workers);
  }

  void save(const fs::path& dir) const {
    fs::create_directories(dir);
    if (const auto* p = std::get_if<liunet::LiuNetParams>(&model))
      liunet::save(dir / "liunet.bin", *p);
    else
      training::save(dir, std::get<training::RocketModel>(model));
  }

  static TrainedModel load(const fs::path& dir) {
    if (fs::exists(dir / "liunet.bin")) return {ModelKind::liunet, liunet::load(dir / "liunet.bin")};
    auto m = training::load_rocket(dir);
    const auto kind = m.variant == features::Variant::minirocket ? ModelKind::minirocket : ModelKind::hdc_minirocket;
    return {kind, std::move(m)};
  }
};

inline std::pair<CellResult, TrainedModel> run_cell(const Dataset& ds, const ExperimentConfig& cfg, const CellKey& key) {
  CellResult r;
  r.key = key;
  r.train_images = data::sample_share(ds.train_ids, key.share, key.seed);
  const auto train = ds.train_set(r.train_images);
  if (train.empty()) throw Error("cell " + key.id() + ": selected training images contain no labeled pixels");
  r.train_class_counts = train.class_counts(ds.classes());
  const auto tc = cfg.train_config(key.model, key.seed);
  const auto& eval = key.eval_split == data::Split::val ? ds.val : ds.test;

  TrainedModel trained;
  trained.kind = key.model;
  if (key.model == ModelKind::liunet) {
    auto run = training::train_liunet(train, ds.val, ds.classes(), tc);
    r.best_epoch = run.fit.best_epoch;
    r.log = std::move(run.fit.log);
    trained.model = std::move(run.params);
  } else {
    const auto variant =
        key.model == ModelKind::minirocket ? features::Variant::minirocket : features::Variant::hdc_minirocket;
    auto run = training::train_rocket(train, ds.val, ds.classes(), tc, variant, key.scale.value_or(0.0));
    r.best_epoch = run.fit.best_epoch;
    r.log = std::move(run.fit.log);
    trained.model = std::move(run.model);
  }
  const auto preds = trained.predict(eval, cfg.workers);
  r.cm = metrics::confusion(preds, eval.labels, ds.classes());
  return {std::move(r), std::move(trained)};
}

inline json cell_to_json(const CellResult& r) {
  json j;
  j["id"] = r.key.id();
  j["model"] = to_string(r.key.model);
  j["share"] = r.key.share;
  j["scale"] = r.key.scale ? json(*r.key.scale) : json(nullptr);
  j["seed"] = r.key.seed;
  j["eval_split"] = data::to_string(r.key.eval_split);
  j["classes"] = r.cm.classes();
  j["confusion"] = r.cm.counts();
  j["train_class_counts"] = r.train_class_counts;
  j["train_images"] = r.train_images;
  j["best_epoch"] = r.best_epoch;
  j["log"] = json::array();
  for (const auto& e : r.log)
    j["log"].push_back({{"epoch", e.epoch},
                        {"split", e.split},
                        {"loss", e.loss},
                        {"oa", e.scores.oa},
                        {"aa", e.scores.aa},
                        {"f1", e.scores.f1},
                        {"miou", e.scores.miou}});
  return j;
}

inline CellResult cell_from_json(const json& j) {
  CellResult r;
  r.key.model = parse_model(j.at("model").get<std::string>());
  r.key.share = j.at("share").get<int>();
  if (!j.at("scale").is_null()) r.key.scale = j["scale"].get<double>();
  r.key.seed = j.at("seed").get<std::uint64_t>();
  r.key.eval_split = data::parse_split(j.at("eval_split").get<std::string>());
  const auto c = j.at("classes").get<std::size_t>();
  r.cm = metrics::ConfusionMatrix(c);
  const auto counts = j.at("confusion").get<std::vector<std::uint64_t>>();
  if (counts.size() != c * c) throw FormatError("cell file: confusion matrix size mismatch");
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t k = 0; k < c; ++k) r.cm(i, k) = counts[i * c + k];
  r.train_class_counts = j.at("train_class_counts").get<std::vector<std::size_t>>();
  r.train_images = j.at("train_images").get<std::vector<std::string>>();
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  for (const auto& e : j.at("log"))
    r.log.push_back({e.at("epoch").get<std::size_t>(), e.at("split").get<std::string>(), e.at("loss").get<double>(),
                     {e.at("oa").get<double>(), e.at("aa").get<double>(), e.at("f1").get<double>(),
                      e.at("miou").get<double>()}});
  return r;
}

inline std::string epoch_log_csv(const std::vector<training::EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,split,loss,OA,AA,F1,mIoU\n";
  for (const auto& e : log)
    os << e.epoch << ',' << e.split << ',' << format_number(e.loss) << ',' << format_number(e.scores.oa) << ','
       << format_number(e.scores.aa) << ',' << format_number(e.scores.f1) << ',' << format_number(e.scores.miou)
       << '\n';
  return os.str();
}

// Runs the cell or, with cfg.resume and a finished cell file, loads it.
inline CellResult cached_cell(const Dataset& ds, const ExperimentConfig& cfg, const CellKey& key) {
  const auto path = cfg.out / "cells" / (key.id() + ".json");
  if (cfg.resume && fs::exists(path)) {
    const auto bytes = read_file_bytes(path);
    try {
      const auto j = json::parse(bytes.begin(), bytes.end());
      if (j.value("cell_hash", std::string{}) == cfg.cell_hash()) return cell_from_json(j);
      warn("cell " + key.id() + " was produced by a different configuration; rerunning");
    } catch (const std::exception& e) {
      warn("cell " + key.id() + " unreadable (" + e.what() + "); rerunning");
    }
  }
  auto result = run_cell(ds, cfg, key).first;
  auto j = cell_to_json(result);
  j["cell_hash"] = cfg.cell_hash();
  write_text_atomic(path, j.dump(1) + "\n");
  write_text_atomic(cfg.out / "logs" / (key.id() + ".csv"), epoch_log_csv(result.log));
  return result;
}

// ---------------------------------------------------------------------------
// Result rows

struct MetricRow {
  std::string dataset;
  std::string model;
  int share = 100;
  std::optional<double> scale;
  std::string seed;  // decimal seed or "mean"
  metrics::Scores scores;
  std::vector<std::optional<double>> class_accuracy;
  std::vector<double> class_counts;  // training pixels per class (share sweep)
  std::string config_hash;
};

inline MetricRow row_from_cell(const CellResult& r, const Dataset& ds, const std::string& config_hash,
                               bool with_counts) {
  MetricRow row;
  row.dataset = ds.manifest.name;
  row.model = to_string(r.key.model);
  row.share = r.key.share;
  row.scale = r.key.scale;
  row.seed = std::to_string(r.key.seed);
  row.scores = metrics::scores(r.cm);
  row.class_accuracy = metrics::per_class_accuracy(r.cm);
  if (with_counts)
    for (auto c : r.train_class_counts) row.class_counts.push_back(static_cast<double>(c));
  row.config_hash = config_hash;
  return row;
}

// Arithmetic mean over seed rows; per-class means skip seeds where the class
// is absent.
inline MetricRow mean_row(std::span<const MetricRow> rows) {
  if (rows.empty()) throw ArgumentError("mean_row: no rows");
  MetricRow m = rows.front();
  m.seed = "mean";
  const auto n = static_cast<double>(rows.size());
  m.scores = {};
  for (const auto& r : rows) {
    m.scores.oa += r.scores.oa / n;
    m.scores.aa += r.scores.aa / n;
    m.scores.f1 += r.scores.f1 / n;
    m.scores.miou += r.scores.miou / n;
  }
  for (std::size_t c = 0; c < m.class_accuracy.size(); ++c) {
    double sum = 0.0;
    std::size_t k = 0;
    for (const auto& r : rows)
      if (r.class_accuracy[c]) {
        sum += *r.class_accuracy[c];
        ++k;
      }
    m.class_accuracy[c] = k ? std::optional<double>(sum / static_cast<double>(k)) : std::nullopt;
  }
  for (std::size_t c = 0; c < m.class_counts.size(); ++c) {
    double sum = 0.0;
    for (const auto& r : rows) sum += r.class_counts[c];
    m.class_counts[c] = sum / n;
  }
  return m;
}

inline std::string csv_safe(std::string s) {
  for (auto& ch : s)
    if (ch == ',' || ch == '\n' || ch == '"') ch = '_';
  return s;
}

// Column order: dataset, model, share_pct, scale, seed, OA, AA, F1, mIoU,
// acc_<class>..., [count_<class>...], config_hash, code_version.
// Absent classes leave their accuracy cell empty.
inline std::string metrics_csv(std::span<const MetricRow> rows, std::span<const std::string> class_names) {
  const bool counts = !rows.empty() && !rows.front().class_counts.empty();
  std::ostringstream os;
  os << "dataset,model,share_pct,scale,seed,OA,AA,F1,mIoU";
  for (const auto& c : class_names) os << ",acc_" << csv_safe(c);
  if (counts)
    for (const auto& c : class_names) os << ",count_" << csv_safe(c);
  os << ",config_hash,code_version\n";
  for (const auto& r : rows) {
    os << csv_safe(r.dataset) << ',' << r.model << ',' << r.share << ',' << (r.scale ? format_number(*r.scale) : "")
       << ',' << r.seed << ',' << format_number(r.scores.oa) << ',' << format_number(r.scores.aa) << ','
       << format_number(r.scores.f1) << ',' << format_number(r.scores.miou);
    for (const auto& a : r.class_accuracy) os << ',' << (a ? format_number(*a) : "");
    if (counts)
      for (double c : r.class_counts) os << ',' << format_number(c);
    os << ',' << r.config_hash << ',' << kVersion << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Experiments

inline std::vector<double> scales_for(ModelKind m, const ExperimentConfig& cfg) {
  if (m == ModelKind::hdc_minirocket) return cfg.scales;
  return {0.0};
}

template <typename Fn>
void for_each_group(const Dataset& ds, const ExperimentConfig& cfg, std::span<const int> shares, data::Split split,
                    bool with_counts, std::vector<MetricRow>& rows, Fn&& on_group) {
  for (auto model : cfg.models)
    for (int share : shares)
      for (double scale : scales_for(model, cfg)) {
        std::vector<MetricRow> group;
        for (auto seed : cfg.seeds) {
          const auto cell = cached_cell(ds, cfg, make_key(model, share, scale, seed, split));
          group.push_back(row_from_cell(cell, ds, cfg.hash(), with_counts));
        }
        rows.insert(rows.end(), group.begin(), group.end());
        if (group.size() > 1) rows.push_back(mean_row(group));
        on_group(model, share, scale, group);
      }
}

// Full training split, test metrics; per-seed rows followed by a seed-mean
// row (only when there is more than one seed).
inline std::vector<MetricRow> run_full_eval(const Dataset& ds, const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<MetricRow> rows;
  const int full[] = {100};
  for_each_group(ds, cfg, full, data::Split::test, false, rows, [](auto&&...) {});
  return rows;
}

// Every configured share; rows carry per-class training pixel counts.
inline std::vector<MetricRow> run_share_sweep(const Dataset& ds, const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<MetricRow> rows;
  for_each_group(ds, cfg, cfg.shares, data::Split::test, true, rows, [](auto&&...) {});
  return rows;
}

struct DiffRow {
  int share = 0;
  std::string class_name;
  std::optional<double> sample_count;  // training pixels, when the input has counts
  std::optional<double> acc_a, acc_b;

  std::optional<double> delta() const {
    if (acc_a && acc_b) return *acc_b - *acc_a;
    return std::nullopt;
  }
};

// Per share: the seed-mean row of a model, or its only row for single-seed
// runs (first scale when several are present).
inline std::map<int, const MetricRow*> summary_rows(std::span<const MetricRow> rows, std::string_view model) {
  std::map<int, const MetricRow*> out, single;
  for (const auto& r : rows) {
    if (r.model != model) continue;
    if (r.seed == "mean") {
      if (!out.count(r.share)) out[r.share] = &r;
    } else if (!single.count(r.share)) {
      single[r.share] = &r;
    }
  }
  for (const auto& [share, r] : single)
    if (!out.count(share)) out[share] = r;
  return out;
}

// Per class and share: seed-mean accuracy of model A and B (arrows point A -> B).
inline std::vector<DiffRow> difference_table(std::span<const MetricRow> rows, std::string_view model_a,
                                             std::string_view model_b, std::span<const std::string> class_names) {
  const auto a = summary_rows(rows, model_a);
  const auto b = summary_rows(rows, model_b);
  std::vector<DiffRow> out;
  for (std::size_t c = 0; c < class_names.size(); ++c)
    for (const auto& [share, ra] : a) {
      const auto it = b.find(share);
      if (it == b.end()) continue;
      const auto* rb = it->second;
      DiffRow d;
      d.share = share;
      d.class_name = class_names[c];
      if (c < ra->class_counts.size()) d.sample_count = ra->class_counts[c];
      d.acc_a = c < ra->class_accuracy.size() ? ra->class_accuracy[c] : std::nullopt;
      d.acc_b = c < rb->class_accuracy.size() ? rb->class_accuracy[c] : std::nullopt;
      out.push_back(d);
    }
  return out;
}

inline std::string difference_csv(std::span<const DiffRow> rows, std::string_view model_a, std::string_view model_b) {
  std::ostringstream os;
  os << "class,share_pct,sample_count,acc_" << model_a << ",acc_" << model_b << ",delta\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string{}; };
  for (const auto& d : rows)
    os << csv_safe(d.class_name) << ',' << d.share << ',' << opt(d.sample_count) << ',' << opt(d.acc_a)
       << ',' << opt(d.acc_b) << ',' << opt(d.delta()) << '\n';
  return os.str();
}

struct ScaleSweepResult {
  std::vector<MetricRow> rows;
  // metric name -> scale with the highest seed-mean validation score
  std::map<std::string, double> best_scale;
};

// hdc-minirocket on a 50 % share; validation metrics per scale.
inline ScaleSweepResult run_scale_sweep(const Dataset& ds, const ExperimentConfig& cfg_in) {
  auto cfg = cfg_in;
  cfg.models = {ModelKind::hdc_minirocket};
  cfg.validate();
  for (auto m : cfg_in.models)
    if (m != ModelKind::hdc_minirocket) throw ArgumentError("sweep-scale: model must be hdc-minirocket");
  ScaleSweepResult result;
  const int half[] = {50};
  struct Best {
    double value = -1.0;
    double scale = 0.0;
  };
  std::map<std::string, Best> best;
  for_each_group(ds, cfg, half, data::Split::val, false, result.rows,
                 [&](ModelKind, int, double scale, const std::vector<MetricRow>& group) {
                   const auto m = mean_row(group);
                   const std::pair<const char*, double> metrics[] = {
                       {"OA", m.scores.oa}, {"AA", m.scores.aa}, {"F1", m.scores.f1}, {"mIoU", m.scores.miou}};
                   for (const auto& [name, v] : metrics)
                     if (v > best[name].value) best[name] = {v, scale};
                 });
  for (const auto& [name, b] : best) result.best_scale[name] = b.scale;
  return result;
}

inline std::string scale_selection_csv(const ScaleSweepResult& r) {
  std::ostringstream os;
  os << "metric,best_scale\n";
  for (const char* name : {"OA", "AA", "F1", "mIoU"}) {
    const auto it = r.best_scale.find(name);
    if (it != r.best_scale.end()) os << name << ',' << format_number(it->second) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Reading metric CSVs back (report)

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

struct ParsedMetrics {
  std::vector<std::string> class_names;
  std::vector<MetricRow> rows;
};

inline ParsedMetrics parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("metrics csv: empty");
  const auto header = split_csv_line(line);
  ParsedMetrics out;
  std::vector<std::size_t> acc_cols, count_cols;
  std::size_t hash_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].rfind("acc_", 0) == 0) {
      acc_cols.push_back(i);
      out.class_names.push_back(header[i].substr(4));
    } else if (header[i].rfind("count_", 0) == 0) {
      count_cols.push_back(i);
    } else if (header[i] == "config_hash") {
      hash_col = i;
    }
  }
  if (header.size() < 9 || header[0] != "dataset" || header[8] != "mIoU")
    throw FormatError("metrics csv: unexpected header");
  auto num = [](const std::string& s) { return std::stod(s); };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw FormatError("metrics csv: ragged row");
    MetricRow r;
    r.dataset = cells[0];
    r.model = cells[1];
    r.share = std::stoi(cells[2]);
    if (!cells[3].empty()) r.scale = num(cells[3]);
    r.seed = cells[4];
    r.scores = {num(cells[5]), num(cells[6]), num(cells[7]), num(cells[8])};
    for (auto c : acc_cols) r.class_accuracy.push_back(cells[c].empty() ? std::nullopt : std::optional(num(cells[c])));
    for (auto c : count_cols) r.class_counts.push_back(num(cells[c]));
    if (hash_col < cells.size()) r.config_hash = cells[hash_col];
    out.rows.push_back(std::move(r));
  }
  return out;
}

// OA and AA seed-means over share, one polyline per model (two panels).
inline std::string aggregate_svg(std::span<const MetricRow> rows) {
  std::map<std::string, std::map<int, std::pair<double, double>>> series;
  std::set<std::string> models;
  for (const auto& r : rows) models.insert(r.model);
  for (const auto& m : models)
    for (const auto& [share, r] : summary_rows(rows, m)) series[m][share] = {r->scores.oa, r->scores.aa};
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  const double panel_w = 360, panel_h = 260, margin = 50;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * (panel_w + margin) + margin << "\" height=\""
     << panel_h + 2 * margin + 40 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  auto x_of = [&](int share, double x0) { return x0 + panel_w * share / 100.0; };
  auto y_of = [&](double v) { return margin + panel_h * (1.0 - v); };
  for (int panel = 0; panel < 2; ++panel) {
    const double x0 = margin + panel * (panel_w + margin);
    os << "<rect x=\"" << x0 << "\" y=\"" << margin << "\" width=\"" << panel_w << "\" height=\"" << panel_h
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << margin - 10 << "\" text-anchor=\"middle\">"
       << (panel == 0 ? "Overall accuracy" : "Average accuracy") << "</text>\n";
    for (int p : data::kSharePercents)
      os << "<text x=\"" << x_of(p, x0) << "\" y=\"" << margin + panel_h + 14 << "\" text-anchor=\"middle\">" << p
         << "</text>\n";
    for (int t = 0; t <= 4; ++t)
      os << "<text x=\"" << x0 - 6 << "\" y=\"" << y_of(t / 4.0) + 4 << "\" text-anchor=\"end\">" << t * 25
         << "</text>\n";
    os << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << margin + panel_h + 30
       << "\" text-anchor=\"middle\">share of training images (%)</text>\n";
    std::size_t ci = 0;
    for (const auto& [model, pts] : series) {
      os << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << colors[ci % 5] << "\" points=\"";
      for (const auto& [share, v] : pts) os << x_of(share, x0) << ',' << y_of(panel == 0 ? v.first : v.second) << ' ';
      os << "\"/>\n";
      ++ci;
    }
  }
  std::size_t ci = 0;
  for (const auto& [model, pts] : series) {
    const double lx = margin + 160.0 * static_cast<double>(ci);
    const double ly = panel_h + 2 * margin + 25;
    os << "<rect x=\"" << lx << "\" y=\"" << ly - 9 << "\" width=\"14\" height=\"4\" fill=\"" << colors[ci % 5]
       << "\"/><text x=\"" << lx + 18 << "\" y=\"" << ly - 4 << "\">" << model << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Inference benchmark

struct BenchEntry {
  std::string model;
  std::size_t spectra = 0;
  std::size_t length = 0;
  double single_seconds = 0;
  double multi_seconds = 0;
  std::size_t workers = 1;
  bool predictions_identical = false;

  double single_throughput() const { return static_cast<double>(spectra) / single_seconds; }
  double multi_throughput() const { return static_cast<double>(spectra) / multi_seconds; }
};

struct BenchReport {
  std::vector<BenchEntry> entries;
  json machine;
};

inline json machine_descriptor() {
  json m;
  m["hardware_concurrency"] = std::thread::hardware_concurrency();
#if defined(__clang__)
  m["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  m["compiler"] = std::string("gcc ") + __VERSION__;
#else
  m["compiler"] = "unknown";
#endif
#ifdef NDEBUG
  m["build"] = "release";
#else
  m["build"] = "debug";
#endif
  m["code_version"] = kVersion;
  return m;
}

// Times prediction on a fixed synthetic workload. Models come from
// checkpoint_dir/<model>/ when present; otherwise a model is initialised (and
// for ROCKET variants fitted) on synthetic data so the timing is meaningful.
// Synthetic bump workload of the given shape.
inline data::SampleSet bench_workload(std::size_t spectra, std::size_t length, std::size_t classes,
                                      std::uint64_t seed) {
  synthetic::BumpSpec spec;
  spec.length = length;
  spec.centers.clear();
  for (std::size_t c = 0; c < classes; ++c)
    spec.centers.push_back(static_cast<double>(length) * (static_cast<double>(c) + 0.5) / static_cast<double>(classes));
  return synthetic::gaussian_bumps(spectra, spec, seed);
}

// Models found under checkpoint_dir/<model>/ are loaded and set the workload
// shape; others are freshly initialized for (length, classes).
inline BenchReport bench_inference(const ExperimentConfig& cfg, std::size_t length, std::size_t classes,
                                   const fs::path& checkpoint_dir, std::size_t spectra = 10000) {
  const auto multi = std::max<std::size_t>(cfg.workers, default_workers());
  BenchReport report;
  report.machine = machine_descriptor();
  for (auto kind : cfg.models) {
    const auto dir = checkpoint_dir / to_string(kind);
    TrainedModel model;
    std::size_t len = length;
    if (fs::exists(dir)) {
      model = TrainedModel::load(dir);
      if (const auto* p = std::get_if<liunet::LiuNetParams>(&model.model))
        len = p->arch.input_length;
      else
        len = std::get<training::RocketModel>(model.model).transform.schedule.input_length;
    } else if (kind == ModelKind::liunet) {
      model = {kind, liunet::init_params(liunet::Architecture::for_input(length, classes), 0)};
    } else {
      const auto fit_batch = bench_workload(std::min<std::size_t>(4096, spectra), length, classes, 1);
      training::RocketModel rm;
      rm.variant = kind == ModelKind::minirocket ? features::Variant::minirocket : features::Variant::hdc_minirocket;
      rm.transform = rocket::fit(fit_batch, 0, kind == ModelKind::minirocket ? 0.0 : cfg.scales.front());
      rm.head = training::init_head(rocket::kFeatureDim, classes, 0);
      model = {kind, std::move(rm)};
    }
    const auto workload = bench_workload(spectra, len, std::max<std::size_t>(1, classes), 0xbe7c);
    auto time_run = [&](std::size_t workers, std::vector<int>& preds) {
      const auto t0 = std::chrono::steady_clock::now();
      preds = model.predict(workload, workers);
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    BenchEntry e;
    e.model = to_string(kind);
    e.spectra = spectra;
    e.length = len;
    e.workers = multi;
    std::vector<int> p1, p2;
    e.single_seconds = time_run(1, p1);
    e.multi_seconds = time_run(multi, p2);
    e.predictions_identical = p1 == p2;
    report.entries.push_back(e);
  }
  return report;
}

inline std::string bench_csv(const BenchReport& r) {
  std::ostringstream os;
  os << "model,spectra,length,workers,single_spectra_per_s,multi_spectra_per_s,predictions_identical\n";
  for (const auto& e : r.entries)
    os << e.model << ',' << e.spectra << ',' << e.length << ',' << e.workers << ','
       << format_number(e.single_throughput()) << ',' << format_number(e.multi_throughput()) << ','
       << (e.predictions_identical ? "true" : "false") << '\n';
  return os.str();
}

// JSON run manifest written next to every experiment output.
inline json run_manifest(const ExperimentConfig& cfg, std::string_view command) {
  json j;
  j["command"] = command;
  j["config"] = cfg.to_json();
  j["config_hash"] = cfg.hash();
  j["code_version"] = kVersion;
  j["machine"] = machine_descriptor();
  return j;
}

}  // namespace spectra::harness
