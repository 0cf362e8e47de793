// spectra: command-line front end for ingesting datasets, training models and
// running the evaluation sweeps.

#include <iostream>

#include "CLI11.hpp"
#include "spectra/spectra.hpp"

namespace fs = std::filesystem;
using namespace spectra;
using harness::ExperimentConfig;
using json = nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::string manifest;
  std::vector<std::string> models;
  std::vector<int> shares;
  std::vector<double> scales;
  std::vector<std::uint64_t> seeds;
  std::optional<double> scale;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::size_t> workers;
  std::string out;
  bool resume = false;
  bool allow_missing = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON experiment config (flags override it)");
  cmd->add_option("--manifest", f.manifest, "dataset manifest.json");
  cmd->add_option("--model", f.models, "liunet, minirocket, hdc-minirocket (repeatable)")->delimiter(',');
  cmd->add_option("--shares", f.shares, "training-image shares in percent")->delimiter(',');
  cmd->add_option("--scales", f.scales, "HDC scales")->delimiter(',');
  cmd->add_option("--scale", f.scale, "single HDC scale");
  cmd->add_option("--seeds", f.seeds, "seeds")->delimiter(',');
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--batch-size", f.batch_size, "batch size");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--workers", f.workers, "worker threads");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--resume", f.resume, "reuse finished cells in --out");
  cmd->add_flag("--allow-missing", f.allow_missing, "skip missing training images instead of aborting");
}

ExperimentConfig make_config(const Flags& f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : harness::load_config(f.config);
  if (!f.manifest.empty()) c.manifest = f.manifest;
  if (!f.models.empty()) {
    c.models.clear();
    for (const auto& m : f.models) c.models.push_back(harness::parse_model(m));
  }
  if (!f.shares.empty()) c.shares = f.shares;
  if (!f.scales.empty()) c.scales = f.scales;
  if (f.scale) c.scales = {*f.scale};
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (f.epochs) c.epochs = f.epochs;
  if (f.batch_size) c.batch_size = f.batch_size;
  if (f.lr) c.learning_rate = f.lr;
  if (f.workers) c.workers = *f.workers;
  if (!f.out.empty()) c.out = f.out;
  if (f.resume) c.resume = true;
  if (f.allow_missing) c.allow_missing = true;
  c.validate();
  return c;
}

bool config_has(const Flags& f, const char* key) {
  if (f.config.empty()) return false;
  const auto bytes = read_file_bytes(f.config);
  return json::parse(bytes.begin(), bytes.end()).contains(key);
}

void require_manifest(const ExperimentConfig& c) {
  if (c.manifest.empty()) throw ArgumentError("--manifest is required");
}

void write_manifest(const ExperimentConfig& c, std::string_view command) {
  write_text_atomic(c.out / "run.json", harness::run_manifest(c, command).dump(2) + "\n");
}

void print_rows(const std::vector<harness::MetricRow>& rows) {
  for (const auto& r : rows)
    if (r.seed == "mean")
      std::printf("%-15s p=%3d%s  OA %.4f  AA %.4f  F1 %.4f  mIoU %.4f\n", r.model.c_str(), r.share,
                  r.scale ? (" s=" + harness::format_number(*r.scale)).c_str() : "", r.scores.oa, r.scores.aa,
                  r.scores.f1, r.scores.miou);
}

int cmd_ingest(const ExperimentConfig& c) {
  require_manifest(c);
  auto m = data::load_manifest(c.manifest);
  const auto missing = data::missing_images(m);
  if (!missing.empty()) {
    std::cerr << "missing image files:\n";
    for (const auto& id : missing) std::cerr << "  " << id << " (" << m.resolve(m.image(id)).string() << ")\n";
    if (!c.allow_missing) return 2;
  }
  std::vector<data::HyperspectralCube> train;
  for (const auto& id : m.image_ids(data::Split::train))
    if (std::find(missing.begin(), missing.end(), id) == missing.end())
      train.push_back(data::load_cube(m.resolve(m.image(id)), m));
  if (train.empty()) throw Error("no training images available");
  m.normalization = data::fit_normalization(train, m);
  data::save_manifest(c.manifest, m);
  for (auto split : {data::Split::train, data::Split::val, data::Split::test}) {
    std::vector<std::string> ids;
    for (const auto& id : m.image_ids(split))
      if (std::find(missing.begin(), missing.end(), id) == missing.end()) ids.push_back(id);
    const auto s = data::load_samples(m, ids);
    std::printf("%-5s images %3zu  labeled pixels %zu\n", std::string(data::to_string(split)).c_str(), ids.size(),
                s.size());
  }
  std::printf("normalization bounds written to %s\n", c.manifest.string().c_str());
  return 0;
}

int cmd_fit_transform(const ExperimentConfig& c) {
  require_manifest(c);
  const auto ds = harness::load_dataset(c.manifest, c.allow_missing);
  const auto model = c.models.front();
  if (model == harness::ModelKind::liunet) throw ArgumentError("fit-transform: model must be a ROCKET variant");
  const auto seed = c.seeds.front();
  const auto ids = data::sample_share(ds.train_ids, c.shares.front(), seed);
  const auto train = ds.train_set(ids);
  const auto tc = c.train_config(model, seed);
  const auto first = data::epoch_batches(train.size(), tc.batch_size, seed, 0, true).front();
  const double scale = model == harness::ModelKind::minirocket ? 0.0 : c.scales.front();
  const auto fitted = rocket::fit(train.subset(first), seed, scale);
  rocket::save(c.out / "transform.bin", fitted);
  const auto variant =
      model == harness::ModelKind::minirocket ? features::Variant::minirocket : features::Variant::hdc_minirocket;
  const features::Extractor ex(fitted, variant);
  const auto fs_test = features::extract_all(ds.test, ex, c.workers);
  BinaryWriter w;
  w.put<std::uint64_t>(fs_test.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(fs_test.width));
  w.put_array<float>(fs_test.values);
  for (int l : fs_test.labels) w.put<std::int32_t>(l);
  write_file_atomic(c.out / "test_features.bin", w.bytes());
  std::printf("transform fitted on %zu spectra (L=%zu, D=%zu); %zu test feature rows written to %s\n", first.size(),
              ds.length(), fs_test.width, fs_test.size(), c.out.string().c_str());
  return 0;
}

int cmd_train(const ExperimentConfig& c) {
  require_manifest(c);
  const auto ds = harness::load_dataset(c.manifest, c.allow_missing);
  for (auto model : c.models) {
    const auto key = harness::make_key(model, c.shares.front(), c.scales.empty() ? 0.0 : c.scales.front(),
                                       c.seeds.front(), data::Split::test);
    auto [result, trained] = harness::run_cell(ds, c, key);
    const auto dir = c.out / "checkpoints" / harness::to_string(model);
    trained.save(dir);
    write_text_atomic(dir / "epoch_log.csv", harness::epoch_log_csv(result.log));
    const auto s = metrics::scores(result.cm);
    std::printf("%-15s best epoch %zu  test OA %.4f  AA %.4f  F1 %.4f  mIoU %.4f  -> %s\n",
                harness::to_string(model).c_str(), result.best_epoch, s.oa, s.aa, s.f1, s.miou,
                dir.string().c_str());
  }
  write_manifest(c, "train");
  return 0;
}

int cmd_eval(ExperimentConfig c, bool models_given) {
  require_manifest(c);
  if (!models_given) c.models.assign(std::begin(harness::kAllModels), std::end(harness::kAllModels));
  const auto ds = harness::load_dataset(c.manifest, c.allow_missing);
  const auto rows = harness::run_full_eval(ds, c);
  write_text_atomic(c.out / "full_eval.csv", harness::metrics_csv(rows, ds.manifest.class_names));
  write_manifest(c, "eval");
  print_rows(rows);
  return 0;
}

int cmd_sweep_share(ExperimentConfig c, bool shares_given, bool models_given) {
  require_manifest(c);
  if (!models_given) c.models.assign(std::begin(harness::kAllModels), std::end(harness::kAllModels));
  if (!shares_given) c.shares.assign(std::begin(data::kSharePercents), std::end(data::kSharePercents));
  const auto ds = harness::load_dataset(c.manifest, c.allow_missing);
  const auto rows = harness::run_share_sweep(ds, c);
  write_text_atomic(c.out / "share_sweep.csv", harness::metrics_csv(rows, ds.manifest.class_names));
  write_manifest(c, "sweep-share");
  print_rows(rows);
  return 0;
}

int cmd_sweep_scale(ExperimentConfig c, bool scales_given) {
  require_manifest(c);
  if (!scales_given) c.scales.assign(std::begin(hdc::kScaleSweep), std::end(hdc::kScaleSweep));
  c.models = {harness::ModelKind::hdc_minirocket};
  const auto ds = harness::load_dataset(c.manifest, c.allow_missing);
  const auto r = harness::run_scale_sweep(ds, c);
  write_text_atomic(c.out / "scale_sweep.csv", harness::metrics_csv(r.rows, ds.manifest.class_names));
  write_text_atomic(c.out / "scale_selection.csv", harness::scale_selection_csv(r));
  write_manifest(c, "sweep-scale");
  print_rows(r.rows);
  for (const auto& [metric, s] : r.best_scale) std::printf("best scale by %-4s: %s\n", metric.c_str(),
                                                           harness::format_number(s).c_str());
  return 0;
}

int cmd_bench(ExperimentConfig c, bool models_given, std::size_t spectra, std::size_t length, std::size_t classes) {
  if (!models_given) c.models.assign(std::begin(harness::kAllModels), std::end(harness::kAllModels));
  if (!c.manifest.empty()) {
    const auto m = data::load_manifest(c.manifest);
    length = m.effective_bands();
    classes = m.class_count;
  }
  const auto report = harness::bench_inference(c, length, classes, c.out / "checkpoints", spectra);
  write_text_atomic(c.out / "bench.csv", harness::bench_csv(report));
  json j;
  j["machine"] = report.machine;
  j["entries"] = json::array();
  for (const auto& e : report.entries)
    j["entries"].push_back({{"model", e.model},
                            {"spectra", e.spectra},
                            {"length", e.length},
                            {"workers", e.workers},
                            {"single_spectra_per_s", e.single_throughput()},
                            {"multi_spectra_per_s", e.multi_throughput()},
                            {"predictions_identical", e.predictions_identical}});
  write_text_atomic(c.out / "bench.json", j.dump(2) + "\n");
  for (const auto& e : report.entries)
    std::printf("%-15s %zu spectra  1 worker %.0f/s  %zu workers %.0f/s  identical=%s\n", e.model.c_str(), e.spectra,
                e.single_throughput(), e.workers, e.multi_throughput(), e.predictions_identical ? "yes" : "no");
  return 0;
}

int cmd_report(const ExperimentConfig& c, std::string input, std::vector<std::string> compare) {
  if (input.empty()) input = (c.out / "share_sweep.csv").string();
  const auto bytes = read_file_bytes(input);
  const auto parsed = harness::parse_metrics_csv(std::string(bytes.begin(), bytes.end()));
  if (compare.empty()) compare = {"liunet", "hdc-minirocket"};
  if (compare.size() != 2) throw ArgumentError("--compare takes exactly two models");
  const auto diff = harness::difference_table(parsed.rows, compare[0], compare[1], parsed.class_names);
  const auto diff_path = c.out / ("diff_" + compare[0] + "_vs_" + compare[1] + ".csv");
  write_text_atomic(diff_path, harness::difference_csv(diff, compare[0], compare[1]));
  write_text_atomic(c.out / "aggregate.svg", harness::aggregate_svg(parsed.rows));
  std::printf("%zu difference rows -> %s\nfigure -> %s\n", diff.size(), diff_path.string().c_str(),
              (c.out / "aggregate.svg").string().c_str());
  return 0;
}

int cmd_synth(const std::string& out, std::uint64_t seed, std::size_t images) {
  synthetic::DatasetSpec spec;
  spec.train_images = images;
  spec.band_drop = {0};
  spec.bumps.length = 24;
  const auto m = synthetic::write_dataset(out, spec, seed);
  std::printf("wrote %zu images to %s\n", m.images.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-pixel hyperspectral classification with MiniROCKET, HDC-MiniROCKET and 1D-Justo-LiuNet"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Flags f;
  auto* ingest = app.add_subcommand("ingest", "validate a dataset and store normalization bounds in its manifest");
  auto* fit = app.add_subcommand("fit-transform", "fit a ROCKET transform and export test-split features");
  auto* train = app.add_subcommand("train", "train one model (first share/seed) and save a checkpoint");
  auto* eval = app.add_subcommand("eval", "full-training-set evaluation over seeds");
  auto* sweep_share = app.add_subcommand("sweep-share", "training-image share sweep");
  auto* sweep_scale = app.add_subcommand("sweep-scale", "HDC scale sweep on the validation split");
  auto* bench = app.add_subcommand("bench", "inference throughput");
  auto* report = app.add_subcommand("report", "difference tables and figure from a share sweep");
  auto* synth = app.add_subcommand("synth", "write a small synthetic dataset");
  for (auto* cmd : {ingest, fit, train, eval, sweep_share, sweep_scale, bench, report}) add_common(cmd, f);

  std::size_t bench_spectra = 10000, bench_length = 120, bench_classes = 10;
  bench->add_option("--spectra", bench_spectra, "number of spectra");
  bench->add_option("--length", bench_length, "spectrum length without a manifest");
  bench->add_option("--classes", bench_classes, "classes without a manifest");
  std::string report_input;
  std::vector<std::string> compare;
  report->add_option("--input", report_input, "metrics CSV (default <out>/share_sweep.csv)");
  report->add_option("--compare", compare, "model A,model B")->delimiter(',');
  std::string synth_out = "synthetic";
  std::uint64_t synth_seed = 0;
  std::size_t synth_images = 8;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", synth_seed, "seed");
  synth->add_option("--train-images", synth_images, "number of training images");

  CLI11_PARSE(app, argc, argv);
  try {
    if (synth->parsed()) return cmd_synth(synth_out, synth_seed, synth_images);
    const auto c = make_config(f);
    if (ingest->parsed()) return cmd_ingest(c);
    if (fit->parsed()) return cmd_fit_transform(c);
    if (train->parsed()) return cmd_train(c);
    const bool models_given = !f.models.empty() || config_has(f, "models") || config_has(f, "model");
    if (eval->parsed()) return cmd_eval(c, models_given);
    if (sweep_share->parsed()) return cmd_sweep_share(c, !f.shares.empty() || config_has(f, "shares"), models_given);
    if (sweep_scale->parsed()) return cmd_sweep_scale(c, !f.scales.empty() || f.scale.has_value() || config_has(f, "scales"));
    if (bench->parsed()) return cmd_bench(c, models_given, bench_spectra, bench_length, bench_classes);
    if (report->parsed()) return cmd_report(c, report_input, compare);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
