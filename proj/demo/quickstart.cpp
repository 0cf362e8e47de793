// Train the three classifiers on a small synthetic dataset and print test
// scores.

#include <cstdio>

#include "spectra/spectra.hpp"

using namespace spectra;

int main() {
  const auto dir = std::filesystem::temp_directory_path() / "spectra_demo";
  std::filesystem::remove_all(dir);
  synthetic::DatasetSpec spec;
  spec.train_images = 6;
  synthetic::write_dataset(dir, spec, 7);

  const auto ds = harness::load_dataset(dir / "manifest.json", false);
  std::printf("train images %zu, val pixels %zu, test pixels %zu, %zu bands\n", ds.train_ids.size(), ds.val.size(),
              ds.test.size(), ds.length());

  harness::ExperimentConfig cfg;
  cfg.manifest = dir / "manifest.json";
  cfg.epochs = 5;
  cfg.batch_size = 256;
  cfg.workers = default_workers();
  for (auto model : harness::kAllModels) {
    const auto key = harness::make_key(model, 100, hdc::kDefaultScale, 0, data::Split::test);
    auto [result, trained] = harness::run_cell(ds, cfg, key);
    const auto s = metrics::scores(result.cm);
    std::printf("%-15s best epoch %zu  OA %.3f  AA %.3f  F1 %.3f  mIoU %.3f\n", harness::to_string(model).c_str(),
                result.best_epoch, s.oa, s.aa, s.f1, s.miou);
  }
  std::filesystem::remove_all(dir);
}
