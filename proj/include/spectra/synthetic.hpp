#pragma once

// Synthetic spectra and on-disk datasets for tests, demos and benchmarks.
// Each class is a Gaussian bump centred on its own band over a small
// baseline with additive noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spectra/common.hpp"
#include "spectra/data.hpp"

namespace spectra::synthetic {

struct BumpSpec {
  std::size_t length = 25;
  std::vector<double> centers = {5.0, 12.0, 19.0};  // one per class
  double width = 1.5;
  double noise = 0.02;
};

inline std::vector<float> bump_spectrum(const BumpSpec& spec, std::size_t cls, Rng& rng) {
  const double amp = rng.uniform(0.6, 1.0);
  const double base = rng.uniform(0.0, 0.1);
  const double center = spec.centers.at(cls) + rng.uniform(-0.3, 0.3);
  std::vector<float> x(spec.length);
  for (std::size_t b = 0; b < spec.length; ++b) {
    const double d = (static_cast<double>(b) - center) / spec.width;
    const double v = base + amp * std::exp(-0.5 * d * d) + spec.noise * rng.normal();
    x[b] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return x;
}

// n samples with labels cycling 0..c-1.
inline data::SampleSet gaussian_bumps(std::size_t n, const BumpSpec& spec, std::uint64_t seed,
                                      std::string_view image_id = "synthetic") {
  Rng rng(derive_seed(seed, 0x5e7));
  data::SampleSet out;
  out.length = spec.length;
  const auto classes = spec.centers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto cls = i % classes;
    out.push_back(bump_spectrum(spec, cls, rng), static_cast<int>(cls), image_id);
  }
  return out;
}

// Uniform spectra in [0,1) on a 2^-24 grid, so integer-weight convolutions
// of them are exact in double precision.
inline std::vector<float> random_spectrum(std::size_t length, Rng& rng) {
  std::vector<float> x(length);
  for (auto& v : x) v = static_cast<float>(static_cast<double>(rng.next_u64() >> 40) * 0x1.0p-24);
  return x;
}

struct DatasetSpec {
  std::string name = "synthetic";
  BumpSpec bumps;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t train_images = 4;
  std::size_t val_images = 1;
  std::size_t test_images = 1;
  double raw_scale = 4000.0;          // raw sensor range before normalization
  std::vector<std::size_t> band_drop;
  std::optional<int> ignore_label = 255;
  double ignore_fraction = 0.05;
  // Per-image class mix: image i draws classes with weights shifted by i so
  // images differ in composition.
  bool vary_composition = true;
};

// Writes cube directories plus manifest.json under dir and returns the
// manifest (without normalization bounds).
inline data::DatasetManifest write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec,
                                           std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto classes = spec.bumps.centers.size();
  const std::size_t bands = spec.bumps.length + spec.band_drop.size();
  data::DatasetManifest m;
  m.name = spec.name;
  m.band_count = bands;
  m.class_count = classes;
  for (std::size_t c = 0; c < classes; ++c) m.class_names.push_back("class" + std::to_string(c));
  m.band_drop = spec.band_drop;
  m.ignore_label = spec.ignore_label;
  m.base_dir = dir;

  const auto kept = [&] {
    data::DatasetManifest tmp = m;
    return tmp.kept_bands();
  }();

  Rng rng(derive_seed(seed, 0xda7a));
  const std::size_t total = spec.train_images + spec.val_images + spec.test_images;
  for (std::size_t i = 0; i < total; ++i) {
    const auto split = i < spec.train_images                     ? data::Split::train
                       : i < spec.train_images + spec.val_images ? data::Split::val
                                                                 : data::Split::test;
    const std::string id = "img" + std::to_string(i);
    data::HyperspectralCube cube;
    cube.height = spec.height;
    cube.width = spec.width;
    cube.bands = bands;
    cube.values.assign(cube.pixels() * bands, 0.0f);
    cube.labels.assign(cube.pixels(), 0);
    for (std::size_t p = 0; p < cube.pixels(); ++p) {
      std::size_t cls = rng.below(classes);
      if (spec.vary_composition && rng.uniform() < 0.5) cls = (i + p / spec.width) % classes;
      const bool ignored = spec.ignore_label && rng.uniform() < spec.ignore_fraction;
      cube.labels[p] = static_cast<std::uint8_t>(ignored ? *spec.ignore_label : static_cast<int>(cls));
      const auto x = bump_spectrum(spec.bumps, cls, rng);
      for (std::size_t b = 0; b < bands; ++b) cube.values[p * bands + b] = static_cast<float>(rng.uniform() * spec.raw_scale);
      for (std::size_t k = 0; k < kept.size(); ++k)
        cube.values[p * bands + kept[k]] = static_cast<float>(x[k] * spec.raw_scale);
    }
    data::write_cube(dir / id, cube);
    m.images.push_back({id, id, split});
  }
  data::save_manifest(dir / "manifest.json", m);
  return m;
}

}  // namespace spectra::synthetic
