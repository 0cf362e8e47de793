#pragma once

// Dataset ingestion: manifests, the on-disk cube directory format, band
// removal + min-max normalization, per-pixel sample extraction, image-level
// share sampling and seeded batching.
//
// Cube directory layout:
//   meta.json   {"bands":B,"dtype":"float32","height":H,"label_dtype":"uint8","width":W}
//   values.bin  H*W*B little-endian float32, row-major (H, W, B)
//   labels.bin  H*W uint8, row-major (H, W)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spectra/common.hpp"

namespace spectra::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class Split { train, val, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw SchemaError("unknown split '" + std::string(s) + "'");
}

struct ImageEntry {
  std::string id;
  std::string path;  // relative paths resolve against the manifest directory
  Split split = Split::train;
};

// Per kept band, computed over the training split.
struct NormalizationBounds {
  std::vector<double> min;
  std::vector<double> max;
};

struct DatasetManifest {
  std::string name;
  std::size_t band_count = 0;
  std::size_t class_count = 0;
  std::vector<std::string> class_names;
  std::optional<std::vector<double>> wavelength_nm;
  std::vector<std::size_t> band_drop;
  std::vector<ImageEntry> images;
  std::optional<int> ignore_label;
  std::optional<NormalizationBounds> normalization;
  fs::path base_dir;  // not serialized

  std::size_t effective_bands() const { return band_count - band_drop.size(); }

  std::vector<std::string> image_ids(Split split) const {
    std::vector<std::string> ids;
    for (const auto& img : images)
      if (img.split == split) ids.push_back(img.id);
    return ids;
  }

  const ImageEntry& image(std::string_view id) const {
    for (const auto& img : images)
      if (img.id == id) return img;
    throw ArgumentError("unknown image id '" + std::string(id) + "'");
  }

  fs::path resolve(const ImageEntry& img) const {
    fs::path p(img.path);
    return p.is_absolute() ? p : base_dir / p;
  }

  // Kept band indices in original order.
  std::vector<std::size_t> kept_bands() const {
    std::set<std::size_t> drop(band_drop.begin(), band_drop.end());
    std::vector<std::size_t> kept;
    for (std::size_t b = 0; b < band_count; ++b)
      if (!drop.count(b)) kept.push_back(b);
    return kept;
  }

  void validate() const {
    if (band_count == 0) throw SchemaError("manifest: band_count must be positive");
    if (class_count == 0) throw SchemaError("manifest: class_count must be positive");
    if (class_names.size() != class_count)
      throw SchemaError("manifest: class_names length must equal class_count");
    if (wavelength_nm && wavelength_nm->size() != band_count)
      throw SchemaError("manifest: wavelength_nm length must equal band_count");
    std::set<std::size_t> seen;
    for (auto b : band_drop) {
      if (b >= band_count) throw SchemaError("manifest: band_drop index out of range");
      if (!seen.insert(b).second) throw SchemaError("manifest: duplicate band_drop index");
    }
    if (band_drop.size() >= band_count) throw SchemaError("manifest: band_drop removes every band");
    std::set<std::string> ids;
    for (const auto& img : images)
      if (!ids.insert(img.id).second) throw SchemaError("manifest: duplicate image id '" + img.id + "'");
    if (normalization) {
      const auto n = effective_bands();
      if (normalization->min.size() != n || normalization->max.size() != n)
        throw SchemaError("manifest: normalization bounds must have one entry per kept band");
    }
  }
};

inline json to_json(const DatasetManifest& m) {
  json j;
  j["name"] = m.name;
  j["band_count"] = m.band_count;
  j["class_count"] = m.class_count;
  j["class_names"] = m.class_names;
  if (m.wavelength_nm) j["wavelength_nm"] = *m.wavelength_nm;
  j["band_drop"] = m.band_drop;
  if (m.ignore_label) j["ignore_label"] = *m.ignore_label;
  j["images"] = json::array();
  for (const auto& img : m.images)
    j["images"].push_back({{"id", img.id}, {"path", img.path}, {"split", to_string(img.split)}});
  if (m.normalization) j["normalization"] = {{"min", m.normalization->min}, {"max", m.normalization->max}};
  return j;
}

inline DatasetManifest manifest_from_json(const json& j, fs::path base_dir = {}) {
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.band_count = j.at("band_count").get<std::size_t>();
    m.class_count = j.at("class_count").get<std::size_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("wavelength_nm")) m.wavelength_nm = j["wavelength_nm"].get<std::vector<double>>();
    if (j.contains("band_drop")) m.band_drop = j["band_drop"].get<std::vector<std::size_t>>();
    if (j.contains("ignore_label") && !j["ignore_label"].is_null()) m.ignore_label = j["ignore_label"].get<int>();
    for (const auto& e : j.at("images"))
      m.images.push_back({e.at("id").get<std::string>(), e.at("path").get<std::string>(),
                          parse_split(e.at("split").get<std::string>())});
    if (j.contains("normalization")) {
      const auto& n = j["normalization"];
      m.normalization = NormalizationBounds{n.at("min").get<std::vector<double>>(),
                                            n.at("max").get<std::vector<double>>()};
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  m.base_dir = std::move(base_dir);
  m.validate();
  return m;
}

inline DatasetManifest load_manifest(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

inline void save_manifest(const fs::path& path, const DatasetManifest& m) {
  write_text_atomic(path, to_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Cubes

struct HyperspectralCube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<float> values;          // (H, W, B) row-major
  std::vector<std::uint8_t> labels;   // (H, W) row-major
  bool normalized = false;

  std::size_t pixels() const { return height * width; }

  std::span<const float> spectrum(std::size_t row, std::size_t col) const {
    return {values.data() + (row * width + col) * bands, bands};
  }
  std::span<float> spectrum(std::size_t row, std::size_t col) {
    return {values.data() + (row * width + col) * bands, bands};
  }
  float at(std::size_t row, std::size_t col, std::size_t band) const {
    return values[(row * width + col) * bands + band];
  }
  std::uint8_t label(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
};

inline std::string cube_meta_text(const HyperspectralCube& cube) {
  json meta = {{"height", cube.height},
               {"width", cube.width},
               {"bands", cube.bands},
               {"dtype", "float32"},
               {"label_dtype", "uint8"}};
  return meta.dump(2) + "\n";
}

inline void write_cube(const fs::path& dir, const HyperspectralCube& cube) {
  if (cube.values.size() != cube.pixels() * cube.bands || cube.labels.size() != cube.pixels())
    throw ArgumentError("write_cube: inconsistent cube dimensions");
  fs::create_directories(dir);
  BinaryWriter values;
  values.put_array<float>(cube.values);
  write_file_atomic(dir / "values.bin", values.bytes());
  write_file_atomic(dir / "labels.bin",
                    std::span<const char>(reinterpret_cast<const char*>(cube.labels.data()), cube.labels.size()));
  write_text_atomic(dir / "meta.json", cube_meta_text(cube));
}

// Reads a cube directory without any manifest check.
inline HyperspectralCube read_cube(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("cube directory not found: " + dir.string());
  HyperspectralCube cube;
  {
    const auto bytes = read_file_bytes(dir / "meta.json");
    try {
      const json meta = json::parse(bytes.begin(), bytes.end());
      cube.height = meta.at("height").get<std::size_t>();
      cube.width = meta.at("width").get<std::size_t>();
      cube.bands = meta.at("bands").get<std::size_t>();
      if (meta.at("dtype").get<std::string>() != "float32")
        throw FormatError("cube " + dir.string() + ": unsupported dtype");
      if (meta.contains("label_dtype") && meta["label_dtype"].get<std::string>() != "uint8")
        throw FormatError("cube " + dir.string() + ": unsupported label_dtype");
    } catch (const json::exception& e) {
      throw FormatError("cube " + dir.string() + ": malformed meta.json: " + e.what());
    }
  }
  if (cube.height == 0 || cube.width == 0 || cube.bands == 0)
    throw FormatError("cube " + dir.string() + ": dimensions must be positive");

  BinaryReader values(read_file_bytes(dir / "values.bin"));
  if (values.remaining() != cube.pixels() * cube.bands * sizeof(float))
    throw FormatError("cube " + dir.string() + ": values.bin size does not match header");
  cube.values = values.get_array<float>(cube.pixels() * cube.bands);

  const auto labels = read_file_bytes(dir / "labels.bin");
  if (labels.size() != cube.pixels())
    throw FormatError("cube " + dir.string() + ": labels.bin size does not match header");
  cube.labels.assign(labels.begin(), labels.end());
  return cube;
}

// Raw values and labels; no normalization.
inline HyperspectralCube load_cube(const fs::path& dir, const DatasetManifest& manifest) {
  auto cube = read_cube(dir);
  if (cube.bands != manifest.band_count)
    throw SchemaError("cube " + dir.string() + ": header has " + std::to_string(cube.bands) +
                      " bands, manifest expects " + std::to_string(manifest.band_count));
  for (auto l : cube.labels) {
    if (manifest.ignore_label && l == *manifest.ignore_label) continue;
    if (l >= manifest.class_count)
      throw SchemaError("cube " + dir.string() + ": label " + std::to_string(l) + " outside class range");
  }
  return cube;
}

// ---------------------------------------------------------------------------
// Preprocessing

inline HyperspectralCube drop_bands(const HyperspectralCube& cube, const DatasetManifest& manifest) {
  if (cube.bands != manifest.band_count) throw ArgumentError("drop_bands: band count mismatch");
  const auto kept = manifest.kept_bands();
  HyperspectralCube out;
  out.height = cube.height;
  out.width = cube.width;
  out.bands = kept.size();
  out.labels = cube.labels;
  out.values.resize(out.pixels() * out.bands);
  for (std::size_t p = 0; p < cube.pixels(); ++p)
    for (std::size_t k = 0; k < kept.size(); ++k)
      out.values[p * out.bands + k] = cube.values[p * cube.bands + kept[k]];
  return out;
}

// Per kept band min/max over the non-ignored pixels of the given raw cubes.
inline NormalizationBounds fit_normalization(std::span<const HyperspectralCube> train_cubes,
                                             const DatasetManifest& manifest) {
  const auto n = manifest.effective_bands();
  NormalizationBounds b{std::vector<double>(n, std::numeric_limits<double>::infinity()),
                        std::vector<double>(n, -std::numeric_limits<double>::infinity())};
  std::size_t seen = 0;
  for (const auto& raw : train_cubes) {
    const auto cube = drop_bands(raw, manifest);
    for (std::size_t p = 0; p < cube.pixels(); ++p) {
      if (manifest.ignore_label && cube.labels[p] == *manifest.ignore_label) continue;
      ++seen;
      for (std::size_t k = 0; k < n; ++k) {
        const double v = cube.values[p * n + k];
        b.min[k] = std::min(b.min[k], v);
        b.max[k] = std::max(b.max[k], v);
      }
    }
  }
  if (seen == 0) throw ArgumentError("fit_normalization: no labeled training pixels");
  return b;
}

// Drops manifest.band_drop and maps each band to [0,1] with the persisted
// training-split bounds (values outside the bounds are clamped). A band with
// max == min maps to 0. Already-normalized cubes are returned unchanged.
inline HyperspectralCube preprocess(const HyperspectralCube& cube, const DatasetManifest& manifest) {
  if (cube.normalized) return cube;
  if (!manifest.normalization) throw ArgumentError("preprocess: manifest has no normalization bounds");
  auto out = drop_bands(cube, manifest);
  const auto& nb = *manifest.normalization;
  const std::size_t n = out.bands;
  std::vector<double> scale(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (!(nb.max[k] > nb.min[k])) {
      warn("band " + std::to_string(manifest.kept_bands()[k]) + " is constant; mapped to 0");
      continue;
    }
    scale[k] = 1.0 / (nb.max[k] - nb.min[k]);
  }
  for (std::size_t p = 0; p < out.pixels(); ++p) {
    for (std::size_t k = 0; k < n; ++k) {
      float& v = out.values[p * n + k];
      const double t = (static_cast<double>(v) - nb.min[k]) * scale[k];
      v = static_cast<float>(std::clamp(t, 0.0, 1.0));
    }
  }
  out.normalized = true;
  return out;
}

// ---------------------------------------------------------------------------
// Samples

struct SpectralSample {
  std::vector<float> spectrum;
  int label = 0;
  std::string source_image;
};

// Contiguous storage for many equal-length spectra.
struct SampleSet {
  std::size_t length = 0;
  std::vector<float> spectra;            // size() * length
  std::vector<int> labels;
  std::vector<std::uint32_t> source;     // index into image_ids
  std::vector<std::string> image_ids;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const float> spectrum(std::size_t i) const { return {spectra.data() + i * length, length}; }

  SpectralSample sample(std::size_t i) const {
    auto s = spectrum(i);
    return {std::vector<float>(s.begin(), s.end()), labels[i], image_ids[source[i]]};
  }

  void push_back(std::span<const float> x, int label, std::string_view image_id) {
    if (empty() && spectra.empty()) length = x.size();
    if (x.size() != length) throw ArgumentError("SampleSet: spectrum length mismatch");
    spectra.insert(spectra.end(), x.begin(), x.end());
    labels.push_back(label);
    source.push_back(image_index(image_id));
  }

  void append(const SampleSet& other) {
    for (std::size_t i = 0; i < other.size(); ++i)
      push_back(other.spectrum(i), other.labels[i], other.image_ids[other.source[i]]);
  }

  SampleSet subset(std::span<const std::size_t> indices) const {
    SampleSet out;
    out.length = length;
    for (auto i : indices) out.push_back(spectrum(i), labels[i], image_ids[source[i]]);
    return out;
  }

  std::vector<std::size_t> class_counts(std::size_t classes) const {
    std::vector<std::size_t> counts(classes, 0);
    for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
    return counts;
  }

 private:
  std::uint32_t image_index(std::string_view id) {
    if (!image_ids.empty() && image_ids.back() == id) return static_cast<std::uint32_t>(image_ids.size() - 1);
    for (std::size_t i = 0; i < image_ids.size(); ++i)
      if (image_ids[i] == id) return static_cast<std::uint32_t>(i);
    image_ids.emplace_back(id);
    return static_cast<std::uint32_t>(image_ids.size() - 1);
  }
};

// One sample per pixel whose label is not ignore_label, row-major order.
inline SampleSet extract_labeled_pixels(const HyperspectralCube& cube, std::string_view image_id,
                                        std::optional<int> ignore_label) {
  SampleSet out;
  out.length = cube.bands;
  for (std::size_t r = 0; r < cube.height; ++r)
    for (std::size_t c = 0; c < cube.width; ++c) {
      const int l = cube.label(r, c);
      if (ignore_label && l == *ignore_label) continue;
      out.push_back(cube.spectrum(r, c), l, image_id);
    }
  return out;
}

// Loads, preprocesses and flattens the listed images. Entries whose cube
// directory is missing are skipped with a warning.
inline SampleSet load_samples(const DatasetManifest& manifest, std::span<const std::string> image_ids) {
  SampleSet out;
  out.length = manifest.effective_bands();
  for (const auto& id : image_ids) {
    const auto& img = manifest.image(id);
    const auto dir = manifest.resolve(img);
    if (!fs::exists(dir)) {
      warn("image '" + id + "' missing at " + dir.string() + "; skipped");
      continue;
    }
    const auto cube = preprocess(load_cube(dir, manifest), manifest);
    out.append(extract_labeled_pixels(cube, id, manifest.ignore_label));
  }
  return out;
}

// Manifest entries whose cube directories are absent.
inline std::vector<std::string> missing_images(const DatasetManifest& manifest) {
  std::vector<std::string> missing;
  for (const auto& img : manifest.images)
    if (!fs::exists(manifest.resolve(img))) missing.push_back(img.id);
  return missing;
}

// ---------------------------------------------------------------------------
// Share sampling and batching

inline constexpr int kSharePercents[] = {5, 10, 25, 50, 75, 100};

inline std::size_t share_size(std::size_t n, int percent) {
  const auto k = static_cast<std::size_t>(std::llround(percent / 100.0 * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

// Whole-image subset of the training images: one seeded shuffle, then the
// first max(1, round(p/100 * n)) entries. Shares are nested for a fixed seed.
// The result keeps the input order.
inline std::vector<std::string> sample_share(std::span<const std::string> train_images, int percent,
                                             std::uint64_t seed) {
  if (train_images.empty()) throw ArgumentError("sample_share: no training images");
  if (std::find(std::begin(kSharePercents), std::end(kSharePercents), percent) == std::end(kSharePercents))
    throw ArgumentError("sample_share: share must be one of 5,10,25,50,75,100");
  std::vector<std::size_t> order(train_images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5a4e));
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(share_size(train_images.size(), percent));
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(train_images[i]);
  return out;
}

// Index batches for one epoch. With shuffle, the permutation depends only on
// (seed, epoch); the final batch may be short.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                           std::uint64_t seed, std::size_t epoch,
                                                           bool shuffle = true) {
  if (batch_size == 0) throw ArgumentError("epoch_batches: batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(derive_seed(seed, 0xba7c'0000ULL + epoch));
    rng.shuffle(std::span<std::size_t>(order));
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const auto end = std::min(n, begin + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace spectra::data
