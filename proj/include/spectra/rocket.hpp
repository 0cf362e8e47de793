#pragma once

// MiniROCKET feature transform for single-channel spectra.
//
// 84 fixed kernels of length 9 (weights -1 with +2 at three taps), a
// geometric dilation schedule derived from the input length, biases taken
// as quantiles of convolution outputs on the first training batch, and PPV
// pooling. Output dimension is always 84 * 119 = 9996.
//
// Feature layout: dilation entry (outer), kernel, slot (inner).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <vector>

#include "spectra/common.hpp"
#include "spectra/data.hpp"

namespace spectra::rocket {

inline constexpr std::size_t kKernelLength = 9;
inline constexpr std::size_t kNumKernels = 84;
inline constexpr std::size_t kFeaturesPerKernel = 119;
inline constexpr std::size_t kFeatureDim = kNumKernels * kFeaturesPerKernel;
inline constexpr std::size_t kMaxDilationsPerKernel = 32;
static_assert(kFeatureDim == 9996);

struct KernelSpec {
  std::array<int, kKernelLength> weights{};
  std::array<std::size_t, 3> positive{};  // taps carrying +2, ascending
};

// All C(9,3) kernels, lexicographic in the +2 triple.
inline std::array<KernelSpec, kNumKernels> build_kernel_set() {
  std::array<KernelSpec, kNumKernels> kernels{};
  std::size_t n = 0;
  for (std::size_t a = 0; a < kKernelLength; ++a)
    for (std::size_t b = a + 1; b < kKernelLength; ++b)
      for (std::size_t c = b + 1; c < kKernelLength; ++c) {
        auto& k = kernels[n++];
        k.weights.fill(-1);
        k.weights[a] = k.weights[b] = k.weights[c] = 2;
        k.positive = {a, b, c};
      }
  return kernels;
}

inline const std::array<KernelSpec, kNumKernels>& kernel_set() {
  static const auto kernels = build_kernel_set();
  return kernels;
}

// ---------------------------------------------------------------------------
// Dilations

struct DilationEntry {
  std::size_t dilation = 1;
  std::size_t feature_count = 0;  // per kernel
  std::size_t padded_count = 0;   // per kernel, <= feature_count
};

struct DilationSchedule {
  std::size_t input_length = 0;
  std::vector<DilationEntry> entries;

  // Valid (unpadded) convolution needs the whole kernel span inside the input.
  static bool valid_feasible(std::size_t length, std::size_t dilation) {
    return length >= (kKernelLength - 1) * dilation + 1;
  }

  // Slots alternate padded/valid starting with padded on even entries.
  bool slot_padded(std::size_t entry, std::size_t slot) const {
    if (!valid_feasible(input_length, entries[entry].dilation)) return true;
    return (entry + slot) % 2 == 0;
  }

  std::size_t total_per_kernel() const {
    std::size_t s = 0;
    for (const auto& e : entries) s += e.feature_count;
    return s;
  }

  // First feature index of (entry, kernel).
  std::size_t feature_offset(std::size_t entry, std::size_t kernel) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < entry; ++i) off += kNumKernels * entries[i].feature_count;
    return off + kernel * entries[entry].feature_count;
  }
};

inline DilationSchedule dilation_schedule(std::size_t length) {
  if (length == 0) throw ArgumentError("dilation_schedule: length must be positive");
  const std::size_t points = std::min(kFeaturesPerKernel, kMaxDilationsPerKernel);
  const double max_exponent =
      std::log2(static_cast<double>(std::max<std::size_t>(length - 1, kKernelLength - 1)) /
                static_cast<double>(kKernelLength - 1));

  std::vector<std::size_t> dilations;
  std::vector<std::size_t> counts;
  for (std::size_t j = 0; j < points; ++j) {
    const double e = max_exponent * static_cast<double>(j) / static_cast<double>(points - 1);
    const auto d = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::pow(2.0, e))));
    if (!dilations.empty() && dilations.back() == d) {
      ++counts.back();
    } else {
      dilations.push_back(d);
      counts.push_back(1);
    }
  }

  const double multiplier = static_cast<double>(kFeaturesPerKernel) / static_cast<double>(points);
  std::size_t assigned = 0;
  for (auto& c : counts) {
    c = static_cast<std::size_t>(static_cast<double>(c) * multiplier);
    assigned += c;
  }
  for (std::size_t i = 0; assigned < kFeaturesPerKernel; i = (i + 1) % counts.size(), ++assigned) ++counts[i];

  DilationSchedule schedule;
  schedule.input_length = length;
  for (std::size_t i = 0; i < dilations.size(); ++i)
    schedule.entries.push_back({dilations[i], counts[i], 0});
  for (std::size_t i = 0; i < schedule.entries.size(); ++i) {
    auto& e = schedule.entries[i];
    for (std::size_t s = 0; s < e.feature_count; ++s) e.padded_count += schedule.slot_padded(i, s) ? 1 : 0;
  }
  return schedule;
}

// ---------------------------------------------------------------------------
// Convolution and pooling primitives

// Valid mode: out[t] = sum_j w_j x[t + j d], t in [0, L - 8d).
// Padded mode: centered zero padding, out[t] = sum_j w_j x[t + (j - 4) d], t in [0, L).
template <typename T>
std::vector<double> dilated_convolve(std::span<const T> x, const KernelSpec& kernel, std::size_t dilation,
                                     bool padded) {
  if (dilation == 0) throw ArgumentError("dilated_convolve: dilation must be positive");
  const auto L = static_cast<std::ptrdiff_t>(x.size());
  const auto d = static_cast<std::ptrdiff_t>(dilation);
  const std::ptrdiff_t half = 4 * d;
  if (!padded) {
    if (!DilationSchedule::valid_feasible(x.size(), dilation))
      throw ArgumentError("dilated_convolve: input shorter than kernel span in valid mode");
    std::vector<double> out(static_cast<std::size_t>(L - 2 * half));
    for (std::ptrdiff_t t = 0; t < L - 2 * half; ++t) {
      double acc = 0.0;
      for (std::ptrdiff_t j = 0; j < 9; ++j) acc += kernel.weights[j] * static_cast<double>(x[t + j * d]);
      out[static_cast<std::size_t>(t)] = acc;
    }
    return out;
  }
  std::vector<double> out(static_cast<std::size_t>(L));
  for (std::ptrdiff_t t = 0; t < L; ++t) {
    double acc = 0.0;
    for (std::ptrdiff_t j = 0; j < 9; ++j) {
      const auto idx = t + (j - 4) * d;
      if (idx >= 0 && idx < L) acc += kernel.weights[j] * static_cast<double>(x[idx]);
    }
    out[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

// Proportion of values strictly greater than the bias.
inline double ppv(std::span<const double> conv, double bias) {
  if (conv.empty()) throw ArgumentError("ppv: empty convolution output");
  std::size_t positive = 0;
  for (double v : conv) positive += v > bias ? 1 : 0;
  return static_cast<double>(positive) / static_cast<double>(conv.size());
}

// Golden-ratio low-discrepancy quantile for global feature index i.
inline double slot_quantile(std::size_t feature_index) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  const double v = static_cast<double>(feature_index + 1) * g;
  return v - std::floor(v);
}

// Nearest-rank quantile of an ascending-sorted sequence.
inline double nearest_rank(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ArgumentError("nearest_rank: empty input");
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

// ---------------------------------------------------------------------------
// Fitted state

struct FittedTransform {
  DilationSchedule schedule;
  std::vector<double> biases;  // kFeatureDim
  double scale = 0.0;          // positional scale; 0 reduces HDC to plain MiniROCKET
  std::vector<double> phases;  // kFeatureDim, in (-pi, pi]
  std::uint64_t seed = 0;

  std::size_t input_length() const { return schedule.input_length; }
  static constexpr std::size_t feature_dim() { return kFeatureDim; }
};

// Encoding phases drawn uniformly from (-pi, pi].
inline std::vector<double> draw_phases(std::size_t dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x9a5e));
  std::vector<double> phases(dim);
  for (auto& p : phases) p = std::numbers::pi - 2.0 * std::numbers::pi * rng.uniform();
  return phases;
}

namespace detail {

// Per-call scratch: shifted copies of the input for each of the 9 taps at
// one dilation, zero filled outside the signal.
struct ConvScratch {
  std::array<std::vector<double>, kKernelLength> shifted;
  std::vector<double> base;
  std::vector<double> conv;

  void prepare(std::span<const float> x, std::size_t dilation) {
    const auto L = static_cast<std::ptrdiff_t>(x.size());
    const auto d = static_cast<std::ptrdiff_t>(dilation);
    base.assign(x.size(), 0.0);
    conv.resize(x.size());
    for (std::ptrdiff_t j = 0; j < 9; ++j) {
      auto& s = shifted[static_cast<std::size_t>(j)];
      s.assign(x.size(), 0.0);
      for (std::ptrdiff_t t = 0; t < L; ++t) {
        const auto idx = t + (j - 4) * d;
        if (idx >= 0 && idx < L) s[static_cast<std::size_t>(t)] = x[static_cast<std::size_t>(idx)];
      }
      for (std::ptrdiff_t t = 0; t < L; ++t) base[static_cast<std::size_t>(t)] -= s[static_cast<std::size_t>(t)];
    }
  }

  // Padded convolution for one kernel: -sum(all taps) + 3 * sum(+2 taps).
  std::span<const double> convolve(const KernelSpec& k) {
    const auto& a = shifted[k.positive[0]];
    const auto& b = shifted[k.positive[1]];
    const auto& c = shifted[k.positive[2]];
    for (std::size_t t = 0; t < conv.size(); ++t) conv[t] = base[t] + 3.0 * (a[t] + b[t] + c[t]);
    return conv;
  }
};

// Drives the convolutions and hands every slot's output window to
// pool(feature_index, window, time_offset, bias).
template <typename Pool>
void for_each_slot(std::span<const float> x, const FittedTransform& fitted, ConvScratch& scratch, Pool&& pool) {
  const auto& schedule = fitted.schedule;
  if (x.size() != schedule.input_length)
    throw ArgumentError("transform: spectrum length " + std::to_string(x.size()) + " does not match fitted length " +
                        std::to_string(schedule.input_length));
  const auto& kernels = kernel_set();
  std::size_t feature = 0;
  for (std::size_t e = 0; e < schedule.entries.size(); ++e) {
    const auto& entry = schedule.entries[e];
    scratch.prepare(x, entry.dilation);
    const std::size_t half = (kKernelLength - 1) / 2 * entry.dilation;
    for (std::size_t k = 0; k < kNumKernels; ++k) {
      const auto conv = scratch.convolve(kernels[k]);
      for (std::size_t s = 0; s < entry.feature_count; ++s, ++feature) {
        if (schedule.slot_padded(e, s)) {
          pool(feature, conv, std::size_t{0}, fitted.biases[feature]);
        } else {
          pool(feature, conv.subspan(half, conv.size() - 2 * half), half, fitted.biases[feature]);
        }
      }
    }
  }
}

}  // namespace detail

// Picks one sample per (dilation, kernel) uniformly from the batch, convolves
// it with centered padding and sets each slot's bias to the nearest-rank
// quantile of the output.
inline std::vector<double> fit_biases(const data::SampleSet& batch, const DilationSchedule& schedule,
                                      std::uint64_t seed) {
  if (batch.empty()) throw ArgumentError("fit_biases: empty batch");
  if (batch.length != schedule.input_length) throw ArgumentError("fit_biases: length mismatch");
  Rng rng(derive_seed(seed, 0xb1a5));
  const auto& kernels = kernel_set();
  std::vector<double> biases(kFeatureDim);
  detail::ConvScratch scratch;
  std::vector<double> sorted;
  std::size_t feature = 0;
  for (const auto& entry : schedule.entries) {
    for (std::size_t k = 0; k < kNumKernels; ++k) {
      const auto pick = static_cast<std::size_t>(rng.below(batch.size()));
      scratch.prepare(batch.spectrum(pick), entry.dilation);
      const auto conv = scratch.convolve(kernels[k]);
      sorted.assign(conv.begin(), conv.end());
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t s = 0; s < entry.feature_count; ++s, ++feature)
        biases[feature] = nearest_rank(sorted, slot_quantile(feature));
    }
  }
  return biases;
}

// Fits schedule, biases and encoding phases. `scale` is stored for the HDC
// variant; plain MiniROCKET ignores it.
inline FittedTransform fit(const data::SampleSet& first_batch, std::uint64_t seed, double scale = 0.0) {
  if (first_batch.empty()) throw ArgumentError("fit: empty batch");
  if (!(scale >= 0.0)) throw ArgumentError("fit: scale must be nonnegative");
  FittedTransform f;
  f.schedule = dilation_schedule(first_batch.length);
  f.biases = fit_biases(first_batch, f.schedule, seed);
  f.phases = draw_phases(kFeatureDim, seed);
  f.scale = scale;
  f.seed = seed;
  return f;
}

template <typename Out>
void transform_into(std::span<const float> x, const FittedTransform& fitted, std::span<Out> out,
                    detail::ConvScratch& scratch) {
  if (out.size() != kFeatureDim) throw ArgumentError("transform: output span must hold 9996 features");
  detail::for_each_slot(x, fitted, scratch, [&](std::size_t i, std::span<const double> window, std::size_t, double bias) {
    out[i] = static_cast<Out>(ppv(window, bias));
  });
}

inline std::vector<double> transform(std::span<const float> x, const FittedTransform& fitted) {
  std::vector<double> out(kFeatureDim);
  detail::ConvScratch scratch;
  transform_into<double>(x, fitted, out, scratch);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
//
//   char[4]  "SPFT"
//   u32      version (1)
//   u64      seed
//   f64      scale
//   u32      input_length
//   u32      entry_count, then per entry: u32 dilation, u32 feature_count, u32 padded_count
//   u32      feature_dim (9996)
//   f64[D]   biases
//   f64[D]   phases
// All integers and floats little-endian.

inline constexpr std::uint32_t kTransformFormatVersion = 1;

inline std::vector<char> serialize(const FittedTransform& f) {
  BinaryWriter w;
  w.put_bytes("SPFT");
  w.put<std::uint32_t>(kTransformFormatVersion);
  w.put<std::uint64_t>(f.seed);
  w.put<double>(f.scale);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.schedule.input_length));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.schedule.entries.size()));
  for (const auto& e : f.schedule.entries) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.dilation));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.feature_count));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.padded_count));
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kFeatureDim));
  w.put_array<double>(f.biases);
  w.put_array<double>(f.phases);
  return w.bytes();
}

inline FittedTransform deserialize(std::vector<char> bytes) {
  BinaryReader r(std::move(bytes));
  if (r.get_bytes(4) != "SPFT") throw FormatError("transform file: bad magic");
  if (r.get<std::uint32_t>() != kTransformFormatVersion) throw FormatError("transform file: unsupported version");
  FittedTransform f;
  f.seed = r.get<std::uint64_t>();
  f.scale = r.get<double>();
  f.schedule.input_length = r.get<std::uint32_t>();
  const auto entries = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < entries; ++i) {
    DilationEntry e;
    e.dilation = r.get<std::uint32_t>();
    e.feature_count = r.get<std::uint32_t>();
    e.padded_count = r.get<std::uint32_t>();
    f.schedule.entries.push_back(e);
  }
  if (r.get<std::uint32_t>() != kFeatureDim) throw FormatError("transform file: unexpected feature dimension");
  f.biases = r.get_array<double>(kFeatureDim);
  f.phases = r.get_array<double>(kFeatureDim);
  if (!r.at_end()) throw FormatError("transform file: trailing bytes");
  if (f.schedule.total_per_kernel() != kFeaturesPerKernel)
    throw FormatError("transform file: schedule does not sum to 119 features per kernel");
  for (std::size_t i = 0; i < f.schedule.entries.size(); ++i) {
    std::size_t padded = 0;
    for (std::size_t s = 0; s < f.schedule.entries[i].feature_count; ++s) padded += f.schedule.slot_padded(i, s);
    if (padded != f.schedule.entries[i].padded_count) throw FormatError("transform file: inconsistent padding counts");
  }
  return f;
}

inline void save(const std::filesystem::path& path, const FittedTransform& f) {
  const auto bytes = serialize(f);
  write_file_atomic(path, bytes);
}

inline FittedTransform load(const std::filesystem::path& path) { return deserialize(read_file_bytes(path)); }

}  // namespace spectra::rocket
