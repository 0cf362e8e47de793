#pragma once

// Independent reference implementations used by the tests. They share no
// code with the library beyond the fitted state they are given.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include <unistd.h>

#include "spectra/spectra.hpp"

namespace oracle {

// All 3-subsets of {0..8} in lexicographic order; weights -1 / +2.
inline std::vector<std::array<int, 9>> kernels() {
  std::vector<std::array<int, 9>> out;
  for (int a = 0; a < 9; ++a)
    for (int b = a + 1; b < 9; ++b)
      for (int c = b + 1; c < 9; ++c) {
        std::array<int, 9> w;
        w.fill(-1);
        w[a] = w[b] = w[c] = 2;
        out.push_back(w);
      }
  return out;
}

inline std::vector<double> conv_padded(const std::vector<double>& x, const std::array<int, 9>& w, long d) {
  const long L = static_cast<long>(x.size());
  std::vector<double> out(x.size(), 0.0);
  for (long t = 0; t < L; ++t) {
    double acc = 0.0;
    for (long j = 0; j < 9; ++j) {
      const long i = t + (j - 4) * d;
      if (i >= 0 && i < L) acc += w[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(i)];
    }
    out[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

inline std::vector<double> conv_valid(const std::vector<double>& x, const std::array<int, 9>& w, long d) {
  const long L = static_cast<long>(x.size());
  std::vector<double> out;
  for (long t = 0; t + 8 * d < L; ++t) {
    double acc = 0.0;
    for (long j = 0; j < 9; ++j) acc += w[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(t + j * d)];
    out.push_back(acc);
  }
  return out;
}

struct SlotResult {
  std::size_t positives = 0;
  std::size_t length = 0;
  double ratio = 0.0;
};

// Walks features in (dilation, kernel, slot) order. Slot s of dilation entry
// e is padded iff (e + s) is even, or valid convolution is infeasible.
template <typename Fn>
void for_each_feature(const std::vector<double>& x, const spectra::rocket::FittedTransform& f, Fn&& fn) {
  const auto ks = kernels();
  const auto L = x.size();
  std::size_t k = 0;
  for (std::size_t e = 0; e < f.schedule.entries.size(); ++e) {
    const auto& entry = f.schedule.entries[e];
    const long d = static_cast<long>(entry.dilation);
    for (std::size_t kern = 0; kern < 84; ++kern) {
      const auto padded = conv_padded(x, ks[kern], d);
      const bool feasible = L >= 8 * entry.dilation + 1;
      const auto valid = feasible ? conv_valid(x, ks[kern], d) : std::vector<double>{};
      for (std::size_t s = 0; s < entry.feature_count; ++s, ++k) {
        const bool use_pad = !feasible || (e + s) % 2 == 0;
        fn(k, use_pad ? padded : valid, use_pad ? 0 : 4 * entry.dilation);
      }
    }
  }
}

inline std::vector<SlotResult> minirocket(const std::vector<double>& x, const spectra::rocket::FittedTransform& f) {
  std::vector<SlotResult> out;
  for_each_feature(x, f, [&](std::size_t k, const std::vector<double>& conv, std::size_t) {
    SlotResult r;
    r.length = conv.size();
    for (double v : conv)
      if (v > f.biases[k]) ++r.positives;
    r.ratio = static_cast<double>(r.positives) / static_cast<double>(r.length);
    out.push_back(r);
  });
  return out;
}

inline std::vector<double> hdc(const std::vector<double>& x, const spectra::rocket::FittedTransform& f) {
  std::vector<double> out;
  const double L = static_cast<double>(x.size());
  for_each_feature(x, f, [&](std::size_t k, const std::vector<double>& conv, std::size_t offset) {
    double acc = 0.0;
    for (std::size_t t = 0; t < conv.size(); ++t) {
      const double pos = f.scale == 0.0 ? 1.0 : std::cos(f.phases[k] * f.scale * static_cast<double>(t + offset) / (L - 1));
      acc += (conv[t] > f.biases[k] ? 1.0 : -1.0) * pos;
    }
    const double T = static_cast<double>(conv.size());
    out.push_back((acc + T) / (2 * T));
  });
  return out;
}

inline std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }

// Metrics straight from the textbook definitions; classes with an empty row
// and column are skipped.
struct Brute {
  double oa, aa, f1, miou;
};

inline Brute metrics(const std::vector<std::vector<std::uint64_t>>& cm) {
  const std::size_t C = cm.size();
  double total = 0, diag = 0;
  std::vector<double> row(C, 0), col(C, 0);
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      total += static_cast<double>(cm[i][j]);
      row[i] += static_cast<double>(cm[i][j]);
      col[j] += static_cast<double>(cm[i][j]);
      if (i == j) diag += static_cast<double>(cm[i][j]);
    }
  double aa = 0, f1 = 0, iou = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < C; ++i) {
    if (row[i] == 0 && col[i] == 0) continue;
    ++n;
    const double tp = static_cast<double>(cm[i][i]);
    const double rec = row[i] > 0 ? tp / row[i] : 0.0;
    const double prec = col[i] > 0 ? tp / col[i] : 0.0;
    aa += rec;
    f1 += (prec + rec) > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    iou += tp / (row[i] + col[i] - tp);
  }
  return {diag / total, aa / static_cast<double>(n), f1 / static_cast<double>(n), iou / static_cast<double>(n)};
}

// Spectra on a 2^-24 grid in [0,1).
inline spectra::data::SampleSet random_spectra(std::size_t n, std::size_t length, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  spectra::data::SampleSet s;
  s.length = length;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> x(length);
    for (auto& v : x) v = static_cast<float>(static_cast<double>(gen() >> 40) * 0x1.0p-24);
    s.push_back(x, static_cast<int>(i % 3), "r");
  }
  return s;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("spectra_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace oracle
