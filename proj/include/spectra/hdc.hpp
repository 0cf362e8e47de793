#pragma once

// HDC-MiniROCKET: convolution outputs are bipolarized against the bias,
// bound to a cosine fractional-power positional code and bundled over time.
// With scale 0 every positional value is 1 and the result equals PPV.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "spectra/rocket.hpp"

namespace spectra::hdc {

// The scale sweep set; 5 is the default.
inline constexpr double kScaleSweep[] = {1, 2, 5, 7, 10, 20, 50, 100};
inline constexpr double kDefaultScale = 5.0;

// p_k(t) = cos(phase_k * scale * t / (L - 1)), stored row-major (k, t).
struct PositionalEncoding {
  std::vector<double> phases;
  double scale = 0.0;
  std::size_t length = 0;
  std::vector<double> table;

  std::size_t dim() const { return phases.size(); }

  std::span<const double> row(std::size_t k) const { return {table.data() + k * length, length}; }

  double value(std::size_t k, std::size_t t) const { return table[k * length + t]; }

  // (1/D) sum_k p_k(t1) p_k(t2)
  double similarity(std::size_t t1, std::size_t t2) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < dim(); ++k) acc += value(k, t1) * value(k, t2);
    return acc / static_cast<double>(dim());
  }
};

inline PositionalEncoding encoding_from_phases(std::vector<double> phases, std::size_t length, double scale) {
  if (length == 0) throw ArgumentError("positional encoding: length must be positive");
  if (!(scale >= 0.0)) throw ArgumentError("positional encoding: scale must be nonnegative");
  if (scale > 0.0 && length < 2) throw ArgumentError("positional encoding: length must be >= 2 when scale > 0");
  PositionalEncoding enc;
  enc.phases = std::move(phases);
  enc.scale = scale;
  enc.length = length;
  enc.table.assign(enc.phases.size() * length, 1.0);
  if (scale > 0.0) {
    const double step = scale / static_cast<double>(length - 1);
    for (std::size_t k = 0; k < enc.phases.size(); ++k)
      for (std::size_t t = 0; t < length; ++t)
        enc.table[k * length + t] = std::cos(enc.phases[k] * step * static_cast<double>(t));
  }
  return enc;
}

inline PositionalEncoding make_encoding(std::size_t dim, std::size_t length, double scale, std::uint64_t seed) {
  return encoding_from_phases(rocket::draw_phases(dim, seed), length, scale);
}

// (sum_t c(t) p(t) + T) / (2T) with c(t) = +1 if conv[t] > bias else -1.
inline double graded_ppv(std::span<const double> conv, double bias, std::span<const double> p_row) {
  if (conv.empty()) throw ArgumentError("graded_ppv: empty convolution output");
  if (p_row.size() != conv.size()) throw ArgumentError("graded_ppv: positional row length mismatch");
  double bundle = 0.0;
  for (std::size_t t = 0; t < conv.size(); ++t) bundle += conv[t] > bias ? p_row[t] : -p_row[t];
  const auto T = static_cast<double>(conv.size());
  return (bundle + T) / (2.0 * T);
}

// Positional table bound to a fitted transform; build once, reuse for every
// spectrum.
class Encoder {
 public:
  explicit Encoder(const rocket::FittedTransform& fitted)
      : fitted_(&fitted),
        encoding_(encoding_from_phases(fitted.phases, fitted.input_length(), fitted.scale)) {
    if (fitted.phases.size() != rocket::kFeatureDim) throw ArgumentError("hdc: fitted transform has no phases");
  }

  const PositionalEncoding& encoding() const { return encoding_; }
  const rocket::FittedTransform& fitted() const { return *fitted_; }

  // Valid windows start at the center tap, so window[t] aligns with input
  // position t + offset.
  template <typename Out>
  void transform_into(std::span<const float> x, std::span<Out> out, rocket::detail::ConvScratch& scratch) const {
    if (out.size() != rocket::kFeatureDim) throw ArgumentError("hdc_transform: output span must hold 9996 features");
    rocket::detail::for_each_slot(
        x, *fitted_, scratch, [&](std::size_t i, std::span<const double> window, std::size_t offset, double bias) {
          out[i] = static_cast<Out>(graded_ppv(window, bias, encoding_.row(i).subspan(offset, window.size())));
        });
  }

  std::vector<double> transform(std::span<const float> x) const {
    std::vector<double> out(rocket::kFeatureDim);
    rocket::detail::ConvScratch scratch;
    transform_into<double>(x, out, scratch);
    return out;
  }

 private:
  const rocket::FittedTransform* fitted_;
  PositionalEncoding encoding_;
};

// One-shot convenience; builds the positional table on every call.
inline std::vector<double> hdc_transform(std::span<const float> x, const rocket::FittedTransform& fitted) {
  return Encoder(fitted).transform(x);
}

}  // namespace spectra::hdc
