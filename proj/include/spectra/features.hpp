#pragma once

// Bulk feature extraction over sample sets for both ROCKET variants.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "spectra/data.hpp"
#include "spectra/hdc.hpp"
#include "spectra/rocket.hpp"

namespace spectra::features {

enum class Variant { minirocket, hdc_minirocket };

inline std::string_view to_string(Variant v) { return v == Variant::minirocket ? "minirocket" : "hdc-minirocket"; }

class Extractor {
 public:
  Extractor(const rocket::FittedTransform& fitted, Variant variant) : fitted_(&fitted), variant_(variant) {
    if (variant == Variant::hdc_minirocket) encoder_.emplace(fitted);
  }

  Variant variant() const { return variant_; }
  std::size_t input_length() const { return fitted_->input_length(); }
  static constexpr std::size_t dim() { return rocket::kFeatureDim; }

  template <typename Out>
  void extract(std::span<const float> x, std::span<Out> out, rocket::detail::ConvScratch& scratch) const {
    if (encoder_)
      encoder_->transform_into<Out>(x, out, scratch);
    else
      rocket::transform_into<Out>(x, *fitted_, out, scratch);
  }

 private:
  const rocket::FittedTransform* fitted_;
  Variant variant_;
  std::optional<hdc::Encoder> encoder_;
};

// Row-major float features with labels.
struct FeatureSet {
  std::size_t width = rocket::kFeatureDim;
  std::vector<float> values;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * width, width}; }
};

inline FeatureSet extract_all(const data::SampleSet& samples, const Extractor& extractor, std::size_t workers) {
  FeatureSet out;
  out.labels = samples.labels;
  out.values.resize(samples.size() * out.width);
  parallel_chunks(samples.size(), workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    rocket::detail::ConvScratch scratch;
    for (std::size_t i = begin; i < end; ++i)
      extractor.extract<float>(samples.spectrum(i), std::span<float>(out.values.data() + i * out.width, out.width),
                               scratch);
  });
  return out;
}

}  // namespace spectra::features
