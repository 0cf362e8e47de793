#pragma once

// Confusion matrix and the four aggregate scores (OA, AA, macro F1, mIoU).
//
// Classes with an empty row and an empty column are absent and excluded
// from the class means. Per-class values with a zero denominator count as 0.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spectra/common.hpp"

namespace spectra::metrics {

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }

  // counts[truth][prediction]
  std::uint64_t operator()(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
  std::uint64_t& operator()(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }

  void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1) {
    if (truth >= classes_ || pred >= classes_) throw ArgumentError("confusion: class index out of range");
    counts_[truth * classes_ + pred] += n;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw ArgumentError("confusion: class count mismatch in merge");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
  }

  std::uint64_t row_sum(std::size_t i) const {
    std::uint64_t s = 0;
    for (std::size_t j = 0; j < classes_; ++j) s += (*this)(i, j);
    return s;
  }
  std::uint64_t col_sum(std::size_t j) const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < classes_; ++i) s += (*this)(i, j);
    return s;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < classes_; ++i) s += (*this)(i, i);
    return s;
  }
  bool present(std::size_t i) const { return row_sum(i) > 0 || col_sum(i) > 0; }

  const std::vector<std::uint64_t>& counts() const { return counts_; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
};

template <typename P, typename L>
ConfusionMatrix confusion(std::span<const P> preds, std::span<const L> labels, std::size_t classes) {
  if (preds.size() != labels.size()) throw ArgumentError("confusion: predictions and labels differ in length");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i)
    cm.add(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(preds[i]));
  return cm;
}

template <typename P, typename L>
ConfusionMatrix confusion(const std::vector<P>& preds, const std::vector<L>& labels, std::size_t classes) {
  return confusion(std::span<const P>(preds), std::span<const L>(labels), classes);
}

namespace detail {
inline void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ArgumentError("metrics: confusion matrix is empty");
}

template <typename PerClass>
double present_mean(const ConfusionMatrix& cm, PerClass&& value) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    if (!cm.present(i)) continue;
    sum += value(i);
    ++n;
  }
  return sum / static_cast<double>(n);
}
}  // namespace detail

inline double class_recall(const ConfusionMatrix& cm, std::size_t i) {
  const auto r = cm.row_sum(i);
  return r == 0 ? 0.0 : static_cast<double>(cm(i, i)) / static_cast<double>(r);
}

inline double class_precision(const ConfusionMatrix& cm, std::size_t i) {
  const auto c = cm.col_sum(i);
  return c == 0 ? 0.0 : static_cast<double>(cm(i, i)) / static_cast<double>(c);
}

// 2 tp / (row + col); equals the harmonic mean of precision and recall.
inline double class_f1(const ConfusionMatrix& cm, std::size_t i) {
  const auto denom = cm.row_sum(i) + cm.col_sum(i);
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(cm(i, i)) / static_cast<double>(denom);
}

inline double class_iou(const ConfusionMatrix& cm, std::size_t i) {
  const auto denom = cm.row_sum(i) + cm.col_sum(i) - cm(i, i);
  return denom == 0 ? 0.0 : static_cast<double>(cm(i, i)) / static_cast<double>(denom);
}

inline double overall_accuracy(const ConfusionMatrix& cm) {
  detail::require_nonempty(cm);
  return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

inline double average_accuracy(const ConfusionMatrix& cm) {
  detail::require_nonempty(cm);
  return detail::present_mean(cm, [&](std::size_t i) { return class_recall(cm, i); });
}

inline double macro_f1(const ConfusionMatrix& cm) {
  detail::require_nonempty(cm);
  return detail::present_mean(cm, [&](std::size_t i) { return class_f1(cm, i); });
}

inline double mean_iou(const ConfusionMatrix& cm) {
  detail::require_nonempty(cm);
  return detail::present_mean(cm, [&](std::size_t i) { return class_iou(cm, i); });
}

// Per-class accuracy (recall); absent classes have no value.
inline std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.classes());
  for (std::size_t i = 0; i < cm.classes(); ++i)
    if (cm.row_sum(i) > 0) out[i] = class_recall(cm, i);
  return out;
}

struct Scores {
  double oa = 0, aa = 0, f1 = 0, miou = 0;
};

inline Scores scores(const ConfusionMatrix& cm) {
  return {overall_accuracy(cm), average_accuracy(cm), macro_f1(cm), mean_iou(cm)};
}

}  // namespace spectra::metrics
