#pragma once

// Loss, AdamW, the epoch loop with validation-mIoU checkpoint selection, and
// the two trainable models: LiuNet and a softmax head over ROCKET features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spectra/common.hpp"
#include "spectra/data.hpp"
#include "spectra/features.hpp"
#include "spectra/liunet.hpp"
#include "spectra/metrics.hpp"
#include "spectra/rocket.hpp"

namespace spectra::training {

inline constexpr double kLiuNetLearningRate = 1e-3;
inline constexpr double kRocketLearningRate = 3e-5;

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 4096;
  double learning_rate = kLiuNetLearningRate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  // ROCKET heads only.
  std::size_t bias_fit_samples = 0;   // 0: fit biases on the first batch
  bool standardize_features = false;
  std::size_t feature_cache_bytes = std::size_t{2} << 30;

  void validate() const {
    if (epochs == 0) throw ArgumentError("train config: epochs must be positive");
    if (batch_size == 0) throw ArgumentError("train config: batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ArgumentError("train config: learning rate must be positive");
    if (workers == 0) throw ArgumentError("train config: workers must be positive");
  }
};

// ---------------------------------------------------------------------------
// Loss and optimizer

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

inline LossGrad softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw ArgumentError("softmax_cross_entropy: label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  LossGrad r{lse - logits[label], std::vector<double>(logits.size())};
  for (std::size_t j = 0; j < logits.size(); ++j) r.grad[j] = std::exp(logits[j] - lse);
  r.grad[label] -= 1.0;
  return r;
}

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Decoupled weight decay, then bias-corrected Adam update.
inline void adamw_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                       const TrainConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size())
    throw ArgumentError("adamw_step: size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double step_size = cfg.learning_rate / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    params[i] *= 1.0 - cfg.learning_rate * cfg.weight_decay;
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double denom = std::sqrt(state.v[i]) / sqrt_bc2 + cfg.epsilon;
    params[i] -= step_size * state.m[i] / denom;
  }
}

// ---------------------------------------------------------------------------
// Linear softmax head

struct LinearHead {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> params;             // weights [dim][classes] then biases [classes]
  std::vector<double> feature_mean;       // empty unless standardized
  std::vector<double> feature_inv_std;

  bool standardized() const { return !feature_mean.empty(); }
  std::span<const double> weights() const { return {params.data(), dim * classes}; }
  std::span<const double> biases() const { return {params.data() + dim * classes, classes}; }

  double input(std::span<const float> f, std::size_t k) const {
    return standardized() ? (f[k] - feature_mean[k]) * feature_inv_std[k] : static_cast<double>(f[k]);
  }

  std::vector<double> logits(std::span<const float> f) const {
    std::vector<double> z(biases().begin(), biases().end());
    for (std::size_t k = 0; k < dim; ++k) {
      const double x = input(f, k);
      if (x == 0.0) continue;
      const double* w = params.data() + k * classes;
      for (std::size_t j = 0; j < classes; ++j) z[j] += x * w[j];
    }
    return z;
  }

  void accumulate_gradient(std::span<const float> f, std::span<const double> dlogits, std::span<double> grad) const {
    for (std::size_t k = 0; k < dim; ++k) {
      const double x = input(f, k);
      if (x == 0.0) continue;
      double* g = grad.data() + k * classes;
      for (std::size_t j = 0; j < classes; ++j) g[j] += x * dlogits[j];
    }
    for (std::size_t j = 0; j < classes; ++j) grad[dim * classes + j] += dlogits[j];
  }
};

inline LinearHead init_head(std::size_t dim, std::size_t classes, std::uint64_t seed) {
  LinearHead h{dim, classes, std::vector<double>(dim * classes + classes), {}, {}};
  Rng rng(derive_seed(seed, 0x4ead));
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& p : h.params) p = rng.uniform(-bound, bound);
  return h;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
  std::size_t epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  metrics::Scores scores;
};

struct BatchRows {
  std::vector<std::span<const float>> rows;
  std::vector<int> labels;
};

// Samples are summed in fixed blocks of kReduceBlock; block partials are
// reduced in block order, so results do not depend on the worker count.
inline constexpr std::size_t kReduceBlock = 256;

// Sum of per-sample losses; grad receives the summed gradient.
template <typename PerSample>
double accumulate_batch(std::size_t n, std::size_t param_count, std::size_t workers, std::span<double> grad,
                        PerSample&& per_sample) {
  const std::size_t blocks = std::max<std::size_t>(1, (n + kReduceBlock - 1) / kReduceBlock);
  std::vector<std::vector<double>> partial(blocks, std::vector<double>(param_count, 0.0));
  std::vector<double> losses(blocks, 0.0);
  parallel_for(blocks, workers, [&](std::size_t b) {
    const std::size_t end = std::min(n, (b + 1) * kReduceBlock);
    for (std::size_t i = b * kReduceBlock; i < end; ++i) losses[b] += per_sample(i, std::span<double>(partial[b]));
  });
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    loss += losses[b];
    for (std::size_t p = 0; p < param_count; ++p) grad[p] += partial[b][p];
  }
  return loss;
}

// Sum of per-sample values with the same fixed-block reduction.
template <typename PerSample>
double blocked_sum(std::size_t n, std::size_t workers, PerSample&& per_sample) {
  const std::size_t blocks = std::max<std::size_t>(1, (n + kReduceBlock - 1) / kReduceBlock);
  std::vector<double> sums(blocks, 0.0);
  parallel_for(blocks, workers, [&](std::size_t b) {
    const std::size_t end = std::min(n, (b + 1) * kReduceBlock);
    for (std::size_t i = b * kReduceBlock; i < end; ++i) sums[b] += per_sample(i);
  });
  double total = 0.0;
  for (double v : sums) total += v;
  return total;
}

// Model contract used by fit_loop:
//   std::vector<double>& parameters();
//   std::size_t classes() const;
//   std::size_t train_size() const;  std::size_t val_size() const;
//   double train_batch(std::span<const std::size_t> idx, std::span<double> grad, std::span<int> preds, workers);
//   double evaluate_val(std::vector<int>& preds, workers);
//   const std::vector<int>& train_labels() const;  const std::vector<int>& val_labels() const;
template <typename Model>
struct FitResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_miou = -1.0;
};

template <typename Model>
FitResult<Model> fit_loop(Model& model, const TrainConfig& cfg) {
  cfg.validate();
  auto& params = model.parameters();
  AdamState state(params.size());
  std::vector<double> grad(params.size());
  std::vector<double> best = params;
  FitResult<Model> result;
  const std::size_t n = model.train_size();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = data::epoch_batches(n, cfg.batch_size, cfg.seed, epoch);
    metrics::ConfusionMatrix train_cm(model.classes());
    double train_loss = 0.0;
    std::vector<int> preds;
    for (const auto& batch : batches) {
      preds.assign(batch.size(), 0);
      const double loss = model.train_batch(batch, grad, preds, cfg.workers);
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (auto& g : grad) g *= inv;
      adamw_step(params, grad, state, cfg);
      train_loss += loss;
      for (std::size_t i = 0; i < batch.size(); ++i)
        train_cm.add(static_cast<std::size_t>(model.train_labels()[batch[i]]), static_cast<std::size_t>(preds[i]));
    }
    result.log.push_back({epoch, "train", train_loss / static_cast<double>(n), metrics::scores(train_cm)});

    std::vector<int> val_preds;
    const double val_loss = model.evaluate_val(val_preds, cfg.workers);
    const auto val_cm = metrics::confusion(val_preds, model.val_labels(), model.classes());
    const auto val_scores = metrics::scores(val_cm);
    result.log.push_back({epoch, "val", val_loss / static_cast<double>(model.val_size()), val_scores});
    if (val_scores.miou > result.best_val_miou) {
      result.best_val_miou = val_scores.miou;
      result.best_epoch = epoch;
      best = params;
    }
  }
  params = std::move(best);
  return result;
}

// ---------------------------------------------------------------------------
// LiuNet

class LiuNetTrainer {
 public:
  LiuNetTrainer(liunet::LiuNetParams params, const data::SampleSet& train, const data::SampleSet& val)
      : params_(std::move(params)), train_(&train), val_(&val) {}

  std::vector<double>& parameters() { return params_.values; }
  const liunet::LiuNetParams& model() const { return params_; }
  std::size_t classes() const { return params_.arch.classes; }
  std::size_t train_size() const { return train_->size(); }
  std::size_t val_size() const { return val_->size(); }
  const std::vector<int>& train_labels() const { return train_->labels; }
  const std::vector<int>& val_labels() const { return val_->labels; }

  double train_batch(std::span<const std::size_t> idx, std::span<double> grad, std::span<int> preds,
                     std::size_t workers) {
    return accumulate_batch(idx.size(), params_.values.size(), workers, grad, [&](std::size_t i, std::span<double> g) {
      const auto fw = liunet::forward(params_, train_->spectrum(idx[i]));
      auto lg = softmax_cross_entropy(fw.logits, static_cast<std::size_t>(train_->labels[idx[i]]));
      preds[i] = static_cast<int>(argmax(fw.logits));
      liunet::backward(params_, fw, lg.grad, g);
      return lg.loss;
    });
  }

  double evaluate_val(std::vector<int>& preds, std::size_t workers) const {
    return evaluate(*val_, preds, workers);
  }

  double evaluate(const data::SampleSet& samples, std::vector<int>& preds, std::size_t workers) const {
    preds.assign(samples.size(), 0);
    return blocked_sum(samples.size(), workers, [&](std::size_t i) {
      const auto fw = liunet::forward(params_, samples.spectrum(i));
      preds[i] = static_cast<int>(argmax(fw.logits));
      return softmax_cross_entropy(fw.logits, static_cast<std::size_t>(samples.labels[i])).loss;
    });
  }

 private:
  liunet::LiuNetParams params_;
  const data::SampleSet* train_;
  const data::SampleSet* val_;
};

inline std::vector<int> predict(const liunet::LiuNetParams& params, const data::SampleSet& samples,
                                std::size_t workers = 1) {
  std::vector<int> preds(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    preds[i] = static_cast<int>(argmax(liunet::forward(params, samples.spectrum(i)).logits));
  });
  return preds;
}

struct LiuNetRun {
  liunet::LiuNetParams params;
  FitResult<LiuNetTrainer> fit;
};

inline LiuNetRun train_liunet(const data::SampleSet& train, const data::SampleSet& val, std::size_t classes,
                              const TrainConfig& cfg, liunet::Padding padding = liunet::Padding::same) {
  if (train.empty() || val.empty()) throw ArgumentError("train: train and validation sets must be nonempty");
  const auto arch = liunet::Architecture::for_input(train.length, classes, padding);
  LiuNetTrainer trainer(liunet::init_params(arch, cfg.seed), train, val);
  auto fit = fit_loop(trainer, cfg);
  return {trainer.model(), std::move(fit)};
}

// ---------------------------------------------------------------------------
// ROCKET head

struct RocketModel {
  features::Variant variant = features::Variant::minirocket;
  rocket::FittedTransform transform;
  LinearHead head;
};

// Feature rows for a sample set: cached up front when they fit the budget,
// otherwise extracted per request.
class FeatureRows {
 public:
  FeatureRows(const data::SampleSet& samples, const features::Extractor& extractor, std::size_t workers,
              std::size_t cache_bytes)
      : samples_(&samples), extractor_(&extractor) {
    if (samples.size() * rocket::kFeatureDim * sizeof(float) <= cache_bytes)
      cache_ = features::extract_all(samples, extractor, workers);
  }

  std::size_t size() const { return samples_->size(); }
  const std::vector<int>& labels() const { return samples_->labels; }
  bool cached() const { return cache_.has_value(); }

  // Rows for idx; `buffer` backs lazily extracted rows and must outlive them.
  BatchRows gather(std::span<const std::size_t> idx, std::vector<float>& buffer, std::size_t workers) const {
    BatchRows out;
    out.rows.resize(idx.size());
    out.labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out.labels[i] = samples_->labels[idx[i]];
    if (cache_) {
      for (std::size_t i = 0; i < idx.size(); ++i) out.rows[i] = cache_->row(idx[i]);
      return out;
    }
    const auto D = rocket::kFeatureDim;
    buffer.resize(idx.size() * D);
    parallel_chunks(idx.size(), workers, [&](std::size_t, std::size_t begin, std::size_t end) {
      rocket::detail::ConvScratch scratch;
      for (std::size_t i = begin; i < end; ++i)
        extractor_->extract<float>(samples_->spectrum(idx[i]), std::span<float>(buffer.data() + i * D, D), scratch);
    });
    for (std::size_t i = 0; i < idx.size(); ++i) out.rows[i] = {buffer.data() + i * D, D};
    return out;
  }

 private:
  const data::SampleSet* samples_;
  const features::Extractor* extractor_;
  std::optional<features::FeatureSet> cache_;
};

class HeadTrainer {
 public:
  HeadTrainer(LinearHead head, const FeatureRows& train, const FeatureRows& val, std::size_t block)
      : head_(std::move(head)), train_(&train), val_(&val), block_(block) {}

  std::vector<double>& parameters() { return head_.params; }
  const LinearHead& head() const { return head_; }
  std::size_t classes() const { return head_.classes; }
  std::size_t train_size() const { return train_->size(); }
  std::size_t val_size() const { return val_->size(); }
  const std::vector<int>& train_labels() const { return train_->labels(); }
  const std::vector<int>& val_labels() const { return val_->labels(); }

  double train_batch(std::span<const std::size_t> idx, std::span<double> grad, std::span<int> preds,
                     std::size_t workers) {
    const auto rows = train_->gather(idx, buffer_, workers);
    return accumulate_batch(idx.size(), head_.params.size(), workers, grad, [&](std::size_t i, std::span<double> g) {
      const auto z = head_.logits(rows.rows[i]);
      auto lg = softmax_cross_entropy(z, static_cast<std::size_t>(rows.labels[i]));
      preds[i] = static_cast<int>(argmax(z));
      head_.accumulate_gradient(rows.rows[i], lg.grad, g);
      return lg.loss;
    });
  }

  double evaluate_val(std::vector<int>& preds, std::size_t workers) {
    preds.assign(val_->size(), 0);
    double loss = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < val_->size(); begin += block_) {
      const auto end = std::min(val_->size(), begin + block_);
      idx.resize(end - begin);
      std::iota(idx.begin(), idx.end(), begin);
      const auto rows = val_->gather(idx, buffer_, workers);
      loss += blocked_sum(idx.size(), workers, [&](std::size_t i) {
        const auto z = head_.logits(rows.rows[i]);
        preds[begin + i] = static_cast<int>(argmax(z));
        return softmax_cross_entropy(z, static_cast<std::size_t>(rows.labels[i])).loss;
      });
    }
    return loss;
  }

 private:
  LinearHead head_;
  const FeatureRows* train_;
  const FeatureRows* val_;
  std::size_t block_;
  std::vector<float> buffer_;
};

// Mean and inverse standard deviation per feature over the given rows.
inline void fit_standardization(LinearHead& head, const FeatureRows& rows, std::size_t workers) {
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<float> buffer;
  const auto batch = rows.gather(idx, buffer, workers);
  std::vector<double> mean(head.dim, 0.0), sq(head.dim, 0.0);
  for (const auto& r : batch.rows)
    for (std::size_t k = 0; k < head.dim; ++k) {
      mean[k] += r[k];
      sq[k] += static_cast<double>(r[k]) * r[k];
    }
  const auto n = static_cast<double>(batch.rows.size());
  head.feature_inv_std.assign(head.dim, 1.0);
  for (std::size_t k = 0; k < head.dim; ++k) {
    mean[k] /= n;
    const double var = std::max(0.0, sq[k] / n - mean[k] * mean[k]);
    head.feature_inv_std[k] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
  head.feature_mean = std::move(mean);
}

struct RocketRun {
  RocketModel model;
  FitResult<HeadTrainer> fit;
};

// Biases are fitted on the first batch of epoch 0 (the batch the head's first
// optimizer step also sees) unless cfg.bias_fit_samples asks for a larger
// seeded subsample.
inline RocketRun train_rocket(const data::SampleSet& train, const data::SampleSet& val, std::size_t classes,
                              const TrainConfig& cfg, features::Variant variant, double scale) {
  cfg.validate();
  if (train.empty() || val.empty()) throw ArgumentError("train: train and validation sets must be nonempty");
  std::vector<std::size_t> fit_idx;
  if (cfg.bias_fit_samples > 0) {
    fit_idx.resize(train.size());
    std::iota(fit_idx.begin(), fit_idx.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, 0xf175));
    rng.shuffle(std::span<std::size_t>(fit_idx));
    fit_idx.resize(std::min(cfg.bias_fit_samples, train.size()));
  } else {
    fit_idx = data::epoch_batches(train.size(), cfg.batch_size, cfg.seed, 0).front();
  }
  const double effective_scale = variant == features::Variant::minirocket ? 0.0 : scale;

  RocketRun run;
  run.model.variant = variant;
  run.model.transform = rocket::fit(train.subset(fit_idx), cfg.seed, effective_scale);
  const features::Extractor extractor(run.model.transform, variant);
  const FeatureRows train_rows(train, extractor, cfg.workers, cfg.feature_cache_bytes);
  const FeatureRows val_rows(val, extractor, cfg.workers, cfg.feature_cache_bytes);

  auto head = init_head(rocket::kFeatureDim, classes, cfg.seed);
  if (cfg.standardize_features) fit_standardization(head, train_rows, cfg.workers);
  HeadTrainer trainer(std::move(head), train_rows, val_rows, cfg.batch_size);
  run.fit = fit_loop(trainer, cfg);
  run.model.head = trainer.head();
  return run;
}

inline std::vector<int> predict(const RocketModel& model, const data::SampleSet& samples, std::size_t workers = 1) {
  const features::Extractor extractor(model.transform, model.variant);
  std::vector<int> preds(samples.size());
  parallel_chunks(samples.size(), workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    rocket::detail::ConvScratch scratch;
    std::vector<float> f(rocket::kFeatureDim);
    for (std::size_t i = begin; i < end; ++i) {
      extractor.extract<float>(samples.spectrum(i), f, scratch);
      preds[i] = static_cast<int>(argmax(model.head.logits(f)));
    }
  });
  return preds;
}

// ---------------------------------------------------------------------------
// Head checkpoint
//
//   char[4] "SPLH", u32 version (1), u32 variant (0 minirocket, 1 hdc),
//   u32 dim, u32 classes, u8 standardized,
//   [f64[dim] mean, f64[dim] inv_std]   only when standardized
//   f64[dim*classes] weights, f64[classes] biases
// The fitted transform is stored alongside in its own file.

inline constexpr std::uint32_t kHeadVersion = 1;

inline std::vector<char> serialize_head(const LinearHead& h, features::Variant variant) {
  BinaryWriter w;
  w.put_bytes("SPLH");
  w.put<std::uint32_t>(kHeadVersion);
  w.put<std::uint32_t>(variant == features::Variant::minirocket ? 0 : 1);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(h.dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(h.classes));
  w.put<std::uint8_t>(h.standardized() ? 1 : 0);
  if (h.standardized()) {
    w.put_array<double>(h.feature_mean);
    w.put_array<double>(h.feature_inv_std);
  }
  w.put_array<double>(h.params);
  return w.bytes();
}

inline std::pair<LinearHead, features::Variant> deserialize_head(std::vector<char> bytes) {
  BinaryReader r(std::move(bytes));
  if (r.get_bytes(4) != "SPLH") throw FormatError("head checkpoint: bad magic");
  if (r.get<std::uint32_t>() != kHeadVersion) throw FormatError("head checkpoint: unsupported version");
  const auto v = r.get<std::uint32_t>();
  if (v > 1) throw FormatError("head checkpoint: unknown variant");
  LinearHead h;
  h.dim = r.get<std::uint32_t>();
  h.classes = r.get<std::uint32_t>();
  if (r.get<std::uint8_t>() != 0) {
    h.feature_mean = r.get_array<double>(h.dim);
    h.feature_inv_std = r.get_array<double>(h.dim);
  }
  h.params = r.get_array<double>(h.dim * h.classes + h.classes);
  if (!r.at_end()) throw FormatError("head checkpoint: trailing bytes");
  return {std::move(h), v == 0 ? features::Variant::minirocket : features::Variant::hdc_minirocket};
}

inline void save(const std::filesystem::path& dir, const RocketModel& m) {
  rocket::save(dir / "transform.bin", m.transform);
  write_file_atomic(dir / "head.bin", serialize_head(m.head, m.variant));
}

inline RocketModel load_rocket(const std::filesystem::path& dir) {
  RocketModel m;
  m.transform = rocket::load(dir / "transform.bin");
  auto [head, variant] = deserialize_head(read_file_bytes(dir / "head.bin"));
  m.head = std::move(head);
  m.variant = variant;
  return m;
}

}  // namespace spectra::training
