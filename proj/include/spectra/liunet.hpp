#pragma once

// 1D-Justo-LiuNet: up to four (conv k=6 -> ReLU -> maxpool 2) stages with
// widths 6, 12, 18, 24, flattened into a single dense softmax layer.
// Parameters live in one flat vector so optimizers can treat them uniformly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "spectra/common.hpp"

namespace spectra::liunet {

inline constexpr std::array<std::size_t, 4> kWidths = {6, 12, 18, 24};
inline constexpr std::size_t kKernelSize = 6;
inline constexpr std::size_t kPoolSize = 2;

enum class Padding : std::uint32_t { same = 0, valid = 1 };

inline std::size_t conv_output_length(std::size_t length, Padding padding) {
  if (padding == Padding::same) return length;
  return length >= kKernelSize ? length - kKernelSize + 1 : 0;
}

inline std::size_t pool_output_length(std::size_t length) { return length / kPoolSize; }

// Largest depth <= 4 whose final feature map is non-empty.
inline std::size_t adapt_depth(std::size_t input_length, Padding padding = Padding::same) {
  std::size_t depth = 0;
  std::size_t len = input_length;
  for (std::size_t i = 0; i < kWidths.size(); ++i) {
    len = pool_output_length(conv_output_length(len, padding));
    if (len == 0) break;
    depth = i + 1;
  }
  if (depth == 0) throw ArgumentError("adapt_depth: input of length " + std::to_string(input_length) + " is too short");
  return depth;
}

struct Architecture {
  std::size_t input_length = 0;
  std::size_t classes = 0;
  std::size_t depth = 4;
  Padding padding = Padding::same;

  std::size_t in_channels(std::size_t stage) const { return stage == 0 ? 1 : kWidths[stage - 1]; }
  std::size_t out_channels(std::size_t stage) const { return kWidths[stage]; }

  // Length entering each stage, plus the final pooled length at the back.
  std::vector<std::size_t> length_trace() const {
    std::vector<std::size_t> lengths{input_length};
    for (std::size_t s = 0; s < depth; ++s)
      lengths.push_back(pool_output_length(conv_output_length(lengths.back(), padding)));
    return lengths;
  }

  std::size_t flat_dim() const { return out_channels(depth - 1) * length_trace().back(); }

  std::size_t conv_weight_count(std::size_t s) const { return out_channels(s) * in_channels(s) * kKernelSize; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t s = 0; s < depth; ++s) n += conv_weight_count(s) + out_channels(s);
    return n + flat_dim() * classes + classes;
  }

  void validate() const {
    if (depth < 1 || depth > kWidths.size()) throw ArgumentError("liunet: depth must be in 1..4");
    if (classes < 1) throw ArgumentError("liunet: need at least one class");
    const auto trace = length_trace();
    for (std::size_t s = 1; s < trace.size(); ++s)
      if (trace[s] == 0) throw ArgumentError("liunet: feature map collapses to zero length at stage " + std::to_string(s));
  }

  static Architecture for_input(std::size_t input_length, std::size_t classes, Padding padding = Padding::same) {
    Architecture a{input_length, classes, adapt_depth(input_length, padding), padding};
    a.validate();
    return a;
  }
};

// Offsets into the flat parameter vector.
struct Layout {
  std::vector<std::size_t> conv_w, conv_b;
  std::size_t dense_w = 0, dense_b = 0, total = 0;

  explicit Layout(const Architecture& a) {
    std::size_t off = 0;
    for (std::size_t s = 0; s < a.depth; ++s) {
      conv_w.push_back(off);
      off += a.conv_weight_count(s);
      conv_b.push_back(off);
      off += a.out_channels(s);
    }
    dense_w = off;
    off += a.flat_dim() * a.classes;
    dense_b = off;
    off += a.classes;
    total = off;
  }
};

struct LiuNetParams {
  Architecture arch;
  std::vector<double> values;

  std::size_t param_count() const { return values.size(); }
};

inline std::size_t param_count(const LiuNetParams& p) { return p.values.size(); }

// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline LiuNetParams init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  const Layout layout(arch);
  LiuNetParams p{arch, std::vector<double>(layout.total)};
  Rng rng(derive_seed(seed, 0x11e7));
  auto fill = [&](std::size_t begin, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) p.values[begin + i] = rng.uniform(-bound, bound);
  };
  for (std::size_t s = 0; s < arch.depth; ++s) {
    const auto fan_in = arch.in_channels(s) * kKernelSize;
    fill(layout.conv_w[s], arch.conv_weight_count(s), fan_in);
    fill(layout.conv_b[s], arch.out_channels(s), fan_in);
  }
  fill(layout.dense_w, arch.flat_dim() * arch.classes, arch.flat_dim());
  fill(layout.dense_b, arch.classes, arch.flat_dim());
  return p;
}

struct StageCache {
  std::size_t in_len = 0, conv_len = 0, pool_len = 0;
  std::vector<double> input;     // in_ch x in_len
  std::vector<double> preact;    // out_ch x conv_len
  std::vector<double> pooled;    // out_ch x pool_len
  std::vector<std::uint32_t> argmax;  // out_ch x pool_len, index into conv_len
};

struct ForwardResult {
  std::vector<double> logits;
  std::vector<StageCache> stages;
  std::vector<double> flat;
};

inline std::size_t left_padding(Padding padding) { return padding == Padding::same ? (kKernelSize - 1) / 2 : 0; }

template <typename T>
ForwardResult forward(const LiuNetParams& params, std::span<const T> x) {
  const auto& a = params.arch;
  if (x.size() != a.input_length)
    throw ArgumentError("liunet forward: input length " + std::to_string(x.size()) + " != " +
                        std::to_string(a.input_length));
  const Layout layout(a);
  const auto pad = static_cast<std::ptrdiff_t>(left_padding(a.padding));
  ForwardResult r;
  r.stages.resize(a.depth);
  std::vector<double> current(x.begin(), x.end());
  std::size_t len = a.input_length;
  for (std::size_t s = 0; s < a.depth; ++s) {
    auto& st = r.stages[s];
    const auto in_ch = a.in_channels(s), out_ch = a.out_channels(s);
    st.in_len = len;
    st.conv_len = conv_output_length(len, a.padding);
    st.pool_len = pool_output_length(st.conv_len);
    st.input = std::move(current);
    st.preact.assign(out_ch * st.conv_len, 0.0);
    const double* w = params.values.data() + layout.conv_w[s];
    const double* b = params.values.data() + layout.conv_b[s];
    for (std::size_t o = 0; o < out_ch; ++o) {
      for (std::size_t t = 0; t < st.conv_len; ++t) {
        double acc = b[o];
        for (std::size_t c = 0; c < in_ch; ++c) {
          const double* wk = w + (o * in_ch + c) * kKernelSize;
          const double* in = st.input.data() + c * len;
          for (std::size_t j = 0; j < kKernelSize; ++j) {
            const auto idx = static_cast<std::ptrdiff_t>(t + j) - pad;
            if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(len)) acc += wk[j] * in[idx];
          }
        }
        st.preact[o * st.conv_len + t] = acc;
      }
    }
    st.pooled.assign(out_ch * st.pool_len, 0.0);
    st.argmax.assign(out_ch * st.pool_len, 0);
    for (std::size_t o = 0; o < out_ch; ++o)
      for (std::size_t u = 0; u < st.pool_len; ++u) {
        std::size_t best = u * kPoolSize;
        double best_v = std::max(0.0, st.preact[o * st.conv_len + best]);
        for (std::size_t q = 1; q < kPoolSize; ++q) {
          const double v = std::max(0.0, st.preact[o * st.conv_len + u * kPoolSize + q]);
          if (v > best_v) {
            best_v = v;
            best = u * kPoolSize + q;
          }
        }
        st.pooled[o * st.pool_len + u] = best_v;
        st.argmax[o * st.pool_len + u] = static_cast<std::uint32_t>(best);
      }
    current = st.pooled;
    len = st.pool_len;
  }
  r.flat = std::move(current);
  const double* dw = params.values.data() + layout.dense_w;
  const double* db = params.values.data() + layout.dense_b;
  r.logits.assign(db, db + a.classes);
  for (std::size_t i = 0; i < r.flat.size(); ++i) {
    const double f = r.flat[i];
    if (f == 0.0) continue;
    for (std::size_t j = 0; j < a.classes; ++j) r.logits[j] += f * dw[i * a.classes + j];
  }
  return r;
}

// Accumulates (+=) d loss / d params into grad for one sample.
inline void backward(const LiuNetParams& params, const ForwardResult& cache, std::span<const double> dlogits,
                     std::span<double> grad) {
  const auto& a = params.arch;
  if (grad.size() != params.values.size()) throw ArgumentError("liunet backward: gradient size mismatch");
  if (dlogits.size() != a.classes) throw ArgumentError("liunet backward: dlogits size mismatch");
  const Layout layout(a);
  const auto pad = static_cast<std::ptrdiff_t>(left_padding(a.padding));

  const double* dw = params.values.data() + layout.dense_w;
  std::vector<double> upstream(cache.flat.size(), 0.0);
  for (std::size_t i = 0; i < cache.flat.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.classes; ++j) {
      grad[layout.dense_w + i * a.classes + j] += cache.flat[i] * dlogits[j];
      acc += dw[i * a.classes + j] * dlogits[j];
    }
    upstream[i] = acc;
  }
  for (std::size_t j = 0; j < a.classes; ++j) grad[layout.dense_b + j] += dlogits[j];

  for (std::size_t s = a.depth; s-- > 0;) {
    const auto& st = cache.stages[s];
    const auto in_ch = a.in_channels(s), out_ch = a.out_channels(s);
    // pool -> relu -> conv pre-activation
    std::vector<double> dpre(out_ch * st.conv_len, 0.0);
    for (std::size_t o = 0; o < out_ch; ++o)
      for (std::size_t u = 0; u < st.pool_len; ++u) {
        const auto t = st.argmax[o * st.pool_len + u];
        if (st.preact[o * st.conv_len + t] > 0.0) dpre[o * st.conv_len + t] += upstream[o * st.pool_len + u];
      }
    const double* w = params.values.data() + layout.conv_w[s];
    std::vector<double> dinput(s > 0 ? in_ch * st.in_len : 0, 0.0);
    for (std::size_t o = 0; o < out_ch; ++o) {
      for (std::size_t t = 0; t < st.conv_len; ++t) {
        const double g = dpre[o * st.conv_len + t];
        if (g == 0.0) continue;
        grad[layout.conv_b[s] + o] += g;
        for (std::size_t c = 0; c < in_ch; ++c) {
          const std::size_t wbase = (o * in_ch + c) * kKernelSize;
          const double* in = st.input.data() + c * st.in_len;
          for (std::size_t j = 0; j < kKernelSize; ++j) {
            const auto idx = static_cast<std::ptrdiff_t>(t + j) - pad;
            if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(st.in_len)) continue;
            grad[layout.conv_w[s] + wbase + j] += g * in[idx];
            if (s > 0) dinput[c * st.in_len + static_cast<std::size_t>(idx)] += g * w[wbase + j];
          }
        }
      }
    }
    upstream = std::move(dinput);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint
//
//   char[4] "SPLN", u32 version (1), u32 input_length, u32 classes, u32 depth,
//   u32 kernel_size (6), u32 pool_size (2), u32 padding (0 same, 1 valid),
//   u64 parameter count N, f64[N] parameters (layout order: per stage conv
//   weights [out][in][k] then biases, dense weights [flat][class], dense biases).

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<char> serialize(const LiuNetParams& p) {
  BinaryWriter w;
  w.put_bytes("SPLN");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.arch.input_length));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.arch.classes));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.arch.depth));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kKernelSize));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kPoolSize));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.arch.padding));
  w.put<std::uint64_t>(p.values.size());
  w.put_array<double>(p.values);
  return w.bytes();
}

inline LiuNetParams deserialize(std::vector<char> bytes) {
  BinaryReader r(std::move(bytes));
  if (r.get_bytes(4) != "SPLN") throw FormatError("liunet checkpoint: bad magic");
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw FormatError("liunet checkpoint: unsupported version");
  LiuNetParams p;
  p.arch.input_length = r.get<std::uint32_t>();
  p.arch.classes = r.get<std::uint32_t>();
  p.arch.depth = r.get<std::uint32_t>();
  if (r.get<std::uint32_t>() != kKernelSize || r.get<std::uint32_t>() != kPoolSize)
    throw FormatError("liunet checkpoint: unsupported kernel/pool size");
  const auto padding = r.get<std::uint32_t>();
  if (padding > 1) throw FormatError("liunet checkpoint: unknown padding mode");
  p.arch.padding = static_cast<Padding>(padding);
  try {
    p.arch.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("liunet checkpoint: ") + e.what());
  }
  const auto n = r.get<std::uint64_t>();
  if (n != p.arch.param_count()) throw FormatError("liunet checkpoint: parameter count does not match architecture");
  p.values = r.get_array<double>(n);
  if (!r.at_end()) throw FormatError("liunet checkpoint: trailing bytes");
  return p;
}

inline void save(const std::filesystem::path& path, const LiuNetParams& p) { write_file_atomic(path, serialize(p)); }

inline LiuNetParams load(const std::filesystem::path& path) { return deserialize(read_file_bytes(path)); }

}  // namespace spectra::liunet
