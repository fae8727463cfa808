#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "resdiv/contribution_matrix.hpp"
#include "resdiv/role.hpp"

namespace resdiv {

struct ToyConfig {
  std::size_t vocab_size = 16;
  std::size_t d_model = 8;
  std::size_t n_blocks = 2;
  std::size_t n_heads = 2;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t d_ff() const { return 4 * d_model; }
  std::size_t num_layers() const { return 1 + 2 * n_blocks; }

  // Throws ConfigError on zero sizes or when n_heads does not divide d_model.
  void validate() const;
};

// Epsilon inside every RMSNorm: rms(x) = sqrt(mean(x^2) + eps).
inline constexpr double kRmsNormEps = 1e-5;

// Row-major dense matrix; rows are output features.
template <typename T>
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T{0}) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

template <typename T>
struct ToyBlock {
  std::vector<T> attn_norm_gain;
  Tensor2<T> wq, wk, wv, wo;  // d_model x d_model
  std::vector<T> mlp_norm_gain;
  Tensor2<T> w_up;    // d_ff x d_model
  Tensor2<T> w_down;  // d_model x d_ff
};

// Pre-LN decoder-only transformer with RMSNorm, causal multi-head attention and
// a SiLU MLP. Weights are random (seeded) and never trained. Fields are public
// so tests can pin individual parameters; build_toy_model is the only
// supported way to create a consistent model.
template <typename T>
struct BasicToyModel {
  ToyConfig config;
  Tensor2<T> token_embedding;  // vocab x d_model
  std::vector<ToyBlock<T>> blocks;
  std::vector<T> final_norm_gain;  // gamma
  Tensor2<T> unembedding;          // W_out, vocab x d_model

  // Sinusoidal position code, folded into the embedding contribution.
  std::vector<T> positional(std::size_t position) const;

  // FNV-1a over the bytes of every parameter in construction order.
  std::uint64_t checksum() const;
};

using ToyModel = BasicToyModel<float>;
using ToyModel64 = BasicToyModel<double>;

// Residual-stream contributions at the last position of one forward pass.
template <typename T>
struct BasicRawStream {
  std::vector<std::vector<T>> contributions;  // z(1)..z(L), each d_model
  std::vector<Role> roles;
  std::vector<T> final_scale;       // s = gamma / rms(sum z)
  std::vector<T> reference_logits;  // W_out(RMSNorm(sum z)), full vocabulary

  std::uint64_t checksum() const;
};

using RawStream = BasicRawStream<float>;
using RawStream64 = BasicRawStream<double>;

// Weights come from one SplitMix64 stream seeded by config.seed, drawn in the
// order: token embedding, per block (wq, wk, wv, wo, w_up, w_down), unembedding.
// Each matrix is uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
BasicToyModel<T> build_toy_model(const ToyConfig& config);

// Throws InputError on an empty sequence or an out-of-range token.
template <typename T>
BasicRawStream<T> forward_collect(const BasicToyModel<T>& model,
                                  std::span<const std::size_t> token_ids);

// u(i) = W_out(s * z(i)) restricted to option_ids (all columns when absent).
// The single final scale s is applied to every layer.
template <typename T>
ContributionMatrix project_contributions(
    const BasicRawStream<T>& raw, const BasicToyModel<T>& model,
    std::optional<std::span<const std::size_t>> option_ids = std::nullopt);

// reference_logits picked at option_ids, upcast to 64-bit.
template <typename T>
std::vector<double> restricted_reference(const BasicRawStream<T>& raw,
                                         std::span<const std::size_t> option_ids);

// max_j |a_j - b_j| / max(max_j |b_j|, tiny): the relative error measure used
// for reconstruction checks.
double max_relative_error(std::span<const double> actual, std::span<const double> reference);

extern template struct BasicToyModel<float>;
extern template struct BasicToyModel<double>;
extern template struct BasicRawStream<float>;
extern template struct BasicRawStream<double>;

}  // namespace resdiv
