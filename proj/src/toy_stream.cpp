#include "resdiv/toy_stream.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "resdiv/error.hpp"
#include "resdiv/splitmix64.hpp"

namespace resdiv {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

template <typename T>
void fnv_mix(std::uint64_t& h, std::span<const T> values) {
  for (const T& v : values) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= kFnvPrime;
    }
  }
}

template <typename T>
Tensor2<T> glorot(SplitMix64& rng, std::size_t rows, std::size_t cols) {
  Tensor2<T> m(rows, cols);
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (T& v : m.data) v = static_cast<T>(rng.uniform(-a, a));
  return m;
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
std::vector<T> matvec(const Tensor2<T>& w, std::span<const T> x) {
  std::vector<T> y(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) y[r] = dot<T>(w.row(r), x);
  return y;
}

template <typename T>
T inverse_rms(std::span<const T> x) {
  T ms{0};
  for (T v : x) ms += v * v;
  ms /= static_cast<T>(x.size());
  return T{1} / std::sqrt(ms + static_cast<T>(kRmsNormEps));
}

template <typename T>
std::vector<T> rms_norm(std::span<const T> x, std::span<const T> gain) {
  const T inv = inverse_rms(x);
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * gain[i];
  return y;
}

template <typename T>
T silu(T x) {
  return x / (T{1} + std::exp(-x));
}

using Sequence = std::vector<std::size_t>;

// Causal multi-head self-attention over normalized inputs; returns the output
// projection at every position.
template <typename T>
std::vector<std::vector<T>> attention(const ToyBlock<T>& block, const ToyConfig& cfg,
                                      const std::vector<std::vector<T>>& normed) {
  const std::size_t n = normed.size();
  const std::size_t hd = cfg.head_dim();
  std::vector<std::vector<T>> q(n), k(n), v(n);
  for (std::size_t p = 0; p < n; ++p) {
    q[p] = matvec(block.wq, std::span<const T>(normed[p]));
    k[p] = matvec(block.wk, std::span<const T>(normed[p]));
    v[p] = matvec(block.wv, std::span<const T>(normed[p]));
  }
  const T scale = T{1} / std::sqrt(static_cast<T>(hd));
  std::vector<std::vector<T>> out(n);
  std::vector<T> scores(n);
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<T> ctx(cfg.d_model, T{0});
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const std::size_t off = h * hd;
      T max_score = -std::numeric_limits<T>::infinity();
      for (std::size_t t = 0; t <= p; ++t) {
        scores[t] = dot<T>(std::span<const T>(q[p]).subspan(off, hd),
                           std::span<const T>(k[t]).subspan(off, hd)) *
                    scale;
        max_score = std::max(max_score, scores[t]);
      }
      T denom{0};
      for (std::size_t t = 0; t <= p; ++t) {
        scores[t] = std::exp(scores[t] - max_score);
        denom += scores[t];
      }
      for (std::size_t t = 0; t <= p; ++t) {
        const T w = scores[t] / denom;
        for (std::size_t i = 0; i < hd; ++i) ctx[off + i] += w * v[t][off + i];
      }
    }
    out[p] = matvec(block.wo, std::span<const T>(ctx));
  }
  return out;
}

template <typename T>
std::vector<T> mlp(const ToyBlock<T>& block, std::span<const T> normed) {
  std::vector<T> hidden = matvec(block.w_up, normed);
  for (T& x : hidden) x = silu(x);
  return matvec(block.w_down, std::span<const T>(hidden));
}

template <typename T>
void check_finite(const BasicToyModel<T>& m) {
  auto finite = [](std::span<const T> xs) {
    return std::all_of(xs.begin(), xs.end(), [](T x) { return std::isfinite(x); });
  };
  bool ok = finite(m.token_embedding.data) && finite(m.final_norm_gain) &&
            finite(m.unembedding.data);
  for (const auto& b : m.blocks) {
    ok = ok && finite(b.attn_norm_gain) && finite(b.mlp_norm_gain) && finite(b.wq.data) &&
         finite(b.wk.data) && finite(b.wv.data) && finite(b.wo.data) && finite(b.w_up.data) &&
         finite(b.w_down.data);
  }
  if (!ok) throw ConfigError("toy model has non-finite parameters");
}

}  // namespace

void ToyConfig::validate() const {
  if (vocab_size == 0 || d_model == 0 || n_blocks == 0 || n_heads == 0) {
    throw ConfigError("toy config sizes must all be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
                      std::to_string(d_model) + ")");
  }
}

template <typename T>
std::vector<T> BasicToyModel<T>::positional(std::size_t position) const {
  const std::size_t d = config.d_model;
  std::vector<T> pe(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
    const double angle = static_cast<double>(position) / std::pow(10000.0, exponent);
    pe[i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
  }
  return pe;
}

template <typename T>
std::uint64_t BasicToyModel<T>::checksum() const {
  std::uint64_t h = kFnvOffset;
  fnv_mix<T>(h, token_embedding.data);
  for (const auto& b : blocks) {
    fnv_mix<T>(h, b.attn_norm_gain);
    fnv_mix<T>(h, b.wq.data);
    fnv_mix<T>(h, b.wk.data);
    fnv_mix<T>(h, b.wv.data);
    fnv_mix<T>(h, b.wo.data);
    fnv_mix<T>(h, b.mlp_norm_gain);
    fnv_mix<T>(h, b.w_up.data);
    fnv_mix<T>(h, b.w_down.data);
  }
  fnv_mix<T>(h, final_norm_gain);
  fnv_mix<T>(h, unembedding.data);
  return h;
}

template <typename T>
std::uint64_t BasicRawStream<T>::checksum() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& z : contributions) fnv_mix<T>(h, z);
  for (Role r : roles) {
    h ^= static_cast<std::uint64_t>(role_index(r));
    h *= kFnvPrime;
  }
  fnv_mix<T>(h, final_scale);
  fnv_mix<T>(h, reference_logits);
  return h;
}

template <typename T>
BasicToyModel<T> build_toy_model(const ToyConfig& config) {
  config.validate();
  SplitMix64 rng(config.seed);
  const std::size_t d = config.d_model;
  BasicToyModel<T> m;
  m.config = config;
  m.token_embedding = glorot<T>(rng, config.vocab_size, d);
  m.blocks.resize(config.n_blocks);
  for (auto& b : m.blocks) {
    b.attn_norm_gain.assign(d, T{1});
    b.wq = glorot<T>(rng, d, d);
    b.wk = glorot<T>(rng, d, d);
    b.wv = glorot<T>(rng, d, d);
    b.wo = glorot<T>(rng, d, d);
    b.mlp_norm_gain.assign(d, T{1});
    b.w_up = glorot<T>(rng, config.d_ff(), d);
    b.w_down = glorot<T>(rng, d, config.d_ff());
  }
  m.final_norm_gain.assign(d, T{1});
  m.unembedding = glorot<T>(rng, config.vocab_size, d);
  check_finite(m);
  return m;
}

template <typename T>
BasicRawStream<T> forward_collect(const BasicToyModel<T>& model,
                                  std::span<const std::size_t> token_ids) {
  const ToyConfig& cfg = model.config;
  if (token_ids.empty()) throw InputError("forward pass needs at least one token");
  for (std::size_t t : token_ids) {
    if (t >= cfg.vocab_size) {
      throw InputError("token id " + std::to_string(t) + " out of range for vocabulary of " +
                       std::to_string(cfg.vocab_size));
    }
  }
  const std::size_t n = token_ids.size();
  const std::size_t last = n - 1;

  std::vector<std::vector<T>> residual(n);
  for (std::size_t p = 0; p < n; ++p) {
    const auto emb = model.token_embedding.row(token_ids[p]);
    const auto pe = model.positional(p);
    residual[p].resize(cfg.d_model);
    for (std::size_t i = 0; i < cfg.d_model; ++i) residual[p][i] = emb[i] + pe[i];
  }

  BasicRawStream<T> raw;
  raw.contributions.push_back(residual[last]);
  raw.roles.push_back(Role::kEmbedding);

  std::vector<std::vector<T>> normed(n);
  for (const auto& block : model.blocks) {
    for (std::size_t p = 0; p < n; ++p) {
      normed[p] = rms_norm<T>(residual[p], block.attn_norm_gain);
    }
    const auto attn_out = attention(block, cfg, normed);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t i = 0; i < cfg.d_model; ++i) residual[p][i] += attn_out[p][i];
    }
    raw.contributions.push_back(attn_out[last]);
    raw.roles.push_back(Role::kAttention);

    std::vector<T> mlp_last;
    for (std::size_t p = 0; p < n; ++p) {
      const auto normed_p = rms_norm<T>(residual[p], block.mlp_norm_gain);
      auto out = mlp(block, std::span<const T>(normed_p));
      for (std::size_t i = 0; i < cfg.d_model; ++i) residual[p][i] += out[i];
      if (p == last) mlp_last = std::move(out);
    }
    raw.contributions.push_back(std::move(mlp_last));
    raw.roles.push_back(Role::kMlp);
  }

  const std::vector<T>& total = residual[last];
  const T inv = inverse_rms<T>(total);
  raw.final_scale.resize(cfg.d_model);
  std::vector<T> scaled(cfg.d_model);
  for (std::size_t i = 0; i < cfg.d_model; ++i) {
    raw.final_scale[i] = model.final_norm_gain[i] * inv;
    scaled[i] = raw.final_scale[i] * total[i];
  }
  raw.reference_logits = matvec(model.unembedding, std::span<const T>(scaled));
  return raw;
}

template <typename T>
ContributionMatrix project_contributions(const BasicRawStream<T>& raw,
                                         const BasicToyModel<T>& model,
                                         std::optional<std::span<const std::size_t>> option_ids) {
  const std::size_t d = model.config.d_model;
  const std::size_t vocab = model.unembedding.rows;
  if (raw.contributions.empty()) throw InputError("raw stream has no contributions");
  if (raw.roles.size() != raw.contributions.size()) {
    throw InputError("raw stream roles do not match its contributions");
  }
  if (raw.final_scale.size() != d || model.unembedding.cols != d) {
    throw InputError("final scale / unembedding width does not match d_model");
  }
  for (const auto& z : raw.contributions) {
    if (z.size() != d) throw InputError("contribution width does not match d_model");
  }

  std::vector<std::size_t> columns;
  if (option_ids) {
    columns.assign(option_ids->begin(), option_ids->end());
    if (columns.empty()) throw InputError("option id list is empty");
    std::vector<std::size_t> sorted = columns;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InputError("duplicate option ids");
    }
    if (sorted.back() >= vocab) throw InputError("option id out of vocabulary range");
  } else {
    columns.resize(vocab);
    for (std::size_t j = 0; j < vocab; ++j) columns[j] = j;
  }

  const std::size_t layers = raw.contributions.size();
  std::vector<double> values;
  values.reserve(layers * columns.size());
  std::vector<T> scaled(d);
  for (const auto& z : raw.contributions) {
    for (std::size_t i = 0; i < d; ++i) scaled[i] = raw.final_scale[i] * z[i];
    for (std::size_t j : columns) {
      values.push_back(static_cast<double>(
          dot<T>(model.unembedding.row(j), std::span<const T>(scaled))));
    }
  }
  return ContributionMatrix(layers, columns.size(), std::move(values), raw.roles);
}

template <typename T>
std::vector<double> restricted_reference(const BasicRawStream<T>& raw,
                                         std::span<const std::size_t> option_ids) {
  std::vector<double> out;
  out.reserve(option_ids.size());
  for (std::size_t j : option_ids) {
    if (j >= raw.reference_logits.size()) throw InputError("option id out of range");
    out.push_back(static_cast<double>(raw.reference_logits[j]));
  }
  return out;
}

double max_relative_error(std::span<const double> actual, std::span<const double> reference) {
  if (actual.size() != reference.size()) throw InputError("length mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t j = 0; j < actual.size(); ++j) {
    diff = std::max(diff, std::abs(actual[j] - reference[j]));
    scale = std::max(scale, std::abs(reference[j]));
  }
  return diff / std::max(scale, std::numeric_limits<double>::min());
}

template struct BasicToyModel<float>;
template struct BasicToyModel<double>;
template struct BasicRawStream<float>;
template struct BasicRawStream<double>;

template BasicToyModel<float> build_toy_model<float>(const ToyConfig&);
template BasicToyModel<double> build_toy_model<double>(const ToyConfig&);
template BasicRawStream<float> forward_collect<float>(const BasicToyModel<float>&,
                                                      std::span<const std::size_t>);
template BasicRawStream<double> forward_collect<double>(const BasicToyModel<double>&,
                                                        std::span<const std::size_t>);
template ContributionMatrix project_contributions<float>(
    const BasicRawStream<float>&, const BasicToyModel<float>&,
    std::optional<std::span<const std::size_t>>);
template ContributionMatrix project_contributions<double>(
    const BasicRawStream<double>&, const BasicToyModel<double>&,
    std::optional<std::span<const std::size_t>>);
template std::vector<double> restricted_reference<float>(const BasicRawStream<float>&,
                                                         std::span<const std::size_t>);
template std::vector<double> restricted_reference<double>(const BasicRawStream<double>&,
                                                          std::span<const std::size_t>);

}  // namespace resdiv
