#include "resdiv/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "resdiv/error.hpp"

namespace resdiv {

namespace {

void check_target(std::span<const double> target, const ContributionMatrix& matrix) {
  if (matrix.empty()) throw InputError("contribution matrix is empty");
  if (target.size() != matrix.num_options()) {
    throw InputError("target has " + std::to_string(target.size()) + " entries, matrix has " +
                     std::to_string(matrix.num_options()) + " options");
  }
}

void check_gold(std::size_t gold, const ContributionMatrix& matrix) {
  if (matrix.empty()) throw InputError("contribution matrix is empty");
  if (matrix.num_options() < 2) throw InputError("softmax metrics need at least two options");
  if (gold >= matrix.num_options()) {
    throw InputError("gold index " + std::to_string(gold) + " out of range for " +
                     std::to_string(matrix.num_options()) + " options");
  }
}

std::vector<double> row_mean(const ContributionMatrix& matrix, std::size_t k) {
  std::vector<double> mean(matrix.num_options(), 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto row = matrix.row(i);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += row[j];
  }
  for (double& m : mean) m /= static_cast<double>(k);
  return mean;
}

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Row-wise softmaxes and running column sums shared by softmax_metrics and
// prefix_metrics so both produce bit-identical values for the same k.
struct SoftmaxView {
  const ContributionMatrix& matrix;
  std::vector<std::vector<double>> member_probs;

  explicit SoftmaxView(const ContributionMatrix& m) : matrix(m) {
    member_probs.reserve(m.num_layers());
    for (std::size_t i = 0; i < m.num_layers(); ++i) member_probs.push_back(softmax(m.row(i)));
  }

  ApproxMetrics over_prefix(std::size_t k, std::size_t gold, SoftmaxMode mode) const {
    const std::size_t v = matrix.num_options();
    const double inv_v = 1.0 / static_cast<double>(v);
    const double inv_k = 1.0 / static_cast<double>(k);

    std::vector<double> logit_sum(v, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      const auto row = matrix.row(i);
      for (std::size_t j = 0; j < v; ++j) logit_sum[j] += row[j];
    }

    std::vector<double> center;
    if (mode == SoftmaxMode::kLogitMean) {
      std::vector<double> ubar(logit_sum);
      for (double& x : ubar) x *= inv_k;
      center = softmax(ubar);
    } else {
      center.assign(v, 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < v; ++j) center[j] += member_probs[i][j];
      }
      for (double& x : center) x *= inv_k;
    }

    ApproxMetrics out;
    double mse = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      const double onehot = j == gold ? 1.0 : 0.0;
      mse += (onehot - center[j]) * (onehot - center[j]);
    }
    out.mse = mse * inv_v;

    double bias = 0.0;
    double diversity = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      const double onehot = j == gold ? 1.0 : 0.0;
      double b = 0.0;
      double d = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const double p = member_probs[i][j];
        b += (onehot - p) * (onehot - p);
        d += (center[j] - p) * (center[j] - p);
      }
      bias += b * inv_k;
      diversity += d * inv_k;
    }
    out.bias = bias * inv_v;
    out.diversity = diversity * inv_v;
    out.identity_residual = out.bias - out.diversity - out.mse;
    out.predicted = argmax(logit_sum);
    out.correct = out.predicted == gold;
    return out;
  }
};

}  // namespace

DecompositionResult ambiguity_decompose(std::span<const double> target,
                                        const ContributionMatrix& matrix) {
  check_target(target, matrix);
  const std::size_t layers = matrix.num_layers();
  const std::size_t v = matrix.num_options();
  const auto ubar = row_mean(matrix, layers);

  DecompositionResult out;
  out.num_layers = layers;

  double mse = 0.0;
  for (std::size_t j = 0; j < v; ++j) mse += (target[j] - ubar[j]) * (target[j] - ubar[j]);
  out.mse = mse / static_cast<double>(v);

  std::array<double, kNumRoles> role_bias{};
  std::array<double, kNumRoles> role_div{};
  double bias = 0.0;
  double diversity = 0.0;
  for (std::size_t i = 0; i < layers; ++i) {
    const auto row = matrix.row(i);
    double b = 0.0;
    double d = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      b += (target[j] - row[j]) * (target[j] - row[j]);
      d += (ubar[j] - row[j]) * (ubar[j] - row[j]);
    }
    bias += b;
    diversity += d;
    role_bias[role_index(matrix.role(i))] += b;
    role_div[role_index(matrix.role(i))] += d;
  }
  const double cells = static_cast<double>(layers * v);
  out.bias = bias / cells;
  out.diversity = diversity / cells;

  const auto counts = matrix.role_counts();
  for (Role r : kAllRoles) {
    ModuleTerms& m = out.per_module[role_index(r)];
    m.role = r;
    m.count = counts[role_index(r)];
    if (m.count > 0) {
      const double role_cells = static_cast<double>(m.count * v);
      m.bias = role_bias[role_index(r)] / role_cells;
      m.diversity = role_div[role_index(r)] / role_cells;
    }
  }
  return out;
}

std::pair<double, double> recombine_modules(const DecompositionResult& result) {
  double bias = 0.0;
  double diversity = 0.0;
  for (const ModuleTerms& m : result.per_module) {
    bias += static_cast<double>(m.count) * m.bias;
    diversity += static_cast<double>(m.count) * m.diversity;
  }
  const double layers = static_cast<double>(result.num_layers);
  return {bias / layers, diversity / layers};
}

BrownDecomposition brown_quantities(std::span<const double> target,
                                    const ContributionMatrix& matrix) {
  check_target(target, matrix);
  const std::size_t layers = matrix.num_layers();
  const std::size_t v = matrix.num_options();
  const double inv_l = 1.0 / static_cast<double>(layers);
  const double inv_v = 1.0 / static_cast<double>(v);

  std::vector<double> row_means(layers);
  for (std::size_t i = 0; i < layers; ++i) row_means[i] = mean_of(matrix.row(i));
  const double target_mean = mean_of(target);
  const auto ubar = row_mean(matrix, layers);
  const double ubar_mean = mean_of(ubar);

  BrownDecomposition out;
  double mb = 0.0;
  double mv = 0.0;
  double spread = 0.0;
  for (std::size_t i = 0; i < layers; ++i) {
    mb += row_means[i] - target_mean;
    const auto row = matrix.row(i);
    double var = 0.0;
    for (std::size_t j = 0; j < v; ++j) var += (row[j] - row_means[i]) * (row[j] - row_means[i]);
    mv += var * inv_v;
    spread += (row_means[i] - ubar_mean) * (row_means[i] - ubar_mean);
  }
  out.mean_bias = mb * inv_l;
  out.mean_variance = mv * inv_l;
  out.omega = out.mean_variance + spread * inv_l;

  if (layers > 1) {
    // sum_{i != k} d_i d_k = (sum_i d_i)^2 - sum_i d_i^2, per column.
    double cross = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      double s = 0.0;
      double sq = 0.0;
      for (std::size_t i = 0; i < layers; ++i) {
        const double d = matrix(i, j) - row_means[i];
        s += d;
        sq += d * d;
      }
      cross += s * s - sq;
    }
    out.mean_covariance =
        cross * inv_v / (static_cast<double>(layers) * static_cast<double>(layers - 1));
  }

  out.bias_rhs = out.mean_bias * out.mean_bias + out.omega;
  out.diversity_rhs =
      out.omega - (inv_l * out.mean_variance + (1.0 - inv_l) * out.mean_covariance);

  const DecompositionResult direct = ambiguity_decompose(target, matrix);
  out.residual_bias = out.bias_rhs - direct.bias;
  out.residual_diversity = out.diversity_rhs - direct.diversity;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp(logits[j] - mx);
    z += p[j];
  }
  for (double& x : p) x /= z;
  return p;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < values.size(); ++j) {
    if (values[j] > values[best]) best = j;
  }
  return best;
}

ApproxMetrics softmax_metrics(std::size_t gold, const ContributionMatrix& matrix,
                              SoftmaxMode mode) {
  check_gold(gold, matrix);
  return SoftmaxView(matrix).over_prefix(matrix.num_layers(), gold, mode);
}

std::vector<ApproxMetrics> prefix_metrics(std::size_t gold, const ContributionMatrix& matrix,
                                          SoftmaxMode mode) {
  check_gold(gold, matrix);
  const SoftmaxView view(matrix);
  std::vector<ApproxMetrics> out;
  out.reserve(matrix.num_layers());
  for (std::size_t k = 1; k <= matrix.num_layers(); ++k) {
    out.push_back(view.over_prefix(k, gold, mode));
  }
  return out;
}

DecompositionResult softmax_decompose(std::size_t gold, const ContributionMatrix& matrix) {
  check_gold(gold, matrix);
  std::vector<double> probs;
  probs.reserve(matrix.num_layers() * matrix.num_options());
  for (std::size_t i = 0; i < matrix.num_layers(); ++i) {
    const auto p = softmax(matrix.row(i));
    probs.insert(probs.end(), p.begin(), p.end());
  }
  const ContributionMatrix members(matrix.num_layers(), matrix.num_options(), std::move(probs),
                                   std::vector<Role>(matrix.roles().begin(),
                                                     matrix.roles().end()));
  std::vector<double> onehot(matrix.num_options(), 0.0);
  onehot[gold] = 1.0;
  return ambiguity_decompose(onehot, members);
}

}  // namespace resdiv
