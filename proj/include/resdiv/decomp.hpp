#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "resdiv/contribution_matrix.hpp"
#include "resdiv/role.hpp"

namespace resdiv {

// Bias and diversity restricted to the layers of one role. Means are over
// (option, layer-of-this-role) pairs; count is the number of such layers and
// is the weight the role carries when recombined into the totals.
struct ModuleTerms {
  Role role = Role::kEmbedding;
  std::size_t count = 0;
  double bias = 0.0;
  double diversity = 0.0;
};

struct DecompositionResult {
  double mse = 0.0;
  double bias = 0.0;
  double diversity = 0.0;
  std::size_t num_layers = 0;
  std::array<ModuleTerms, kNumRoles> per_module{};

  const ModuleTerms& module(Role r) const { return per_module[role_index(r)]; }
};

// Ambiguity decomposition of the layer ensemble against target logits u_hat:
//   mse       = mean_j (u_hat_j - ubar_j)^2
//   bias      = mean_{j, i} (u_hat_j - u(i)_j)^2
//   diversity = mean_{j, i} (ubar_j - u(i)_j)^2
// with mse = bias - diversity. Throws InputError on a length mismatch or an
// empty matrix.
DecompositionResult ambiguity_decompose(std::span<const double> target,
                                        const ContributionMatrix& matrix);

// (1/L) * sum_role count(role) * role_mean, for the bias and diversity terms.
std::pair<double, double> recombine_modules(const DecompositionResult& result);

// Mean-bias / variance / covariance view of the same two terms. Every field is
// the literal formula; the *_rhs values are compared with the direct bias and
// diversity rather than assumed equal (they only coincide for a constant
// target).
struct BrownDecomposition {
  double mean_bias = 0.0;        // E_i[E_j u(i)_j - E_j u_hat_j]
  double mean_variance = 0.0;    // E_i[Var_j u(i)]
  double mean_covariance = 0.0;  // average over ordered pairs i != k of Cov_j(u(i), u(k))
  double omega = 0.0;            // mean_variance + E_i[(E_j u(i)_j - E_j ubar_j)^2]
  double bias_rhs = 0.0;
  double diversity_rhs = 0.0;
  double residual_bias = 0.0;       // bias_rhs - direct bias
  double residual_diversity = 0.0;  // diversity_rhs - direct diversity
};

// A single layer has no pairs; mean_covariance is 0 then.
BrownDecomposition brown_quantities(std::span<const double> target,
                                    const ContributionMatrix& matrix);

// How the diversity term is centred after the softmax.
enum class SoftmaxMode {
  // Ensemble prediction softmax(ubar); diversity is measured around it. The
  // ambiguity identity no longer holds exactly and identity_residual reports
  // the gap.
  kLogitMean,
  // Members p(i) = softmax(u(i)), ensemble p_bar = mean_i p(i). The identity
  // holds exactly in probability space.
  kProbabilityMean,
};

struct ApproxMetrics {
  double mse = 0.0;
  double bias = 0.0;
  double diversity = 0.0;
  double identity_residual = 0.0;  // bias - diversity - mse
  bool correct = false;            // argmax of summed logits == gold
  std::size_t predicted = 0;
};

// Softmax-space approximations against the one-hot gold vector. Requires at
// least two options; throws InputError if gold is out of range.
ApproxMetrics softmax_metrics(std::size_t gold, const ContributionMatrix& matrix,
                              SoftmaxMode mode = SoftmaxMode::kLogitMean);

// softmax_metrics on the first k rows for k = 1..L. Rows are not rescaled per
// prefix: the final norm scale is already part of every contribution.
std::vector<ApproxMetrics> prefix_metrics(std::size_t gold, const ContributionMatrix& matrix,
                                          SoftmaxMode mode = SoftmaxMode::kLogitMean);

// Probability-space decomposition with members softmax(u(i)) and the one-hot
// gold vector as target. Used for module proportions on real tasks.
DecompositionResult softmax_decompose(std::size_t gold, const ContributionMatrix& matrix);

// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace resdiv
