#include "resdiv/contribution_matrix.hpp"

#include <cmath>
#include <string>

#include "resdiv/error.hpp"

namespace resdiv {

ContributionMatrix::ContributionMatrix(std::size_t layers, std::size_t options,
                                       std::vector<double> values, std::vector<Role> roles)
    : layers_(layers), options_(options), values_(std::move(values)), roles_(std::move(roles)) {
  if (layers_ == 0 || options_ == 0) {
    throw InputError("contribution matrix must have at least one layer and one option");
  }
  if (values_.size() != layers_ * options_) {
    throw InputError("contribution matrix has " + std::to_string(values_.size()) +
                     " values, expected " + std::to_string(layers_ * options_));
  }
  if (roles_.size() != layers_) {
    throw InputError("contribution matrix has " + std::to_string(roles_.size()) +
                     " roles for " + std::to_string(layers_) + " layers");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw InputError("contribution matrix has a non-finite entry");
  }
}

ContributionMatrix ContributionMatrix::prefix(std::size_t k) const {
  if (k == 0 || k > layers_) throw InputError("prefix length out of range");
  return ContributionMatrix(
      k, options_, std::vector<double>(values_.begin(), values_.begin() + k * options_),
      std::vector<Role>(roles_.begin(), roles_.begin() + k));
}

std::array<std::size_t, kNumRoles> ContributionMatrix::role_counts() const {
  std::array<std::size_t, kNumRoles> counts{};
  for (Role r : roles_) ++counts[role_index(r)];
  return counts;
}

std::vector<Role> stream_roles(std::size_t blocks) {
  std::vector<Role> roles;
  roles.reserve(1 + 2 * blocks);
  roles.push_back(Role::kEmbedding);
  for (std::size_t b = 0; b < blocks; ++b) {
    roles.push_back(Role::kAttention);
    roles.push_back(Role::kMlp);
  }
  return roles;
}

std::vector<double> reconstruct_logits(const ContributionMatrix& matrix) {
  if (matrix.empty()) throw InputError("cannot reconstruct logits from an empty matrix");
  std::vector<double> logits(matrix.num_options(), 0.0);
  for (std::size_t i = 0; i < matrix.num_layers(); ++i) {
    const auto row = matrix.row(i);
    for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += row[j];
  }
  return logits;
}

}  // namespace resdiv
