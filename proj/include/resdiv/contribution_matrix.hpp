#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "resdiv/role.hpp"

namespace resdiv {

// Per-layer logit contributions u(i) over a (possibly restricted) vocabulary.
// Row i is the contribution of the i-th module in stream order; column j is an
// output option. Entries are 64-bit regardless of how they were produced.
class ContributionMatrix {
 public:
  ContributionMatrix() = default;

  // Throws InputError if the shape is empty, roles.size() != layers,
  // values.size() != layers * options, or any entry is non-finite.
  ContributionMatrix(std::size_t layers, std::size_t options, std::vector<double> values,
                     std::vector<Role> roles);

  std::size_t num_layers() const noexcept { return layers_; }
  std::size_t num_options() const noexcept { return options_; }
  bool empty() const noexcept { return layers_ == 0; }

  std::span<const double> row(std::size_t layer) const {
    return {values_.data() + layer * options_, options_};
  }
  double operator()(std::size_t layer, std::size_t option) const {
    return values_[layer * options_ + option];
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<const Role> roles() const noexcept { return roles_; }
  Role role(std::size_t layer) const { return roles_[layer]; }

  // Matrix made of the first k rows.
  ContributionMatrix prefix(std::size_t k) const;

  // Number of layers carrying each role, indexed by role_index().
  std::array<std::size_t, kNumRoles> role_counts() const;

 private:
  std::size_t layers_ = 0;
  std::size_t options_ = 0;
  std::vector<double> values_;
  std::vector<Role> roles_;
};

// Stream-order role list for a model with `blocks` blocks:
// emb, attn_1, mlp_1, ..., attn_n, mlp_n.
std::vector<Role> stream_roles(std::size_t blocks);

// Column-wise sum of all rows: the logits the stream reconstructs.
// Throws InputError on an empty matrix.
std::vector<double> reconstruct_logits(const ContributionMatrix& matrix);

}  // namespace resdiv
