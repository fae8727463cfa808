#include "resdiv/infodiv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "resdiv/error.hpp"
#include "resdiv/splitmix64.hpp"

namespace resdiv {

namespace {

constexpr double kMassTolerance = 1e-12;

bool has(VarSet s, std::size_t i) { return (s >> i) & 1U; }

VarSet full_set(std::size_t n) { return n == 0 ? 0 : static_cast<VarSet>((1U << n) - 1U); }

double plogp_sum(std::span<const double> pmf) {
  double h = 0.0;
  for (double p : pmf) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

// Index of the projection of (u, y) onto the kept variables, in the same
// mixed-radix order used by DiscreteEnsemble::marginal.
std::size_t project(std::span<const std::size_t> sizes, std::size_t y_size,
                    std::span<const std::size_t> u, std::size_t y, VarSet mask, bool with_y) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (has(mask, i)) idx = idx * sizes[i] + u[i];
  }
  if (with_y) idx = idx * y_size + y;
  return idx;
}

void check_subset(std::span<const std::size_t> subset, std::size_t n) {
  for (std::size_t i : subset) {
    if (i >= n) {
      throw InputError("variable index " + std::to_string(i) + " out of range for " +
                       std::to_string(n) + " variables");
    }
  }
}

}  // namespace

DiscreteEnsemble::DiscreteEnsemble(std::vector<std::size_t> u_sizes, std::size_t y_size,
                                   std::vector<double> joint)
    : u_sizes_(std::move(u_sizes)), y_size_(y_size), joint_(std::move(joint)) {
  if (u_sizes_.size() > kMaxEnsembleVariables) {
    throw CapacityError("ensemble has " + std::to_string(u_sizes_.size()) +
                        " variables; at most " + std::to_string(kMaxEnsembleVariables) +
                        " are enumerable");
  }
  if (y_size_ == 0) throw InputError("label alphabet must be non-empty");
  std::size_t cells = y_size_;
  for (std::size_t s : u_sizes_) {
    if (s == 0) throw InputError("variable alphabets must be non-empty");
    if (cells > kMaxEnsembleCells / s) {
      throw CapacityError("joint table exceeds " + std::to_string(kMaxEnsembleCells) + " cells");
    }
    cells *= s;
  }
  if (cells > kMaxEnsembleCells) {
    throw CapacityError("joint table exceeds " + std::to_string(kMaxEnsembleCells) + " cells");
  }
  if (joint_.size() != cells) {
    throw InputError("joint table has " + std::to_string(joint_.size()) + " cells, expected " +
                     std::to_string(cells));
  }
  double total = 0.0;
  for (double p : joint_) {
    if (!std::isfinite(p) || p < 0.0) throw InputError("joint table has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    throw InputError("joint table mass is " + std::to_string(total) + ", expected 1");
  }
}

void DiscreteEnsemble::decode(std::size_t cell, std::vector<std::size_t>& u,
                              std::size_t& y) const {
  u.resize(u_sizes_.size());
  y = cell % y_size_;
  cell /= y_size_;
  for (std::size_t i = u_sizes_.size(); i-- > 0;) {
    u[i] = cell % u_sizes_[i];
    cell /= u_sizes_[i];
  }
}

std::size_t DiscreteEnsemble::encode(std::span<const std::size_t> u, std::size_t y) const {
  return project(u_sizes_, y_size_, u, y, full_set(u_sizes_.size()), true);
}

std::vector<double> DiscreteEnsemble::marginal(VarSet u_mask, bool with_y) const {
  std::size_t size = with_y ? y_size_ : 1;
  for (std::size_t i = 0; i < u_sizes_.size(); ++i) {
    if (has(u_mask, i)) size *= u_sizes_[i];
  }
  std::vector<double> out(size, 0.0);
  std::vector<std::size_t> u;
  std::size_t y = 0;
  for (std::size_t c = 0; c < joint_.size(); ++c) {
    decode(c, u, y);
    out[project(u_sizes_, y_size_, u, y, u_mask, with_y)] += joint_[c];
  }
  return out;
}

VarSet to_varset(std::span<const std::size_t> indices, std::size_t n) {
  check_subset(indices, n);
  VarSet s = 0;
  for (std::size_t i : indices) s |= VarSet{1} << i;
  return s;
}

std::vector<std::size_t> from_varset(VarSet s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < 32; ++i) {
    if (has(s, i)) out.push_back(i);
  }
  return out;
}

DiscreteEnsemble restrict_to(const DiscreteEnsemble& e, VarSet keep) {
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < e.num_variables(); ++i) {
    if (has(keep, i)) sizes.push_back(e.u_sizes()[i]);
  }
  if (keep >> e.num_variables() != 0) throw InputError("variable set out of range");
  return DiscreteEnsemble(std::move(sizes), e.y_size(), e.marginal(keep, true));
}

double entropy(std::span<const double> pmf) {
  double total = 0.0;
  for (double p : pmf) {
    if (!std::isfinite(p) || p < 0.0) throw InputError("pmf has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    throw InputError("pmf mass is " + std::to_string(total) + ", expected 1");
  }
  return plogp_sum(pmf);
}

EntropyTable::EntropyTable(const DiscreteEnsemble& e)
    : n_(e.num_variables()), h_u_(std::size_t{1} << n_), h_uy_(std::size_t{1} << n_) {
  for (VarSet s = 0; s < h_u_.size(); ++s) {
    h_u_[s] = s == 0 ? 0.0 : plogp_sum(e.marginal(s, false));
    h_uy_[s] = plogp_sum(e.marginal(s, true));
  }
}

double EntropyTable::mutual_information(VarSet s) const {
  if (s == 0) return 0.0;
  return h(s) + h_y() - h_with_y(s);
}

double EntropyTable::total_correlation(VarSet s) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    if (has(s, i)) sum += h(VarSet{1} << i);
  }
  return sum - h(s);
}

double EntropyTable::conditional_total_correlation(VarSet s) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    if (has(s, i)) sum += h_with_y(VarSet{1} << i) - h_y();
  }
  return sum - (h_with_y(s) - h_y());
}

double EntropyTable::it_diversity(VarSet s) const {
  return conditional_total_correlation(s) - total_correlation(s);
}

double joint_mutual_information(const DiscreteEnsemble& e, std::span<const std::size_t> subset) {
  const VarSet s = to_varset(subset, e.num_variables());
  if (s == 0) return 0.0;
  return plogp_sum(e.marginal(s, false)) + plogp_sum(e.marginal(0, true)) -
         plogp_sum(e.marginal(s, true));
}

double total_correlation(const DiscreteEnsemble& e, std::span<const std::size_t> subset) {
  const VarSet s = to_varset(subset, e.num_variables());
  if (s == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i : from_varset(s)) sum += plogp_sum(e.marginal(VarSet{1} << i, false));
  return sum - plogp_sum(e.marginal(s, false));
}

double conditional_total_correlation(const DiscreteEnsemble& e,
                                     std::span<const std::size_t> subset) {
  const VarSet s = to_varset(subset, e.num_variables());
  if (s == 0) return 0.0;
  const double h_y = plogp_sum(e.marginal(0, true));
  double sum = 0.0;
  for (std::size_t i : from_varset(s)) {
    sum += plogp_sum(e.marginal(VarSet{1} << i, true)) - h_y;
  }
  return sum - (plogp_sum(e.marginal(s, true)) - h_y);
}

double conditional_mutual_information(const DiscreteEnsemble& e, VarSet a, VarSet b,
                                      bool given_y) {
  if ((a & b) != 0) throw InputError("conditional mutual information needs disjoint sets");
  if (a == 0 || b == 0) return 0.0;
  const auto p_ab = e.marginal(a | b, given_y);
  const auto p_a = e.marginal(a, given_y);
  const auto p_b = e.marginal(b, given_y);
  const auto p_c = e.marginal(0, given_y);
  const auto sizes = e.u_sizes();
  std::vector<std::size_t> u;
  std::size_t y = 0;
  double mi = 0.0;
  // Summing over full cells weights each projected term by its marginal mass.
  for (std::size_t c = 0; c < e.joint().size(); ++c) {
    const double p = e.joint()[c];
    if (p <= 0.0) continue;
    e.decode(c, u, y);
    const double pab = p_ab[project(sizes, e.y_size(), u, y, a | b, given_y)];
    const double pa = p_a[project(sizes, e.y_size(), u, y, a, given_y)];
    const double pb = p_b[project(sizes, e.y_size(), u, y, b, given_y)];
    const double pc = p_c[project(sizes, e.y_size(), u, y, 0, given_y)];
    mi += p * std::log2((pab * pc) / (pa * pb));
  }
  return mi;
}

ITDecomposition it_decompose(const DiscreteEnsemble& e) {
  const EntropyTable table(e);
  const VarSet all = full_set(e.num_variables());
  ITDecomposition out;
  for (std::size_t i = 0; i < e.num_variables(); ++i) {
    out.relevancy += table.mutual_information(VarSet{1} << i);
  }
  out.cond_redundancy = table.conditional_total_correlation(all);
  out.redundancy = table.total_correlation(all);
  out.it_diversity = out.cond_redundancy - out.redundancy;
  out.joint_mi = table.mutual_information(all);
  out.identity_residual = out.joint_mi - (out.relevancy + out.it_diversity);
  return out;
}

double bayes_error(const DiscreteEnsemble& e) {
  // Cells are laid out with y fastest, so each run of |Y| cells is one u.
  const std::size_t ys = e.y_size();
  const auto joint = e.joint();
  double correct = 0.0;
  for (std::size_t base = 0; base < joint.size(); base += ys) {
    double best = joint[base];
    for (std::size_t y = 1; y < ys; ++y) best = std::max(best, joint[base + y]);
    correct += best;
  }
  return std::clamp(1.0 - correct, 0.0, 1.0);
}

ErrorBounds error_bounds(const DiscreteEnsemble& e) {
  if (e.y_size() < 2) throw InputError("error bounds need at least two labels");
  const EntropyTable table(e);
  ErrorBounds out;
  out.h_y = table.h_y();
  out.joint_mi = table.mutual_information(full_set(e.num_variables()));
  const double residual = out.h_y - out.joint_mi;
  out.lower = (residual - 1.0) / std::log2(static_cast<double>(e.y_size()));
  out.upper = residual / 2.0;
  out.bayes_error = bayes_error(e);
  return out;
}

std::vector<ChainStep> chain_deltas(const DiscreteEnsemble& e,
                                    std::span<const std::size_t> order) {
  const std::size_t n = e.num_variables();
  if (order.size() != n) throw InputError("order must list every variable exactly once");
  std::vector<bool> seen(n, false);
  for (std::size_t i : order) {
    if (i >= n || seen[i]) throw InputError("order is not a permutation");
    seen[i] = true;
  }
  const EntropyTable table(e);
  std::vector<ChainStep> steps;
  VarSet prefix = 0;
  for (std::size_t v : order) {
    const VarSet bit = VarSet{1} << v;
    const VarSet next = prefix | bit;
    ChainStep step;
    step.added = v;
    step.prefix = prefix;
    step.d_relevancy = table.mutual_information(bit);
    step.d_total_correlation = table.total_correlation(next) - table.total_correlation(prefix);
    step.d_cond_total_correlation =
        table.conditional_total_correlation(next) - table.conditional_total_correlation(prefix);
    step.d_it_diversity = step.d_cond_total_correlation - step.d_total_correlation;
    step.d_joint_mi = table.mutual_information(next) - table.mutual_information(prefix);
    step.mi_with_prefix = conditional_mutual_information(e, prefix, bit, false);
    step.cond_mi_with_prefix = conditional_mutual_information(e, prefix, bit, true);
    steps.push_back(step);
    prefix = next;
  }
  return steps;
}

std::string lattice_property_name(LatticeProperty p) {
  switch (p) {
    case LatticeProperty::kMiSubmodular:
      return "mi_submodular";
    case LatticeProperty::kMiNondecreasing:
      return "mi_nondecreasing";
    case LatticeProperty::kItDiversitySubmodular:
      return "it_diversity_submodular";
    case LatticeProperty::kLowerBoundSupermodular:
      return "lower_bound_supermodular";
    case LatticeProperty::kUpperBoundSupermodular:
      return "upper_bound_supermodular";
    case LatticeProperty::kLowerBoundNonincreasing:
      return "lower_bound_nonincreasing";
    case LatticeProperty::kUpperBoundNonincreasing:
      return "upper_bound_nonincreasing";
  }
  return "unknown";
}

bool conditionally_independent(const DiscreteEnsemble& e, double tolerance) {
  const std::size_t n = e.num_variables();
  const auto p_y = e.marginal(0, true);
  std::vector<std::vector<double>> p_uy(n);
  for (std::size_t i = 0; i < n; ++i) p_uy[i] = e.marginal(VarSet{1} << i, true);
  std::vector<std::size_t> u;
  std::size_t y = 0;
  for (std::size_t c = 0; c < e.joint().size(); ++c) {
    e.decode(c, u, y);
    if (p_y[y] <= 0.0) continue;
    double product = 1.0;
    for (std::size_t i = 0; i < n; ++i) product *= p_uy[i][u[i] * e.y_size() + y] / p_y[y];
    if (std::abs(e.joint()[c] / p_y[y] - product) > tolerance) return false;
  }
  return true;
}

SubmodularityReport submodularity_check(const DiscreteEnsemble& e, double tolerance) {
  const std::size_t n = e.num_variables();
  const EntropyTable table(e);
  const std::size_t num_sets = std::size_t{1} << n;

  std::vector<double> mi(num_sets), itd(num_sets);
  for (VarSet s = 0; s < num_sets; ++s) {
    mi[s] = table.mutual_information(s);
    itd[s] = table.it_diversity(s);
  }
  const bool with_bounds = e.y_size() >= 2;
  const double log_y = with_bounds ? std::log2(static_cast<double>(e.y_size())) : 1.0;
  std::vector<double> lower(num_sets), upper(num_sets);
  for (VarSet s = 0; s < num_sets; ++s) {
    lower[s] = (table.h_y() - mi[s] - 1.0) / log_y;
    upper[s] = (table.h_y() - mi[s]) / 2.0;
  }

  SubmodularityReport report;
  report.cond_independent = conditionally_independent(e);
  auto& out = report.violations;

  for (VarSet s = 0; s < num_sets; ++s) {
    for (std::size_t v = 0; v < n; ++v) {
      if (has(s, v)) continue;
      const VarSet sv = s | (VarSet{1} << v);
      if (mi[sv] < mi[s] - tolerance) {
        out.push_back({LatticeProperty::kMiNondecreasing, s, s, v, mi[s], mi[sv]});
      }
      if (!with_bounds) continue;
      if (lower[sv] > lower[s] + tolerance) {
        out.push_back({LatticeProperty::kLowerBoundNonincreasing, s, s, v, lower[s], lower[sv]});
      }
      if (upper[sv] > upper[s] + tolerance) {
        out.push_back({LatticeProperty::kUpperBoundNonincreasing, s, s, v, upper[s], upper[sv]});
      }
    }
  }

  for (VarSet t = 0; t < num_sets; ++t) {
    // Strict subsets S of T.
    for (VarSet s = (t - 1) & t;; s = (s - 1) & t) {
      if (s != t) {
        for (std::size_t v = 0; v < n; ++v) {
          if (has(t, v)) continue;
          const VarSet bit = VarSet{1} << v;
          auto gain = [&](const std::vector<double>& f, VarSet x) { return f[x | bit] - f[x]; };
          if (gain(mi, s) < gain(mi, t) - tolerance) {
            out.push_back({LatticeProperty::kMiSubmodular, s, t, v, gain(mi, s), gain(mi, t)});
          }
          if (gain(itd, s) < gain(itd, t) - tolerance) {
            out.push_back(
                {LatticeProperty::kItDiversitySubmodular, s, t, v, gain(itd, s), gain(itd, t)});
          }
          if (with_bounds) {
            if (gain(lower, s) > gain(lower, t) + tolerance) {
              out.push_back({LatticeProperty::kLowerBoundSupermodular, s, t, v, gain(lower, s),
                             gain(lower, t)});
            }
            if (gain(upper, s) > gain(upper, t) + tolerance) {
              out.push_back({LatticeProperty::kUpperBoundSupermodular, s, t, v, gain(upper, s),
                             gain(upper, t)});
            }
          }
        }
      }
      if (s == 0) break;
    }
  }

  std::sort(out.begin(), out.end(), [](const LatticeViolation& a, const LatticeViolation& b) {
    return std::tie(a.property, a.s, a.t, a.v) < std::tie(b.property, b.s, b.t, b.v);
  });
  for (const auto& v : out) {
    switch (v.property) {
      case LatticeProperty::kMiSubmodular:
        report.mi_submodular = false;
        break;
      case LatticeProperty::kMiNondecreasing:
        report.f_monotone = false;
        break;
      case LatticeProperty::kItDiversitySubmodular:
        report.it_diversity_submodular = false;
        break;
      case LatticeProperty::kLowerBoundSupermodular:
      case LatticeProperty::kUpperBoundSupermodular:
        report.bounds_supermodular = false;
        break;
      case LatticeProperty::kLowerBoundNonincreasing:
      case LatticeProperty::kUpperBoundNonincreasing:
        report.bounds_nonincreasing = false;
        break;
    }
  }
  return report;
}

namespace {

void check_capacity(std::size_t n, std::size_t y_alphabet,
                    std::span<const std::size_t> u_alphabets) {
  if (u_alphabets.size() != n) throw InputError("need one alphabet size per variable");
  if (n > kMaxEnsembleVariables) throw CapacityError("too many variables to enumerate");
  std::size_t cells = y_alphabet;
  for (std::size_t s : u_alphabets) {
    if (s == 0 || y_alphabet == 0) throw InputError("alphabets must be non-empty");
    if (cells > kMaxEnsembleCells / s) throw CapacityError("joint table too large");
    cells *= s;
  }
}

std::vector<double> normalized(std::vector<double> w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

}  // namespace

DiscreteEnsemble sample_cond_independent(std::uint64_t seed, std::size_t n,
                                         std::size_t y_alphabet,
                                         std::span<const std::size_t> u_alphabets) {
  check_capacity(n, y_alphabet, u_alphabets);
  SplitMix64 rng(seed);
  // 1 - uniform() lies in (0, 1], so no factor is exactly zero.
  std::vector<double> p_y(y_alphabet);
  for (double& p : p_y) p = 1.0 - rng.uniform();
  p_y = normalized(std::move(p_y));

  // cond[i][y * |U_i| + u]
  std::vector<std::vector<double>> cond(n);
  for (std::size_t i = 0; i < n; ++i) {
    cond[i].resize(y_alphabet * u_alphabets[i]);
    for (std::size_t y = 0; y < y_alphabet; ++y) {
      std::vector<double> row(u_alphabets[i]);
      for (double& p : row) p = 1.0 - rng.uniform();
      row = normalized(std::move(row));
      std::copy(row.begin(), row.end(), cond[i].begin() + y * u_alphabets[i]);
    }
  }

  std::size_t cells = y_alphabet;
  for (std::size_t s : u_alphabets) cells *= s;
  std::vector<std::size_t> sizes(u_alphabets.begin(), u_alphabets.end());
  std::vector<double> joint(cells);
  std::vector<std::size_t> u(n);
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rest = c;
    const std::size_t y = rest % y_alphabet;
    rest /= y_alphabet;
    for (std::size_t i = n; i-- > 0;) {
      u[i] = rest % sizes[i];
      rest /= sizes[i];
    }
    double p = p_y[y];
    for (std::size_t i = 0; i < n; ++i) p *= cond[i][y * sizes[i] + u[i]];
    joint[c] = p;
  }
  return DiscreteEnsemble(std::move(sizes), y_alphabet, normalized(std::move(joint)));
}

DiscreteEnsemble sample_random_ensemble(std::uint64_t seed, std::size_t y_alphabet,
                                        std::span<const std::size_t> u_alphabets) {
  check_capacity(u_alphabets.size(), y_alphabet, u_alphabets);
  SplitMix64 rng(seed);
  std::size_t cells = y_alphabet;
  for (std::size_t s : u_alphabets) cells *= s;
  std::vector<double> joint(cells);
  for (double& p : joint) p = 1.0 - rng.uniform();
  return DiscreteEnsemble(std::vector<std::size_t>(u_alphabets.begin(), u_alphabets.end()),
                          y_alphabet, normalized(std::move(joint)));
}

DiscreteEnsemble xor_ensemble() {
  std::vector<double> joint(8, 0.0);
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 2; ++b) joint[(a * 2 + b) * 2 + (a ^ b)] = 0.25;
  }
  return DiscreteEnsemble({2, 2}, 2, std::move(joint));
}

DiscreteEnsemble copy_ensemble() { return DiscreteEnsemble({2}, 2, {0.5, 0.0, 0.0, 0.5}); }

DiscreteEnsemble duplicated_bit_ensemble() {
  std::vector<double> joint(8, 0.0);
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t y = 0; y < 2; ++y) joint[(a * 2 + a) * 2 + y] = 0.25;
  }
  return DiscreteEnsemble({2, 2}, 2, std::move(joint));
}

DiscreteEnsemble duplicated_label_ensemble() {
  std::vector<double> joint(8, 0.0);
  for (std::size_t y = 0; y < 2; ++y) joint[(y * 2 + y) * 2 + y] = 0.5;
  return DiscreteEnsemble({2, 2}, 2, std::move(joint));
}

DiscreteEnsemble independent_ensemble() {
  return DiscreteEnsemble({2}, 2, {0.25, 0.25, 0.25, 0.25});
}

}  // namespace resdiv
