#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace resdiv {

// Enumeration limits for exact analysis.
inline constexpr std::size_t kMaxEnsembleVariables = 6;
inline constexpr std::size_t kMaxEnsembleCells = 1'000'000;

// Exact joint pmf over layer variables U_1..U_n and a label Y.
//
// Cells are stored in mixed radix with U_1 most significant and Y least
// significant: index = ((u_1 * |U_2| + u_2) * ... ) * |Y| + y.
// Variables are addressed 0-based throughout the API.
class DiscreteEnsemble {
 public:
  // Throws CapacityError if n > 6 or the table exceeds 1e6 cells, and
  // InputError if sizes are zero, the table length is wrong, any entry is
  // negative or non-finite, or the mass differs from 1 by more than 1e-12.
  DiscreteEnsemble(std::vector<std::size_t> u_sizes, std::size_t y_size,
                   std::vector<double> joint);

  std::size_t num_variables() const noexcept { return u_sizes_.size(); }
  std::span<const std::size_t> u_sizes() const noexcept { return u_sizes_; }
  std::size_t y_size() const noexcept { return y_size_; }
  std::span<const double> joint() const noexcept { return joint_; }

  // Decodes a cell index into (u_1..u_n, y).
  void decode(std::size_t cell, std::vector<std::size_t>& u, std::size_t& y) const;
  std::size_t encode(std::span<const std::size_t> u, std::size_t y) const;

  // Marginal pmf over the variables in `u_mask` (bit i = U_{i+1}) plus Y when
  // with_y is set. Output uses the same mixed-radix order restricted to the
  // kept variables.
  std::vector<double> marginal(std::uint32_t u_mask, bool with_y) const;

 private:
  std::vector<std::size_t> u_sizes_;
  std::size_t y_size_;
  std::vector<double> joint_;
};

// Variable subsets are bitmasks; bit i selects U_{i+1}.
using VarSet = std::uint32_t;

VarSet to_varset(std::span<const std::size_t> indices, std::size_t n);
std::vector<std::size_t> from_varset(VarSet s);

// Ensemble over the variables in `keep` (renumbered in index order) and Y.
DiscreteEnsemble restrict_to(const DiscreteEnsemble& e, VarSet keep);

// Shannon entropy in bits with 0 log 0 = 0. Throws InputError on negative
// mass or a total differing from 1 by more than 1e-12.
double entropy(std::span<const double> pmf);

// All joint entropies H(U_S) and H(U_S, Y), precomputed for every subset.
class EntropyTable {
 public:
  explicit EntropyTable(const DiscreteEnsemble& e);

  std::size_t num_variables() const noexcept { return n_; }
  double h(VarSet s) const { return h_u_[s]; }
  double h_with_y(VarSet s) const { return h_uy_[s]; }
  double h_y() const { return h_uy_[0]; }

  // I(U_S; Y)
  double mutual_information(VarSet s) const;
  // sum_{i in S} H(U_i) - H(U_S)
  double total_correlation(VarSet s) const;
  // sum_{i in S} H(U_i | Y) - H(U_S | Y)
  double conditional_total_correlation(VarSet s) const;
  // CTC(S) - TC(S)
  double it_diversity(VarSet s) const;

 private:
  std::size_t n_;
  std::vector<double> h_u_;
  std::vector<double> h_uy_;
};

// Subset-taking entry points; indices are 0-based, duplicates are ignored.
// Out-of-range indices throw InputError.
double joint_mutual_information(const DiscreteEnsemble& e, std::span<const std::size_t> subset);
double total_correlation(const DiscreteEnsemble& e, std::span<const std::size_t> subset);
double conditional_total_correlation(const DiscreteEnsemble& e,
                                     std::span<const std::size_t> subset);

// I(U_A; U_B) or I(U_A; U_B | Y), evaluated by summing p log p / (p p) over the
// joint table directly (not through entropies). An empty A or B gives 0.
double conditional_mutual_information(const DiscreteEnsemble& e, VarSet a, VarSet b,
                                      bool given_y);

struct ITDecomposition {
  double relevancy = 0.0;         // sum_i I(U_i; Y)
  double cond_redundancy = 0.0;   // CTC(U)
  double redundancy = 0.0;        // TC(U)
  double it_diversity = 0.0;      // cond_redundancy - redundancy
  double joint_mi = 0.0;          // I(U; Y)
  double identity_residual = 0.0; // joint_mi - (relevancy + it_diversity)
};

ITDecomposition it_decompose(const DiscreteEnsemble& e);

struct ErrorBounds {
  double h_y = 0.0;
  double joint_mi = 0.0;
  double lower = 0.0;  // (H(Y) - I - 1) / log2|Y|, unclamped
  double upper = 0.0;  // (H(Y) - I) / 2
  double bayes_error = 0.0;
};

// Throws InputError when |Y| < 2.
ErrorBounds error_bounds(const DiscreteEnsemble& e);

// Error of the MAP label predictor g(u) = argmax_y p(u, y), ties to the lowest
// label: sum_u p(u) (1 - max_y p(y | u)).
double bayes_error(const DiscreteEnsemble& e);

struct ChainStep {
  std::size_t added = 0;   // 0-based variable index
  VarSet prefix = 0;       // variables present before the step
  double d_relevancy = 0.0;
  double d_total_correlation = 0.0;
  double d_cond_total_correlation = 0.0;
  double d_it_diversity = 0.0;
  double d_joint_mi = 0.0;
  double mi_with_prefix = 0.0;       // I(U_prefix; u_new), direct summation
  double cond_mi_with_prefix = 0.0;  // I(U_prefix; u_new | Y), direct summation
};

// Adds variables in `order` one at a time and reports the change of every term.
// Throws InputError unless order is a permutation of 0..n-1.
std::vector<ChainStep> chain_deltas(const DiscreteEnsemble& e,
                                    std::span<const std::size_t> order);

enum class LatticeProperty {
  kMiSubmodular,
  kMiNondecreasing,
  kItDiversitySubmodular,
  kLowerBoundSupermodular,
  kUpperBoundSupermodular,
  kLowerBoundNonincreasing,
  kUpperBoundNonincreasing,
};

std::string lattice_property_name(LatticeProperty p);

// A failed lattice inequality. For the modularity properties the witness is
// (S, T, v) with S a strict subset of T and v not in T; lhs and rhs are the
// marginal gains at S and T. For monotonicity T is unused (equal to S) and
// lhs/rhs are f(S) and f(S + v).
struct LatticeViolation {
  LatticeProperty property;
  VarSet s = 0;
  VarSet t = 0;
  std::size_t v = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct SubmodularityReport {
  bool cond_independent = false;
  std::vector<LatticeViolation> violations;  // sorted by (property, S, T, v)
  bool f_monotone = true;
  bool mi_submodular = true;
  bool it_diversity_submodular = true;
  bool bounds_supermodular = true;
  bool bounds_nonincreasing = true;
};

inline constexpr double kLatticeTolerance = 1e-10;

// Enumerates the subset lattice and checks the properties that hold when the
// layer variables are conditionally independent given Y. Bound checks are
// skipped when |Y| < 2.
SubmodularityReport submodularity_check(const DiscreteEnsemble& e,
                                        double tolerance = kLatticeTolerance);

// True when p(u_1..u_n | y) = prod_i p(u_i | y) in every cell with p(y) > 0.
bool conditionally_independent(const DiscreteEnsemble& e, double tolerance = 1e-10);

// Fixture generators, all deterministic in the seed.

// joint = p(y) * prod_i p(u_i | y) from SplitMix64 draws.
DiscreteEnsemble sample_cond_independent(std::uint64_t seed, std::size_t n,
                                         std::size_t y_alphabet,
                                         std::span<const std::size_t> u_alphabets);

// Unstructured joint table: every cell drawn uniformly, then normalized.
DiscreteEnsemble sample_random_ensemble(std::uint64_t seed, std::size_t y_alphabet,
                                        std::span<const std::size_t> u_alphabets);

// u_1, u_2 iid uniform bits, Y = u_1 xor u_2.
DiscreteEnsemble xor_ensemble();
// Y a uniform bit and u_1 = Y.
DiscreteEnsemble copy_ensemble();
// u_1 = u_2 a uniform bit, Y an independent uniform bit.
DiscreteEnsemble duplicated_bit_ensemble();
// u_1 = u_2 = Y, a uniform bit: dependent marginally, independent given Y.
DiscreteEnsemble duplicated_label_ensemble();
// u_1 a uniform bit, Y an independent uniform bit.
DiscreteEnsemble independent_ensemble();

}  // namespace resdiv
