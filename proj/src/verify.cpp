#include "resdiv/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "resdiv/contribution_matrix.hpp"
#include "resdiv/decomp.hpp"
#include "resdiv/error.hpp"
#include "resdiv/infodiv.hpp"
#include "resdiv/splitmix64.hpp"

namespace resdiv {

namespace {

constexpr std::size_t kDecompCases = 1000;
constexpr std::size_t kEnsembleCases = 200;
constexpr std::size_t kCondIndependentCases = 100;

constexpr double kIdentityTol = 1e-9;
constexpr double kZeroTol = 1e-12;
constexpr double kAlgebraicTol = 1e-12;
constexpr double kSelfConsistencyTol = 1e-10;

struct Case {
  std::vector<double> target;
  ContributionMatrix matrix;
};

std::vector<Role> random_roles(SplitMix64& rng, std::size_t layers) {
  // Stream order when the count fits the emb/attn/mlp pattern, random roles
  // otherwise, so the grouping identity also sees unbalanced groupings.
  if (layers % 2 == 1 && rng.below(2) == 0) return stream_roles(layers / 2);
  std::vector<Role> roles(layers);
  for (Role& r : roles) r = kAllRoles[rng.below(kNumRoles)];
  return roles;
}

Case random_case(SplitMix64& rng, std::size_t max_layers, std::size_t max_options) {
  const std::size_t layers = 1 + rng.below(max_layers);
  const std::size_t options = 2 + rng.below(max_options - 1);
  std::vector<double> values(layers * options);
  for (double& v : values) v = rng.uniform(-5.0, 5.0);
  std::vector<double> target(options);
  for (double& t : target) t = rng.uniform(-5.0, 5.0);
  return {std::move(target),
          ContributionMatrix(layers, options, std::move(values), random_roles(rng, layers))};
}

double relative(double err, double scale) {
  return err / std::max(scale, std::numeric_limits<double>::min());
}

void track(CheckRecord& c, double err, std::vector<std::pair<std::string, double>> witness = {}) {
  const bool first = c.cases++ == 0;
  if (first || err > c.max_error || (std::isnan(err) && !std::isnan(c.max_error))) {
    c.max_error = err;
    if (!witness.empty()) c.witness = std::move(witness);
  }
  if (!(err <= c.tolerance)) c.passed = false;
}

CheckRecord check(std::string name, double tolerance, std::string note = {}) {
  CheckRecord c;
  c.name = std::move(name);
  c.tolerance = tolerance;
  c.note = std::move(note);
  return c;
}

// ---------------------------------------------------------------- ambiguity identity

SuiteResult theorem1(const VerifyOptions& opt) {
  SuiteResult r{"theorem1", {}};
  auto identity = check("ambiguity_identity", kIdentityTol,
                        "|mse - (bias - diversity)| / bias over random cases, L<=64, V<=512");
  auto grouping = check("module_grouping_identity", kIdentityTol,
                        "count-weighted role means recombine to the totals (relative)");
  for (std::uint64_t seed : opt.seeds) {
    SplitMix64 rng(seed);
    for (std::size_t n = 0; n < kDecompCases; ++n) {
      const Case c = random_case(rng, 64, 512);
      const auto d = ambiguity_decompose(c.target, c.matrix);
      track(identity, relative(std::abs(d.mse - (d.bias - d.diversity)), d.bias),
            {{"layers", double(c.matrix.num_layers())}, {"options", double(c.matrix.num_options())}});
      const auto [b, v] = recombine_modules(d);
      track(grouping, std::max(relative(std::abs(b - d.bias), d.bias),
                               relative(std::abs(v - d.diversity), d.diversity)));
    }
  }
  r.checks = {identity, grouping};
  return r;
}

// ---------------------------------------------------------------- zero-bias limit

SuiteResult theorem2(const VerifyOptions& opt) {
  SuiteResult r{"theorem2", {}};
  auto zero = check("bias_zero_implies_diversity_zero", kZeroTol,
                    "every row equals the target: max of all bias/diversity terms");
  for (std::uint64_t seed : opt.seeds) {
    SplitMix64 rng(seed ^ 0x7468326D);
    for (std::size_t n = 0; n < kEnsembleCases; ++n) {
      const std::size_t layers = 1 + rng.below(33);
      const std::size_t options = 2 + rng.below(63);
      std::vector<double> target(options);
      for (double& t : target) t = rng.uniform(-5.0, 5.0);
      std::vector<double> values;
      for (std::size_t i = 0; i < layers; ++i) values.insert(values.end(), target.begin(), target.end());
      const ContributionMatrix m(layers, options, std::move(values), random_roles(rng, layers));
      const auto d = ambiguity_decompose(target, m);
      double worst = std::max({d.bias, d.diversity, std::abs(d.mse)});
      for (const auto& mod : d.per_module) worst = std::max({worst, mod.bias, mod.diversity});
      track(zero, worst);
    }
  }
  r.checks = {zero};
  return r;
}

// ---------------------------------------------------------------- bias / variance / covariance

SuiteResult theorem3(const VerifyOptions& opt) {
  SuiteResult r{"theorem3", {}};
  auto covariance = check(
      "covariance_via_mean_prediction_variance", kSelfConsistencyTol,
      "mean covariance vs (L Var(ubar) - mean variance) / (L - 1), an independent algebraic route");
  auto constant = check("constant_target_residuals", kIdentityTol,
                        "constant target: |residual_bias| and |residual_diversity|");
  auto counter = check("non_constant_counterexample", 0.0,
                       "target (1,0), layers {(1,0),(1,0)}: residual_bias must equal 0.25");
  auto general = check("diversity_rhs_general", kIdentityTol,
                       "observed: diversity_rhs matches diversity for any target");
  general.informational = true;
  for (std::uint64_t seed : opt.seeds) {
    SplitMix64 rng(seed ^ 0x7468336D);
    for (std::size_t n = 0; n < kEnsembleCases; ++n) {
      Case c = random_case(rng, 32, 128);
      const auto b = brown_quantities(c.target, c.matrix);
      const std::size_t layers = c.matrix.num_layers();
      if (layers > 1) {
        std::vector<double> ubar(c.matrix.num_options(), 0.0);
        for (std::size_t i = 0; i < layers; ++i) {
          for (std::size_t j = 0; j < ubar.size(); ++j) ubar[j] += c.matrix(i, j) / double(layers);
        }
        const double mu = std::accumulate(ubar.begin(), ubar.end(), 0.0) / double(ubar.size());
        double var = 0.0;
        for (double x : ubar) var += (x - mu) * (x - mu);
        var /= double(ubar.size());
        const double alt = (double(layers) * var - b.mean_variance) / double(layers - 1);
        track(covariance, std::abs(alt - b.mean_covariance));
      }
      track(general, std::abs(b.residual_diversity));

      const double level = rng.uniform(-5.0, 5.0);
      std::fill(c.target.begin(), c.target.end(), level);
      const auto bc = brown_quantities(c.target, c.matrix);
      track(constant, std::max(std::abs(bc.residual_bias), std::abs(bc.residual_diversity)));
    }
  }
  const ContributionMatrix m(2, 2, {1, 0, 1, 0}, {Role::kEmbedding, Role::kAttention});
  const std::vector<double> target = {1.0, 0.0};
  const auto b = brown_quantities(target, m);
  track(counter, std::abs(b.residual_bias - 0.25), {{"residual_bias", b.residual_bias}});
  r.checks = {covariance, constant, counter, general};
  return r;
}

// ------------------------------------------------------------ ensembles

std::vector<DiscreteEnsemble> random_ensembles(std::uint64_t seed, std::size_t count,
                                               bool cond_independent) {
  SplitMix64 rng(seed ^ (cond_independent ? 0x63696E64ULL : 0x72616E64ULL));
  std::vector<DiscreteEnsemble> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t vars = 1 + rng.below(4);
    const std::size_t ys = 2 + rng.below(2);
    std::vector<std::size_t> sizes(vars);
    for (auto& s : sizes) s = 2 + rng.below(2);
    const std::uint64_t fixture_seed = rng.next();
    out.push_back(cond_independent ? sample_cond_independent(fixture_seed, vars, ys, sizes)
                                   : sample_random_ensemble(fixture_seed, ys, sizes));
  }
  return out;
}

std::vector<std::pair<std::string, double>> varset_witness(VarSet s, VarSet t, std::size_t v) {
  // Reported 1-based, matching the U_1..U_n naming.
  auto encode = [](VarSet x) {
    double code = 0.0;
    for (std::size_t i : from_varset(x)) code = code * 10.0 + double(i + 1);
    return code;
  };
  return {{"S", encode(s)}, {"T", encode(t)}, {"v", double(v + 1)}};
}

// ---------------------------------------------------------------- information decomposition and bounds

SuiteResult theorem4(const VerifyOptions& opt) {
  SuiteResult r{"theorem4", {}};
  auto identity = check("it_decomposition_identity", 1e-10,
                        "|I(U;Y) - (relevancy + CTC - TC)| over random ensembles, n<=4, alphabets<=3");
  auto xor_exact = check("xor_fixture", kAlgebraicTol,
                         "XOR ensemble gives (relevancy, CTC, TC, I) = (0, 1, 0, 1) bits");
  auto sandwich = check("bound_sandwich", 1e-10, "lower <= Bayes error <= upper");
  auto analytic = check("analytic_bound_fixtures", kAlgebraicTol,
                        "I = H(Y) gives error 0; I = 0 with a uniform bit gives error 0.5");
  auto nonneg = check("information_nonnegative", kAlgebraicTol,
                      "relevancy, CTC, TC >= 0 (magnitude of the most negative value)");
  for (std::uint64_t seed : opt.seeds) {
    for (const auto& e : random_ensembles(seed, kEnsembleCases, false)) {
      const auto d = it_decompose(e);
      track(identity, std::abs(d.identity_residual));
      track(nonneg, std::max({0.0, -d.relevancy, -d.cond_redundancy, -d.redundancy}));
      const auto b = error_bounds(e);
      track(sandwich, std::max({0.0, b.lower - b.bayes_error, b.bayes_error - b.upper}),
            {{"lower", b.lower}, {"bayes_error", b.bayes_error}, {"upper", b.upper}});
    }
  }
  const auto x = it_decompose(xor_ensemble());
  track(xor_exact,
        std::max({std::abs(x.relevancy), std::abs(x.cond_redundancy - 1.0), std::abs(x.redundancy),
                  std::abs(x.joint_mi - 1.0)}),
        {{"relevancy", x.relevancy}, {"cond_redundancy", x.cond_redundancy},
         {"redundancy", x.redundancy}, {"joint_mi", x.joint_mi}});
  const auto det = error_bounds(copy_ensemble());
  const auto ind = error_bounds(independent_ensemble());
  track(analytic, std::max({std::abs(det.bayes_error), std::abs(det.lower + 1.0), std::abs(det.upper),
                            std::abs(ind.bayes_error - 0.5), std::abs(ind.lower), std::abs(ind.upper - 0.5)}));
  for (const auto* b : {&det, &ind}) {
    track(sandwich, std::max({0.0, b->lower - b->bayes_error, b->bayes_error - b->upper}));
  }
  r.checks = {identity, xor_exact, sandwich, analytic, nonneg};
  return r;
}

// ------------------------------------------------------------ chain steps

std::vector<DiscreteEnsemble> chain_fixtures(std::uint64_t seed) {
  auto out = random_ensembles(seed, kEnsembleCases, false);
  out.push_back(xor_ensemble());
  out.push_back(duplicated_bit_ensemble());
  out.push_back(duplicated_label_ensemble());
  return out;
}

template <typename Fn>
void for_each_order(std::size_t n, Fn&& fn) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  do {
    fn(order);
  } while (std::next_permutation(order.begin(), order.end()));
}

SuiteResult theorem5(const VerifyOptions& opt) {
  SuiteResult r{"theorem5", {}};
  auto tc_eq = check("delta_tc_equals_mi_with_prefix", kAlgebraicTol,
                     "chain step: TC gain vs I(U_prefix; u_new) by direct summation, all orders");
  auto ctc_eq = check("delta_ctc_equals_cond_mi_with_prefix", kAlgebraicTol,
                      "chain step: CTC gain vs I(U_prefix; u_new | Y) by direct summation");
  auto monotone = check("relevancy_redundancy_monotone", kAlgebraicTol,
                        "relevancy, CTC and TC gains are >= 0 at every step");
  auto positive = check("it_diversity_increase_witness", 0.0,
                        "XOR, order (1,2): the step-2 it-diversity gain must be > 0");
  auto negative = check("it_diversity_decrease_witness", 0.0,
                        "u1 = u2 = Y, order (1,2): the step-2 it-diversity gain must be < 0");
  for (std::uint64_t seed : opt.seeds) {
    for (const auto& e : chain_fixtures(seed)) {
      for_each_order(e.num_variables(), [&](const std::vector<std::size_t>& order) {
        for (const auto& s : chain_deltas(e, order)) {
          track(tc_eq, std::abs(s.d_total_correlation - s.mi_with_prefix));
          track(ctc_eq, std::abs(s.d_cond_total_correlation - s.cond_mi_with_prefix));
          track(monotone, std::max({0.0, -s.d_relevancy, -s.d_total_correlation,
                                    -s.d_cond_total_correlation}));
        }
      });
    }
  }
  const std::vector<std::size_t> order = {0, 1};
  const auto up = chain_deltas(xor_ensemble(), order)[1];
  track(positive, up.d_it_diversity > 0.0 ? 0.0 : 1.0,
        {{"d_it_diversity", up.d_it_diversity}, {"d_joint_mi", up.d_joint_mi}});
  const auto down = chain_deltas(duplicated_label_ensemble(), order)[1];
  track(negative, down.d_it_diversity < 0.0 ? 0.0 : 1.0,
        {{"d_it_diversity", down.d_it_diversity}, {"d_joint_mi", down.d_joint_mi}});
  r.checks = {tc_eq, ctc_eq, monotone, positive, negative};
  return r;
}

SuiteResult theorem6(const VerifyOptions& opt) {
  SuiteResult r{"theorem6", {}};
  auto tracks_mi = check("bound_steps_follow_joint_mi", kAlgebraicTol,
                         "bound change per step equals -dI/log2|Y| (lower) and -dI/2 (upper)");
  auto uneven = check("uneven_bound_steps_witness", 0.0,
                      "XOR, order (1,2): upper-bound steps are 0 then -0.5 (bounds move only "
                      "through I, and I's gains are not constant)");
  auto increases = check("bound_increase_observed", 0.0,
                         "count of steps where a bound increased; I(U;Y) gains are conditional "
                         "MI, so none are expected");
  increases.informational = true;
  for (std::uint64_t seed : opt.seeds) {
    for (const auto& e : chain_fixtures(seed)) {
      const double log_y = std::log2(double(e.y_size()));
      for_each_order(e.num_variables(), [&](const std::vector<std::size_t>& order) {
        VarSet prefix = 0;
        ErrorBounds before = error_bounds(restrict_to(e, 0));
        for (const auto& s : chain_deltas(e, order)) {
          prefix |= VarSet{1} << s.added;
          const ErrorBounds after = error_bounds(restrict_to(e, prefix));
          const double dl = after.lower - before.lower;
          const double du = after.upper - before.upper;
          track(tracks_mi, std::max(std::abs(dl + s.d_joint_mi / log_y),
                                    std::abs(du + s.d_joint_mi / 2.0)));
          if (dl > kAlgebraicTol || du > kAlgebraicTol) {
            ++increases.max_error;
            increases.passed = false;
          }
          before = after;
        }
      });
    }
  }
  increases.cases = tracks_mi.cases;
  const auto x = xor_ensemble();
  const double u0 = error_bounds(restrict_to(x, 0)).upper;
  const double u1 = error_bounds(restrict_to(x, 1)).upper;
  const double u2 = error_bounds(restrict_to(x, 3)).upper;
  track(uneven, std::max(std::abs(u1 - u0), std::abs((u2 - u1) + 0.5)),
        {{"step1", u1 - u0}, {"step2", u2 - u1}});
  r.checks = {tracks_mi, uneven, increases};
  return r;
}

// ------------------------------------------------------------ subset lattice

void xor_expected_violation(SuiteResult& r, bool bounds) {
  const auto rep = submodularity_check(xor_ensemble());
  auto c = check(bounds ? "xor_expected_bound_violation" : "xor_expected_violation", 0.0,
                 "XOR breaks conditional independence; violations are expected");
  c.informational = true;
  c.cases = 1;
  for (const auto& v : rep.violations) {
    const bool is_bound = v.property == LatticeProperty::kLowerBoundSupermodular ||
                          v.property == LatticeProperty::kUpperBoundSupermodular;
    if (is_bound != bounds) continue;
    ++c.max_error;
    if (c.witness.empty()) {
      c.witness = varset_witness(v.s, v.t, v.v);
      c.witness.emplace_back("gain_at_S", v.lhs);
      c.witness.emplace_back("gain_at_T", v.rhs);
      c.note += "; first: " + lattice_property_name(v.property);
    }
  }
  c.passed = c.max_error == 0.0;
  r.checks.push_back(c);
}

SuiteResult theorem7(const VerifyOptions& opt) {
  SuiteResult r{"theorem7", {}};
  auto ci = check("fixtures_conditionally_independent", 0.0, "sampled fixtures satisfy the hypothesis");
  auto mi_sub = check("mi_submodular", kLatticeTolerance, "violations of I(U_S;Y) submodularity");
  auto mi_mono = check("mi_nondecreasing", kLatticeTolerance, "violations of I(U_S;Y) monotonicity");
  auto itd_sub = check("it_diversity_submodular", kLatticeTolerance,
                       "violations of it-diversity submodularity");
  auto flagged = check("xor_flagged", 0.0,
                       "XOR is reported as not conditionally independent with a (S,T,v) witness");
  for (std::uint64_t seed : opt.seeds) {
    for (const auto& e : random_ensembles(seed, kCondIndependentCases, true)) {
      const auto rep = submodularity_check(e);
      track(ci, rep.cond_independent ? 0.0 : 1.0);
      double mi_v = 0, mono_v = 0, itd_v = 0;
      for (const auto& v : rep.violations) {
        mi_v += v.property == LatticeProperty::kMiSubmodular;
        mono_v += v.property == LatticeProperty::kMiNondecreasing;
        itd_v += v.property == LatticeProperty::kItDiversitySubmodular;
      }
      // Count-valued checks: tolerance applies inside submodularity_check.
      mi_sub.tolerance = mi_mono.tolerance = itd_sub.tolerance = 0.0;
      track(mi_sub, mi_v);
      track(mi_mono, mono_v);
      track(itd_sub, itd_v);
    }
  }
  const auto x = submodularity_check(xor_ensemble());
  const auto first = std::find_if(x.violations.begin(), x.violations.end(), [](const auto& v) {
    return v.property == LatticeProperty::kMiSubmodular;
  });
  const bool ok = !x.cond_independent && first != x.violations.end() && first->s == 0 &&
                  first->t == 1 && first->v == 1;
  track(flagged, ok ? 0.0 : 1.0,
        first == x.violations.end() ? std::vector<std::pair<std::string, double>>{}
                                    : varset_witness(first->s, first->t, first->v));
  r.checks = {ci, mi_sub, mi_mono, itd_sub, flagged};
  for (auto& c : r.checks) {
    if (c.name != "fixtures_conditionally_independent" && c.name != "xor_flagged") {
      c.note += " (count; lattice tolerance 1e-10)";
    }
  }
  if (opt.inject_xor) xor_expected_violation(r, false);
  return r;
}

SuiteResult theorem8(const VerifyOptions& opt) {
  SuiteResult r{"theorem8", {}};
  auto super = check("bounds_supermodular", 0.0,
                     "violations of lower/upper bound supermodularity (count; lattice tolerance 1e-10)");
  auto nonincr = check("bounds_nonincreasing", 0.0,
                       "violations of lower/upper bound non-increase (count; lattice tolerance 1e-10)");
  for (std::uint64_t seed : opt.seeds) {
    for (const auto& e : random_ensembles(seed, kCondIndependentCases, true)) {
      const auto rep = submodularity_check(e);
      double s = 0, ni = 0;
      for (const auto& v : rep.violations) {
        s += v.property == LatticeProperty::kLowerBoundSupermodular ||
             v.property == LatticeProperty::kUpperBoundSupermodular;
        ni += v.property == LatticeProperty::kLowerBoundNonincreasing ||
              v.property == LatticeProperty::kUpperBoundNonincreasing;
      }
      track(super, s);
      track(nonincr, ni);
    }
  }
  r.checks = {super, nonincr};
  if (opt.inject_xor) xor_expected_violation(r, true);
  return r;
}

}  // namespace

bool SuiteResult::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckRecord& c) { return c.informational || c.passed; });
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"theorem1", "theorem2", "theorem3", "theorem4",
                                                 "theorem5", "theorem6", "theorem7", "theorem8"};
  return names;
}

SuiteResult run_suite(const std::string& name, const VerifyOptions& options) {
  if (name == "theorem1") return theorem1(options);
  if (name == "theorem2") return theorem2(options);
  if (name == "theorem3") return theorem3(options);
  if (name == "theorem4") return theorem4(options);
  if (name == "theorem5") return theorem5(options);
  if (name == "theorem6") return theorem6(options);
  if (name == "theorem7") return theorem7(options);
  if (name == "theorem8") return theorem8(options);
  throw InputError("unknown suite '" + name + "'");
}

}  // namespace resdiv
