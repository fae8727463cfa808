#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "resdiv/decomp.hpp"
#include "resdiv/role.hpp"

namespace resdiv {

struct ResidualDump;

// Fraction of (gold, predicted) pairs that agree. Throws InputError on an
// empty list.
double accuracy(std::span<const std::pair<std::size_t, std::size_t>> predictions);

// Throws InputError on length mismatch or fewer than two points, and
// UndefinedCorrelationError when either series has zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);

// 1-based average ranks; tied values share the mean of their rank positions.
std::vector<double> average_ranks(std::span<const double> xs);

// tanh(mean(atanh(r))) with |r| clamped to 1 - 1e-12. Throws InputError on an
// empty list.
double fisher_average(std::span<const double> rs);

// Two-sided p-value of a Pearson r over n points (Student t, n - 2 dof).
double pearson_p_value(double r, std::size_t n);

// Mean of x with population standard deviation 1. Zero-variance input
// throws UndefinedCorrelationError.
std::vector<double> standardize(std::span<const double> xs);

// Per-junction means over instances, in raw units.
struct MetricSeries {
  std::vector<std::size_t> junction;
  std::vector<double> accuracy;
  std::vector<double> mse;
  std::vector<double> bias;
  std::vector<double> diversity;
  std::vector<double> identity_residual;

  std::size_t size() const { return junction.size(); }
};

// Averages prefix_metrics over every instance of the dump. A dump with no
// instances yields an empty series.
MetricSeries junction_series(const ResidualDump& dump,
                             SoftmaxMode mode = SoftmaxMode::kLogitMean);

// The three metric correlations, in the order (-mse, -bias, +diversity).
inline constexpr std::array<const char*, 3> kCorrelatedMetrics = {"mse", "bias", "diversity"};

struct CorrelationRow {
  std::string model;
  std::string task;
  std::size_t points = 0;
  bool degenerate = false;  // excluded from averages
  std::array<std::optional<double>, 3> pearson{};
  std::array<std::optional<double>, 3> spearman{};
  std::array<std::optional<double>, 3> p_value{};
};

struct CorrelationAverage {
  std::size_t rows = 0;
  std::array<std::optional<double>, 3> pearson{};
  std::array<std::optional<double>, 3> spearman{};
};

struct CorrelationTable {
  std::vector<CorrelationRow> rows;                 // sorted by (model, task)
  std::map<std::string, CorrelationAverage> tasks;  // Fisher average across models
  CorrelationAverage overall;                       // Fisher average across tasks
};

using SeriesKey = std::pair<std::string, std::string>;  // (model, task)

// Each metric is z-standardized over the junction points of its own series,
// then accuracy is correlated with -mse, -bias and +diversity. A series with
// fewer than three points, or whose correlations are undefined, is flagged
// degenerate and left out of every average.
CorrelationTable correlation_report(const std::map<SeriesKey, MetricSeries>& series);

// Per-role share of the bias term and of the diversity term, each summing to
// one: share(role) = count(role) * role_mean / sum over roles, averaged over
// the given decompositions. Throws InputError on an empty list or
// inconsistent role counts, and UndefinedError when a total is zero.
struct ModuleShares {
  std::array<std::size_t, kNumRoles> counts{};
  std::array<double, kNumRoles> bias{};
  std::array<double, kNumRoles> diversity{};
};

ModuleShares module_proportions(std::span<const DecompositionResult> results);

}  // namespace resdiv
