#include "resdiv/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "resdiv/dumpio.hpp"
#include "resdiv/error.hpp"

namespace resdiv {

namespace {

constexpr double kFisherClamp = 1.0 - 1e-12;

void check_pair(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InputError("correlation inputs differ in length");
  if (xs.size() < 2) throw InputError("correlation needs at least two points");
}

double mean(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

double accuracy(std::span<const std::pair<std::size_t, std::size_t>> predictions) {
  if (predictions.empty()) throw InputError("accuracy of an empty prediction list");
  std::size_t hits = 0;
  for (const auto& [gold, predicted] : predictions) hits += gold == predicted ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("series has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    // Positions i..j (0-based) share the mean 1-based rank.
    const double r = (static_cast<double>(i + j) + 2.0) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

double fisher_average(std::span<const double> rs) {
  if (rs.empty()) throw InputError("fisher average of an empty list");
  double z = 0.0;
  for (double r : rs) z += std::atanh(std::clamp(r, -kFisherClamp, kFisherClamp));
  return std::tanh(z / static_cast<double>(rs.size()));
}

double pearson_p_value(double r, std::size_t n) {
  if (n < 3) throw InputError("p-value needs at least three points");
  if (std::abs(r) >= 1.0) return 0.0;
  const double dof = static_cast<double>(n - 2);
  const double t = std::abs(r) * std::sqrt(dof / (1.0 - r * r));
  const boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, t));
}

std::vector<double> standardize(std::span<const double> xs) {
  if (xs.empty()) throw InputError("cannot standardize an empty series");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size()));
  if (sd == 0.0) throw UndefinedCorrelationError("series has zero variance");
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - m) / sd;
  return out;
}

MetricSeries junction_series(const ResidualDump& dump, SoftmaxMode mode) {
  MetricSeries series;
  if (dump.instances.empty()) return series;
  const std::size_t layers = dump.num_layers;
  series.junction.resize(layers);
  std::iota(series.junction.begin(), series.junction.end(), std::size_t{1});
  series.accuracy.assign(layers, 0.0);
  series.mse.assign(layers, 0.0);
  series.bias.assign(layers, 0.0);
  series.diversity.assign(layers, 0.0);
  series.identity_residual.assign(layers, 0.0);
  for (std::size_t n = 0; n < dump.num_instances(); ++n) {
    const auto metrics = prefix_metrics(dump.instances[n].gold_index, dump.matrix(n), mode);
    for (std::size_t k = 0; k < layers; ++k) {
      series.accuracy[k] += metrics[k].correct ? 1.0 : 0.0;
      series.mse[k] += metrics[k].mse;
      series.bias[k] += metrics[k].bias;
      series.diversity[k] += metrics[k].diversity;
      series.identity_residual[k] += metrics[k].identity_residual;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(dump.num_instances());
  for (std::size_t k = 0; k < layers; ++k) {
    series.accuracy[k] *= inv_n;
    series.mse[k] *= inv_n;
    series.bias[k] *= inv_n;
    series.diversity[k] *= inv_n;
    series.identity_residual[k] *= inv_n;
  }
  return series;
}

namespace {

CorrelationRow correlate_series(const SeriesKey& key, const MetricSeries& s) {
  CorrelationRow row;
  row.model = key.first;
  row.task = key.second;
  row.points = s.size();
  if (s.size() < 3 || s.accuracy.size() != s.size() || s.mse.size() != s.size() ||
      s.bias.size() != s.size() || s.diversity.size() != s.size()) {
    row.degenerate = true;
    return row;
  }
  auto try_standardize = [](std::span<const double> xs) -> std::optional<std::vector<double>> {
    try {
      return standardize(xs);
    } catch (const UndefinedError&) {
      return std::nullopt;
    }
  };
  const auto acc = try_standardize(s.accuracy);
  const std::array<const std::vector<double>*, 3> raw = {&s.mse, &s.bias, &s.diversity};
  const std::array<double, 3> sign = {-1.0, -1.0, 1.0};
  for (std::size_t m = 0; m < 3; ++m) {
    auto z = try_standardize(*raw[m]);
    if (!acc || !z) continue;
    for (double& x : *z) x *= sign[m];
    row.pearson[m] = pearson(*acc, *z);
    row.spearman[m] = spearman(*acc, *z);
    row.p_value[m] = pearson_p_value(*row.pearson[m], s.size());
  }
  for (std::size_t m = 0; m < 3; ++m) {
    if (!row.pearson[m] || !row.spearman[m]) row.degenerate = true;
  }
  return row;
}

}  // namespace

CorrelationTable correlation_report(const std::map<SeriesKey, MetricSeries>& series) {
  CorrelationTable table;
  for (const auto& [key, s] : series) table.rows.push_back(correlate_series(key, s));

  std::map<std::string, std::vector<const CorrelationRow*>> by_task;
  for (const auto& row : table.rows) {
    if (!row.degenerate) by_task[row.task].push_back(&row);
  }
  std::array<std::vector<double>, 3> task_pearson;
  std::array<std::vector<double>, 3> task_spearman;
  for (const auto& [task, rows] : by_task) {
    CorrelationAverage avg;
    avg.rows = rows.size();
    for (std::size_t m = 0; m < 3; ++m) {
      std::vector<double> ps;
      std::vector<double> ss;
      for (const CorrelationRow* r : rows) {
        ps.push_back(*r->pearson[m]);
        ss.push_back(*r->spearman[m]);
      }
      avg.pearson[m] = fisher_average(ps);
      avg.spearman[m] = fisher_average(ss);
      task_pearson[m].push_back(*avg.pearson[m]);
      task_spearman[m].push_back(*avg.spearman[m]);
    }
    table.tasks.emplace(task, avg);
  }
  table.overall.rows = table.tasks.size();
  if (!table.tasks.empty()) {
    for (std::size_t m = 0; m < 3; ++m) {
      table.overall.pearson[m] = fisher_average(task_pearson[m]);
      table.overall.spearman[m] = fisher_average(task_spearman[m]);
    }
  }
  return table;
}

ModuleShares module_proportions(std::span<const DecompositionResult> results) {
  if (results.empty()) throw InputError("module proportions of an empty result list");
  ModuleShares shares;
  for (Role r : kAllRoles) shares.counts[role_index(r)] = results[0].module(r).count;
  for (const DecompositionResult& res : results) {
    double bias_total = 0.0;
    double div_total = 0.0;
    for (Role r : kAllRoles) {
      const ModuleTerms& m = res.module(r);
      if (m.count != shares.counts[role_index(r)]) {
        throw InputError("decompositions have inconsistent role counts");
      }
      bias_total += static_cast<double>(m.count) * m.bias;
      div_total += static_cast<double>(m.count) * m.diversity;
    }
    if (bias_total <= 0.0 || div_total <= 0.0) {
      throw UndefinedError("module proportions are undefined for a zero bias or diversity total");
    }
    for (Role r : kAllRoles) {
      const ModuleTerms& m = res.module(r);
      shares.bias[role_index(r)] += static_cast<double>(m.count) * m.bias / bias_total;
      shares.diversity[role_index(r)] += static_cast<double>(m.count) * m.diversity / div_total;
    }
  }
  const double inv = 1.0 / static_cast<double>(results.size());
  for (Role r : kAllRoles) {
    shares.bias[role_index(r)] *= inv;
    shares.diversity[role_index(r)] *= inv;
  }
  return shares;
}

}  // namespace resdiv
