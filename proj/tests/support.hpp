#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "resdiv/commands.hpp"
#include "resdiv/contribution_matrix.hpp"
#include "resdiv/splitmix64.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("resdiv-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

inline CliResult run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = resdiv::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

inline resdiv::ContributionMatrix matrix(const std::vector<std::vector<double>>& rows) {
  std::vector<double> values;
  for (const auto& r : rows) values.insert(values.end(), r.begin(), r.end());
  std::vector<resdiv::Role> roles(rows.size(), resdiv::Role::kAttention);
  roles[0] = resdiv::Role::kEmbedding;
  for (std::size_t i = 2; i < rows.size(); i += 2) roles[i] = resdiv::Role::kMlp;
  return resdiv::ContributionMatrix(rows.size(), rows[0].size(), std::move(values), roles);
}

inline resdiv::ContributionMatrix random_matrix(resdiv::SplitMix64& rng, std::size_t layers,
                                                std::size_t options, double lo = -5.0,
                                                double hi = 5.0) {
  std::vector<std::vector<double>> rows(layers, std::vector<double>(options));
  for (auto& r : rows) {
    for (double& v : r) v = rng.uniform(lo, hi);
  }
  return matrix(rows);
}

}  // namespace testing
