#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace resdiv {

// One property check inside a suite. max_error is the largest observed
// violation measure (0 when the property held everywhere). Informational
// checks are reported but never fail a suite.
struct CheckRecord {
  std::string name;
  double tolerance = 0.0;
  double max_error = 0.0;
  std::size_t cases = 0;
  bool passed = true;
  bool informational = false;
  std::string note;
  std::vector<std::pair<std::string, double>> witness;
};

struct SuiteResult {
  std::string name;
  std::vector<CheckRecord> checks;

  bool passed() const;
};

struct VerifyOptions {
  std::vector<std::uint64_t> seeds = {0};
  // Adds the XOR ensemble to the theorem7/theorem8 runs; its violations are
  // reported as expected (informational) rather than as failures.
  bool inject_xor = false;
};

// theorem1 .. theorem8, in order.
const std::vector<std::string>& suite_names();

// Throws InputError for an unknown suite name.
SuiteResult run_suite(const std::string& name, const VerifyOptions& options);

}  // namespace resdiv
