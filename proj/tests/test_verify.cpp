#include "doctest.h"
#include "resdiv/error.hpp"
#include "resdiv/verify.hpp"

using namespace resdiv;

TEST_CASE("every suite passes on the default seed") {
  REQUIRE(suite_names().size() == 8);
  for (const auto& name : suite_names()) {
    const SuiteResult r = run_suite(name, {});
    CAPTURE(name);
    CHECK(r.name == name);
    CHECK_FALSE(r.checks.empty());
    for (const auto& c : r.checks) {
      CAPTURE(c.name);
      CHECK(c.cases > 0);
      if (!c.informational) CHECK(c.passed);
    }
    CHECK(r.passed());
  }
}

TEST_CASE("informational checks never fail a suite") {
  VerifyOptions opts;
  opts.inject_xor = true;
  const SuiteResult r = run_suite("theorem8", opts);
  CHECK(r.passed());
  const auto& last = r.checks.back();
  CHECK(last.informational);
  CHECK_FALSE(last.passed);
  CHECK(last.max_error > 0);
}

TEST_CASE("unknown suite") {
  CHECK_THROWS_AS(run_suite("theorem0", {}), InputError);
}
