#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "resdiv/analysis.hpp"
#include "resdiv/dumpio.hpp"
#include "support.hpp"

using namespace resdiv;
using testing::run_cli;
using testing::TempDir;

namespace {

std::vector<std::string> synth_args(const std::string& out, const std::string& seed = "3",
                                    const std::string& blocks = "2",
                                    const std::string& instances = "12") {
  return {"synth", "--seed", seed, "--vocab", "16", "--dmodel", "8", "--blocks", blocks,
          "--heads", "2", "--instances", instances, "--options", "3", "--out", out};
}

}  // namespace

TEST_CASE("synth") {
  TempDir dir;
  SUBCASE("sixteen blocks give 33 layers") {
    const auto r = run_cli(synth_args(dir / "a.rsdc", "1", "16", "2"));
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["num_layers"] == 33);
    CHECK(j["max_reconstruction_error"].get<double>() <= 1e-5);
    const auto d = read_dump_file(dir / "a.rsdc");
    CHECK(d.layer_roles == stream_roles(16));
    CHECK(d.option_labels == std::vector<std::string>{"tok0", "tok1", "tok2"});
  }
  SUBCASE("zero instances") {
    REQUIRE(run_cli(synth_args(dir / "e.rsdc", "1", "2", "0")).code == 0);
    const auto d = read_dump_file(dir / "e.rsdc");
    CHECK(d.num_instances() == 0);
    CHECK(std::filesystem::file_size(dir / "e.rsdc") == 12 + dump_header_json(d).size());
  }
  SUBCASE("deterministic bytes") {
    REQUIRE(run_cli(synth_args(dir / "x.rsdc")).code == 0);
    REQUIRE(run_cli(synth_args(dir / "y.rsdc")).code == 0);
    CHECK(testing::slurp(dir / "x.rsdc") == testing::slurp(dir / "y.rsdc"));
    REQUIRE(run_cli(synth_args(dir / "z.rsdc", "4")).code == 0);
    CHECK(testing::slurp(dir / "x.rsdc") != testing::slurp(dir / "z.rsdc"));
  }
  SUBCASE("flag errors") {
    CHECK(run_cli({"synth", "--seed", "1"}).code == 2);
    CHECK(run_cli({"synth", "--seed", "x", "--vocab", "16", "--dmodel", "8", "--blocks", "2", "--heads",
               "2", "--instances", "1", "--options", "3", "--out", dir / "q"})
              .code == 2);
    auto heads = synth_args(dir / "h.rsdc");
    heads[10] = "3";
    CHECK(run_cli(heads).code == 2);
    auto options = synth_args(dir / "o.rsdc");
    options[14] = "1";
    CHECK(run_cli(options).code == 2);
    options[14] = "17";
    CHECK(run_cli(options).code == 2);
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"bogus"}).code == 2);
    CHECK(run_cli({"--help"}).code == 0);
  }
  SUBCASE("unwritable output") {
    CHECK(run_cli(synth_args(dir / "no/such/dir/a.rsdc")).code == 3);
  }
}

TEST_CASE("decompose") {
  TempDir dir;
  REQUIRE(run_cli(synth_args(dir / "d.rsdc", "42", "2", "40")).code == 0);
  const auto r = run_cli({"decompose", "--dump", dir / "d.rsdc", "--out-prefix", dir / "out"});
  REQUIRE(r.code == 0);
  const auto rows = testing::read_csv(dir / "out_junction.csv");
  REQUIRE(rows.size() == 6);
  CHECK(rows[0] == std::vector<std::string>{"k", "accuracy", "mse", "bias", "diversity",
                                            "identity_residual"});
  const auto dump = read_dump_file(dir / "d.rsdc");
  std::vector<std::pair<std::size_t, std::size_t>> preds;
  for (std::size_t n = 0; n < dump.num_instances(); ++n) {
    preds.emplace_back(dump.instances[n].gold_index, argmax(reconstruct_logits(dump.matrix(n))));
  }
  CHECK(rows[5][0] == "5");
  CHECK(std::stod(rows[5][1]) == doctest::Approx(100.0 * accuracy(preds)).epsilon(1e-15));
  const auto s = junction_series(dump);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(std::stod(rows[k + 1][2]) == 100.0 * s.mse[k]);
    CHECK(std::stod(rows[k + 1][5]) == s.identity_residual[k]);
  }

  const auto props = testing::read_csv(dir / "out_proportions.csv");
  REQUIRE(props.size() == 4);
  CHECK(props[1][0] == "emb");
  CHECK(props[2][1] == "2");
  double sum = 0;
  for (std::size_t i = 1; i < 4; ++i) sum += std::stod(props[i][2]);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  const auto meta = nlohmann::json::parse(testing::slurp(dir / "out_meta.json"));
  CHECK(meta["mode"] == "logit-mean");

  REQUIRE(run_cli({"decompose", "--dump", dir / "d.rsdc", "--out-prefix", dir / "ex",
               "--exact-identity-mode"})
              .code == 0);
  const auto ex = testing::read_csv(dir / "ex_junction.csv");
  for (std::size_t k = 1; k < ex.size(); ++k) CHECK(std::abs(std::stod(ex[k][5])) <= 1e-12);
  CHECK(nlohmann::json::parse(testing::slurp(dir / "ex_meta.json"))["mode"] == "probability-mean");
}

TEST_CASE("decompose on equal layers and on errors") {
  TempDir dir;
  ResidualDump d;
  d.model_name = "eq";
  d.task_name = "t";
  d.num_layers = 3;
  d.num_options = 2;
  d.layer_roles = stream_roles(1);
  d.option_labels = {"a", "b"};
  d.instances = {{0, {1, -1, 1, -1, 1, -1}}, {1, {0.2f, 0.5f, 0.2f, 0.5f, 0.2f, 0.5f}}};
  write_dump_file(d, dir / "eq.rsdc");
  REQUIRE(run_cli({"decompose", "--dump", dir / "eq.rsdc", "--out-prefix", dir / "eq"}).code == 0);
  const auto rows = testing::read_csv(dir / "eq_junction.csv");
  for (std::size_t k = 1; k < rows.size(); ++k) CHECK(std::abs(std::stod(rows[k][4])) <= 1e-12);
  // Every diversity term is zero, so the diversity shares are undefined.
  const auto props = testing::read_csv(dir / "eq_proportions.csv");
  CHECK(props[1][2].empty());
  const auto meta = nlohmann::json::parse(testing::slurp(dir / "eq_meta.json"));
  CHECK(meta["proportions_status"].get<std::string>().rfind("undefined", 0) == 0);

  CHECK(run_cli({"decompose", "--dump", dir / "missing.rsdc", "--out-prefix", dir / "m"}).code == 3);
  std::ofstream(dir / "junk.rsdc") << "RSDX....";
  CHECK(run_cli({"decompose", "--dump", dir / "junk.rsdc", "--out-prefix", dir / "m"}).code == 3);
  auto bytes = encode_dump(d);
  bytes[12 + dump_header_json(d).size()] = std::byte{9};  // gold index 9 >= 2 options
  {
    std::ofstream f(dir / "bad.rsdc", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  CHECK(run_cli({"decompose", "--dump", dir / "bad.rsdc", "--out-prefix", dir / "m"}).code == 4);
  CHECK(run_cli({"decompose", "--dump", dir / "eq.rsdc"}).code == 2);
}

TEST_CASE("verify") {
  TempDir dir;
  SUBCASE("selected suites with a report file") {
    const auto r = run_cli({"verify", "--suites", "theorem1,theorem4", "--report", dir / "r.json"});
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(testing::slurp(dir / "r.json"));
    CHECK(j["passed"] == true);
    REQUIRE(j["suites"].size() == 2);
    CHECK(j["suites"][0]["name"] == "theorem1");
    for (const auto& c : j["suites"][1]["checks"]) {
      CHECK(c.contains("tolerance"));
      CHECK(c.contains("witness"));
    }
  }
  SUBCASE("injected XOR is an expected violation") {
    const auto r = run_cli({"verify", "--suites", "theorem7", "--inject-xor"});
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    bool found = false;
    for (const auto& c : j["suites"][0]["checks"]) {
      if (c["name"] == "xor_expected_violation") {
        found = true;
        CHECK(c["status"] == "expected-violation");
        CHECK(c["witness"]["v"] == 2.0);
      }
    }
    CHECK(found);
  }
  SUBCASE("flag validation") {
    CHECK(run_cli({"verify", "--suites", ""}).code == 2);
    CHECK(run_cli({"verify", "--suites", "theorem9"}).code == 2);
    CHECK(run_cli({"verify", "--seeds", "abc"}).code == 2);
  }
  SUBCASE("several seeds") {
    const auto r = run_cli({"verify", "--suites", "theorem2,theorem8", "--seeds", "1,2,3"});
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["seeds"].size() == 3);
    CHECK(j["suites"][1]["checks"][0]["cases"] == 300);
  }
}

TEST_CASE("correlate") {
  TempDir dir;
  auto synth = [&](const std::string& name, const std::string& seed, const std::string& model,
                   const std::string& task) {
    auto a = synth_args(dir / name, seed, "3", "30");
    a.insert(a.end(), {"--model-name", model, "--task-name", task});
    REQUIRE(run_cli(a).code == 0);
  };
  synth("a.rsdc", "1", "m1", "t1");
  synth("b.rsdc", "2", "m2", "t1");
  synth("c.rsdc", "3", "m1", "t2");

  REQUIRE(run_cli({"correlate", "--dumps", dir / "a.rsdc", dir / "b.rsdc", dir / "c.rsdc", "--out",
               dir / "once"})
              .code == 0);
  REQUIRE(run_cli({"correlate", "--dumps", dir / "a.rsdc", dir / "b.rsdc", dir / "c.rsdc",
               dir / "a.rsdc", "--out", dir / "twice"})
              .code == 0);
  CHECK(testing::slurp(dir / "once.csv") == testing::slurp(dir / "twice.csv"));
  CHECK(testing::slurp(dir / "once.json") == testing::slurp(dir / "twice.json"));

  const auto rows = testing::read_csv(dir / "once.csv");
  REQUIRE(rows.size() == 1 + 3 + 2 + 1);
  CHECK(rows[0][0] == "model");
  CHECK(rows[0].size() == 13);
  CHECK(rows[1][0] == "m1");
  CHECK(rows[1][1] == "t1");
  CHECK(rows[4][0] == "Avg");
  CHECK(rows[6][1] == "all");
  const auto j = nlohmann::json::parse(testing::slurp(dir / "once.json"));
  CHECK(j["rows"].size() == 3);
  CHECK(j["tasks"].contains("t1"));

  // Same key, different layout
  auto other = synth_args(dir / "d.rsdc", "4", "2", "5");
  other.insert(other.end(), {"--model-name", "m1", "--task-name", "t1"});
  REQUIRE(run_cli(other).code == 0);
  CHECK(run_cli({"correlate", "--dumps", dir / "a.rsdc", dir / "d.rsdc", "--out", dir / "bad"}).code == 4);
  CHECK(run_cli({"correlate", "--dumps", dir / "nope.rsdc", "--out", dir / "bad"}).code == 3);
  CHECK(run_cli({"correlate", "--out", dir / "bad"}).code == 2);
}

TEST_CASE("correlate concatenates same-key dumps") {
  TempDir dir;
  auto a = synth_args(dir / "a.rsdc", "1", "2", "10");
  auto b = synth_args(dir / "b.rsdc", "2", "2", "15");
  for (auto* v : {&a, &b}) v->insert(v->end(), {"--model-name", "m", "--task-name", "t"});
  // Different seeds mean different weights, but the layout matches.
  REQUIRE(run_cli(a).code == 0);
  REQUIRE(run_cli(b).code == 0);
  REQUIRE(run_cli({"correlate", "--dumps", dir / "a.rsdc", dir / "b.rsdc", "--out", dir / "c"}).code == 0);
  const auto rows = testing::read_csv(dir / "c.csv");
  CHECK(rows.size() == 1 + 1 + 1 + 1);
  CHECK(rows[1][2] == "5");
}

TEST_CASE("monotone improving dump correlates positively with -mse") {
  TempDir dir;
  ResidualDump d;
  d.model_name = "mono";
  d.task_name = "t";
  d.num_layers = 5;
  d.num_options = 2;
  d.layer_roles = stream_roles(2);
  d.option_labels = {"a", "b"};
  // Each instance has a gold-favouring row that lands at a different depth,
  // so accuracy rises with k while the ensemble mean moves toward the gold.
  for (std::size_t n = 0; n < 5; ++n) {
    DumpInstance inst;
    inst.gold_index = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      const float lead = i < n ? -0.2f : 1.0f + 0.5f * float(i);
      inst.matrix.push_back(lead);
      inst.matrix.push_back(0.0f);
    }
    d.instances.push_back(inst);
  }
  write_dump_file(d, dir / "m.rsdc");
  REQUIRE(run_cli({"correlate", "--dumps", dir / "m.rsdc", "--out", dir / "m"}).code == 0);
  const auto j = nlohmann::json::parse(testing::slurp(dir / "m.json"));
  CHECK(j["rows"][0]["pearson"]["mse"].get<double>() > 0.9);
}
