#include "resdiv/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "resdiv/analysis.hpp"
#include "resdiv/decomp.hpp"
#include "resdiv/dumpio.hpp"
#include "resdiv/error.hpp"
#include "resdiv/splitmix64.hpp"
#include "resdiv/toy_stream.hpp"
#include "resdiv/verify.hpp"

namespace resdiv::cli {

namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Input sequences are drawn from a stream separate from the weights.
constexpr std::uint64_t kInputStreamSalt = 0x696E70757473ULL;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : std::string(); }

void write_text_file(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f << text;
    if (!f) throw IoError("failed to write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at " + path.string());
  }
}

std::vector<std::byte> read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("failed to read " + path.string());
  std::vector<std::byte> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [](char c) { return std::byte(c); });
  return out;
}

// Maps library errors onto exit codes. Decoding failures count as I/O: the
// file could not be read as a dump at all.
int report_error(std::ostream& err, const std::string& cmd, const std::exception& e, int code) {
  err << "resdiv " << cmd << ": " << e.what() << "\n";
  return code;
}

template <typename Fn>
int guarded(const std::string& cmd, std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    return report_error(err, cmd, e, kExitUsage);
  } catch (const ValidationError& e) {
    return report_error(err, cmd, e, kExitValidation);
  } catch (const IoError& e) {
    return report_error(err, cmd, e, kExitIo);
  } catch (const FormatError& e) {
    return report_error(err, cmd, e, kExitIo);
  } catch (const UnsupportedVersionError& e) {
    return report_error(err, cmd, e, kExitIo);
  } catch (const CorruptionError& e) {
    return report_error(err, cmd, e, kExitIo);
  } catch (const InputError& e) {
    return report_error(err, cmd, e, kExitValidation);
  } catch (const Error& e) {
    return report_error(err, cmd, e, kExitValidation);
  }
}

// ---------------------------------------------------------------- synth

struct SynthFlags {
  ToyConfig config;
  std::size_t instances = 0;
  std::size_t options = 2;
  std::size_t seq_len = 6;
  std::string out;
  std::string model_name = "toy";
  std::string task_name = "synthetic";
};

int run_synth(const SynthFlags& f, std::ostream& out) {
  f.config.validate();
  if (f.options < 2) throw ConfigError("--options must be at least 2");
  if (f.options > f.config.vocab_size) throw ConfigError("--options cannot exceed --vocab");
  if (f.seq_len == 0) throw ConfigError("--seq-len must be positive");

  const ToyModel model = build_toy_model<float>(f.config);
  std::vector<std::size_t> option_ids(f.options);
  for (std::size_t j = 0; j < f.options; ++j) option_ids[j] = j;

  ResidualDump dump;
  dump.model_name = f.model_name;
  dump.task_name = f.task_name;
  dump.num_layers = f.config.num_layers();
  dump.num_options = f.options;
  dump.layer_roles = stream_roles(f.config.n_blocks);
  for (std::size_t j = 0; j < f.options; ++j) dump.option_labels.push_back("tok" + std::to_string(j));

  SplitMix64 rng(f.config.seed ^ kInputStreamSalt);
  double max_err = 0.0;
  std::vector<std::size_t> tokens(f.seq_len);
  for (std::size_t n = 0; n < f.instances; ++n) {
    for (auto& t : tokens) t = rng.below(f.config.vocab_size);
    const std::size_t gold = rng.below(f.options);
    const RawStream raw = forward_collect(model, tokens);
    const ContributionMatrix m = project_contributions(raw, model, std::span<const std::size_t>(option_ids));
    max_err = std::max(max_err, max_relative_error(reconstruct_logits(m),
                                                   restricted_reference(raw, option_ids)));
    DumpInstance inst;
    inst.gold_index = static_cast<std::uint32_t>(gold);
    inst.matrix.reserve(m.values().size());
    for (double v : m.values()) inst.matrix.push_back(static_cast<float>(v));
    dump.instances.push_back(std::move(inst));
  }
  const std::size_t bytes = write_dump_file(dump, f.out);

  ordered_json summary;
  summary["out"] = f.out;
  summary["model_name"] = dump.model_name;
  summary["task_name"] = dump.task_name;
  summary["num_instances"] = f.instances;
  summary["num_layers"] = dump.num_layers;
  summary["num_options"] = dump.num_options;
  summary["bytes"] = bytes;
  summary["model_checksum"] = model.checksum();
  summary["max_reconstruction_error"] = max_err;
  out << summary.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- decompose

int run_decompose(const std::string& dump_path, const std::string& prefix, bool exact,
                  std::ostream& out) {
  const ResidualDump dump = read_dump_file(dump_path);
  const SoftmaxMode mode = exact ? SoftmaxMode::kProbabilityMean : SoftmaxMode::kLogitMean;
  const MetricSeries s = junction_series(dump, mode);

  std::ostringstream junction;
  junction << "k,accuracy,mse,bias,diversity,identity_residual\n";
  for (std::size_t k = 0; k < s.size(); ++k) {
    junction << s.junction[k] << ',' << fmt(100.0 * s.accuracy[k]) << ',' << fmt(100.0 * s.mse[k])
             << ',' << fmt(100.0 * s.bias[k]) << ',' << fmt(100.0 * s.diversity[k]) << ','
             << fmt(s.identity_residual[k]) << "\n";
  }

  std::vector<DecompositionResult> per_instance;
  per_instance.reserve(dump.num_instances());
  for (std::size_t n = 0; n < dump.num_instances(); ++n) {
    per_instance.push_back(softmax_decompose(dump.instances[n].gold_index, dump.matrix(n)));
  }
  std::optional<ModuleShares> shares;
  std::string shares_note = "ok";
  if (per_instance.empty()) {
    shares_note = "undefined: dump has no instances";
  } else {
    try {
      shares = module_proportions(per_instance);
    } catch (const UndefinedError& e) {
      shares_note = std::string("undefined: ") + e.what();
    }
  }
  std::array<std::size_t, kNumRoles> counts{};
  for (Role r : dump.layer_roles) ++counts[role_index(r)];
  std::ostringstream props;
  props << "role,count,bias_share,diversity_share\n";
  for (Role r : kAllRoles) {
    const std::size_t i = role_index(r);
    props << role_name(r) << ',' << counts[i] << ',';
    if (shares) props << fmt(shares->bias[i]) << ',' << fmt(shares->diversity[i]);
    else props << ',';
    props << "\n";
  }

  ordered_json meta;
  meta["dump"] = dump_path;
  meta["model_name"] = dump.model_name;
  meta["task_name"] = dump.task_name;
  meta["num_instances"] = dump.num_instances();
  meta["num_layers"] = dump.num_layers;
  meta["num_options"] = dump.num_options;
  meta["mode"] = exact ? "probability-mean" : "logit-mean";
  meta["diversity_definition"] =
      exact ? "mean over layers and options of (mean_i softmax(u_i) - softmax(u_i))^2; "
              "mse = bias - diversity holds exactly"
            : "mean over layers and options of (softmax(ubar) - softmax(u_i))^2; "
              "identity_residual = bias - diversity - mse";
  meta["prefix_target"] = "one-hot gold; junction k uses the first k contributions";
  meta["scale"] = ordered_json{{"accuracy", 100}, {"mse", 100}, {"bias", 100},
                               {"diversity", 100}, {"identity_residual", 1}};
  meta["proportions"] = "probability-space decomposition against the one-hot gold, "
                        "count-weighted role share averaged over instances";
  meta["proportions_status"] = shares_note;

  write_text_file(prefix + "_junction.csv", junction.str());
  write_text_file(prefix + "_proportions.csv", props.str());
  write_text_file(prefix + "_meta.json", meta.dump(2) + "\n");
  out << "wrote " << prefix << "_junction.csv, " << prefix << "_proportions.csv, " << prefix
      << "_meta.json\n";
  return kExitOk;
}

// ---------------------------------------------------------------- verify

std::string check_status(const CheckRecord& c) {
  if (!c.informational) return c.passed ? "pass" : "fail";
  return c.passed ? "informational" : "expected-violation";
}

int run_verify(const std::vector<std::string>& suites, const std::vector<std::uint64_t>& seeds,
               const std::string& report_path, bool inject_xor, std::ostream& out) {
  VerifyOptions opts;
  opts.seeds = seeds;
  opts.inject_xor = inject_xor;

  ordered_json report;
  report["seeds"] = seeds;
  report["inject_xor"] = inject_xor;
  ordered_json suite_list = ordered_json::array();
  bool all_passed = true;
  for (const std::string& name : suites) {
    const SuiteResult r = run_suite(name, opts);
    all_passed = all_passed && r.passed();
    ordered_json js;
    js["name"] = r.name;
    js["passed"] = r.passed();
    js["checks"] = ordered_json::array();
    for (const CheckRecord& c : r.checks) {
      ordered_json cj;
      cj["name"] = c.name;
      cj["status"] = check_status(c);
      cj["tolerance"] = c.tolerance;
      cj["max_error"] = c.max_error;
      cj["cases"] = c.cases;
      cj["note"] = c.note;
      ordered_json w = ordered_json::object();
      for (const auto& [k, v] : c.witness) w[k] = v;
      cj["witness"] = w;
      js["checks"].push_back(cj);
    }
    suite_list.push_back(js);
  }
  report["passed"] = all_passed;
  report["suites"] = suite_list;

  const std::string text = report.dump(2) + "\n";
  if (report_path.empty()) {
    out << text;
  } else {
    write_text_file(report_path, text);
    for (const auto& js : suite_list) {
      out << js["name"].get<std::string>() << ": " << (js["passed"].get<bool>() ? "PASS" : "FAIL")
          << "\n";
    }
  }
  return all_passed ? kExitOk : kExitSuiteFailure;
}

// ---------------------------------------------------------------- correlate

bool same_layout(const ResidualDump& a, const ResidualDump& b) {
  return a.num_layers == b.num_layers && a.num_options == b.num_options &&
         a.layer_roles == b.layer_roles && a.option_labels == b.option_labels;
}

int run_correlate(const std::vector<std::string>& paths, const std::string& out_prefix,
                  std::ostream& out) {
  std::vector<std::vector<std::byte>> seen;
  std::map<SeriesKey, ResidualDump> merged;
  for (const std::string& p : paths) {
    std::vector<std::byte> bytes = read_bytes(p);
    if (std::find(seen.begin(), seen.end(), bytes) != seen.end()) continue;
    ResidualDump d = decode_dump(bytes);
    seen.push_back(std::move(bytes));
    SeriesKey key{d.model_name, d.task_name};
    auto it = merged.find(key);
    if (it == merged.end()) {
      merged.emplace(std::move(key), std::move(d));
      continue;
    }
    if (!same_layout(it->second, d)) {
      throw ValidationError("dumps for model '" + key.first + "', task '" + key.second +
                            "' have inconsistent headers (" + p + ")");
    }
    auto& inst = it->second.instances;
    inst.insert(inst.end(), std::make_move_iterator(d.instances.begin()),
                std::make_move_iterator(d.instances.end()));
  }

  std::map<SeriesKey, MetricSeries> series;
  for (const auto& [key, d] : merged) series.emplace(key, junction_series(d));
  const CorrelationTable table = correlation_report(series);

  std::ostringstream csv;
  csv << "model,task,points,degenerate";
  for (const char* stat : {"pearson", "spearman", "p_value"}) {
    for (const char* m : kCorrelatedMetrics) csv << ',' << stat << '_' << m;
  }
  csv << "\n";
  for (const auto& row : table.rows) {
    csv << row.model << ',' << row.task << ',' << row.points << ',' << (row.degenerate ? 1 : 0);
    for (const auto* arr : {&row.pearson, &row.spearman, &row.p_value}) {
      for (const auto& v : *arr) csv << ',' << fmt(v);
    }
    csv << "\n";
  }
  auto avg_row = [&](const std::string& task, const CorrelationAverage& a) {
    csv << "Avg," << task << ',' << a.rows << ",0";
    for (const auto* arr : {&a.pearson, &a.spearman}) {
      for (const auto& v : *arr) csv << ',' << fmt(v);
    }
    csv << ",,,\n";
  };
  for (const auto& [task, a] : table.tasks) avg_row(task, a);
  avg_row("all", table.overall);

  auto metric_obj = [](const std::array<std::optional<double>, 3>& arr) {
    ordered_json o;
    for (std::size_t m = 0; m < 3; ++m) o[kCorrelatedMetrics[m]] = arr[m] ? ordered_json(*arr[m]) : nullptr;
    return o;
  };
  ordered_json js;
  js["signs"] = ordered_json{{"mse", -1}, {"bias", -1}, {"diversity", 1}};
  js["rows"] = ordered_json::array();
  for (const auto& row : table.rows) {
    js["rows"].push_back(ordered_json{{"model", row.model},
                                      {"task", row.task},
                                      {"points", row.points},
                                      {"degenerate", row.degenerate},
                                      {"pearson", metric_obj(row.pearson)},
                                      {"spearman", metric_obj(row.spearman)},
                                      {"p_value", metric_obj(row.p_value)}});
  }
  js["tasks"] = ordered_json::object();
  for (const auto& [task, a] : table.tasks) {
    js["tasks"][task] = ordered_json{
        {"rows", a.rows}, {"pearson", metric_obj(a.pearson)}, {"spearman", metric_obj(a.spearman)}};
  }
  js["overall"] = ordered_json{{"tasks", table.overall.rows},
                               {"pearson", metric_obj(table.overall.pearson)},
                               {"spearman", metric_obj(table.overall.spearman)}};

  write_text_file(out_prefix + ".csv", csv.str());
  write_text_file(out_prefix + ".json", js.dump(2) + "\n");
  out << "wrote " << out_prefix << ".csv, " << out_prefix << ".json (" << table.rows.size()
      << " rows)\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Residual-stream bias/diversity toolkit", "resdiv"};
  app.require_subcommand(1);

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Build a toy model and write an RSDC dump");
  synth_cmd->add_option("--seed", synth.config.seed, "Model and input seed")->required();
  synth_cmd->add_option("--vocab", synth.config.vocab_size)->required();
  synth_cmd->add_option("--dmodel", synth.config.d_model)->required();
  synth_cmd->add_option("--blocks", synth.config.n_blocks)->required();
  synth_cmd->add_option("--heads", synth.config.n_heads)->required();
  synth_cmd->add_option("--instances", synth.instances)->required();
  synth_cmd->add_option("--options", synth.options, "Option tokens 0..options-1")->required();
  synth_cmd->add_option("--out", synth.out)->required();
  synth_cmd->add_option("--seq-len", synth.seq_len)->capture_default_str();
  synth_cmd->add_option("--model-name", synth.model_name)->capture_default_str();
  synth_cmd->add_option("--task-name", synth.task_name)->capture_default_str();

  std::string dump_path;
  std::string out_prefix;
  bool exact = false;
  auto* dec_cmd = app.add_subcommand("decompose", "Per-junction metrics and module proportions");
  dec_cmd->add_option("--dump", dump_path)->required();
  dec_cmd->add_option("--out-prefix", out_prefix)->required();
  dec_cmd->add_flag("--exact-identity-mode", exact,
                    "Centre diversity on the mean member softmax");

  std::vector<std::string> suites;
  std::vector<std::uint64_t> seeds = {0};
  std::string report_path;
  bool inject_xor = false;
  auto* ver_cmd = app.add_subcommand("verify", "Run the property suites");
  auto* suites_opt = ver_cmd->add_option("--suites", suites, "theorem1..theorem8 (default all)")
                         ->delimiter(',');
  ver_cmd->add_option("--seeds", seeds)->delimiter(',')->capture_default_str();
  ver_cmd->add_option("--report", report_path, "Write the JSON report here instead of stdout");
  ver_cmd->add_flag("--inject-xor", inject_xor,
                    "Add the XOR ensemble to theorem7/theorem8 as an expected violation");

  std::vector<std::string> dumps;
  std::string corr_out;
  auto* corr_cmd = app.add_subcommand("correlate", "Correlation table across dumps");
  corr_cmd->add_option("--dumps", dumps)->required()->expected(1, -1);
  corr_cmd->add_option("--out", corr_out, "Output prefix for .csv and .json")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  if (synth_cmd->parsed()) {
    return guarded("synth", err, [&] { return run_synth(synth, out); });
  }
  if (dec_cmd->parsed()) {
    return guarded("decompose", err, [&] { return run_decompose(dump_path, out_prefix, exact, out); });
  }
  if (ver_cmd->parsed()) {
    if (suites_opt->count() == 0) suites = suite_names();
    std::erase(suites, std::string());
    if (suites.empty()) {
      err << "resdiv verify: empty suite list\n";
      return kExitUsage;
    }
    for (const auto& s : suites) {
      if (std::find(suite_names().begin(), suite_names().end(), s) == suite_names().end()) {
        err << "resdiv verify: unknown suite '" << s << "'\n";
        return kExitUsage;
      }
    }
    if (seeds.empty()) {
      err << "resdiv verify: empty seed list\n";
      return kExitUsage;
    }
    return guarded("verify", err,
                   [&] { return run_verify(suites, seeds, report_path, inject_xor, out); });
  }
  return guarded("correlate", err, [&] { return run_correlate(dumps, corr_out, out); });
}

}  // namespace resdiv::cli
