#pragma once

// Run configuration and command dispatch shared by the sqsi executable and
// the tests.
//
// Outputs, for --output PREFIX:
//   fit        PREFIX.json
//   infer      PREFIX.csv, PREFIX.json
//   simulate   PREFIX.csv (response first), PREFIX.json
//   replicate  PREFIX_reps.csv, PREFIX_rows.csv, PREFIX.json
//
// Exit codes: 0 success, 1 computation failure, 2 usage or I/O error.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sqsi/io.hpp"
#include "sqsi/replicate.hpp"

namespace sqsi {

enum class Command { Fit, Infer, Simulate, Replicate };

inline std::string_view to_string(Command c) {
  switch (c) {
    case Command::Fit: return "fit";
    case Command::Infer: return "infer";
    case Command::Simulate: return "simulate";
    case Command::Replicate: return "replicate";
  }
  return "unknown";
}

inline Command parse_command(std::string_view s) {
  if (s == "fit") return Command::Fit;
  if (s == "infer") return Command::Infer;
  if (s == "simulate") return Command::Simulate;
  if (s == "replicate") return Command::Replicate;
  throw std::invalid_argument("unknown command: " + std::string(s));
}

/// Bad flags or config values. Maps to exit code 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  Command command = Command::Infer;
  InferenceConfig inference;

  // infer / fit
  std::string input;
  std::string response = "y";
  std::vector<std::string> drop;
  std::vector<std::string> one_hot;
  std::vector<Method> methods = {Method::Proposed};

  // simulate
  int model = 1;
  double c = 1.0;

  // simulate / replicate
  long n = 400;
  long p = 50;

  // replicate
  std::vector<int> models = {1, 2, 3};
  std::vector<double> signals = {0.1, 0.5, 1.0};
  int reps = 200;
  int oracle_factor = 100;
  int workers = 0;  // 0: SQSI_WORKERS or hardware concurrency; not echoed

  std::string output = "sqsi_out";

  void validate() const {
    try {
      inference.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if ((command == Command::Fit || command == Command::Infer) && input.empty()) {
      throw UsageError("--input is required for " + std::string(to_string(command)));
    }
    if (output.empty()) throw UsageError("--output must not be empty");
    if (reps < 1) throw UsageError("reps must be at least 1");
    if (n < 2 || p < 1) throw UsageError("n and p must be positive");
    if (methods.empty()) throw UsageError("at least one method is required");
  }
};

namespace detail {

template <class T>
T json_get(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw UsageError("config key '" + key + "' has the wrong type");
  }
}

inline std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& s : names) {
    if (s == "all") return {Method::Proposed, Method::Naive, Method::Splitting};
    try {
      out.push_back(parse_method(s));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

}  // namespace detail

/// Applies a flat JSON object of settings. Keys match the long flag names
/// with dashes replaced by underscores; unknown keys are rejected.
inline void apply_json(RunConfig& rc, const json& j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  InferenceConfig& ic = rc.inference;
  for (const auto& [key, v] : j.items()) {
    using detail::json_get;
    if (key == "command") rc.command = parse_command(json_get<std::string>(v, key));
    else if (key == "tau") ic.tau = json_get<double>(v, key);
    else if (key == "alpha") ic.alpha = json_get<double>(v, key);
    else if (key == "lambda_scale") ic.lambda_scale = json_get<double>(v, key);
    else if (key == "lambda") ic.lambda = v.is_null() ? std::nullopt : std::optional(json_get<double>(v, key));
    else if (key == "kernel") {
      try {
        ic.kernel = parse_kernel(json_get<std::string>(v, key));
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    } else if (key == "bandwidth_mode") {
      try {
        ic.bandwidth_mode = parse_bandwidth_mode(json_get<std::string>(v, key));
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    }
    else if (key == "h_select") ic.h_select = v.is_null() ? std::nullopt : std::optional(json_get<double>(v, key));
    else if (key == "h_infer") ic.h_infer = v.is_null() ? std::nullopt : std::optional(json_get<double>(v, key));
    else if (key == "delta2") ic.delta2 = json_get<double>(v, key);
    else if (key == "seed") ic.seed = json_get<std::uint64_t>(v, key);
    else if (key == "split_fraction") ic.split_fraction = json_get<double>(v, key);
    else if (key == "standardize") ic.standardize = json_get<bool>(v, key);
    else if (key == "intercept") ic.intercept = json_get<bool>(v, key);
    else if (key == "naive_randomize") ic.naive_randomize = json_get<bool>(v, key);
    else if (key == "check_monotone") ic.check_monotone = json_get<bool>(v, key);
    else if (key == "max_iter") ic.solver.max_iter = json_get<int>(v, key);
    else if (key == "tol_kkt") ic.solver.tol_kkt = json_get<double>(v, key);
    else if (key == "tol_refit") ic.solver.tol_refit = json_get<double>(v, key);
    else if (key == "tol_invert") ic.invert.tol_invert = json_get<double>(v, key);
    else if (key == "input") rc.input = json_get<std::string>(v, key);
    else if (key == "response") rc.response = json_get<std::string>(v, key);
    else if (key == "drop") rc.drop = json_get<std::vector<std::string>>(v, key);
    else if (key == "one_hot") rc.one_hot = json_get<std::vector<std::string>>(v, key);
    else if (key == "methods") rc.methods = detail::parse_methods(json_get<std::vector<std::string>>(v, key));
    else if (key == "model") rc.model = json_get<int>(v, key);
    else if (key == "c") rc.c = json_get<double>(v, key);
    else if (key == "n") rc.n = json_get<long>(v, key);
    else if (key == "p") rc.p = json_get<long>(v, key);
    else if (key == "models") rc.models = json_get<std::vector<int>>(v, key);
    else if (key == "signals") rc.signals = json_get<std::vector<double>>(v, key);
    else if (key == "reps") rc.reps = json_get<int>(v, key);
    else if (key == "oracle_factor") rc.oracle_factor = json_get<int>(v, key);
    else if (key == "workers") rc.workers = json_get<int>(v, key);
    else if (key == "output") rc.output = json_get<std::string>(v, key);
    else throw UsageError("unknown config key '" + key + "'");
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path, path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("invalid JSON in config file: ") + e.what(), path);
  }
}

/// Echo of every setting that can change the numbers of `rc.command`.
inline json run_config_json(const RunConfig& rc) {
  json j;
  j["command"] = std::string(to_string(rc.command));
  switch (rc.command) {
    case Command::Fit:
    case Command::Infer: {
      j["input"] = rc.input;
      j["response"] = rc.response;
      j["drop"] = rc.drop;
      j["one_hot"] = rc.one_hot;
      json m = json::array();
      for (Method x : rc.methods) m.push_back(std::string(to_string(x)));
      if (rc.command == Command::Infer) j["methods"] = m;
      j["inference"] = config_json(rc.inference);
      break;
    }
    case Command::Simulate:
      j["model"] = rc.model;
      j["n"] = rc.n;
      j["p"] = rc.p;
      j["c"] = rc.c;
      j["tau"] = rc.inference.tau;
      j["seed"] = rc.inference.seed;
      break;
    case Command::Replicate:
      break;
  }
  return j;
}

inline SuiteConfig suite_from(const RunConfig& rc) {
  SuiteConfig s;
  s.models = rc.models;
  s.signals = rc.signals;
  s.methods = rc.methods;
  s.reps = rc.reps;
  s.n = rc.n;
  s.p = rc.p;
  s.seed = rc.inference.seed;
  s.oracle_factor = rc.oracle_factor;
  s.inference = rc.inference;
  return s;
}

inline json error_json(int code, const std::string& kind, const std::string& message,
                       const std::string& path = "") {
  json e;
  e["code"] = code;
  e["kind"] = kind;
  e["message"] = message;
  if (!path.empty()) e["path"] = path;
  json j;
  j["error"] = e;
  j["version"] = kVersion;
  return j;
}

namespace detail {

inline Dataset load_input(const RunConfig& rc) {
  CsvOptions o;
  o.response = rc.response;
  o.drop = rc.drop;
  o.one_hot = rc.one_hot;
  return load_csv(rc.input, o);
}

inline json data_json(const Dataset& d) {
  json j;
  j["rows"] = d.X.rows();
  j["columns"] = d.names;
  j["dropped_rows"] = d.dropped_rows;
  j["warnings"] = d.warnings;
  return j;
}

inline void run_fit(const RunConfig& rc, std::ostream& log) {
  const Dataset d = load_input(rc);
  for (const auto& w : d.warnings) log << "warning: " << w << '\n';
  const FitReport f = randomized_fit(d, rc.inference);
  json j;
  j["version"] = kVersion;
  j["config"] = run_config_json(rc);
  j["data"] = data_json(d);
  j["n"] = f.n;
  j["p"] = f.p;
  j["lambda"] = real_json(f.lambda);
  j["h_select"] = real_json(f.h_select);
  j["intercept"] = real_json(f.intercept);
  json coef = json::array();
  for (size_t a = 0; a < f.selected.size(); ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    coef.push_back({{"variable", f.names[a]},
                    {"column", f.selected[a]},
                    {"coefficient", real_json(f.coefficients[i])},
                    {"sign", static_cast<int>(f.signs[i])}});
  }
  j["selected"] = coef;
  j["kkt_residual"] = real_json(f.kkt_residual);
  j["iterations"] = f.iterations;
  j["flags"] = f.flags;
  write_json(j, rc.output + ".json");
}

inline void run_infer(const RunConfig& rc, std::ostream& log) {
  const Dataset d = load_input(rc);
  for (const auto& w : d.warnings) log << "warning: " << w << '\n';
  std::vector<InferenceReport> reports;
  for (Method m : rc.methods) reports.push_back(run_method(m, d, rc.inference));
  const json echo = run_config_json(rc);
  write_report_csv(reports, echo, rc.output + ".csv");
  json j;
  j["version"] = kVersion;
  j["config"] = echo;
  j["data"] = data_json(d);
  json reps = json::array();
  for (const auto& r : reports) reps.push_back(report_json(r));
  j["reports"] = reps;
  write_json(j, rc.output + ".json");
}

inline void run_simulate(const RunConfig& rc) {
  ModelSpec spec;
  spec.model_id = rc.model;
  spec.n = rc.n;
  spec.p = rc.p;
  spec.c = rc.c;
  spec.tau = rc.inference.tau;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Dataset d = generate(spec, rc.inference.seed);
  write_dataset_csv(d, rc.output + ".csv");
  json j;
  j["version"] = kVersion;
  j["config"] = run_config_json(rc);
  j["noise_variance"] = spec.noise_variance();
  j["true_support"] = true_support(spec);
  if (spec.model_id != 7) {
    const Vector b = population_coefficients(spec);
    j["population_coefficients"] = std::vector<double>(b.data(), b.data() + b.size());
  }
  write_json(j, rc.output + ".json");
}

inline void run_replicate(const RunConfig& rc, std::ostream& log) {
  const SuiteConfig s = suite_from(rc);
  try {
    s.validate();
    for (int m : s.models) {
      ModelSpec spec;
      spec.model_id = m;
      spec.n = s.n;
      spec.p = s.p;
      spec.tau = s.inference.tau;
      spec.validate();
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const int workers = rc.workers > 0 ? rc.workers : default_workers();
  const SuiteResult r = run_replications(s, workers);
  long failures = 0;
  for (const auto& c : r.cells) failures += c.failures;
  if (failures > 0) log << "warning: " << failures << " replication run(s) failed\n";
  write_rep_metrics_csv(r, rc.output + "_reps.csv");
  write_rep_rows_csv(r, rc.output + "_rows.csv");
  write_json(suite_json(r), rc.output + ".json");
}

}  // namespace detail

/// Runs one command. Errors are reported as JSON on `err`; the return value
/// is the process exit code.
inline int run(const RunConfig& rc, std::ostream& err = std::cerr) {
  try {
    rc.validate();
    switch (rc.command) {
      case Command::Fit: detail::run_fit(rc, err); break;
      case Command::Infer: detail::run_infer(rc, err); break;
      case Command::Simulate: detail::run_simulate(rc); break;
      case Command::Replicate: detail::run_replicate(rc, err); break;
    }
    return 0;
  } catch (const IoError& e) {
    err << error_json(2, "io", e.what(), e.path).dump() << '\n';
    return 2;
  } catch (const UsageError& e) {
    err << error_json(2, "usage", e.what()).dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << error_json(1, "computation", e.what()).dump() << '\n';
    return 1;
  }
}

}  // namespace sqsi
