// sqsi: selective inference for penalized smoothed quantile regression.
//
//   sqsi infer --input data.csv --response y --output out
//   sqsi simulate --model 1 --n 400 --p 50 --c 1 --seed 7 --output sim
//   sqsi replicate --reps 200 --workers 8 --output suite
//
// Settings come from --config FILE (JSON) and are overridden by flags.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sqsi/cli.hpp"

namespace {

// Flags shadow the JSON config only when given on the command line, so every
// option is collected into an override object keyed like the config file.
struct Overrides {
  sqsi::json j = sqsi::json::object();
  std::vector<std::function<void()>> collect;

  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    collect.push_back([this, opt, value, key] {
      if (opt->count() > 0) j[key] = *value;
    });
  }

  void add_flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(flag, *value, help);
    collect.push_back([this, opt, value, key] {
      if (opt->count() > 0) j[key] = *value;
    });
  }
};

void add_inference_options(CLI::App* app, Overrides& o) {
  o.add<double>(app, "--tau", "tau", "quantile level (default 0.7)");
  o.add<double>(app, "--alpha", "alpha", "interval level is 1 - alpha (default 0.1)");
  o.add<double>(app, "--lambda-scale", "lambda_scale", "lambda = scale * sqrt(log p / n) (default 0.6)");
  o.add<double>(app, "--lambda", "lambda", "explicit lambda, overrides --lambda-scale");
  o.add<std::string>(app, "--kernel", "kernel", "gaussian | logistic | uniform | epanechnikov");
  o.add<std::string>(app, "--bandwidth-mode", "bandwidth_mode", "same | formula | explicit");
  o.add<double>(app, "--h-select", "h_select", "selection bandwidth");
  o.add<double>(app, "--h-infer", "h_infer", "inference bandwidth (explicit mode)");
  o.add<double>(app, "--delta2", "delta2", "randomization variance, Omega = delta2 * I (default 1)");
  o.add<std::uint64_t>(app, "--seed", "seed", "master seed (default 0)");
  o.add<double>(app, "--split-fraction", "split_fraction", "selection share for splitting (default 2/3)");
  o.add<bool>(app, "--standardize", "standardize", "standardize columns (default true)");
  o.add<bool>(app, "--intercept", "intercept", "unpenalized intercept (default true)");
  o.add_flag(app, "--naive-randomize", "naive_randomize", "naive baseline selects with randomization");
  o.add_flag(app, "--check-monotone", "check_monotone", "scan each pivot on a 200-point grid");
  o.add<int>(app, "--max-iter", "max_iter", "solver iteration cap");
  o.add<double>(app, "--tol-kkt", "tol_kkt", "solver KKT tolerance");
  o.add<double>(app, "--tol-invert", "tol_invert", "pivot tolerance for interval endpoints");
}

void add_data_options(CLI::App* app, Overrides& o) {
  o.add<std::string>(app, "--input", "input", "input CSV with a header row");
  o.add<std::string>(app, "--response", "response", "response column (default y)");
  o.add<std::vector<std::string>>(app, "--drop", "drop", "columns to ignore");
  o.add<std::vector<std::string>>(app, "--one-hot", "one_hot", "categorical columns to encode");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective inference for randomized l1-penalized smoothed quantile regression"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sqsi::kVersion));
  std::string config_path;
  Overrides o;

  struct Sub {
    CLI::App* app;
    sqsi::Command command;
  };
  std::vector<Sub> subs;
  auto make = [&](const char* name, const char* help, sqsi::Command c) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "JSON config file; flags take precedence");
    o.add<std::string>(s, "--output", "output", "output path prefix (default sqsi_out)");
    subs.push_back({s, c});
    return s;
  };

  CLI::App* fit = make("fit", "randomized selection only", sqsi::Command::Fit);
  add_data_options(fit, o);
  add_inference_options(fit, o);

  CLI::App* infer = make("infer", "selection and post-selection intervals", sqsi::Command::Infer);
  add_data_options(infer, o);
  add_inference_options(infer, o);
  o.add<std::vector<std::string>>(infer, "--methods", "methods", "proposed | naive | splitting | all");

  CLI::App* sim = make("simulate", "write a dataset from a simulation model", sqsi::Command::Simulate);
  o.add<int>(sim, "--model", "model", "model id 1..7");
  o.add<long>(sim, "--n", "n", "rows");
  o.add<long>(sim, "--p", "p", "columns");
  o.add<double>(sim, "--c", "c", "signal strength");
  o.add<double>(sim, "--tau", "tau", "quantile level for the recorded targets");
  o.add<std::uint64_t>(sim, "--seed", "seed", "seed");

  CLI::App* rep = make("replicate", "Monte Carlo replication suite", sqsi::Command::Replicate);
  add_inference_options(rep, o);
  o.add<std::vector<int>>(rep, "--models", "models", "model ids (default 1 2 3)");
  o.add<std::vector<double>>(rep, "--signals", "signals", "signal levels c (default 0.1 0.5 1)");
  o.add<std::vector<std::string>>(rep, "--methods", "methods", "methods (default all three)");
  o.add<int>(rep, "--reps", "reps", "replications per cell (default 200)");
  o.add<long>(rep, "--n", "n", "rows (default 400)");
  o.add<long>(rep, "--p", "p", "columns (default 50)");
  o.add<int>(rep, "--oracle-factor", "oracle_factor", "Monte Carlo target size multiple (default 100)");
  o.add<int>(rep, "--workers", "workers", "worker threads (default SQSI_WORKERS or all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << sqsi::error_json(2, "usage", e.what()).dump() << '\n';
    return 2;
  }

  sqsi::RunConfig rc;
  try {
    for (const Sub& s : subs) {
      if (s.app->parsed()) rc.command = s.command;
    }
    if (rc.command == sqsi::Command::Replicate) {
      rc.methods = {sqsi::Method::Proposed, sqsi::Method::Naive, sqsi::Method::Splitting};
    }
    for (auto& f : o.collect) f();
    if (!config_path.empty()) {
      sqsi::json file = sqsi::read_json_file(config_path);
      if (file.is_object()) file.erase("command");
      sqsi::apply_json(rc, file);
    }
    sqsi::apply_json(rc, o.j);
  } catch (const sqsi::IoError& e) {
    std::cerr << sqsi::error_json(2, "io", e.what(), e.path).dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << sqsi::error_json(2, "usage", e.what()).dump() << '\n';
    return 2;
  }
  return sqsi::run(rc);
}
