#pragma once

// Replication suites: model grid x signal grid x methods, run on a worker
// pool. Results land in slots indexed by (cell, rep) and are folded in index
// order, so the output does not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sqsi/io.hpp"
#include "sqsi/simulation.hpp"

namespace sqsi {

struct SuiteConfig {
  std::vector<int> models = {1, 2, 3};
  std::vector<double> signals = {0.1, 0.5, 1.0};
  std::vector<Method> methods = {Method::Proposed, Method::Naive, Method::Splitting};
  int reps = 200;
  long n = 400;
  long p = 50;
  std::uint64_t seed = 1;
  int oracle_factor = 100;
  InferenceConfig inference;  // tau and alpha are shared with the models

  void validate() const {
    if (reps < 1) throw std::invalid_argument("reps must be at least 1");
    if (models.empty() || signals.empty() || methods.empty()) {
      throw std::invalid_argument("suite grids must be non-empty");
    }
    if (oracle_factor < 1) throw std::invalid_argument("oracle_factor must be at least 1");
    inference.validate();
  }
};

struct CoordinateResult {
  std::string name;
  int column = -1;
  double target = 0.0;
  double estimate = 0.0;
  double lcb = 0.0;
  double ucb = 0.0;
  double pvalue = 1.0;
  double pivot_at_lcb = 0.0;
  double pivot_at_ucb = 0.0;
  std::vector<std::string> flags;
};

struct MethodResult {
  bool failed = false;
  std::string error;
  Metrics metrics;
  std::vector<CoordinateResult> coords;
};

struct RepResult {
  int cell = 0;
  int rep = 0;
  std::vector<MethodResult> methods;  // aligned with SuiteConfig::methods
  double length_ratio = std::numeric_limits<double>::quiet_NaN();  // Proposed / Splitting
};

struct CellSummary {
  int model_id = 0;
  double c = 0.0;
  Method method = Method::Proposed;
  long reps = 0;
  long failures = 0;
  double coverage = 0.0;
  double mean_length = std::numeric_limits<double>::quiet_NaN();
  double length_ratio = std::numeric_limits<double>::quiet_NaN();
  double f1_before = 0.0;
  double f1_after = 0.0;
  double recall = 0.0;
  double unbounded_fraction = 0.0;
  double mean_selected = 0.0;
  long rows = 0;
  long nonmonotone = 0;
  long endpoint_mismatch = 0;
  double max_endpoint_error = 0.0;  // |pivot(LCB) - (1 - alpha/2)| and |pivot(UCB) - alpha/2|
};

struct SuiteResult {
  SuiteConfig config;
  std::vector<RepResult> reps;      // cell-major, then rep
  std::vector<CellSummary> cells;   // cell-major, then method
};

inline int default_workers() {
  if (const char* env = std::getenv("SQSI_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

/// Pure function of (cell, E, h); the cache only saves repeated refits.
class OracleCache {
 public:
  Vector get(const ModelSpec& spec, int cell, const std::vector<int>& E, double h,
             std::uint64_t seed, int factor, KernelFamily kernel) {
    const Key key{cell, E, h};
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = map_.find(key);
      if (it != map_.end()) return it->second;
    }
    Vector v = target_oracle_mc(spec, E, h, seed, factor, kernel);
    std::lock_guard<std::mutex> lock(mu_);
    map_.emplace(key, v);
    return v;
  }

 private:
  struct Key {
    int cell;
    std::vector<int> E;
    double h;
    bool operator<(const Key& o) const {
      if (cell != o.cell) return cell < o.cell;
      if (h != o.h) return h < o.h;
      return E < o.E;
    }
  };
  std::mutex mu_;
  std::map<Key, Vector> map_;
};

inline ModelSpec cell_spec(const SuiteConfig& cfg, int cell) {
  const int nc = static_cast<int>(cfg.signals.size());
  ModelSpec s;
  s.model_id = cfg.models[static_cast<size_t>(cell / nc)];
  s.c = cfg.signals[static_cast<size_t>(cell % nc)];
  s.n = cfg.n;
  s.p = cfg.p;
  s.tau = cfg.inference.tau;
  return s;
}

inline RepResult run_one(const SuiteConfig& cfg, int cell, int rep, OracleCache& cache) {
  const ModelSpec spec = cell_spec(cfg, cell);
  const std::uint64_t cell_seed =
      derive_seed(cfg.seed, (static_cast<std::uint64_t>(spec.model_id) << 32) ^
                                static_cast<std::uint64_t>(std::llround(spec.c * 1e6)));
  const std::uint64_t rep_seed = derive_seed(cell_seed, static_cast<std::uint64_t>(rep));
  const Dataset data = generate(spec, rep_seed);
  const std::vector<int> truth = true_support(spec);

  RepResult out;
  out.cell = cell;
  out.rep = rep;
  double len_proposed = std::numeric_limits<double>::quiet_NaN();
  double len_split = std::numeric_limits<double>::quiet_NaN();
  for (Method m : cfg.methods) {
    MethodResult mr;
    try {
      InferenceConfig ic = cfg.inference;
      ic.seed = derive_seed(rep_seed, 0x5e1ec7);
      const InferenceReport report = run_method(m, data, ic);
      std::vector<double> targets;
      if (!report.selected.empty()) {
        std::optional<Vector> t = true_target(spec, report.selected);
        if (!t) {
          t = cache.get(spec, cell, report.selected, report.h_infer, cell_seed, cfg.oracle_factor,
                        ic.kernel);
        }
        for (const auto& row : report.rows) {
          const auto it = std::find(report.selected.begin(), report.selected.end(), row.column);
          targets.push_back((*t)[it - report.selected.begin()]);
        }
      }
      mr.metrics = compute_metrics(report, targets, truth);
      for (size_t r = 0; r < report.rows.size(); ++r) {
        const InferenceRow& row = report.rows[r];
        mr.coords.push_back({row.name, row.column, targets[r], row.estimate, row.lcb, row.ucb,
                             row.pvalue, row.pivot_at_lcb, row.pivot_at_ucb, row.flags});
      }
    } catch (const std::exception& e) {
      mr.failed = true;
      mr.error = e.what();
    }
    if (!mr.failed) {
      if (m == Method::Proposed) len_proposed = mr.metrics.mean_length;
      if (m == Method::Splitting) len_split = mr.metrics.mean_length;
    }
    out.methods.push_back(std::move(mr));
  }
  if (std::isfinite(len_proposed) && std::isfinite(len_split) && len_split > 0.0) {
    out.length_ratio = len_proposed / len_split;
  }
  return out;
}

inline std::vector<CellSummary> summarize(const SuiteConfig& cfg, const std::vector<RepResult>& reps) {
  const int cells = static_cast<int>(cfg.models.size() * cfg.signals.size());
  std::vector<CellSummary> out;
  const double a = cfg.inference.alpha;
  for (int cell = 0; cell < cells; ++cell) {
    const ModelSpec spec = cell_spec(cfg, cell);
    for (size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      CellSummary s;
      s.model_id = spec.model_id;
      s.c = spec.c;
      s.method = cfg.methods[mi];
      double len_sum = 0.0, ratio_sum = 0.0;
      long len_n = 0, ratio_n = 0;
      for (const RepResult& r : reps) {
        if (r.cell != cell) continue;
        const MethodResult& mr = r.methods[mi];
        if (mr.failed) {
          ++s.failures;
          continue;
        }
        ++s.reps;
        s.coverage += mr.metrics.coverage;
        s.f1_before += mr.metrics.f1_before;
        s.f1_after += mr.metrics.f1_after;
        s.recall += mr.metrics.recall;
        s.unbounded_fraction += mr.metrics.unbounded_fraction;
        s.mean_selected += static_cast<double>(mr.metrics.selected);
        if (std::isfinite(mr.metrics.mean_length)) {
          len_sum += mr.metrics.mean_length;
          ++len_n;
        }
        if (s.method == Method::Proposed && std::isfinite(r.length_ratio)) {
          ratio_sum += r.length_ratio;
          ++ratio_n;
        }
        for (const CoordinateResult& c : mr.coords) {
          ++s.rows;
          const bool nonmono = std::find(c.flags.begin(), c.flags.end(), "nonmonotone") != c.flags.end();
          const bool mismatch =
              std::find(c.flags.begin(), c.flags.end(), "endpoint_mismatch") != c.flags.end();
          s.nonmonotone += nonmono;
          s.endpoint_mismatch += mismatch;
          if (s.method == Method::Proposed) {
            if (std::isfinite(c.lcb)) {
              s.max_endpoint_error = std::max(s.max_endpoint_error, std::abs(c.pivot_at_lcb - (1.0 - a / 2)));
            }
            if (std::isfinite(c.ucb)) {
              s.max_endpoint_error = std::max(s.max_endpoint_error, std::abs(c.pivot_at_ucb - a / 2));
            }
          }
        }
      }
      if (s.reps > 0) {
        const double k = static_cast<double>(s.reps);
        s.coverage /= k;
        s.f1_before /= k;
        s.f1_after /= k;
        s.recall /= k;
        s.unbounded_fraction /= k;
        s.mean_selected /= k;
      }
      if (len_n > 0) s.mean_length = len_sum / static_cast<double>(len_n);
      if (ratio_n > 0) s.length_ratio = ratio_sum / static_cast<double>(ratio_n);
      out.push_back(s);
    }
  }
  return out;
}

}  // namespace detail

inline SuiteResult run_replications(const SuiteConfig& cfg, int workers) {
  cfg.validate();
  const int cells = static_cast<int>(cfg.models.size() * cfg.signals.size());
  for (int cell = 0; cell < cells; ++cell) detail::cell_spec(cfg, cell).validate();
  const long jobs = static_cast<long>(cells) * cfg.reps;
  SuiteResult res;
  res.config = cfg;
  res.reps.resize(static_cast<size_t>(jobs));
  detail::OracleCache cache;
  std::atomic<long> next{0};
  auto work = [&] {
    for (long j = next++; j < jobs; j = next++) {
      const int cell = static_cast<int>(j / cfg.reps);
      const int rep = static_cast<int>(j % cfg.reps);
      res.reps[static_cast<size_t>(j)] = detail::run_one(cfg, cell, rep, cache);
    }
  };
  workers = std::max(1, std::min<int>(workers, static_cast<int>(jobs)));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  res.cells = detail::summarize(cfg, res.reps);
  return res;
}

// ---------------------------------------------------------------------------
// Serialization

inline json suite_config_json(const SuiteConfig& c) {
  json j;
  j["models"] = c.models;
  j["signals"] = c.signals;
  json m = json::array();
  for (Method x : c.methods) m.push_back(std::string(to_string(x)));
  j["methods"] = m;
  j["reps"] = c.reps;
  j["n"] = c.n;
  j["p"] = c.p;
  j["seed"] = c.seed;
  j["oracle_factor"] = c.oracle_factor;
  j["inference"] = config_json(c.inference);
  return j;
}

/// One line per (cell, rep, method) with the replication metrics.
inline void write_rep_metrics_csv(const SuiteResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path, path);
  out << "# sqsi " << kVersion << '\n';
  out << "# config " << suite_config_json(r.config).dump() << '\n';
  out << "model,c,rep,method,selected,coverage,mean_length,length_ratio,f1_before,f1_after,"
         "recall,unbounded_fraction,error\n";
  for (const RepResult& rep : r.reps) {
    const ModelSpec spec = detail::cell_spec(r.config, rep.cell);
    for (size_t mi = 0; mi < r.config.methods.size(); ++mi) {
      const MethodResult& mr = rep.methods[mi];
      const Method m = r.config.methods[mi];
      out << spec.model_id << ',' << format_real(spec.c) << ',' << rep.rep << ',' << to_string(m) << ',';
      if (mr.failed) {
        out << ",,,,,,,," << csv_quote(mr.error) << '\n';
        continue;
      }
      const Metrics& x = mr.metrics;
      out << x.selected << ',' << format_real(x.coverage) << ',' << format_real(x.mean_length) << ','
          << (m == Method::Proposed ? format_real(rep.length_ratio) : std::string("nan")) << ','
          << format_real(x.f1_before) << ',' << format_real(x.f1_after) << ','
          << format_real(x.recall) << ',' << format_real(x.unbounded_fraction) << ",\n";
    }
  }
  if (!out) throw IoError("write failed: " + path, path);
}

/// One line per selected coordinate per method per replication.
inline void write_rep_rows_csv(const SuiteResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path, path);
  out << "# sqsi " << kVersion << '\n';
  out << "# config " << suite_config_json(r.config).dump() << '\n';
  out << "model,c,rep,method,variable,column,target,estimate,lcb,ucb,pvalue,covered,flags\n";
  for (const RepResult& rep : r.reps) {
    const ModelSpec spec = detail::cell_spec(r.config, rep.cell);
    for (size_t mi = 0; mi < r.config.methods.size(); ++mi) {
      for (const CoordinateResult& c : rep.methods[mi].coords) {
        out << spec.model_id << ',' << format_real(spec.c) << ',' << rep.rep << ','
            << to_string(r.config.methods[mi]) << ',' << csv_quote(c.name) << ',' << c.column << ','
            << format_real(c.target) << ',' << format_real(c.estimate) << ','
            << format_real(c.lcb) << ',' << format_real(c.ucb) << ',' << format_real(c.pvalue)
            << ',' << (c.lcb <= c.target && c.target <= c.ucb ? 1 : 0) << ','
            << csv_quote(join(c.flags, ';')) << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + path, path);
}

inline json suite_json(const SuiteResult& r) {
  json j;
  j["version"] = kVersion;
  j["command"] = "replicate";
  j["config"] = suite_config_json(r.config);
  json cells = json::array();
  for (const CellSummary& s : r.cells) {
    json c;
    c["model"] = s.model_id;
    c["c"] = s.c;
    c["method"] = std::string(to_string(s.method));
    c["reps"] = s.reps;
    c["failures"] = s.failures;
    c["coverage"] = real_json(s.coverage);
    c["mean_length"] = real_json(s.mean_length);
    c["length_ratio"] = real_json(s.length_ratio);
    c["f1_before"] = real_json(s.f1_before);
    c["f1_after"] = real_json(s.f1_after);
    c["recall"] = real_json(s.recall);
    c["unbounded_fraction"] = real_json(s.unbounded_fraction);
    c["mean_selected"] = real_json(s.mean_selected);
    c["rows"] = s.rows;
    c["nonmonotone"] = s.nonmonotone;
    c["endpoint_mismatch"] = s.endpoint_mismatch;
    c["max_endpoint_error"] = real_json(s.max_endpoint_error);
    cells.push_back(std::move(c));
  }
  j["cells"] = cells;
  return j;
}

}  // namespace sqsi
