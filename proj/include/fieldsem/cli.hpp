#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include "fieldsem/baseline.hpp"
#include "fieldsem/config.hpp"
#include "fieldsem/dataset.hpp"
#include "fieldsem/errors.hpp"
#include "fieldsem/information.hpp"
#include "fieldsem/sem.hpp"
#include "fieldsem/simulation.hpp"

// Command implementations behind the `fieldsem` executable. Each command
// returns its process exit code and reports failures as a single
// `ERROR <code>: <reason>` line on `err`.
namespace fieldsem::cli {

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

template <class Body>
int guarded(const Streams& io, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    io.err << "ERROR " << static_cast<int>(e.code()) << ": " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    io.err << "ERROR 1: " << e.what() << '\n';
    return 1;
  }
}

inline std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / name);
  if (!f) throw ValidationError("cannot write '" + (dir / name).string() + "'");
  return f;
}

// Loads a run configuration, checks required keys and fills defaults.
inline KeyValueConfig resolve_run_config(const std::string& path) {
  KeyValueConfig cfg = KeyValueConfig::load(path, run_config_keys());
  for (const char* key : {"tau", "scheme", "seed"}) cfg.get(key);
  const Scheme scheme = parse_scheme(cfg.get("scheme"));
  cfg.set_default("dependence", "independent");
  if (cfg.get("dependence") == "independent") {
    cfg.get("model_x");
    cfg.get("model_t");
    if (scheme == Scheme::triple_xyt) cfg.get("model_y");
  }
  cfg.set_default("burn_in", "100");
  cfg.set_default("iterations", "1000");
  cfg.set_default("info_imputations", "100000");
  cfg.set_default("max_reject_attempts", "1000000");
  cfg.set_default("threads", "1");
  return cfg;
}

inline void echo_config(std::ostream& out, const KeyValueConfig& cfg) {
  out << "# resolved configuration\n" << cfg.to_string();
}

}  // namespace detail

inline int cmd_fit(const std::string& data_path, const std::string& config_path, const std::string& out_dir,
                   const Streams& io) {
  return detail::guarded(io, [&] {
    const KeyValueConfig cfg = detail::resolve_run_config(config_path);
    detail::echo_config(io.out, cfg);
    const FieldDataset d = load_dataset(data_path, cfg);
    const ModelSpec spec = model_spec_from_config(cfg, d.scheme == Scheme::triple_xyt);
    const SemConfig sem = sem_config_from(cfg);

    const auto start = std::chrono::steady_clock::now();
    const SemEstimate est = run_sem(d, spec, sem);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const std::filesystem::path dir(out_dir);
    {
      auto f = detail::open_output(dir, "config.resolved");
      f << cfg.to_string();
    }
    {
      auto f = detail::open_output(dir, "estimate.csv");
      write_estimate(f, est.names(), est.estimate);
    }
    {
      auto f = detail::open_output(dir, "trace.csv");
      write_trace(f, est);
    }
    std::ostringstream summary;
    summary << dataset_summary(d) << "model=" << spec.describe() << '\n'
            << "cycles=" << est.trace.theta.size() - 1 << '\n';
    const auto names = est.names();
    for (std::size_t j = 0; j < names.size(); ++j) summary << names[j] << '=' << format_number(est.estimate[j]) << '\n';
    {
      auto f = detail::open_output(dir, "summary.txt");
      f << summary.str();
    }
    io.out << summary.str() << "runtime_seconds=" << std::fixed << std::setprecision(3) << seconds << '\n';
    return 0;
  });
}

inline int cmd_stderr(const std::string& data_path, const std::string& config_path, const std::string& estimate_path,
                      const std::string& out_dir, double level, const Streams& io) {
  return detail::guarded(io, [&] {
    const KeyValueConfig cfg = detail::resolve_run_config(config_path);
    detail::echo_config(io.out, cfg);
    const FieldDataset d = load_dataset(data_path, cfg);
    const ModelSpec spec = model_spec_from_config(cfg, d.scheme == Scheme::triple_xyt);
    std::ifstream est_in(estimate_path);
    if (!est_in) throw ValidationError("cannot open estimate file '" + estimate_path + "'");
    const std::vector<double> estimate = read_estimate(est_in, spec);
    const JointModel at(spec, estimate);

    const InfoMatrix info =
        louis_information(at, d, cfg.get_count("info_imputations"), cfg.get_count("seed"),
                          static_cast<unsigned>(cfg.get_count("threads")), cfg.get_count("max_reject_attempts"));
    const std::filesystem::path dir(out_dir);
    {
      auto f = detail::open_output(dir, "information.csv");
      const auto names = spec.param_names();
      f << "param";
      for (const auto& n : names) f << ',' << n;
      f << '\n';
      for (Eigen::Index i = 0; i < info.matrix.rows(); ++i) {
        f << names[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < info.matrix.cols(); ++j) f << ',' << format_number(info.matrix(i, j));
        f << '\n';
      }
    }
    const CiTable table = wald_intervals(spec.param_names(), estimate, info, level);
    {
      auto f = detail::open_output(dir, "ci.csv");
      write_ci(f, table);
    }
    write_ci(io.out, table);
    return 0;
  });
}

inline int cmd_simulate(const std::string& scenario_path, const std::string& out_dir, const Streams& io) {
  return detail::guarded(io, [&] {
    KeyValueConfig cfg = KeyValueConfig::load(scenario_path, scenario_config_keys());
    for (const char* key : {"truth", "N", "tau", "T0", "replications", "seed"}) cfg.get(key);
    cfg.set_default("label", std::filesystem::path(scenario_path).stem().string());
    cfg.set_default("dependence", "independent");
    cfg.set_default("burn_in", "100");
    cfg.set_default("iterations", "1000");
    cfg.set_default("max_reject_attempts", "1000000");
    cfg.set_default("threads", "1");
    detail::echo_config(io.out, cfg);
    const SimReport rep = run_study(scenario_from_config(cfg));
    {
      auto f = detail::open_output(out_dir, "report.csv");
      write_report(f, rep);
    }
    io.out << "missing_rate=" << format_number(rep.missing_rate) << " failures=" << rep.failures << '/'
           << rep.replications << '\n';
    io.out << std::left << std::setw(10) << "param" << std::right << std::setw(12) << "truth" << std::setw(14) << "bias"
           << std::setw(14) << "rmse" << '\n';
    for (std::size_t j = 0; j < rep.names.size(); ++j) {
      io.out << std::left << std::setw(10) << rep.names[j] << std::right << std::setw(12) << rep.truth[j]
             << std::setw(14) << rep.bias[j] << std::setw(14) << rep.rmse[j] << '\n';
    }
    return 0;
  });
}

inline int cmd_direct(const std::string& data_path, const std::string& config_path, const std::string& out_dir,
                      const Streams& io) {
  return detail::guarded(io, [&] {
    const KeyValueConfig cfg = detail::resolve_run_config(config_path);
    detail::echo_config(io.out, cfg);
    const FieldDataset d = load_dataset(data_path, cfg);
    if (d.scheme == Scheme::triple_xyt) throw SchemaError("direct maximization is not available for scheme triple_xyt");
    const ModelSpec spec = model_spec_from_config(cfg, false);
    const std::vector<double> init = cfg.has("init") ? cfg.get_list("init") : auto_init(d, spec);
    const DirectFitReport report = direct_fit(d, spec, init);
    std::ostringstream text;
    write_direct_report(text, spec, report);
    {
      auto f = detail::open_output(out_dir, "direct.txt");
      f << text.str();
    }
    io.out << text.str();
    return 0;
  });
}

// Writes one simulated batch from a scenario file (synthetic stand-in data).
inline int cmd_generate(const std::string& scenario_path, const std::string& data_out, const Streams& io) {
  return detail::guarded(io, [&] {
    KeyValueConfig cfg = KeyValueConfig::load(scenario_path, scenario_config_keys());
    cfg.set_default("replications", "1");
    const SimScenario s = scenario_from_config(cfg);
    const FieldDataset d = generate_batch(JointModel(s.spec, s.truth), s.units, s.tau, s.t0, s.sem.seed);
    std::ofstream f(data_out);
    if (!f) throw ValidationError("cannot write '" + data_out + "'");
    write_dataset(f, d);
    io.out << dataset_summary(d);
    return 0;
  });
}

}  // namespace fieldsem::cli
