#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "fieldsem/baseline.hpp"
#include "fieldsem/config.hpp"
#include "fieldsem/dataset.hpp"
#include "fieldsem/joint_model.hpp"
#include "fieldsem/parallel.hpp"
#include "fieldsem/rng.hpp"
#include "fieldsem/sem.hpp"

namespace fieldsem {

// One shipment batch of n units delivered at time 0 and observed until t0.
// A unit becomes a claim when x + t < t0 and t < tau; otherwise it is
// unreturned with censor time t0. Unit i draws from substream (seed, i).
inline FieldDataset generate_batch(const JointModel& truth, std::size_t n, double tau, double t0, std::uint64_t seed) {
  if (truth.spec().dimension() != 2) throw SchemaError("generate_batch needs a two-variable model");
  FieldDataset d;
  d.tau = tau;
  d.scheme = Scheme::pair_xt;
  d.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::substream(seed, i);
    const Pair p = truth.sample_pair(rng);
    if (p.x + p.t < t0 && p.t < tau) {
      d.records.emplace_back(Claim{p.x, p.t, t0});
    } else {
      d.records.emplace_back(Unreturned{t0});
    }
  }
  return d;
}

struct SimScenario {
  std::string label;
  ModelSpec spec;
  std::vector<double> truth;
  std::size_t units = 200;
  double tau = infinity;
  double t0 = infinity;
  std::size_t replications = 500;
  SemConfig sem;
  unsigned threads = 1;
};

struct SimReport {
  std::string label;
  std::vector<std::string> names;
  std::vector<double> truth;
  std::vector<double> bias;
  std::vector<double> rmse;
  std::vector<std::vector<double>> estimates;  // successful replications, in replication order
  std::vector<std::size_t> succeeded;          // replication index of each estimate
  std::size_t replications = 0;
  std::size_t failures = 0;
  double missing_rate = 0.0;  // mean empirical (N - C) / N over all replications

  std::vector<double> sd() const {
    std::vector<double> out(names.size(), 0.0);
    const double n = static_cast<double>(estimates.size());
    for (std::size_t j = 0; j < names.size(); ++j) {
      double mean = 0.0;
      for (const auto& e : estimates) mean += e[j];
      mean /= n;
      for (const auto& e : estimates) out[j] += (e[j] - mean) * (e[j] - mean);
      out[j] = std::sqrt(out[j] / n);
    }
    return out;
  }
};

// Seeds of replication r: data from (seed, r, 1), SEM from (seed, r, 2).
inline std::uint64_t replication_data_seed(std::uint64_t seed, std::size_t r) { return mix_seed(seed, r, 1); }
inline std::uint64_t replication_sem_seed(std::uint64_t seed, std::size_t r) { return mix_seed(seed, r, 2); }

inline SimReport run_study(const SimScenario& s) {
  if (s.units < 1 || s.replications < 1) throw ConfigError("scenario needs N >= 1 and replications >= 1");
  const JointModel truth(s.spec, s.truth);
  std::vector<std::optional<std::vector<double>>> results(s.replications);
  std::vector<double> missing(s.replications, 0.0);
  parallel_for(s.replications, s.threads, [&](std::size_t r) {
    const FieldDataset d = generate_batch(truth, s.units, s.tau, s.t0, replication_data_seed(s.sem.seed, r));
    missing[r] = static_cast<double>(d.missing()) / static_cast<double>(d.units());
    SemConfig cfg = s.sem;
    cfg.seed = replication_sem_seed(s.sem.seed, r);
    try {
      results[r] = run_sem(d, s.spec, cfg).estimate;
    } catch (const Error&) {
      results[r].reset();
    }
  });

  SimReport rep;
  rep.label = s.label;
  rep.names = s.spec.param_names();
  rep.truth = s.truth;
  rep.replications = s.replications;
  for (std::size_t r = 0; r < s.replications; ++r) {
    rep.missing_rate += missing[r];
    if (results[r]) {
      rep.estimates.push_back(*results[r]);
      rep.succeeded.push_back(r);
    } else {
      ++rep.failures;
    }
  }
  rep.missing_rate /= static_cast<double>(s.replications);
  if (rep.estimates.empty()) throw FitDegenerateError("study '" + s.label + "': all replications failed");
  const std::size_t p = rep.names.size();
  const double n = static_cast<double>(rep.estimates.size());
  rep.bias.assign(p, 0.0);
  rep.rmse.assign(p, 0.0);
  for (const auto& e : rep.estimates) {
    for (std::size_t j = 0; j < p; ++j) {
      rep.bias[j] += e[j] - s.truth[j];
      rep.rmse[j] += (e[j] - s.truth[j]) * (e[j] - s.truth[j]);
    }
  }
  for (std::size_t j = 0; j < p; ++j) {
    rep.bias[j] /= n;
    rep.rmse[j] = std::sqrt(rep.rmse[j] / n);
  }
  return rep;
}

struct SweepPoint {
  double value;  // swept parameter value
  double missing_rate;
  std::vector<double> relative_bias;
  std::vector<double> relative_rmse;
  std::size_t failures;
  SimReport report;
};

// Repeats the study with parameter `param` of the truth set to each grid value.
inline std::vector<SweepPoint> breakdown_sweep(const SimScenario& base, std::size_t param, const std::vector<double>& grid) {
  std::vector<SweepPoint> out;
  for (double v : grid) {
    SimScenario s = base;
    s.truth[param] = v;
    s.label = base.label + "@" + format_number(v);
    SimReport rep;
    try {
      rep = run_study(s);
    } catch (const Error& e) {
      throw FitDegenerateError("sweep point " + format_number(v) + ": " + e.what());
    }
    SweepPoint pt{v, rep.missing_rate, {}, {}, rep.failures, rep};
    for (std::size_t j = 0; j < rep.names.size(); ++j) {
      pt.relative_bias.push_back(rep.bias[j] / s.truth[j]);
      pt.relative_rmse.push_back(rep.rmse[j] / s.truth[j]);
    }
    out.push_back(std::move(pt));
  }
  return out;
}

// Value of positive parameter `param` at which the expected missing rate
// 1 - Pr(claim) equals `target` (bisection on the log scale).
inline double parameter_for_missing_rate(const ModelSpec& spec, std::vector<double> theta, std::size_t param,
                                         double target, double tau, double t0) {
  auto rate = [&](double v) {
    theta[param] = v;
    return 1.0 - claim_probability(JointModel(spec, theta), t0, tau);
  };
  double lo = std::log(theta[param]) - 1.0, hi = std::log(theta[param]) + 1.0;
  const bool increasing = rate(std::exp(hi)) > rate(std::exp(lo));
  auto below = [&](double s) { return (rate(std::exp(s)) < target) == increasing; };
  for (int i = 0; i < 60 && !below(lo); ++i) lo -= 1.0;
  for (int i = 0; i < 60 && below(hi); ++i) hi += 1.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (below(mid) ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

inline void write_report(std::ostream& out, const SimReport& r) {
  out << "scenario,param,truth,bias,rmse,failures,replications\n";
  for (std::size_t j = 0; j < r.names.size(); ++j) {
    out << r.label << ',' << r.names[j] << ',' << format_number(r.truth[j]) << ',' << format_number(r.bias[j]) << ','
        << format_number(r.rmse[j]) << ',' << r.failures << ',' << r.replications << '\n';
  }
}

// ---------------------------------------------------------------------------
// Configuration wiring shared by the CLI and the scenario files.

inline ModelSpec model_spec_from_config(const KeyValueConfig& cfg, bool triple) {
  const std::string dependence = cfg.get_or("dependence", "independent");
  if (dependence == "bivariate_lognormal") {
    if (triple) throw ConfigError("dependence=bivariate_lognormal is not available for scheme triple_xyt");
    return ModelSpec::bivariate_lognormal();
  }
  if (dependence != "independent") {
    throw ConfigError("dependence must be 'independent' or 'bivariate_lognormal', got '" + dependence + "'");
  }
  const Family x = parse_family(cfg.get("model_x"));
  const Family t = parse_family(cfg.get("model_t"));
  if (triple) return ModelSpec::triple(x, t, parse_family(cfg.get("model_y")));
  return ModelSpec::independent(x, t);
}

inline SemConfig sem_config_from(const KeyValueConfig& cfg) {
  SemConfig s;
  s.seed = cfg.get_count("seed");
  s.burn_in = cfg.get_count_or("burn_in", 100);
  s.iterations = cfg.get_count_or("iterations", 1000);
  s.max_reject_attempts = cfg.get_count_or("max_reject_attempts", 1'000'000);
  if (cfg.has("init")) s.init = cfg.get_list("init");
  return s;
}

inline SimScenario scenario_from_config(const KeyValueConfig& cfg) {
  SimScenario s;
  s.label = cfg.get_or("label", "scenario");
  s.spec = model_spec_from_config(cfg, false);
  s.truth = cfg.get_list("truth");
  JointModel(s.spec, s.truth);
  s.units = cfg.get_count("N");
  s.tau = cfg.get_number("tau");
  s.t0 = cfg.get_number("T0");
  s.replications = cfg.get_count("replications");
  s.sem = sem_config_from(cfg);
  s.threads = static_cast<unsigned>(cfg.get_count_or("threads", 1));
  return s;
}

}  // namespace fieldsem
