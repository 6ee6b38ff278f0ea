#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fieldsem/dataset.hpp"
#include "fieldsem/distributions.hpp"
#include "fieldsem/errors.hpp"
#include "fieldsem/joint_model.hpp"
#include "fieldsem/rng.hpp"

namespace fieldsem {

struct SemConfig {
  std::size_t burn_in = 100;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  std::size_t max_reject_attempts = 1'000'000;
  std::optional<std::vector<double>> init;  // empty: automatic start
};

struct SemTrace {
  std::vector<std::vector<double>> theta;  // theta[0] is the starting value
  std::vector<std::size_t> rejections;     // rejected proposals per cycle
};

struct SemEstimate {
  ModelSpec spec;
  std::vector<double> estimate;
  SemTrace trace;

  JointModel model() const { return {spec, estimate}; }
  std::vector<std::string> names() const { return spec.param_names(); }
};

// ---------------------------------------------------------------------------
// S-step imputers. Each counts rejected proposals into `rejections`.

// (x, t) from the joint law conditioned on NOT(x + t < censor and t < tau).
inline Pair impute_missing_pair(const JointModel& m, double censor, double tau, Rng& rng,
                                std::size_t max_attempts, std::size_t& rejections) {
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    const Pair p = m.sample_pair(rng);
    if (!(p.x + p.t < censor && p.t < tau)) return p;
    ++rejections;
  }
  throw ImputationStallError("imputation stalled after " + std::to_string(max_attempts) +
                                 " proposals for unreturned unit with censor_c=" + format_number(censor) +
                                 " (parameters imply near-zero missing probability)",
                             censor);
}

// t from T | T > censor via the inverse survival function.
inline double impute_censored_lifetime(const Distribution& lifetime, double censor, Rng& rng) {
  const double u = rng.uniform();
  if (!(censor > 0.0)) return lifetime.quantile(u);
  const double tail = lifetime.survival(censor);
  if (!(tail > 0.0)) {
    throw ImputationStallError("lifetime survival at censor time " + format_number(censor) + " is numerically zero",
                               censor);
  }
  const double t = lifetime.upper_quantile((1.0 - u) * tail);
  return t > censor ? t : std::nextafter(censor, infinity);
}

// Below this interval mass the truncated law is sampled by inverse CDF
// instead of acceptance-rejection.
inline constexpr double rejection_min_mass = 0.05;

// Value from the family truncated to [lower, upper).
inline double impute_interval(const Distribution& d, double lower, double upper, Rng& rng,
                              std::size_t max_attempts, std::size_t& rejections) {
  if (!(lower < upper)) throw DomainError("empty imputation interval");
  const bool lower_tail = d.cdf(lower) < 0.5;
  const double mass = lower_tail ? d.cdf(upper) - d.cdf(lower) : d.survival(lower) - d.survival(upper);
  if (!(mass > 0.0)) {
    throw ImputationStallError("interval [" + format_number(lower) + ", " + format_number(upper) +
                                   ") has numerically zero probability",
                               lower);
  }
  if (mass >= rejection_min_mass) {
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
      const double v = d.sample(rng);
      if (v >= lower && v < upper) return v;
      ++rejections;
    }
    throw ImputationStallError("interval imputation stalled after " + std::to_string(max_attempts) + " proposals",
                               lower);
  }
  const double u = rng.uniform();
  double v = lower_tail ? d.quantile(d.cdf(lower) + u * mass) : d.upper_quantile(d.survival(lower) - u * mass);
  if (!(v >= lower)) v = lower;
  if (!(v < upper)) v = std::nextafter(upper, lower);
  return v;
}

// Constraint on x + y + t: lower <= sum < upper (upper may be infinite).
struct SumConstraint {
  double lower;
  double upper;
  static SumConstraint within(double a, double b) { return {a, b}; }
  static SumConstraint at_least(double c) { return {c, infinity}; }
  bool contains(double s) const { return s >= lower && s < upper; }
};

// A bounded sum forces every component below the bound, so proposals come
// from the marginals truncated to [0, upper); the accepted law is unchanged.
inline Triple impute_triple(const JointModel& m, SumConstraint constraint, Rng& rng, std::size_t max_attempts,
                            std::size_t& rejections) {
  if (std::isinf(constraint.upper)) {
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
      const Triple v = m.sample_triple(rng);
      if (constraint.contains(v.sum())) return v;
      ++rejections;
    }
  } else {
    const double fx = m.x().cdf(constraint.upper), fy = m.y().cdf(constraint.upper), ft = m.t().cdf(constraint.upper);
    if (!(fx > 0.0 && fy > 0.0 && ft > 0.0)) {
      throw ImputationStallError("sum interval [" + format_number(constraint.lower) + ", " +
                                     format_number(constraint.upper) + ") has numerically zero probability",
                                 constraint.lower);
    }
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
      const Triple v{m.x().quantile(rng.uniform() * fx), m.y().quantile(rng.uniform() * fy),
                     m.t().quantile(rng.uniform() * ft)};
      if (constraint.contains(v.sum())) return v;
      ++rejections;
    }
  }
  throw ImputationStallError("triple imputation stalled after " + std::to_string(max_attempts) +
                                 " proposals for sum interval [" + format_number(constraint.lower) + ", " +
                                 format_number(constraint.upper) + ")",
                             constraint.lower);
}

// ---------------------------------------------------------------------------

inline void check_compatible(const FieldDataset& d, const ModelSpec& spec) {
  const bool triple_model = spec.structure == Structure::independent_xyt;
  if ((d.scheme == Scheme::triple_xyt) != triple_model) {
    throw SchemaError("model " + spec.describe() + " does not match scheme " + std::string(scheme_name(d.scheme)));
  }
  if (d.scheme == Scheme::pair_xt_direct && spec.structure == Structure::bivariate_lognormal) {
    throw SchemaError("direct-sale records require an independent (X, T) model");
  }
}

// Completes every missing record by imputation under `m`. Record i of cycle
// `cycle` draws from substream (seed, cycle, i), so the result does not depend
// on evaluation order. Aux samples use indices after the records.
inline CompletedData s_step(const FieldDataset& d, const JointModel& m, std::uint64_t seed, std::uint64_t cycle,
                            std::size_t max_attempts, std::size_t& rejections) {
  CompletedData out;
  out.x.reserve(d.records.size());
  out.t.reserve(d.records.size());
  const bool triple = d.scheme == Scheme::triple_xyt;
  if (triple) out.y.reserve(d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const UnitRecord& rec = d.records[i];
    if (const auto* c = std::get_if<Claim>(&rec)) {
      out.x.push_back(c->x);
      out.t.push_back(c->t);
      continue;
    }
    if (const auto* f = std::get_if<DirectFailure>(&rec)) {
      out.lifetime_only.push_back(f->t);
      continue;
    }
    Rng rng = Rng::substream(seed, cycle, i);
    if (const auto* u = std::get_if<Unreturned>(&rec)) {
      const Pair p = impute_missing_pair(m, u->censor, d.tau, rng, max_attempts, rejections);
      out.x.push_back(p.x);
      out.t.push_back(p.t);
    } else if (const auto* dc = std::get_if<DirectCensored>(&rec)) {
      out.lifetime_only.push_back(impute_censored_lifetime(m.t(), dc->censor, rng));
    } else {
      const SumConstraint constraint = std::holds_alternative<SumClaim>(rec)
                                           ? SumConstraint::within(std::get<SumClaim>(rec).lower, std::get<SumClaim>(rec).upper)
                                           : SumConstraint::at_least(std::get<SumUnreturned>(rec).censor);
      const Triple v = impute_triple(m, constraint, rng, max_attempts, rejections);
      out.x.push_back(v.x);
      out.y.push_back(v.y);
      out.t.push_back(v.t);
    }
  }
  for (std::size_t j = 0; j < d.aux.size(); ++j) {
    const AuxSample& a = d.aux[j];
    Rng rng = Rng::substream(seed, cycle, d.records.size() + j);
    if (a.target == AuxTarget::sales_lag) {
      out.aux_x.push_back(impute_interval(m.x(), a.lower, a.upper, rng, max_attempts, rejections));
    } else {
      out.aux_y.push_back(impute_interval(m.y(), a.lower, a.upper, rng, max_attempts, rejections));
    }
  }
  return out;
}

inline JointModel m_step(const CompletedData& completed, const ModelSpec& spec) { return joint_fit(spec, completed); }

// Complete-data log-likelihood of `theta` on observed + imputed records.
inline double pseudo_q(const JointModel& m, const CompletedData& data) {
  double q = 0.0;
  if (m.spec().structure == Structure::independent_xyt) {
    for (std::size_t i = 0; i < data.x.size(); ++i) q += m.log_pdf(data.x[i], data.y[i], data.t[i]);
  } else {
    for (std::size_t i = 0; i < data.x.size(); ++i) q += m.log_pdf(data.x[i], data.t[i]);
  }
  for (double v : data.lifetime_only) q += m.t().log_pdf(v);
  for (double v : data.aux_x) q += m.x().log_pdf(v);
  for (double v : data.aux_y) q += m.y().log_pdf(v);
  return q;
}

// Starting value: fit the observed records as if complete, then double every
// scale-type parameter so the first S-steps reject rarely.
inline std::vector<double> auto_init(const FieldDataset& d, const ModelSpec& spec) {
  CompletedData observed;
  if (d.scheme != Scheme::triple_xyt) {
    for (const auto& rec : d.records) {
      if (const auto* c = std::get_if<Claim>(&rec)) {
        observed.x.push_back(c->x);
        observed.t.push_back(c->t);
      } else if (const auto* f = std::get_if<DirectFailure>(&rec)) {
        observed.lifetime_only.push_back(f->t);
      }
    }
    const JointModel fitted = joint_fit(spec, observed);
    if (spec.structure == Structure::bivariate_lognormal) {
      std::vector<double> theta = fitted.theta_vector();
      theta[0] += std::log(2.0);
      theta[1] += std::log(2.0);
      return theta;
    }
    std::vector<double> theta;
    for (const Distribution& part : {fitted.x().stretched(2.0), fitted.t().stretched(2.0)}) {
      theta.insert(theta.end(), part.params().begin(), part.params().end());
    }
    return theta;
  }

  // Three-variable scheme: X and Y from their auxiliary samples, T from what the
  // observed sums leave over.
  auto midpoint = [](double a, double b) { return std::isfinite(b) ? 0.5 * (a + b) : std::max(a, 1.0); };
  std::vector<double> sums, ax, ay;
  for (const auto& rec : d.records) {
    if (const auto* s = std::get_if<SumClaim>(&rec)) sums.push_back(std::max(midpoint(s->lower, s->upper), 1e-3));
  }
  for (const auto& a : d.aux) {
    (a.target == AuxTarget::sales_lag ? ax : ay).push_back(std::max(midpoint(a.lower, a.upper), 1e-3));
  }
  auto fallback = [&](std::vector<double>& v) {
    if (v.size() < 2) {
      v.clear();
      for (double s : sums) v.push_back(s / 3.0);
    }
  };
  fallback(ax);
  fallback(ay);
  auto spread = [](std::vector<double>& v) {
    // two-parameter fits need two distinct values
    if (v.size() >= 2 && std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); })) v.back() *= 1.5;
  };
  spread(ax);
  spread(ay);
  const Distribution fx = fit_univariate(spec.x, ax);
  const Distribution fy = fit_univariate(spec.y, ay);
  std::vector<double> lt;
  for (double s : sums) lt.push_back(std::max(s - fx.mean() - fy.mean(), 0.1 * s));
  if (lt.size() < 2) lt.push_back(lt.empty() ? 1.0 : 1.5 * lt.front());
  spread(lt);
  const Distribution ft = fit_univariate(spec.t, lt);
  std::vector<double> theta;
  for (const Distribution& part : {fx.stretched(2.0), ft.stretched(2.0), fy.stretched(2.0)}) {
    theta.insert(theta.end(), part.params().begin(), part.params().end());
  }
  return theta;
}

// Runs burn_in + iterations S-step/M-step cycles and averages the post-burn-in trace.
inline SemEstimate run_sem(const FieldDataset& d, const ModelSpec& spec, const SemConfig& cfg) {
  if (cfg.iterations < 1) throw ConfigError("iterations must be at least 1");
  if (cfg.max_reject_attempts < 1) throw ConfigError("max_reject_attempts must be at least 1");
  require_fittable(d);
  check_compatible(d, spec);

  SemEstimate result{spec, {}, {}};
  JointModel model(spec, cfg.init ? *cfg.init : auto_init(d, spec));
  result.trace.theta.push_back(model.theta_vector());
  result.trace.rejections.push_back(0);

  const std::size_t total = cfg.burn_in + cfg.iterations;
  std::vector<double> sum(spec.num_params(), 0.0);
  for (std::size_t k = 1; k <= total; ++k) {
    std::size_t rejections = 0;
    try {
      model = m_step(s_step(d, model, cfg.seed, k, cfg.max_reject_attempts, rejections), spec);
    } catch (const ImputationStallError& e) {
      throw ImputationStallError("cycle " + std::to_string(k) + ": " + e.what(), e.censor());
    } catch (const FitDegenerateError& e) {
      throw FitDegenerateError("cycle " + std::to_string(k) + ": " + e.what());
    } catch (const ParameterDomainError& e) {
      throw FitDegenerateError("cycle " + std::to_string(k) + ": " + e.what());
    }
    result.trace.theta.push_back(model.theta_vector());
    result.trace.rejections.push_back(rejections);
    if (k > cfg.burn_in) {
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += model.theta()[j];
    }
  }
  result.estimate.resize(sum.size());
  for (std::size_t j = 0; j < sum.size(); ++j) result.estimate[j] = sum[j] / static_cast<double>(cfg.iterations);
  return result;
}

// ---------------------------------------------------------------------------
// Trace and estimate files.

inline void write_trace(std::ostream& out, const SemEstimate& est) {
  out << "cycle";
  for (const auto& n : est.names()) out << ',' << n;
  out << ",rejections\n";
  for (std::size_t k = 0; k < est.trace.theta.size(); ++k) {
    out << k;
    for (double v : est.trace.theta[k]) out << ',' << format_number(v);
    out << ',' << est.trace.rejections[k] << '\n';
  }
}

inline void write_estimate(std::ostream& out, const std::vector<std::string>& names, const std::vector<double>& values) {
  out << "param,value\n";
  for (std::size_t j = 0; j < names.size(); ++j) out << names[j] << ',' << format_number(values[j]) << '\n';
}

// Reads `param,value` rows and checks the names against the model.
inline std::vector<double> read_estimate(std::istream& in, const ModelSpec& spec) {
  const auto names = spec.param_names();
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty()) continue;
    if (!header) {
      if (body != "param,value") throw ParseError("expected header 'param,value'", lineno);
      header = true;
      continue;
    }
    const auto comma = body.find(',');
    if (comma == std::string_view::npos) throw ParseError("expected param,value", lineno);
    const std::string name(trim(body.substr(0, comma)));
    if (values.size() >= names.size() || name != names[values.size()]) {
      throw ParseError("unexpected parameter '" + name + "' for model " + spec.describe(), lineno);
    }
    double v = 0.0;
    if (!parse_number(body.substr(comma + 1), v)) throw ParseError("value is not a number", lineno);
    values.push_back(v);
  }
  if (values.size() != names.size()) {
    throw ParseError("estimate has " + std::to_string(values.size()) + " parameters, model needs " +
                         std::to_string(names.size()),
                     lineno);
  }
  return values;
}

}  // namespace fieldsem
