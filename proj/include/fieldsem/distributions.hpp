#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "fieldsem/errors.hpp"
#include "fieldsem/rng.hpp"

namespace fieldsem {

// Parameterizations:
//   exponential(rate)          mean 1/rate
//   weibull(scale, shape)      F(x) = 1 - exp(-(x/scale)^shape)
//   lognormal(mu, sigma)       ln X ~ Normal(mu, sigma^2)
//   gamma(shape, scale)        mean shape*scale
enum class Family { exponential, weibull, lognormal, gamma };

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::exponential: return "exponential";
    case Family::weibull: return "weibull";
    case Family::lognormal: return "lognormal";
    case Family::gamma: return "gamma";
  }
  return "?";
}

inline Family parse_family(std::string_view name) {
  if (name == "exponential" || name == "exp") return Family::exponential;
  if (name == "weibull") return Family::weibull;
  if (name == "lognormal" || name == "logn") return Family::lognormal;
  if (name == "gamma") return Family::gamma;
  throw ConfigError("unknown distribution family '" + std::string(name) + "'");
}

inline std::size_t num_params(Family f) { return f == Family::exponential ? 1 : 2; }

inline std::vector<std::string> param_names(Family f) {
  switch (f) {
    case Family::exponential: return {"rate"};
    case Family::weibull: return {"scale", "shape"};
    case Family::lognormal: return {"mu", "sigma"};
    case Family::gamma: return {"shape", "scale"};
  }
  return {};
}

// A parametric lifetime-type distribution on (0, inf). Immutable value type.
class Distribution {
 public:
  Distribution(Family family, std::span<const double> params) : family_(family) {
    if (params.size() != num_params(family)) {
      throw ParameterDomainError(std::string(family_name(family)) + " expects " +
                                 std::to_string(num_params(family)) + " parameter(s), got " +
                                 std::to_string(params.size()));
    }
    std::copy(params.begin(), params.end(), p_.begin());
    validate();
    precompute();
  }
  Distribution(Family family, std::initializer_list<double> params)
      : Distribution(family, std::span<const double>(params.begin(), params.size())) {}

  static Distribution exponential(double rate) { return {Family::exponential, {rate}}; }
  static Distribution weibull(double scale, double shape) { return {Family::weibull, {scale, shape}}; }
  static Distribution lognormal(double mu, double sigma) { return {Family::lognormal, {mu, sigma}}; }
  static Distribution gamma(double shape, double scale) { return {Family::gamma, {shape, scale}}; }

  Family family() const noexcept { return family_; }
  std::size_t size() const noexcept { return num_params(family_); }
  std::span<const double> params() const noexcept { return {p_.data(), size()}; }
  double param(std::size_t i) const noexcept { return p_[i]; }

  double log_pdf(double x) const {
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    switch (family_) {
      case Family::exponential: return log_norm_ - p_[0] * x;
      case Family::weibull: {
        const double lz = std::log(x) - log_scale_;
        return log_norm_ + (p_[1] - 1.0) * lz - std::exp(p_[1] * lz);
      }
      case Family::lognormal: {
        const double lx = std::log(x);
        const double z = (lx - p_[0]) / p_[1];
        return log_norm_ - lx - 0.5 * z * z;
      }
      case Family::gamma: return log_norm_ + (p_[0] - 1.0) * std::log(x) - x / p_[1];
    }
    return 0.0;
  }

  double pdf(double x) const { return x > 0.0 ? std::exp(log_pdf(x)) : 0.0; }

  double cdf(double x) const {
    if (!(x > 0.0)) return 0.0;
    if (std::isinf(x)) return 1.0;
    switch (family_) {
      case Family::exponential: return -std::expm1(-p_[0] * x);
      case Family::weibull: return -std::expm1(-std::pow(x / p_[0], p_[1]));
      case Family::lognormal: return 0.5 * std::erfc(-(std::log(x) - p_[0]) / (p_[1] * std::numbers::sqrt2));
      case Family::gamma: return boost::math::gamma_p(p_[0], x / p_[1]);
    }
    return 0.0;
  }

  // 1 - cdf(x), computed without cancellation in the upper tail.
  double survival(double x) const {
    if (!(x > 0.0)) return 1.0;
    if (std::isinf(x)) return 0.0;
    switch (family_) {
      case Family::exponential: return std::exp(-p_[0] * x);
      case Family::weibull: return std::exp(-std::pow(x / p_[0], p_[1]));
      case Family::lognormal: return 0.5 * std::erfc((std::log(x) - p_[0]) / (p_[1] * std::numbers::sqrt2));
      case Family::gamma: return boost::math::gamma_q(p_[0], x / p_[1]);
    }
    return 1.0;
  }

  double quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile level must lie in (0,1), got " + std::to_string(u));
    switch (family_) {
      case Family::exponential: return -std::log1p(-u) / p_[0];
      case Family::weibull: return p_[0] * std::pow(-std::log1p(-u), 1.0 / p_[1]);
      case Family::lognormal:
        return std::exp(p_[0] - p_[1] * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u));
      case Family::gamma: return p_[1] * boost::math::gamma_p_inv(p_[0], u);
    }
    return 0.0;
  }

  // Inverse of the survival function: returns x with survival(x) = q.
  double upper_quantile(double q) const {
    if (!(q > 0.0 && q < 1.0)) throw DomainError("tail probability must lie in (0,1), got " + std::to_string(q));
    switch (family_) {
      case Family::exponential: return -std::log(q) / p_[0];
      case Family::weibull: return p_[0] * std::pow(-std::log(q), 1.0 / p_[1]);
      case Family::lognormal:
        return std::exp(p_[0] + p_[1] * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q));
      case Family::gamma: return p_[1] * boost::math::gamma_q_inv(p_[0], q);
    }
    return 0.0;
  }

  double mean() const {
    switch (family_) {
      case Family::exponential: return 1.0 / p_[0];
      case Family::weibull: return p_[0] * std::tgamma(1.0 + 1.0 / p_[1]);
      case Family::lognormal: return std::exp(p_[0] + 0.5 * p_[1] * p_[1]);
      case Family::gamma: return p_[0] * p_[1];
    }
    return 0.0;
  }

  template <class Engine>
  double sample(Engine& rng) const {
    switch (family_) {
      case Family::exponential: return -std::log(uniform01(rng)) / p_[0];
      case Family::weibull: return p_[0] * std::pow(-std::log(uniform01(rng)), 1.0 / p_[1]);
      case Family::lognormal: return std::exp(p_[0] + p_[1] * std::normal_distribution<double>()(rng));
      case Family::gamma: return std::gamma_distribution<double>(p_[0], p_[1])(rng);
    }
    return 0.0;
  }

  // Same family with every scale-type parameter multiplied by `factor`.
  Distribution stretched(double factor) const {
    std::array<double, 2> q = p_;
    switch (family_) {
      case Family::exponential: q[0] /= factor; break;
      case Family::weibull: q[0] *= factor; break;
      case Family::lognormal: q[0] += std::log(factor); break;
      case Family::gamma: q[1] *= factor; break;
    }
    return {family_, std::span<const double>(q.data(), size())};
  }

 private:
  template <class Engine>
  static double uniform01(Engine& rng) {
    if constexpr (std::is_same_v<Engine, Rng>) {
      return rng.uniform();
    } else {
      double u;
      do u = std::generate_canonical<double, 53>(rng);
      while (u <= 0.0);
      return u;
    }
  }

  void validate() const {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    bool ok = true;
    switch (family_) {
      case Family::exponential: ok = positive(p_[0]); break;
      case Family::weibull:
      case Family::gamma: ok = positive(p_[0]) && positive(p_[1]); break;
      case Family::lognormal: ok = std::isfinite(p_[0]) && positive(p_[1]); break;
    }
    if (!ok) {
      std::string msg = std::string(family_name(family_)) + " parameters out of domain:";
      for (double v : params()) msg += " " + std::to_string(v);
      throw ParameterDomainError(msg);
    }
  }

  void precompute() {
    switch (family_) {
      case Family::exponential: log_norm_ = std::log(p_[0]); break;
      case Family::weibull:
        log_scale_ = std::log(p_[0]);
        log_norm_ = std::log(p_[1]) - log_scale_;
        break;
      case Family::lognormal: log_norm_ = -std::log(p_[1]) - 0.5 * std::log(2.0 * std::numbers::pi); break;
      case Family::gamma: log_norm_ = -boost::math::lgamma(p_[0]) - p_[0] * std::log(p_[1]); break;
    }
  }

  Family family_;
  std::array<double, 2> p_{};
  double log_norm_ = 0.0;
  double log_scale_ = 0.0;
};

inline double log_likelihood(const Distribution& d, std::span<const double> data) {
  double s = 0.0;
  for (double v : data) s += d.log_pdf(v);
  return s;
}

namespace detail {

inline constexpr double fit_tolerance = 1e-10;
inline constexpr int fit_max_iterations = 200;

struct LogMoments {
  double mean_log = 0.0;
  double var_log = 0.0;  // population variance of ln x
  double max_log = -std::numeric_limits<double>::infinity();
};

inline LogMoments log_moments(std::span<const double> data) {
  LogMoments m;
  for (double v : data) {
    const double l = std::log(v);
    m.mean_log += l;
    m.max_log = std::max(m.max_log, l);
  }
  m.mean_log /= static_cast<double>(data.size());
  for (double v : data) {
    const double d = std::log(v) - m.mean_log;
    m.var_log += d * d;
  }
  m.var_log /= static_cast<double>(data.size());
  return m;
}

// Safeguarded Newton on a monotone increasing scalar equation g(s) = 0 in an
// unconstrained coordinate s. `eval` returns {g, dg/ds}. Falls back to
// bisection whenever a Newton step leaves the current bracket.
template <class Eval>
double solve_monotone(Eval&& eval, double s0, const char* what) {
  double lo = s0, hi = s0;
  auto [g0, d0] = eval(s0);
  if (g0 == 0.0) return s0;
  int guard = 0;
  if (g0 > 0.0) {
    double g = g0;
    while (g > 0.0) {
      hi = lo;
      lo -= 1.0;
      g = eval(lo).first;
      if (++guard > 200) throw FitDegenerateError(std::string(what) + ": no lower bracket for the shape equation");
    }
  } else {
    double g = g0;
    while (g < 0.0) {
      lo = hi;
      hi += 1.0;
      g = eval(hi).first;
      if (++guard > 200) throw FitDegenerateError(std::string(what) + ": no upper bracket for the shape equation");
    }
  }
  double s = std::clamp(s0, lo, hi);
  for (int it = 0; it < fit_max_iterations; ++it) {
    auto [g, dg] = eval(s);
    if (g == 0.0) return s;
    if (g < 0.0) lo = s; else hi = s;
    double next = s - g / dg;
    if (!(dg > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) < fit_tolerance || hi - lo < fit_tolerance) return next;
    s = next;
  }
  return s;
}

inline Distribution fit_weibull(std::span<const double> data) {
  const LogMoments lm = log_moments(data);
  if (!(lm.var_log > 0.0)) throw FitDegenerateError("weibull fit needs at least two distinct values");
  const std::size_t n = data.size();
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = std::log(data[i]) - lm.max_log;
  const double zbar = lm.mean_log - lm.max_log;

  // Profile equation in s = ln(shape):
  //   g = sum(w z)/sum(w) - 1/shape - mean(z),  w = exp(shape z)
  auto eval = [&](double s) {
    const double b = std::exp(s);
    double sw = 0.0, swz = 0.0, swzz = 0.0;
    for (double zi : z) {
      const double w = std::exp(b * zi);
      sw += w;
      swz += w * zi;
      swzz += w * zi * zi;
    }
    const double mz = swz / sw;
    const double g = mz - 1.0 / b - zbar;
    const double dg_db = (swzz / sw - mz * mz) + 1.0 / (b * b);
    return std::pair{g, b * dg_db};
  };
  const double s0 = std::log(std::numbers::pi / std::sqrt(6.0 * lm.var_log));
  const double shape = std::exp(solve_monotone(eval, s0, "weibull fit"));
  double sw = 0.0;
  for (double zi : z) sw += std::exp(shape * zi);
  const double scale = std::exp(lm.max_log + std::log(sw / static_cast<double>(n)) / shape);
  return Distribution::weibull(scale, shape);
}

inline Distribution fit_gamma(std::span<const double> data) {
  const std::size_t n = data.size();
  double mean = 0.0;
  for (double v : data) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const LogMoments lm = log_moments(data);
  const double target = std::log(mean) - lm.mean_log;
  if (!(var > 0.0) || !(target > 0.0)) throw FitDegenerateError("gamma fit needs at least two distinct values");

  // ln k - digamma(k) = target is decreasing in k; negate to get an increasing equation in s = ln k.
  auto eval = [&](double s) {
    const double k = std::exp(s);
    const double g = -(std::log(k) - boost::math::digamma(k) - target);
    const double dg = -(1.0 - k * boost::math::trigamma(k));
    return std::pair{g, dg};
  };
  const double shape = std::exp(solve_monotone(eval, std::log(mean * mean / var), "gamma fit"));
  return Distribution::gamma(shape, mean / shape);
}

}  // namespace detail

// Complete-data maximum likelihood fit of a univariate family.
inline Distribution fit_univariate(Family family, std::span<const double> data) {
  if (data.empty()) throw FitDegenerateError(std::string(family_name(family)) + " fit on empty data");
  for (double v : data) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DomainError(std::string(family_name(family)) + " fit requires finite positive data, got " +
                        std::to_string(v));
    }
  }
  switch (family) {
    case Family::exponential: {
      double s = 0.0;
      for (double v : data) s += v;
      return Distribution::exponential(static_cast<double>(data.size()) / s);
    }
    case Family::lognormal: {
      const auto lm = detail::log_moments(data);
      if (!(lm.var_log > 0.0)) throw FitDegenerateError("lognormal fit needs at least two distinct values");
      return Distribution::lognormal(lm.mean_log, std::sqrt(lm.var_log));
    }
    case Family::weibull: return detail::fit_weibull(data);
    case Family::gamma: return detail::fit_gamma(data);
  }
  throw FitDegenerateError("unknown family");
}

}  // namespace fieldsem
