#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fieldsem/distributions.hpp"
#include "fieldsem/errors.hpp"
#include "fieldsem/rng.hpp"

namespace fieldsem {

// Joint law of sales lag X, lifetime T and (optionally) report delay Y.
enum class Structure { independent_xt, bivariate_lognormal, independent_xyt };

struct ModelSpec {
  Structure structure = Structure::independent_xt;
  Family x = Family::exponential;
  Family t = Family::exponential;
  Family y = Family::exponential;  // used by independent_xyt only

  static ModelSpec independent(Family x, Family t) { return {Structure::independent_xt, x, t, Family::exponential}; }
  static ModelSpec bivariate_lognormal() {
    return {Structure::bivariate_lognormal, Family::lognormal, Family::lognormal, Family::exponential};
  }
  static ModelSpec triple(Family x, Family t, Family y) { return {Structure::independent_xyt, x, t, y}; }

  std::size_t dimension() const { return structure == Structure::independent_xyt ? 3 : 2; }

  std::size_t num_params() const {
    switch (structure) {
      case Structure::independent_xt: return fieldsem::num_params(x) + fieldsem::num_params(t);
      case Structure::bivariate_lognormal: return 5;
      case Structure::independent_xyt:
        return fieldsem::num_params(x) + fieldsem::num_params(t) + fieldsem::num_params(y);
    }
    return 0;
  }

  // Parameter order: X block, T block, then Y block.
  std::vector<std::string> param_names() const {
    if (structure == Structure::bivariate_lognormal) return {"mu1", "mu2", "sigma11", "sigma22", "sigma12"};
    std::vector<std::string> names;
    auto add = [&](const char* prefix, Family f) {
      for (const auto& n : fieldsem::param_names(f)) names.push_back(std::string(prefix) + "." + n);
    };
    add("x", x);
    add("t", t);
    if (structure == Structure::independent_xyt) add("y", y);
    return names;
  }

  std::string describe() const {
    switch (structure) {
      case Structure::independent_xt:
        return "X~" + std::string(family_name(x)) + " T~" + std::string(family_name(t)) + " independent";
      case Structure::bivariate_lognormal: return "(ln X, ln T) bivariate normal";
      case Structure::independent_xyt:
        return "X~" + std::string(family_name(x)) + " T~" + std::string(family_name(t)) + " Y~" +
               std::string(family_name(y)) + " independent";
    }
    return {};
  }

  bool operator==(const ModelSpec&) const = default;
};

struct Pair {
  double x;
  double t;
};

struct Triple {
  double x;
  double y;
  double t;
  double sum() const { return x + y + t; }
};

// Completed (observed + imputed) data for one S-step. Units with a full
// vector occupy x/t (and y in the three-variable scheme); direct-sale units
// contribute lifetimes only; auxiliary samples contribute to one marginal.
struct CompletedData {
  std::vector<double> x;
  std::vector<double> t;
  std::vector<double> y;
  std::vector<double> lifetime_only;
  std::vector<double> aux_x;
  std::vector<double> aux_y;

  std::size_t units() const { return x.size() + lifetime_only.size(); }
};

class JointModel {
 public:
  JointModel(ModelSpec spec, std::vector<double> theta) : spec_(spec), theta_(std::move(theta)) {
    if (theta_.size() != spec_.num_params()) {
      throw ParameterDomainError("model " + spec_.describe() + " expects " + std::to_string(spec_.num_params()) +
                                 " parameters, got " + std::to_string(theta_.size()));
    }
    if (spec_.structure == Structure::bivariate_lognormal) {
      init_bivariate();
    } else {
      std::size_t k = 0;
      auto take = [&](Family f) {
        Distribution d(f, std::span<const double>(theta_).subspan(k, num_params(f)));
        k += num_params(f);
        return d;
      };
      x_ = take(spec_.x);
      t_ = take(spec_.t);
      if (spec_.structure == Structure::independent_xyt) y_ = take(spec_.y);
    }
  }

  const ModelSpec& spec() const noexcept { return spec_; }
  std::span<const double> theta() const noexcept { return theta_; }
  const std::vector<double>& theta_vector() const noexcept { return theta_; }

  // Marginal laws. For the bivariate lognormal these are the lognormal marginals.
  const Distribution& x() const { return *x_; }
  const Distribution& t() const { return *t_; }
  const Distribution& y() const {
    if (!y_) throw SchemaError("model " + spec_.describe() + " has no report-delay component");
    return *y_;
  }

  double log_pdf(double x, double t) const {
    if (!(x > 0.0) || !(t > 0.0)) throw DomainError("joint density needs positive coordinates");
    if (spec_.structure == Structure::bivariate_lognormal) {
      const double lx = std::log(x), lt = std::log(t);
      const double u = lx - theta_[0], v = lt - theta_[1];
      const double q = (theta_[3] * u * u - 2.0 * theta_[4] * u * v + theta_[2] * v * v) / det_;
      return bv_norm_ - 0.5 * q - lx - lt;
    }
    if (spec_.structure == Structure::independent_xyt) throw DomainError("three-variable model needs (x, y, t)");
    return x_->log_pdf(x) + t_->log_pdf(t);
  }

  double log_pdf(double x, double y, double t) const {
    if (spec_.structure != Structure::independent_xyt) throw DomainError("two-variable model needs (x, t)");
    if (!(x > 0.0) || !(y > 0.0) || !(t > 0.0)) throw DomainError("joint density needs positive coordinates");
    return x_->log_pdf(x) + y_->log_pdf(y) + t_->log_pdf(t);
  }

  Pair sample_pair(Rng& rng) const {
    if (spec_.structure == Structure::bivariate_lognormal) {
      std::normal_distribution<double> normal;
      const double z1 = normal(rng), z2 = normal(rng);
      return {std::exp(theta_[0] + chol11_ * z1), std::exp(theta_[1] + chol21_ * z1 + chol22_ * z2)};
    }
    const double x = x_->sample(rng);
    return {x, t_->sample(rng)};
  }

  Triple sample_triple(Rng& rng) const {
    if (spec_.structure != Structure::independent_xyt) throw DomainError("model has no report-delay component");
    const double x = x_->sample(rng);
    const double y = y_->sample(rng);
    return {x, y, t_->sample(rng)};
  }

 private:
  void init_bivariate() {
    const double s11 = theta_[2], s22 = theta_[3], s12 = theta_[4];
    for (double v : theta_) {
      if (!std::isfinite(v)) throw ParameterDomainError("bivariate lognormal parameters must be finite");
    }
    det_ = s11 * s22 - s12 * s12;
    if (!(s11 > 0.0) || !(s22 > 0.0) || !(det_ > 0.0)) {
      throw ParameterDomainError("bivariate lognormal covariance is not positive definite");
    }
    chol11_ = std::sqrt(s11);
    chol21_ = s12 / chol11_;
    chol22_ = std::sqrt(s22 - chol21_ * chol21_);
    bv_norm_ = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det_);
    x_ = Distribution::lognormal(theta_[0], std::sqrt(s11));
    t_ = Distribution::lognormal(theta_[1], std::sqrt(s22));
  }

  ModelSpec spec_;
  std::vector<double> theta_;
  std::optional<Distribution> x_, t_, y_;
  double det_ = 0.0, chol11_ = 0.0, chol21_ = 0.0, chol22_ = 0.0, bv_norm_ = 0.0;
};

inline std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Complete-data maximum likelihood for the joint model.
inline JointModel joint_fit(const ModelSpec& spec, const CompletedData& data) {
  std::vector<double> theta;
  auto append = [&](const Distribution& d) { theta.insert(theta.end(), d.params().begin(), d.params().end()); };
  switch (spec.structure) {
    case Structure::independent_xt:
      append(fit_univariate(spec.x, concat(data.x, data.aux_x)));
      append(fit_univariate(spec.t, concat(data.t, data.lifetime_only)));
      break;
    case Structure::independent_xyt:
      append(fit_univariate(spec.x, concat(data.x, data.aux_x)));
      append(fit_univariate(spec.t, concat(data.t, data.lifetime_only)));
      append(fit_univariate(spec.y, concat(data.y, data.aux_y)));
      break;
    case Structure::bivariate_lognormal: {
      if (!data.lifetime_only.empty() || !data.aux_x.empty() || !data.aux_y.empty()) {
        throw SchemaError("bivariate lognormal fit accepts complete (x, t) pairs only");
      }
      const std::size_t n = data.x.size();
      if (n < 2) throw FitDegenerateError("bivariate lognormal fit needs at least 2 points");
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!(data.x[i] > 0.0) || !(data.t[i] > 0.0)) throw DomainError("bivariate fit requires positive data");
        m1 += std::log(data.x[i]);
        m2 += std::log(data.t[i]);
      }
      m1 /= static_cast<double>(n);
      m2 /= static_cast<double>(n);
      double s11 = 0.0, s22 = 0.0, s12 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double u = std::log(data.x[i]) - m1, v = std::log(data.t[i]) - m2;
        s11 += u * u;
        s22 += v * v;
        s12 += u * v;
      }
      s11 /= static_cast<double>(n);
      s22 /= static_cast<double>(n);
      s12 /= static_cast<double>(n);
      const double det = s11 * s22 - s12 * s12;
      if (!(s11 > 0.0) || !(s22 > 0.0) || !(det > 1e-12 * s11 * s22)) {
        throw FitDegenerateError("bivariate lognormal fit: log-scale covariance is singular");
      }
      theta = {m1, m2, s11, s22, s12};
      break;
    }
  }
  return {spec, std::move(theta)};
}

}  // namespace fieldsem
