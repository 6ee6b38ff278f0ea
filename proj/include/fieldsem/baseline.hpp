#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "fieldsem/config.hpp"
#include "fieldsem/dataset.hpp"
#include "fieldsem/errors.hpp"
#include "fieldsem/joint_model.hpp"

namespace fieldsem {

inline constexpr double quadrature_tolerance_1d = 1e-10;
inline constexpr double quadrature_tolerance_2d = 1e-8;

namespace detail {

template <class F>
double integrate(F&& f, double a, double b, double tol, unsigned max_depth = 15) {
  if (!(b > a)) return 0.0;
  double error = 0.0, l1 = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, max_depth, tol, &error, &l1);
  if (!std::isfinite(value) || error > 100.0 * tol * std::max(1.0, l1)) {
    throw IntegrationError("adaptive quadrature did not converge (achieved error " + format_number(error) + ")", error);
  }
  return value;
}

// Double-exponential rule for integrands with a power singularity at an endpoint.
template <class F>
double integrate_singular(F&& f, double a, double b, double tol) {
  if (!(b > a)) return 0.0;
  thread_local boost::math::quadrature::tanh_sinh<double> rule;
  double error = 0.0, l1 = 0.0;
  const double value = rule.integrate(f, a, b, tol, &error, &l1);
  if (!std::isfinite(value) || error > 100.0 * tol * std::max(1.0, l1)) {
    throw IntegrationError("adaptive quadrature did not converge (achieved error " + format_number(error) + ")", error);
  }
  return value;
}

}  // namespace detail

// Pr(X + T < censor, T < min(tau, censor)) evaluated as a double integral of
// the joint density (inner over x, outer over t). Works for any pair model.
inline double claim_probability_2d(const JointModel& m, double censor, double tau) {
  if (m.spec().dimension() != 2) throw SchemaError("claim probability needs a two-variable model");
  const double upper = std::min(tau, censor);
  if (!(upper > 0.0)) return 0.0;
  if (std::isinf(censor)) return m.t().cdf(upper);
  auto outer = [&](double t) {
    if (!(t > 0.0)) return 0.0;
    auto inner = [&](double x) { return x > 0.0 ? std::exp(m.log_pdf(x, t)) : 0.0; };
    return detail::integrate(inner, 0.0, censor - t, quadrature_tolerance_2d, 12);
  };
  return std::clamp(detail::integrate(outer, 0.0, upper, quadrature_tolerance_2d, 12), 0.0, 1.0);
}

// Probability that a unit with end-of-study window `censor` is claimed:
// Pr(X + T < censor, T < tau). For independent X, T this is the 1-D integral
// of F_X(censor - t) f_T(t) dt. Below the median of T the density may be
// singular at 0, so that piece uses tanh-sinh; the rest uses Gauss-Kronrod.
// Dependent models use the 2-D rule.
inline double claim_probability(const JointModel& m, double censor, double tau) {
  if (m.spec().structure != Structure::independent_xt) return claim_probability_2d(m, censor, tau);
  const double upper = std::min(tau, censor);
  if (!(upper > 0.0)) return 0.0;
  const Distribution& fx = m.x();
  const Distribution& ft = m.t();
  if (std::isinf(censor)) return ft.cdf(upper);
  const double split = std::min(upper, ft.quantile(0.5));
  auto integrand = [&](double t) { return t > 0.0 ? fx.cdf(censor - t) * ft.pdf(t) : 0.0; };
  const double p = detail::integrate_singular(integrand, 0.0, split, quadrature_tolerance_1d) +
                   detail::integrate(integrand, split, upper, quadrature_tolerance_1d);
  return std::clamp(p, 0.0, 1.0);
}

// Incomplete-data log-likelihood: claims contribute their joint log density,
// unreturned units ln(1 - claim probability), direct-sale units their lifetime
// density or survival. Returns -inf when a survival factor is numerically 0.
inline double direct_loglik(const JointModel& m, const FieldDataset& d) {
  if (d.scheme == Scheme::triple_xyt) throw SchemaError("direct likelihood is not available for scheme triple_xyt");
  std::map<double, double> log_unclaimed;
  double ll = 0.0;
  for (const auto& rec : d.records) {
    if (const auto* c = std::get_if<Claim>(&rec)) {
      ll += m.log_pdf(c->x, c->t);
    } else if (const auto* u = std::get_if<Unreturned>(&rec)) {
      auto it = log_unclaimed.find(u->censor);
      if (it == log_unclaimed.end()) {
        const double survive = 1.0 - claim_probability(m, u->censor, d.tau);
        it = log_unclaimed.emplace(u->censor, survive > 0.0 ? std::log(survive) : -infinity).first;
      }
      ll += it->second;
    } else if (const auto* dc = std::get_if<DirectCensored>(&rec)) {
      const double s = m.t().survival(dc->censor);
      ll += s > 0.0 ? std::log(s) : -infinity;
    } else if (const auto* f = std::get_if<DirectFailure>(&rec)) {
      ll += m.t().log_pdf(f->t);
    }
  }
  return ll;
}

struct AicResult {
  double loglik;
  double aic;
};

inline double aic(double loglik, std::size_t num_params) { return 2.0 * static_cast<double>(num_params) - 2.0 * loglik; }

inline AicResult model_aic(const JointModel& m, const FieldDataset& d) {
  const double ll = direct_loglik(m, d);
  return {ll, aic(ll, m.spec().num_params())};
}

struct DirectFitReport {
  std::optional<std::vector<double>> estimate;
  bool converged = false;
  double loglik = -infinity;
  std::size_t iterations = 0;
  double gradient_norm = infinity;  // max-norm in the unconstrained coordinates
  double condition_number = infinity;
  bool hessian_positive_definite = false;
  std::string message;
};

// Unconstrained coordinates: log of every positive parameter; for the
// bivariate lognormal, (mu1, mu2, log L11, L21, log L22) with Sigma = L L'.
inline std::vector<double> to_unconstrained(const ModelSpec& spec, const std::vector<double>& theta) {
  std::vector<double> phi = theta;
  if (spec.structure == Structure::bivariate_lognormal) {
    const double l11 = std::sqrt(theta[2]);
    const double l21 = theta[4] / l11;
    const double l22 = std::sqrt(theta[3] - l21 * l21);
    phi = {theta[0], theta[1], std::log(l11), l21, std::log(l22)};
    return phi;
  }
  std::size_t k = 0;
  auto block = [&](Family f) {
    for (std::size_t j = 0; j < num_params(f); ++j, ++k) {
      if (!(f == Family::lognormal && j == 0)) phi[k] = std::log(theta[k]);
    }
  };
  block(spec.x);
  block(spec.t);
  if (spec.structure == Structure::independent_xyt) block(spec.y);
  return phi;
}

inline std::vector<double> from_unconstrained(const ModelSpec& spec, const std::vector<double>& phi) {
  std::vector<double> theta = phi;
  if (spec.structure == Structure::bivariate_lognormal) {
    const double l11 = std::exp(phi[2]), l21 = phi[3], l22 = std::exp(phi[4]);
    return {phi[0], phi[1], l11 * l11, l21 * l21 + l22 * l22, l11 * l21};
  }
  std::size_t k = 0;
  auto block = [&](Family f) {
    for (std::size_t j = 0; j < num_params(f); ++j, ++k) {
      if (!(f == Family::lognormal && j == 0)) theta[k] = std::exp(phi[k]);
    }
  };
  block(spec.x);
  block(spec.t);
  if (spec.structure == Structure::independent_xyt) block(spec.y);
  return theta;
}

struct DirectFitOptions {
  std::size_t max_iterations = 200;
  double gradient_tolerance = 1e-3;
  double step = 1e-5;
};

// Quasi-Newton (BFGS) ascent on the incomplete-data log-likelihood over
// unconstrained coordinates. Non-convergence is reported, never retried.
inline DirectFitReport direct_fit(const FieldDataset& d, const ModelSpec& spec, const std::vector<double>& init,
                                  const DirectFitOptions& opt = {}) {
  if (d.scheme == Scheme::triple_xyt) throw SchemaError("direct maximization is not available for scheme triple_xyt");
  JointModel(spec, init);  // validates init
  const auto n = static_cast<Eigen::Index>(init.size());
  DirectFitReport report;

  auto objective = [&](const Eigen::VectorXd& phi) {
    try {
      const std::vector<double> theta = from_unconstrained(spec, std::vector<double>(phi.data(), phi.data() + n));
      const double ll = direct_loglik(JointModel(spec, theta), d);
      return std::isfinite(ll) ? -ll : infinity;
    } catch (const ParameterDomainError&) {
      return infinity;
    } catch (const IntegrationError&) {
      return infinity;
    }
  };
  auto gradient = [&](const Eigen::VectorXd& phi) {
    Eigen::VectorXd g(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double h = opt.step * std::max(1.0, std::abs(phi(j)));
      Eigen::VectorXd a = phi, b = phi;
      a(j) += h;
      b(j) -= h;
      g(j) = (objective(a) - objective(b)) / (2.0 * h);
    }
    return g;
  };

  const std::vector<double> phi0 = to_unconstrained(spec, init);
  Eigen::VectorXd phi = Eigen::Map<const Eigen::VectorXd>(phi0.data(), n);
  double f = objective(phi);
  if (!std::isfinite(f)) {
    report.message = "log-likelihood is not finite at the starting value";
    return report;
  }
  Eigen::VectorXd g = gradient(phi);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  bool first = true;
  for (report.iterations = 0; report.iterations < opt.max_iterations; ++report.iterations) {
    if (!g.allFinite()) {
      report.message = "gradient is not finite";
      break;
    }
    if (g.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) {
      report.converged = true;
      report.message = "gradient below tolerance";
      break;
    }
    Eigen::VectorXd dir = -h_inv * g;
    if (g.dot(dir) >= 0.0) {
      h_inv.setIdentity();
      dir = -g;
    }
    double alpha = 1.0;
    double f_new = infinity;
    Eigen::VectorXd phi_new;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls, alpha *= 0.5) {
      phi_new = phi + alpha * dir;
      f_new = objective(phi_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * alpha * g.dot(dir)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      report.message = "line search failed";
      break;
    }
    const Eigen::VectorXd g_new = gradient(phi_new);
    const Eigen::VectorXd s = phi_new - phi;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      if (first) {
        h_inv *= sy / y.squaredNorm();
        first = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    phi = phi_new;
    f = f_new;
    g = g_new;
  }
  if (report.iterations >= opt.max_iterations && !report.converged) report.message = "iteration limit reached";

  report.gradient_norm = g.lpNorm<Eigen::Infinity>();
  report.loglik = -f;
  if (std::isfinite(f)) {
    report.estimate = from_unconstrained(spec, std::vector<double>(phi.data(), phi.data() + n));
    // Curvature diagnostics in the unconstrained coordinates.
    Eigen::MatrixXd hess(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double hj = 1e-4 * std::max(1.0, std::abs(phi(j)));
      Eigen::VectorXd a = phi, b = phi;
      a(j) += hj;
      b(j) -= hj;
      hess.col(j) = (gradient(a) - gradient(b)) / (2.0 * hj);
    }
    hess = 0.5 * (hess + hess.transpose()).eval();
    if (hess.allFinite()) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
      const auto& ev = eig.eigenvalues();
      report.hessian_positive_definite = ev.minCoeff() > 0.0;
      report.condition_number = ev.cwiseAbs().maxCoeff() / std::max(ev.cwiseAbs().minCoeff(), 1e-300);
    }
  } else {
    report.converged = false;
  }
  if (report.converged && !report.estimate) report.converged = false;
  return report;
}

inline void write_direct_report(std::ostream& out, const ModelSpec& spec, const DirectFitReport& r) {
  out << "model=" << spec.describe() << '\n';
  out << "converged=" << (r.converged ? "true" : "false") << '\n';
  out << "message=" << r.message << '\n';
  out << "iterations=" << r.iterations << '\n';
  out << "loglik=" << format_number(r.loglik) << '\n';
  out << "aic=" << format_number(aic(r.loglik, spec.num_params())) << '\n';
  out << "gradient_norm=" << format_number(r.gradient_norm) << '\n';
  out << "hessian_condition=" << format_number(r.condition_number) << '\n';
  out << "hessian_positive_definite=" << (r.hessian_positive_definite ? "true" : "false") << '\n';
  if (r.estimate) {
    const auto names = spec.param_names();
    for (std::size_t j = 0; j < names.size(); ++j) out << names[j] << '=' << format_number((*r.estimate)[j]) << '\n';
  }
}

}  // namespace fieldsem
