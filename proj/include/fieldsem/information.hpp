#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "fieldsem/config.hpp"
#include "fieldsem/dataset.hpp"
#include "fieldsem/errors.hpp"
#include "fieldsem/joint_model.hpp"
#include "fieldsem/parallel.hpp"
#include "fieldsem/sem.hpp"

namespace fieldsem {

inline constexpr double fd_score_step = 1e-5;
// Second differences lose about eps |f| / h^2 to roundoff, so the Hessian uses
// a wider step and Richardson extrapolation over steps h and 2h.
inline constexpr double fd_hessian_step = 5e-4;
inline constexpr int fd_max_halvings = 8;

// Central-difference stencils with steps h_j = max(c, c |theta_j|), halved
// (at most 8 times) until every stencil point is a valid model.
class DifferenceStencil {
 public:
  DifferenceStencil(const ModelSpec& spec, std::vector<double> theta) : spec_(spec), theta_(std::move(theta)) {
    score_steps_ = initial_steps(fd_score_step);
    hessian_steps_ = initial_steps(fd_hessian_step);
    shrink_to_domain(score_steps_, false);
    shrink_to_domain(hessian_steps_, true);
  }

  const std::vector<double>& steps() const { return score_steps_; }
  const std::vector<double>& hessian_steps() const { return hessian_steps_; }

  // Score and negative Hessian of f at theta.
  template <class F>
  void evaluate(F&& f, Eigen::VectorXd& score, Eigen::MatrixXd& neg_hessian) const {
    score = gradient(f);
    const double f0 = f(theta_);
    std::vector<double> wide = hessian_steps_;
    for (double& h : wide) h *= 2.0;
    const Eigen::MatrixXd fine = second_differences(f, f0, hessian_steps_);
    const Eigen::MatrixXd coarse = second_differences(f, f0, wide);
    neg_hessian = -(4.0 * fine - coarse) / 3.0;
  }

  template <class F>
  Eigen::VectorXd gradient(F&& f) const {
    const auto& h = score_steps_;
    Eigen::VectorXd g(static_cast<Eigen::Index>(theta_.size()));
    for (std::size_t j = 0; j < theta_.size(); ++j) g(j) = (f(point(h, j, +1)) - f(point(h, j, -1))) / (2.0 * h[j]);
    return g;
  }

  // Column i holds the gradient of term i of a vector-valued f.
  template <class F>
  Eigen::MatrixXd term_gradients(F&& f) const {
    const auto& h = score_steps_;
    Eigen::MatrixXd g;
    for (std::size_t j = 0; j < theta_.size(); ++j) {
      const Eigen::VectorXd d = (f(point(h, j, +1)) - f(point(h, j, -1))) / (2.0 * h[j]);
      if (j == 0) g.resize(static_cast<Eigen::Index>(theta_.size()), d.size());
      g.row(static_cast<Eigen::Index>(j)) = d.transpose();
    }
    return g;
  }

 private:
  template <class F>
  Eigen::MatrixXd second_differences(F&& f, double f0, const std::vector<double>& h) const {
    const std::size_t p = theta_.size();
    Eigen::MatrixXd d(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j) {
      d(j, j) = (f(point(h, j, +1)) - 2.0 * f0 + f(point(h, j, -1))) / (h[j] * h[j]);
      for (std::size_t k = 0; k < j; ++k) {
        d(j, k) = d(k, j) = (f(point(h, j, +1, k, +1)) - f(point(h, j, +1, k, -1)) - f(point(h, j, -1, k, +1)) +
                             f(point(h, j, -1, k, -1))) /
                            (4.0 * h[j] * h[k]);
      }
    }
    return d;
  }

  std::vector<double> initial_steps(double c) const {
    std::vector<double> h(theta_.size());
    for (std::size_t j = 0; j < h.size(); ++j) h[j] = std::max(c, c * std::abs(theta_[j]));
    return h;
  }

  // With `cross`, validates the doubled steps used by the extrapolation.
  void shrink_to_domain(std::vector<double>& steps, bool cross) const {
    const std::size_t p = theta_.size();
    const double reach = cross ? 2.0 : 1.0;
    std::vector<double> h = steps;
    for (double& v : h) v *= reach;
    std::vector<int> halvings(p, 0);
    auto shrink = [&](std::size_t j) {
      if (++halvings[j] > fd_max_halvings) {
        throw DomainError("finite-difference step for " + spec_.param_names()[j] +
                          " shrank beyond 8 halvings at the parameter-domain boundary");
      }
      h[j] *= 0.5;
    };
    for (std::size_t j = 0; j < p; ++j) {
      while (!valid(point(h, j, +1)) || !valid(point(h, j, -1))) shrink(j);
    }
    if (cross) {
      for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = j + 1; k < p; ++k) {
          while (!valid(point(h, j, +1, k, +1)) || !valid(point(h, j, +1, k, -1)) ||
                 !valid(point(h, j, -1, k, +1)) || !valid(point(h, j, -1, k, -1))) {
            shrink(j);
            shrink(k);
          }
        }
      }
    }
    for (std::size_t j = 0; j < p; ++j) steps[j] = h[j] / reach;
  }

  std::vector<double> point(const std::vector<double>& h, std::size_t j, int sj, std::size_t k = 0, int sk = 0) const {
    std::vector<double> q = theta_;
    q[j] += sj * h[j];
    if (sk != 0) q[k] += sk * h[k];
    return q;
  }

  bool valid(const std::vector<double>& q) const {
    try {
      JointModel(spec_, q);
      return true;
    } catch (const ParameterDomainError&) {
      return false;
    }
  }

  ModelSpec spec_;
  std::vector<double> theta_;
  std::vector<double> score_steps_;
  std::vector<double> hessian_steps_;
};

// Per-entry log-likelihood terms of a completed dataset, in pseudo_q order.
inline Eigen::VectorXd pseudo_q_terms(const JointModel& m, const CompletedData& data) {
  Eigen::VectorXd q(static_cast<Eigen::Index>(data.x.size() + data.lifetime_only.size() + data.aux_x.size() +
                                              data.aux_y.size()));
  Eigen::Index k = 0;
  const bool triple = m.spec().structure == Structure::independent_xyt;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    q(k++) = triple ? m.log_pdf(data.x[i], data.y[i], data.t[i]) : m.log_pdf(data.x[i], data.t[i]);
  }
  for (double v : data.lifetime_only) q(k++) = m.t().log_pdf(v);
  for (double v : data.aux_x) q(k++) = m.x().log_pdf(v);
  for (double v : data.aux_y) q(k++) = m.y().log_pdf(v);
  return q;
}

inline std::function<double(const std::vector<double>&)> pseudo_q_at(const ModelSpec& spec, const CompletedData& data) {
  return [&spec, &data](const std::vector<double>& theta) { return pseudo_q(JointModel(spec, theta), data); };
}

// Gradient of the complete-data log-likelihood.
inline Eigen::VectorXd complete_score(const JointModel& m, const CompletedData& data) {
  const DifferenceStencil stencil(m.spec(), m.theta_vector());
  return stencil.gradient(pseudo_q_at(m.spec(), data));
}

// Negative Hessian of the complete-data log-likelihood (symmetric by construction).
inline Eigen::MatrixXd complete_neg_hessian(const JointModel& m, const CompletedData& data) {
  const DifferenceStencil stencil(m.spec(), m.theta_vector());
  Eigen::VectorXd s;
  Eigen::MatrixXd b;
  stencil.evaluate(pseudo_q_at(m.spec(), data), s, b);
  return b;
}

struct InfoMatrix {
  Eigen::MatrixXd matrix;
  std::size_t imputations = 0;
  bool positive_definite = false;
};

inline bool is_positive_definite(const Eigen::MatrixXd& a) {
  if (a.rows() == 0 || !a.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  return llt.info() == Eigen::Success;
}

inline FieldDataset missing_part(const FieldDataset& d) {
  FieldDataset out;
  out.tau = d.tau;
  out.scheme = d.scheme;
  out.aux = d.aux;
  for (const auto& rec : d.records) {
    if (!std::holds_alternative<Claim>(rec) && !std::holds_alternative<DirectFailure>(rec)) out.records.push_back(rec);
  }
  return out;
}

inline CompletedData observed_part(const FieldDataset& d) {
  CompletedData out;
  for (const auto& rec : d.records) {
    if (const auto* c = std::get_if<Claim>(&rec)) {
      out.x.push_back(c->x);
      out.t.push_back(c->t);
    } else if (const auto* f = std::get_if<DirectFailure>(&rec)) {
      out.lifetime_only.push_back(f->t);
    }
  }
  return out;
}

// Observed information by the missing information principle, approximated
// with M imputed completions D(i) drawn at theta:
//   I = mean B(D(i)) - Var S(D(i))
// Records are imputed independently, so Var S is the sum of per-record score
// covariances; estimating it that way drops the zero-mean cross-record terms.
inline InfoMatrix louis_information(const JointModel& at, const FieldDataset& d, std::size_t imputations,
                                    std::uint64_t seed, unsigned threads = 1,
                                    std::size_t max_attempts = 1'000'000) {
  if (imputations < 1) throw ConfigError("info_imputations must be at least 1");
  check_compatible(d, at.spec());
  const ModelSpec& spec = at.spec();
  const auto p = static_cast<Eigen::Index>(spec.num_params());
  const DifferenceStencil stencil(spec, at.theta_vector());

  const CompletedData observed = observed_part(d);
  Eigen::VectorXd score_obs;
  Eigen::MatrixXd hess_obs;
  stencil.evaluate(pseudo_q_at(spec, observed), score_obs, hess_obs);

  const FieldDataset missing = missing_part(d);
  const std::uint64_t stream = mix_seed(seed, 0x4c6f756973ULL);
  const auto terms_at = [&spec](const CompletedData& data) {
    return [&spec, &data](const std::vector<double>& theta) { return pseudo_q_terms(JointModel(spec, theta), data); };
  };

  struct Partial {
    Eigen::MatrixXd b, gg, g;
  };
  constexpr std::size_t chunk = 64;
  const std::size_t chunks = (imputations + chunk - 1) / chunk;
  std::vector<Partial> partials(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    Partial part{Eigen::MatrixXd::Zero(p, p), Eigen::MatrixXd::Zero(p, p), Eigen::MatrixXd()};
    Eigen::VectorXd s;
    Eigen::MatrixXd b;
    const std::size_t end = std::min(imputations, (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < end; ++i) {
      std::size_t rejections = 0;
      const CompletedData imputed = s_step(missing, at, stream, i, max_attempts, rejections);
      stencil.evaluate(pseudo_q_at(spec, imputed), s, b);
      part.b += b;
      const Eigen::MatrixXd g = stencil.term_gradients(terms_at(imputed));
      if (part.g.size() == 0) part.g = Eigen::MatrixXd::Zero(p, g.cols());
      part.g += g;
      part.gg.noalias() += g * g.transpose();
    }
    partials[c] = std::move(part);
  });

  // Pairwise reduction over chunks keeps the result independent of worker count.
  for (std::size_t width = 1; width < chunks; width *= 2) {
    for (std::size_t i = 0; i + width < chunks; i += 2 * width) {
      partials[i].b += partials[i + width].b;
      partials[i].g += partials[i + width].g;
      partials[i].gg += partials[i + width].gg;
    }
  }
  const double m = static_cast<double>(imputations);
  const Eigen::MatrixXd mean_g = partials[0].g / m;
  Eigen::MatrixXd info = hess_obs + partials[0].b / m - partials[0].gg / m + mean_g * mean_g.transpose();
  info = 0.5 * (info + info.transpose()).eval();
  return {info, imputations, is_positive_definite(info)};
}

struct CiRow {
  std::string param;
  double estimate;
  double se;
  double lower;
  double upper;
  double level;
};

using CiTable = std::vector<CiRow>;

inline double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

// Wald intervals estimate +/- z * sqrt(diag(I^-1)). The information matrix is
// inverted through its Cholesky factor; failure is reported, never regularized.
inline CiTable wald_intervals(const std::vector<std::string>& names, const std::vector<double>& estimate,
                              const InfoMatrix& info, double level) {
  Eigen::LLT<Eigen::MatrixXd> llt(info.matrix);
  if (info.matrix.rows() != static_cast<Eigen::Index>(estimate.size()) || !info.matrix.allFinite() ||
      llt.info() != Eigen::Success) {
    throw InformationError(
        "information matrix is not positive definite; increase info_imputations or collect more data");
  }
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(info.matrix.rows(), info.matrix.cols()));
  const double z = normal_critical_value(level);
  CiTable table;
  for (std::size_t j = 0; j < estimate.size(); ++j) {
    const double se = std::sqrt(cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)));
    table.push_back({names[j], estimate[j], se, estimate[j] - z * se, estimate[j] + z * se, level});
  }
  return table;
}

inline void write_ci(std::ostream& out, const CiTable& table) {
  out << "param,estimate,se,lower,upper,level\n";
  for (const auto& r : table) {
    out << r.param << ',' << format_number(r.estimate) << ',' << format_number(r.se) << ',' << format_number(r.lower)
        << ',' << format_number(r.upper) << ',' << format_number(r.level) << '\n';
  }
}

}  // namespace fieldsem
