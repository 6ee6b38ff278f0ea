#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "fieldsem/sem.hpp"
#include "fieldsem/simulation.hpp"
#include "oracles.hpp"

using namespace fieldsem;

namespace {

const ModelSpec exp_exp = ModelSpec::independent(Family::exponential, Family::exponential);
const ModelSpec exp_weib = ModelSpec::independent(Family::exponential, Family::weibull);

bool in_region(const Pair& p, double censor, double tau) { return p.x + p.t < censor && p.t < tau; }

FieldDataset furnace_like(std::uint64_t seed) {
  // 400 units, single batch, life warranty; the exact counts come from the generator
  return generate_batch(JointModel(exp_weib, {0.3, 8.0, 1.5}), 400, infinity, 6.0, seed);
}

}  // namespace

TEST(ImputePair, VacuousWarrantyAcceptsFirstDraw) {
  const JointModel m(exp_exp, {0.2, 0.2});
  Rng a(1), b(1);
  std::size_t rej = 0;
  const Pair p = impute_missing_pair(m, 6.0, 0.0, a, 10, rej);
  const Pair q = m.sample_pair(b);
  EXPECT_EQ(rej, 0u);
  EXPECT_EQ(p.x, q.x);
  EXPECT_EQ(p.t, q.t);
}

TEST(ImputePair, NeverInsideObservabilityRegion) {
  const JointModel m(exp_exp, {0.2, 0.2});
  std::size_t rej = 0;
  for (std::uint64_t i = 0; i < 100'000; ++i) {
    Rng rng = Rng::substream(2, i);
    ASSERT_FALSE(in_region(impute_missing_pair(m, 6.0, 5.0, rng, 1'000'000, rej), 6.0, 5.0));
  }
  EXPECT_GT(rej, 0u);
}

TEST(ImputePair, HistogramMatchesConditionalLaw) {
  // 20x20 cells at marginal 5% quantiles; expected mass by quadrature of f(x)f(t) outside the region.
  const double rate = 0.2, c = 6.0, tau = 5.0;
  const JointModel m(exp_exp, {rate, rate});
  const int k = 20;
  std::vector<double> edges(k + 1);
  for (int i = 0; i < k; ++i) edges[i] = -std::log(1.0 - i / static_cast<double>(k)) / rate;
  edges[k] = 400.0;
  auto f = [&](double v) { return rate * std::exp(-rate * v); };
  auto accepted_from = [&](double x) { return std::min(tau, std::max(0.0, c - x)); };
  auto cell_mass = [&](double x0, double x1, double t0, double t1) {
    return oracle::simpson(
        [&](double x) {
          const double lo = std::max(t0, accepted_from(x));
          if (lo >= t1) return 0.0;
          return f(x) * oracle::simpson(f, lo, t1, 1e-13);
        },
        x0, x1, 1e-12);
  };
  std::vector<double> mass(k * k);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) total += mass[i * k + j] = cell_mass(edges[i], edges[i + 1], edges[j], edges[j + 1]);
  }
  // the region probability by a separate 1-D integral
  const double region = oracle::simpson([&](double x) { return f(x) * (1.0 - std::exp(-rate * accepted_from(x))); }, 0.0,
                                        c, 1e-13);
  EXPECT_NEAR(total, 1.0 - region, 1e-7);

  const int n = 100'000;
  std::vector<double> counts(k * k, 0.0);
  std::size_t rej = 0;
  for (int r = 0; r < n; ++r) {
    Rng rng = Rng::substream(3, r);
    const Pair p = impute_missing_pair(m, c, tau, rng, 1'000'000, rej);
    const int i = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), p.x) - edges.begin()) - 1;
    const int j = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), p.t) - edges.begin()) - 1;
    counts[std::min(i, k - 1) * k + std::min(j, k - 1)] += 1.0;
  }
  std::vector<double> obs, exp;
  for (int cell = 0; cell < k * k; ++cell) {
    const double e = n * mass[cell] / total;
    if (e < 5.0) {
      EXPECT_LE(counts[cell], 2.0 * e + 3.0);
      continue;
    }
    obs.push_back(counts[cell]);
    exp.push_back(e);
  }
  EXPECT_GT(obs.size(), 250u);
  EXPECT_GT(oracle::chi_square_pvalue(obs, exp), 0.01);
}

TEST(ImputePair, StallNamesCensorTime) {
  const JointModel m(exp_exp, {50.0, 50.0});
  Rng rng(4);
  std::size_t rej = 0;
  try {
    impute_missing_pair(m, 6.0, infinity, rng, 1000, rej);
    FAIL();
  } catch (const ImputationStallError& e) {
    EXPECT_EQ(e.censor(), 6.0);
    EXPECT_NE(std::string(e.what()).find("censor_c=6"), std::string::npos);
    EXPECT_EQ(e.code(), ExitCode::imputation_stall);
  }
}

TEST(ImputeCensored, ZeroCensorIsUnconditional) {
  const auto d = Distribution::weibull(5.0, 2.0);
  Rng a(5), b(5);
  EXPECT_EQ(impute_censored_lifetime(d, 0.0, a), d.quantile(b.uniform()));
}

TEST(ImputeCensored, ExponentialMemoryless) {
  const auto d = Distribution::exponential(0.3);
  std::vector<double> excess;
  for (std::uint64_t i = 0; i < 100'000; ++i) {
    Rng rng = Rng::substream(6, i);
    excess.push_back(impute_censored_lifetime(d, 4.0, rng) - 4.0);
  }
  EXPECT_GT(oracle::ks_pvalue(excess, [](double v) { return 1.0 - std::exp(-0.3 * v); }), 0.01);
}

TEST(ImputeCensored, TruncationForAllFamilies) {
  for (const auto& d : {Distribution::exponential(0.7), Distribution::weibull(19.59, 0.95), Distribution::weibull(5.0, 2.0),
                        Distribution::lognormal(1.66, 0.84), Distribution::gamma(2.264, 1.714)}) {
    const double tc = d.quantile(0.9);
    std::vector<double> v;
    for (std::uint64_t i = 0; i < 100'000; ++i) {
      Rng rng = Rng::substream(7, i);
      v.push_back(impute_censored_lifetime(d, tc, rng));
    }
    EXPECT_GT(*std::min_element(v.begin(), v.end()), tc);
    const double s = d.survival(tc);
    EXPECT_GT(oracle::ks_pvalue(v, [&](double x) { return (d.cdf(x) - d.cdf(tc)) / s; }), 0.01)
        << family_name(d.family());
  }
}

TEST(ImputeCensored, FarTailStaysAboveCensor) {
  const auto d = Distribution::weibull(5.0, 2.0);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    Rng rng = Rng::substream(8, i);
    EXPECT_GT(impute_censored_lifetime(d, 25.0, rng), 25.0);
  }
}

TEST(ImputeInterval, WholeLineIsUnconditional) {
  const auto d = Distribution::gamma(2.0, 3.0);
  Rng a(9), b(9);
  std::size_t rej = 0;
  EXPECT_EQ(impute_interval(d, 0.0, infinity, a, 10, rej), d.sample(b));
  EXPECT_EQ(rej, 0u);
}

TEST(ImputeInterval, StaysInsideInterval) {
  const auto d = Distribution::gamma(2.779, 0.080);
  std::size_t rej = 0;
  for (std::uint64_t i = 0; i < 100'000; ++i) {
    Rng rng = Rng::substream(10, i);
    const double v = impute_interval(d, 2.0, 3.0, rng, 1'000'000, rej);
    ASSERT_GE(v, 2.0);
    ASSERT_LT(v, 3.0);
  }
}

TEST(ImputeInterval, TruncatedLawMatches) {
  struct Case {
    Distribution d;
    double a, b;
  };
  // both the rejection path (large mass) and the inverse-cdf path (small mass)
  const std::vector<Case> cases{{Distribution::weibull(5.0, 2.0), 2.0, 6.0},
                                {Distribution::gamma(2.264, 1.714), 0.0, 1.0},
                                {Distribution::gamma(2.779, 0.080), 0.5, 0.7},
                                {Distribution::lognormal(1.66, 0.84), 30.0, 40.0}};
  for (const auto& c : cases) {
    std::vector<double> v;
    std::size_t rej = 0;
    for (std::uint64_t i = 0; i < 100'000; ++i) {
      Rng rng = Rng::substream(11, i);
      v.push_back(impute_interval(c.d, c.a, c.b, rng, 1'000'000, rej));
    }
    const double fa = c.d.cdf(c.a), fb = c.d.cdf(c.b);
    EXPECT_GT(oracle::ks_pvalue(v, [&](double x) { return (c.d.cdf(x) - fa) / (fb - fa); }), 0.01)
        << family_name(c.d.family()) << " [" << c.a << "," << c.b << ")";
  }
}

TEST(ImputeTriple, AtLeastZeroIsUnconditional) {
  const JointModel m(ModelSpec::triple(Family::gamma, Family::weibull, Family::gamma), {2.264, 1.714, 720.7, 1.153, 2.779, 0.08});
  Rng a(12), b(12);
  std::size_t rej = 0;
  const Triple v = impute_triple(m, SumConstraint::at_least(0.0), a, 10, rej);
  const Triple w = m.sample_triple(b);
  EXPECT_EQ(rej, 0u);
  EXPECT_EQ(v.x, w.x);
  EXPECT_EQ(v.y, w.y);
  EXPECT_EQ(v.t, w.t);
}

TEST(ImputeTriple, SumWithinInterval) {
  const JointModel m(ModelSpec::triple(Family::gamma, Family::weibull, Family::gamma), {2.264, 1.714, 20.0, 1.153, 2.779, 0.5});
  std::size_t rej = 0;
  for (std::uint64_t i = 0; i < 20'000; ++i) {
    Rng rng = Rng::substream(13, i);
    const Triple v = impute_triple(m, SumConstraint::within(5.0, 6.0), rng, 1'000'000, rej);
    ASSERT_GE(v.sum(), 5.0);
    ASSERT_LT(v.sum(), 6.0);
  }
}

TEST(ImputeTriple, LifetimeMarginalMatchesBruteForceFilter) {
  const double c = 30.0;
  const JointModel m(ModelSpec::triple(Family::gamma, Family::weibull, Family::gamma), {2.264, 1.714, 20.0, 1.153, 2.779, 0.5});
  std::vector<double> imputed;
  std::size_t rej = 0;
  for (std::uint64_t i = 0; i < 20'000; ++i) {
    Rng rng = Rng::substream(14, i);
    imputed.push_back(impute_triple(m, SumConstraint::at_least(c), rng, 1'000'000, rej).t);
  }
  // draw-and-filter with the standard library's samplers
  std::mt19937_64 g(15);
  std::gamma_distribution<double> gx(2.264, 1.714), gy(2.779, 0.5);
  std::weibull_distribution<double> wt(1.153, 20.0);
  std::vector<double> filtered;
  for (int i = 0; i < 10'000'000; ++i) {
    const double x = gx(g), t = wt(g), y = gy(g);
    if (x + y + t >= c) filtered.push_back(t);
  }
  ASSERT_GT(filtered.size(), 100'000u);
  EXPECT_GT(oracle::ks_two_sample_pvalue(imputed, filtered), 0.01);
}

TEST(ImputeTriple, BoundedSumMatchesBruteForceFilter) {
  const JointModel m(ModelSpec::triple(Family::gamma, Family::weibull, Family::gamma), {2.264, 1.714, 20.0, 1.153, 2.779, 0.5});
  std::vector<double> ix, it;
  std::size_t rej = 0;
  for (std::uint64_t i = 0; i < 20'000; ++i) {
    Rng rng = Rng::substream(16, i);
    const Triple v = impute_triple(m, SumConstraint::within(5.0, 6.0), rng, 1'000'000, rej);
    ix.push_back(v.x);
    it.push_back(v.t);
  }
  std::mt19937_64 g(17);
  std::gamma_distribution<double> gx(2.264, 1.714), gy(2.779, 0.5);
  std::weibull_distribution<double> wt(1.153, 20.0);
  std::vector<double> fx, ft;
  for (int i = 0; i < 10'000'000; ++i) {
    const double x = gx(g), t = wt(g), y = gy(g);
    if (x + y + t >= 5.0 && x + y + t < 6.0) {
      fx.push_back(x);
      ft.push_back(t);
    }
  }
  ASSERT_GT(ft.size(), 100'000u);
  EXPECT_GT(oracle::ks_two_sample_pvalue(ix, fx), 0.01);
  EXPECT_GT(oracle::ks_two_sample_pvalue(it, ft), 0.01);
}

TEST(SStep, NoMissingRecordsPassThrough) {
  FieldDataset d;
  d.tau = 5.0;
  d.records = {Claim{1.0, 2.0, 6.0}, Claim{0.5, 4.0, 6.0}};
  std::size_t rej = 0;
  const auto c = s_step(d, JointModel(exp_exp, {1.0, 1.0}), 1, 1, 10, rej);
  EXPECT_EQ(c.x, (std::vector<double>{1.0, 0.5}));
  EXPECT_EQ(c.t, (std::vector<double>{2.0, 4.0}));
  EXPECT_EQ(rej, 0u);
}

TEST(SStep, CompletesEveryUnit) {
  const auto d = furnace_like(16);
  const JointModel m(exp_weib, {0.3, 8.0, 1.5});
  for (std::uint64_t cycle = 1; cycle <= 20; ++cycle) {
    std::size_t rej = 0;
    const auto c = s_step(d, m, 17, cycle, 1'000'000, rej);
    ASSERT_EQ(c.x.size(), 400u);
    ASSERT_EQ(c.t.size(), 400u);
    for (std::size_t i = 0; i < d.records.size(); ++i) {
      ASSERT_TRUE(std::isfinite(c.x[i]) && c.x[i] > 0.0);
      ASSERT_TRUE(std::isfinite(c.t[i]) && c.t[i] > 0.0);
      if (const auto* u = std::get_if<Unreturned>(&d.records[i])) {
        ASSERT_FALSE(in_region({c.x[i], c.t[i]}, u->censor, d.tau));
      }
    }
  }
}

TEST(SStep, StaggeredCensorTimesAndDirectSales) {
  FieldDataset d;
  d.tau = 5.0;
  d.scheme = Scheme::pair_xt_direct;
  d.records = {Claim{1.0, 2.0, 6.0}, Unreturned{3.0}, Unreturned{9.0}, DirectCensored{2.0}, DirectFailure{1.5},
               DirectCensored{0.0}};
  const JointModel m(exp_weib, {0.7, 5.0, 2.0});
  std::size_t rej = 0;
  for (std::uint64_t cycle = 1; cycle <= 200; ++cycle) {
    const auto c = s_step(d, m, 18, cycle, 1'000'000, rej);
    ASSERT_EQ(c.x.size(), 3u);
    ASSERT_EQ(c.lifetime_only.size(), 3u);
    ASSERT_FALSE(in_region({c.x[1], c.t[1]}, 3.0, 5.0));
    ASSERT_FALSE(in_region({c.x[2], c.t[2]}, 9.0, 5.0));
    ASSERT_GT(c.lifetime_only[0], 2.0);
    ASSERT_EQ(c.lifetime_only[1], 1.5);
  }
}

TEST(SStep, ImputationsIndependentOfOtherRecords) {
  auto d = furnace_like(19);
  const JointModel m(exp_weib, {0.3, 8.0, 1.5});
  std::size_t rej = 0;
  const auto full = s_step(d, m, 20, 3, 1'000'000, rej);
  d.records.resize(200);
  const auto half = s_step(d, m, 20, 3, 1'000'000, rej);
  for (std::size_t i = 0; i < 200; ++i) {
    EXPECT_EQ(full.x[i], half.x[i]);
    EXPECT_EQ(full.t[i], half.t[i]);
  }
}

TEST(MStep, ExponentialRatesAreReciprocalMeans) {
  CompletedData c;
  c.x = {1.0, 2.0, 3.0, 6.0};
  c.t = {0.5, 0.5, 1.0, 2.0};
  const auto th = m_step(c, exp_exp).theta_vector();
  EXPECT_DOUBLE_EQ(th[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(th[1], 1.0);
}

TEST(MStep, NeverDecreasesPseudoQ) {
  const auto d = furnace_like(21);
  JointModel m(exp_weib, {0.15, 16.0, 1.5});
  for (std::uint64_t cycle = 1; cycle <= 30; ++cycle) {
    std::size_t rej = 0;
    const auto c = s_step(d, m, 22, cycle, 1'000'000, rej);
    const JointModel next = m_step(c, exp_weib);
    EXPECT_GE(pseudo_q(next, c), pseudo_q(m, c) - 1e-9);
    m = next;
  }
}

TEST(MStep, BivariateClosedFormMatchesGridOptimum) {
  const JointModel truth(ModelSpec::bivariate_lognormal(), {1.0, 1.0, 1.0, 1.0, 0.3});
  Rng rng(23);
  CompletedData c;
  for (int i = 0; i < 400; ++i) {
    const Pair p = truth.sample_pair(rng);
    c.x.push_back(p.x);
    c.t.push_back(p.t);
  }
  const auto fit = m_step(c, ModelSpec::bivariate_lognormal());
  auto q = [&](std::vector<double> th) {
    try {
      return pseudo_q(JointModel(ModelSpec::bivariate_lognormal(), th), c);
    } catch (const ParameterDomainError&) {
      return -infinity;
    }
  };
  // coordinate-pair grid refinement from the truth
  std::vector<double> th = truth.theta_vector();
  const std::pair<int, int> pairs[] = {{0, 1}, {2, 3}, {4, 2}, {4, 3}, {0, 2}, {1, 3}};
  for (int sweep = 0; sweep < 8; ++sweep) {
    for (auto [a, b] : pairs) {
      const double wa = 0.5 / (sweep + 1), wb = 0.5 / (sweep + 1);
      const auto [va, vb] = oracle::grid_maximize(
          [&](double u, double v) {
            auto t2 = th;
            t2[a] = u;
            t2[b] = v;
            return q(t2);
          },
          th[a] - wa, th[a] + wa, th[b] - wb, th[b] + wb, 20, 11);
      th[a] = va;
      th[b] = vb;
    }
  }
  const double q_fit = pseudo_q(fit, c);
  EXPECT_GE(q_fit, q(th) - 1e-9);
  EXPECT_LT(q_fit - q(th), 1e-4);
}

TEST(PseudoQ, SingleRecord) {
  CompletedData c;
  c.x = {1.0};
  c.t = {1.0};
  EXPECT_NEAR(pseudo_q(JointModel(exp_exp, {1.0, 1.0}), c), -2.0, 1e-15);
}

TEST(PseudoQ, AdditiveAndMatchesHandCodedSum) {
  const JointModel m(exp_weib, {0.7, 5.0, 2.0});
  Rng rng(24);
  CompletedData a, b, both;
  std::uniform_real_distribution<double> u(0.01, 20.0);
  for (int i = 0; i < 50; ++i) {
    const double x = u(rng), t = u(rng);
    (i < 20 ? a : b).x.push_back(x);
    (i < 20 ? a : b).t.push_back(t);
    both.x.push_back(x);
    both.t.push_back(t);
  }
  EXPECT_NEAR(pseudo_q(m, both), pseudo_q(m, a) + pseudo_q(m, b), 1e-10);
  double hand = 0.0;
  for (std::size_t i = 0; i < both.x.size(); ++i) {
    const double x = both.x[i], t = both.t[i];
    hand += std::log(0.7) - 0.7 * x;
    hand += std::log(2.0 / 5.0) + std::log(t / 5.0) - (t / 5.0) * (t / 5.0);
  }
  EXPECT_NEAR(pseudo_q(m, both), hand, 1e-12 * std::abs(hand));
}

TEST(RunSem, SingleCycleEqualsOneMStep) {
  const auto d = furnace_like(25);
  SemConfig cfg;
  cfg.burn_in = 0;
  cfg.iterations = 1;
  cfg.seed = 26;
  const auto est = run_sem(d, exp_weib, cfg);
  std::size_t rej = 0;
  const auto expected = m_step(s_step(d, JointModel(exp_weib, auto_init(d, exp_weib)), 26, 1, cfg.max_reject_attempts, rej),
                               exp_weib)
                            .theta_vector();
  EXPECT_EQ(est.estimate, expected);
  ASSERT_EQ(est.trace.theta.size(), 2u);
  EXPECT_EQ(est.trace.theta[1], expected);
  EXPECT_EQ(est.trace.rejections[1], rej);
}

TEST(RunSem, DeterministicGivenSeed) {
  const auto d = furnace_like(27);
  SemConfig cfg;
  cfg.burn_in = 20;
  cfg.iterations = 50;
  cfg.seed = 28;
  const auto a = run_sem(d, exp_weib, cfg);
  const auto b = run_sem(d, exp_weib, cfg);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.trace.theta, b.trace.theta);
  EXPECT_EQ(a.trace.rejections, b.trace.rejections);
  cfg.seed = 29;
  EXPECT_NE(run_sem(d, exp_weib, cfg).estimate, a.estimate);
}

TEST(RunSem, EstimateIsPostBurnInMean) {
  const auto d = furnace_like(30);
  SemConfig cfg;
  cfg.burn_in = 10;
  cfg.iterations = 40;
  cfg.seed = 31;
  const auto est = run_sem(d, exp_weib, cfg);
  ASSERT_EQ(est.trace.theta.size(), 51u);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t k = 11; k <= 50; ++k) s += est.trace.theta[k][j];
    EXPECT_NEAR(est.estimate[j], s / 40.0, 1e-12 * std::abs(est.estimate[j]));
  }
}

TEST(RunSem, AutoInitDoublesScales) {
  FieldDataset d;
  d.tau = 5.0;
  d.records = {Claim{1.0, 2.0, 6.0}, Claim{2.0, 1.0, 6.0}, Claim{3.0, 3.0, 7.0}, Unreturned{6.0}};
  const auto init = auto_init(d, exp_weib);
  EXPECT_DOUBLE_EQ(init[0], 0.5 * 0.5);
  const auto wt = fit_univariate(Family::weibull, std::vector<double>{2.0, 1.0, 3.0});
  EXPECT_DOUBLE_EQ(init[1], 2.0 * wt.param(0));
  EXPECT_DOUBLE_EQ(init[2], wt.param(1));
  const auto bv = auto_init(d, ModelSpec::bivariate_lognormal());
  EXPECT_NEAR(bv[0], (std::log(1.0) + std::log(2.0) + std::log(3.0)) / 3.0 + std::log(2.0), 1e-14);
}

TEST(RunSem, TraceSatisfiesParameterInvariants) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = generate_batch(JointModel(ModelSpec::bivariate_lognormal(), {1.0, 1.0, 1.0, 1.0, 0.3}), 200, 4.0, 6.0,
                                  100 + seed);
    SemConfig cfg;
    cfg.burn_in = 20;
    cfg.iterations = 80;
    cfg.seed = seed;
    const auto est = run_sem(d, ModelSpec::bivariate_lognormal(), cfg);
    for (const auto& th : est.trace.theta) {
      ASSERT_GT(th[2], 0.0);
      ASSERT_GT(th[3], 0.0);
      ASSERT_GT(th[2] * th[3] - th[4] * th[4], 0.0);
    }
  }
}

TEST(RunSem, StallReportsCycle) {
  FieldDataset d;
  d.tau = infinity;
  d.records = {Claim{0.01, 0.01, 6.0}, Claim{0.02, 0.01, 6.0}, Unreturned{6.0}};
  SemConfig cfg;
  cfg.seed = 1;
  cfg.max_reject_attempts = 100;
  cfg.init = std::vector<double>{100.0, 100.0};
  try {
    run_sem(d, exp_exp, cfg);
    FAIL();
  } catch (const ImputationStallError& e) {
    EXPECT_NE(std::string(e.what()).find("cycle 1:"), std::string::npos);
  }
}

TEST(RunSem, RejectsIncompatibleInputs) {
  const auto d = furnace_like(32);
  SemConfig cfg;
  EXPECT_THROW(run_sem(d, ModelSpec::triple(Family::gamma, Family::weibull, Family::gamma), cfg), SchemaError);
  cfg.iterations = 0;
  EXPECT_THROW(run_sem(d, exp_weib, cfg), ConfigError);
  FieldDataset empty;
  empty.records = {Unreturned{6.0}};
  EXPECT_THROW(run_sem(empty, exp_weib, SemConfig{}), ValidationError);
}

TEST(RunSem, ConsistentForLargeSamples) {
  // median relative error over 20 replications, N = 5000
  const std::vector<double> truth{0.7, 5.0, 2.0};
  const JointModel model(exp_weib, truth);
  std::vector<std::vector<double>> rel(3);
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto d = generate_batch(model, 5000, 5.0, 6.0, 1000 + r);
    SemConfig cfg;
    cfg.seed = 2000 + r;
    const auto est = run_sem(d, exp_weib, cfg).estimate;
    for (std::size_t j = 0; j < 3; ++j) rel[j].push_back(std::abs(est[j] - truth[j]) / truth[j]);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    std::nth_element(rel[j].begin(), rel[j].begin() + 10, rel[j].end());
    EXPECT_LT(rel[j][10], 0.05) << "param " << j;
  }
}

TEST(RunSem, TripleSchemeRecoversObservableParameters) {
  // synthetic telecom-like data: returns grouped by month, aux samples as unit intervals
  const JointModel truth(ModelSpec::triple(Family::gamma, Family::weibull, Family::gamma), {2.0, 1.5, 40.0, 1.5, 2.0, 0.5});
  Rng rng(33);
  FieldDataset d;
  d.tau = infinity;
  d.scheme = Scheme::triple_xyt;
  const double t0 = 24.0;
  for (int i = 0; i < 2000; ++i) {
    const Triple v = truth.sample_triple(rng);
    if (v.sum() < t0) {
      d.records.emplace_back(SumClaim{std::floor(v.sum()), std::floor(v.sum()) + 1.0});
    } else {
      d.records.emplace_back(SumUnreturned{t0});
    }
  }
  for (int i = 0; i < 100; ++i) {
    const double x = truth.x().sample(rng), y = truth.y().sample(rng);
    d.aux.push_back({AuxTarget::sales_lag, std::floor(x), std::floor(x) + 1.0});
    d.aux.push_back({AuxTarget::report_delay, std::floor(y), std::floor(y) + 1.0});
  }
  ASSERT_TRUE(validate_dataset(d).empty());
  SemConfig cfg;
  cfg.seed = 34;
  cfg.burn_in = 50;
  cfg.iterations = 200;
  const auto est = run_sem(d, truth.spec(), cfg);
  // X mean and Y mean are well identified by aux samples
  const auto m = est.model();
  EXPECT_NEAR(m.x().mean(), truth.x().mean(), 0.25 * truth.x().mean());
  EXPECT_NEAR(m.y().mean(), truth.y().mean(), 0.35 * truth.y().mean());
  EXPECT_NEAR(m.t().cdf(10.0), truth.t().cdf(10.0), 0.05);
}

TEST(EstimateFile, RoundTrip) {
  std::ostringstream out;
  write_estimate(out, exp_weib.param_names(), {0.7, 5.0 / 3.0, 2.0});
  std::istringstream in(out.str());
  EXPECT_EQ(read_estimate(in, exp_weib), (std::vector<double>{0.7, 5.0 / 3.0, 2.0}));
  std::istringstream wrong(out.str());
  EXPECT_THROW(read_estimate(wrong, exp_exp), ParseError);
}

TEST(TraceFile, Layout) {
  const auto d = furnace_like(35);
  SemConfig cfg;
  cfg.burn_in = 1;
  cfg.iterations = 2;
  const auto est = run_sem(d, exp_weib, cfg);
  std::ostringstream out;
  write_trace(out, est);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "cycle,x.rate,t.scale,t.shape,rejections");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4);
}
