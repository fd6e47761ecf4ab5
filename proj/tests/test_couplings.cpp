#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stein/couplings.hpp"
#include "stein/estimation.hpp"

using namespace stein;

namespace {

void expect_exact_zero_residual(const Coupling& cp, double tol = 1e-12) {
  auto en = cp.enumerate();
  ASSERT_TRUE(en) << cp.info().name;
  EXPECT_NEAR(en->total(), 1.0, 1e-12);
  auto r = stein_residual_exact(*en, default_family());
  EXPECT_LT(r.r0_lower, tol) << cp.info().name;
  // f = 1 probe is -E W
  EXPECT_NEAR(r.values[0].value, 0.0, tol) << cp.info().name;
  auto m = moment_probe_exact(*en);
  EXPECT_NEAR(m.var_w.value, 1.0, 1e-10) << cp.info().name;
  EXPECT_NEAR(m.gd_minus_var.value, 0.0, 1e-10) << cp.info().name;
}

IndependentSumSpec sum_spec(std::size_t n, SummandLaw law = SummandLaw::rademacher()) {
  IndependentSumSpec sp;
  sp.n = n;
  sp.law = law;
  return sp;
}

}  // namespace

TEST(IndependentSums, AllVariantsExact) {
  auto skew = SummandLaw::discrete_law({0.0, 1.0, 3.0}, {0.5, 0.3, 0.2});
  for (std::size_t n : {1u, 2u, 4u}) {
    expect_exact_zero_residual(*indep_sum_deletion(sum_spec(n, skew)));
    expect_exact_zero_residual(*indep_sum_replacement(sum_spec(n, skew)));
    expect_exact_zero_residual(*indep_sum_duplication(sum_spec(n, skew)));
    expect_exact_zero_residual(*replacement_pair_linear(sum_spec(n)));
  }
}

TEST(Pairs, AntitheticAndIndependentCopy) {
  expect_exact_zero_residual(*antithetic_pair(SummandLaw::rademacher()));
  expect_exact_zero_residual(*independent_copy_pair(SummandLaw::discrete_law({-2.0, 1.0}, {1.0 / 3.0, 2.0 / 3.0})));
}

TEST(TwoRuns, SteinVariantsExact) {
  for (double p : {0.2, 0.5, 0.8}) {
    expect_exact_zero_residual(*two_runs_coupling(6, p));
    expect_exact_zero_residual(*two_runs_coupling(6, p, TwoRunsG::eq27d));
  }
}

TEST(TwoRuns, ClassicResidualIsRemainderProjection) {
  const std::size_t n = 8;
  auto cp = two_runs_coupling(n, 0.4, TwoRunsG::classic);
  auto en = *cp->enumerate();
  const double lambda = 2.0 / double(n);
  auto fam = default_family();
  auto r = stein_residual_exact(en, fam);
  auto flat = en.flatten();
  double remainder = exchangeable_remainder_exact(en, lambda);
  EXPECT_GT(remainder, 1e-3);
  EXPECT_GT(r.r0_lower, 1e-6);
  for (std::size_t k = 0; k < fam.size(); ++k) {
    if (fam[k].probe) continue;
    double proj = 0.0;
    for (const auto& x : flat) proj += x.prob * fam[k].f(x.s.w) * (x.s.d() + lambda * x.s.w);
    EXPECT_NEAR(r.values[k].value, -proj / lambda, 1e-12) << fam[k].name;
    EXPECT_LE(std::fabs(r.values[k].value), fam[k].sup * remainder + 1e-12);
  }
  // the sampled remainder agrees
  auto xs = draw_samples(*cp, McOptions{200000, 3, 10000, 0});
  auto mc = exchangeable_remainder_mc(xs, lambda);
  EXPECT_NEAR(mc.value, remainder, mc.ci + 0.02 * remainder);
}

TEST(TwoRuns, DegenerateAtZero) {
  auto cp = two_runs_coupling(5, 0.0);
  EXPECT_TRUE(cp->info().degenerate);
}

TEST(CurieWeiss, ExactStatisticHasZeroResidual) {
  for (double beta : {0.0, 0.5, 1.5}) {
    CurieWeissSpec sp;
    sp.n = 8;
    sp.beta = beta;
    sp.h = beta > 1 ? 0.2 : 0.0;
    auto cp = curie_weiss_coupling(sp);
    auto r = stein_residual_exact(*cp->enumerate(), default_family());
    EXPECT_LT(r.r0_lower, 1e-12) << beta;
  }
}

TEST(CurieWeiss, IndependentSpinsAtBetaZero) {
  CurieWeissSpec sp;
  sp.n = 6;
  sp.beta = 0.0;
  sp.w = CurieWeissW::approximate;
  auto en = *curie_weiss_coupling(sp)->enumerate();
  // W is the standardised magnetisation: P(W = 6/sqrt6) = 2^-6
  double top = 0.0;
  for (const auto& x : en.flatten())
    if (std::fabs(x.s.w - std::sqrt(6.0)) < 1e-12) top += x.prob;
  EXPECT_NEAR(top, 1.0 / 64.0, 1e-14);
  EXPECT_LT(stein_residual_exact(en, default_family()).r0_lower, 1e-12);
}

TEST(CurieWeiss, ApproximateStatisticWithinBound) {
  for (std::size_t n : {6u, 10u, 14u}) {
    for (double beta : {0.3, 0.8}) {
      CurieWeissSpec sp;
      sp.n = n;
      sp.beta = beta;
      sp.w = CurieWeissW::approximate;
      auto cp = curie_weiss_coupling(sp);
      ASSERT_TRUE(cp->info().r0_bound);
      auto r = stein_residual_exact(*cp->enumerate(), default_family());
      EXPECT_LE(r.r0_lower, *cp->info().r0_bound + 1e-12) << n << " " << beta;
      EXPECT_GT(r.r0_lower, 0.0);
    }
  }
}

TEST(CurieWeiss, GlauberMatchesExactLaw) {
  CurieWeissSpec sp;
  sp.n = 10;
  sp.beta = 0.5;
  sp.burnin = 30;
  auto [dk, warn] = curie_weiss_chain_diagnostic(sp, McOptions{20000, 5, 2000, 0});
  EXPECT_LT(dk, 0.02);
  EXPECT_FALSE(warn);
}

TEST(Poisson, PsiMatchesNeumannSeries) {
  // birth-death chain, reversible and aperiodic
  std::vector<std::vector<double>> P = {{0.5, 0.5, 0.0}, {0.25, 0.5, 0.25}, {0.0, 0.5, 0.5}};
  std::vector<double> phi = {1.0, 0.0, -1.0};
  auto sol = solve_chain({P, phi});
  EXPECT_NEAR(sol.pi[0], 0.25, 1e-12);
  EXPECT_NEAR(sol.pi[1], 0.5, 1e-12);
  EXPECT_TRUE(sol.reversible);
  EXPECT_TRUE(sol.aperiodic);
  std::vector<double> v = phi, psi(3, 0.0);
  for (int k = 0; k < 2000; ++k) {
    for (int i = 0; i < 3; ++i) psi[i] += v[i];
    std::vector<double> nv(3, 0.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) nv[i] += P[i][j] * v[j];
    v = nv;
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(sol.psi[i], psi[i], 1e-10);
  auto pc = poisson_equation_coupling({P, phi});
  expect_exact_zero_residual(*pc.coupling);
  ASSERT_TRUE(pc.coupling->info().as_bounds);
}

TEST(Poisson, RejectsBadChains) {
  std::vector<std::vector<double>> P = {{0.5, 0.5}, {0.5, 0.5}};
  EXPECT_THROW(solve_chain({P, {1.0, 0.0}}), Error);  // not centred
  std::vector<std::vector<double>> red = {{1.0, 0.0}, {0.0, 1.0}};
  EXPECT_THROW(solve_chain({red, {1.0, -1.0}}), Error);
  std::vector<std::vector<double>> cyc = {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
  EXPECT_THROW(poisson_equation_coupling({cyc, {1.0, 0.0, -1.0}}), Error);  // not reversible
}

TEST(Poisson, CoupledChainsMc) {
  std::vector<std::vector<double>> P = {{0.5, 0.5, 0.0}, {0.25, 0.5, 0.25}, {0.0, 0.5, 0.5}};
  auto pc = poisson_equation_coupling({P, {1.0, 0.0, -1.0}}, PoissonVariant::coupled_chains);
  auto r = stein_residual_mc(*pc.coupling, default_family(), McOptions{100000, 2, 10000, 0});
  for (std::size_t k = 0; k < r.values.size(); ++k) {
    if (std::isfinite(r.values[k].ci) && k != 1) {
      EXPECT_LE(std::fabs(r.values[k].value), r.values[k].ci + 1e-3) << r.names[k];
    }
  }
}

TEST(LocalDependence, MovingSums) {
  for (std::size_t m : {0u, 1u, 2u}) {
    auto ms = moving_sum(6, m);
    for (bool b : {false, true}) {
      auto cp = local_dependence_coupling(ms, 6, moving_sum_neighborhoods(6, m, b, false), 1.0, ms.leaves());
      expect_exact_zero_residual(*cp);
      EXPECT_EQ(cp->info().r3_zero, b);
    }
  }
  EXPECT_THROW(local_dependence_coupling(moving_sum(4, 1), 4, moving_sum_neighborhoods(3, 1, false, false)), Error);
}

TEST(LocalDependence, DecomposableMovingSumAndVonMises) {
  auto ms = moving_sum(5, 1);
  auto cp = decomposable_coupling(ms, 5, moving_sum_neighborhoods(5, 1, false, true), 1.0, ms.leaves());
  expect_exact_zero_residual(*cp);
  // E S = 1 on average even though r2 is not zero
  auto flat = cp->enumerate()->flatten();
  double es = 0.0;
  for (const auto& x : flat) es += x.prob * x.s.s;
  EXPECT_NEAR(es, 1.0, 1e-12);

  const std::size_t n = 2;
  auto vm = decomposable_coupling(VonMisesPairs{n}, n * n, von_mises_neighborhoods(n), std::sqrt(von_mises_variance(n)),
                                  std::pow(2.0, 2.0 * n));
  expect_exact_zero_residual(*vm);
}

TEST(QuadraticForm, DiagonalIsDegenerate) {
  std::vector<std::vector<double>> a = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  auto cp = quadratic_form_coupling(a, SummandLaw::rademacher());
  EXPECT_TRUE(cp->info().degenerate);
  for (const auto& x : cp->enumerate()->flatten()) EXPECT_NEAR(x.s.w, 0.0, 1e-15);
}

TEST(QuadraticForm, RandomSymmetricExact) {
  std::mt19937_64 g(7);
  std::normal_distribution<double> nd;
  const std::size_t n = 5;
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) a[i][j] = a[j][i] = nd(g);
  expect_exact_zero_residual(*quadratic_form_coupling(a, SummandLaw::rademacher()));
  auto three = SummandLaw::discrete_law({-std::sqrt(1.5), 0.0, std::sqrt(1.5)}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  expect_exact_zero_residual(*quadratic_form_coupling(a, three), 1e-11);
  a[0][1] += 0.1;
  EXPECT_THROW(quadratic_form_coupling(a, SummandLaw::rademacher()), Error);
}

TEST(SizeBias, BernoulliAndBinomial) {
  expect_exact_zero_residual(*size_bias_bernoulli(0.3));
  expect_exact_zero_residual(*size_bias_binomial(6, 0.25));
  auto cp = size_bias_binomial(40, 0.1);
  EXPECT_FALSE(cp->enumerate());
  auto r = stein_residual_mc(*cp, default_family(), McOptions{200000, 11, 10000, 0});
  for (std::size_t k = 2; k < r.values.size(); ++k) EXPECT_LE(std::fabs(r.values[k].value), r.values[k].ci) << r.names[k];
  auto bad = size_bias_bernoulli(0.3, 0.5);
  EXPECT_FALSE(bad->info().exact_stein);
  EXPECT_GT(stein_residual_exact(*bad->enumerate(), default_family()).r0_lower, 1e-3);
}

TEST(Interpolation, ExactForKnownMoments) {
  auto sum = [](const std::vector<double>& x) { return x[0] + x[1] + x[2]; };
  auto pp = [](const std::vector<double>& x) { return x[0] * x[1] + x[1] * x[2]; };
  for (auto ord : {InterpolationOrder::fixed, InterpolationOrder::random}) {
    expect_exact_zero_residual(*interpolation_coupling(sum, 3, SummandLaw::rademacher(), ord, 0.0, std::sqrt(3.0)));
    expect_exact_zero_residual(*interpolation_coupling(pp, 3, SummandLaw::rademacher(), ord, 0.0, std::sqrt(2.0)));
  }
}

TEST(Interpolation, PilotCentringFlagged) {
  auto mx = [](const std::vector<double>& x) { return std::max({x[0], x[1], x[2]}); };
  auto cp = interpolation_coupling(mx, 3, SummandLaw::rademacher(), InterpolationOrder::fixed, {}, {}, 200000);
  EXPECT_FALSE(cp->info().exact_stein);
  ASSERT_TRUE(cp->info().r0_bound);
  // E max = 1 - 2 * 2^-3
  auto r = stein_residual_exact(*cp->enumerate(), default_family());
  EXPECT_LT(r.r0_lower, *cp->info().r0_bound * 3.0 + 5e-3);
}

TEST(Telescoping, IndependentCopyRecoversW) {
  // W, W' independent Rademacher, V = W: G = -W and the identity is exact
  auto prog = [](auto& src) {
    double w = src.bernoulli(0.5) ? 1.0 : -1.0;
    src.mark();
    double wp = src.bernoulli(0.5) ? 1.0 : -1.0;
    return TelescopeOutcome{w, wp, w, w, wp};
  };
  auto t = abstract_telescoping_g(prog, 4);
  EXPECT_TRUE(t.contracting);
  EXPECT_NEAR(t.tail, 0.0, 1e-15);
  EXPECT_NEAR(t.term_norms[0], 1.0, 1e-15);
  auto en = *t.coupling->enumerate();
  for (const auto& x : en.flatten()) EXPECT_NEAR(x.s.g, -x.s.w, 1e-15);
  auto r = stein_residual_exact(en, default_family());
  EXPECT_LT(r.r0_lower, 1e-12);
}

TEST(Telescoping, DependentPairContracts) {
  // W' correlated with W: projections shrink geometrically
  auto prog = [](auto& src) {
    double w = src.bernoulli(0.5) ? 1.0 : -1.0;
    src.mark();
    double wp = src.bernoulli(0.75) ? w : -w;
    return TelescopeOutcome{w, wp, w, w, wp};
  };
  auto t = abstract_telescoping_g(prog, 8);
  EXPECT_TRUE(t.contracting);
  // E(W|W') = W'/2, then E(.|W) = W/4
  EXPECT_NEAR(t.term_norms[1], 0.25, 1e-14);
  EXPECT_NEAR(t.term_norms[2], 0.0625, 1e-14);
}
