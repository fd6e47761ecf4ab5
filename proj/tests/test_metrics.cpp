#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stein/metrics.hpp"

using namespace stein;

namespace {

const double r2 = std::sqrt(2.0), ir2 = 1.0 / std::sqrt(2.0);

std::vector<double> hoeffding_six() { return {r2, -r2, ir2, ir2, -ir2, -ir2}; }

// sup |F - Phi| for an atomic law, checked on both sides of each atom
double dk_oracle(const std::vector<double>& x, const std::vector<double>& p) {
  double best = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double below = 0.0, upto = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] < x[i]) below += p[j];
      if (x[j] <= x[i]) upto += p[j];
    }
    double ph = normal_cdf(x[i]);
    best = std::max({best, std::fabs(below - ph), std::fabs(upto - ph)});
  }
  return best;
}

}  // namespace

TEST(EmpiricalDk, SinglePoint) {
  auto d = empirical_dk({0.0});
  EXPECT_NEAR(d.value, 0.5, 1e-15);
  EXPECT_EQ(d.n, 1u);
  EXPECT_EQ(d.metric, Metric::kolmogorov);
}

TEST(EmpiricalDk, HoeffdingSixPoints) {
  auto v = hoeffding_six();
  double oracle = dk_oracle(v, std::vector<double>(6, 1.0 / 6.0));
  EXPECT_NEAR(empirical_dk(v).value, oracle, 1e-12);
  EXPECT_NEAR(oracle, 0.2601, 2e-4);
}

TEST(EmpiricalDk, NormalDrawsWithinDkw) {
  std::mt19937_64 g(12345);
  std::normal_distribution<double> nd;
  std::vector<double> x(100000);
  for (auto& v : x) v = nd(g);
  auto d = empirical_dk(x);
  EXPECT_LE(d.value, 0.01);
  EXPECT_NEAR(d.dkw_halfwidth, std::sqrt(std::log(200.0) / 2e5), 1e-15);
  EXPECT_NEAR(dkw_halfwidth(100000), d.dkw_halfwidth, 1e-15);
}

TEST(ExactDk, PointMassAndTwoPoint) {
  EXPECT_NEAR(exact_dk(DiscreteDistribution({0.0}, {1.0})), 0.5, 1e-15);
  EXPECT_NEAR(exact_dk(DiscreteDistribution({-1.0, 1.0}, {0.5, 0.5})), 0.5 - normal_cdf(-1.0), 1e-12);
  EXPECT_NEAR(exact_dk(DiscreteDistribution({-1.0, 1.0}, {0.5, 0.5})), 0.3413, 1e-4);
}

TEST(ExactDk, MergesRepeatedSupport) {
  DiscreteDistribution d(hoeffding_six(), std::vector<double>(6, 1.0 / 6.0));
  EXPECT_EQ(d.support().size(), 4u);
  EXPECT_NEAR(exact_dk(d), dk_oracle(hoeffding_six(), std::vector<double>(6, 1.0 / 6.0)), 1e-12);
}

TEST(ExactDw, PointMassClosedForm) {
  EXPECT_NEAR(empirical_dw({0.0, 0.0, 0.0}).value, std::sqrt(2.0 / M_PI), 1e-12);
  EXPECT_NEAR(exact_dw(DiscreteDistribution({0.0}, {1.0})), std::sqrt(2.0 / M_PI), 1e-12);
}

TEST(ExactDw, TwoPointAgainstQuadrature) {
  DiscreteDistribution d({-1.0, 1.0}, {0.5, 0.5});
  auto cdf = [](double x) { return x < -1.0 ? 0.0 : x < 1.0 ? 0.5 : 1.0; };
  EXPECT_NEAR(exact_dw(d), dw_to_normal_cdf(cdf), 1e-9);
}

TEST(ExactDw, NormalCdfIsZero) { EXPECT_NEAR(dw_to_normal_cdf([](double x) { return normal_cdf(x); }), 0.0, 1e-14); }

TEST(DkFromDw, Arithmetic) {
  EXPECT_EQ(dk_from_dw(0.0), 0.0);
  EXPECT_NEAR(dk_from_dw(0.04), 0.27, 1e-12);
  EXPECT_THROW(dk_from_dw(-0.1), Error);
}

TEST(DkFromDw, HoldsOnDiscreteLaws) {
  std::vector<DiscreteDistribution> laws = {
      DiscreteDistribution(hoeffding_six(), std::vector<double>(6, 1.0 / 6.0)),
      DiscreteDistribution({-1.0, 1.0}, {0.5, 0.5}),
      DiscreteDistribution({0.0}, {1.0}),
      DiscreteDistribution({-2.0, 0.5}, {0.2, 0.8}),
      DiscreteDistribution({-1.5, -0.5, 0.5, 1.5}, {0.1, 0.4, 0.4, 0.1}),
  };
  // standardized binomials
  for (int n : {1, 3, 10, 50}) {
    std::vector<double> x, p;
    double prob = 0.3, sd = std::sqrt(n * prob * (1 - prob));
    for (int k = 0; k <= n; ++k) {
      x.push_back((k - n * prob) / sd);
      p.push_back(std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)) *
                  std::pow(prob, k) * std::pow(1 - prob, n - k));
    }
    double s = 0.0;
    for (double q : p) s += q;
    for (double& q : p) q /= s;
    laws.emplace_back(x, p);
  }
  for (const auto& d : laws) EXPECT_LE(exact_dk(d), dk_from_dw(exact_dw(d)) + 1e-12);
}

TEST(Lemma8, Arithmetic) {
  EXPECT_THROW(lemma8_bound(0.0, 0.0, 0.0), Error);
  EXPECT_NEAR(lemma8_bound(0.0, std::sqrt(2.0 * M_PI), 0.0), 1.0, 1e-15);
  EXPECT_NEAR(lemma8_bound(-1.0, 1.0, 0.1), 2.0 / std::sqrt(2.0 * M_PI) + 0.2, 1e-15);
  EXPECT_NEAR(lemma8_bound(-1.0, 1.0, 0.1), 0.9979, 1e-4);
}

TEST(Lemma8, HoeffdingIntervalProbability) {
  auto v = hoeffding_six();
  double p = 0.0;
  for (double x : v)
    if (x >= -0.8 && x <= 0.8) p += 1.0 / 6.0;
  DiscreteDistribution d(v, std::vector<double>(6, 1.0 / 6.0));
  EXPECT_NEAR(p, 4.0 / 6.0, 1e-12);
  EXPECT_LE(p, lemma8_bound(-0.8, 0.8, exact_dk(d)));
}

TEST(Chernoff, Examples) {
  auto a = chernoff_check(100, 0.001, 1.0);
  EXPECT_TRUE(a.applicable);
  EXPECT_NEAR(a.exact_tail, 1.0 - std::pow(0.999, 100) - 100 * 0.001 * std::pow(0.999, 99), 1e-12);
  EXPECT_NEAR(a.exact_tail, 0.0046381, 1e-7);
  EXPECT_NEAR(a.bound, std::exp(-0.5), 1e-15);
  EXPECT_TRUE(a.holds);
  auto b = chernoff_check(10, 0.0, 1.0);
  EXPECT_EQ(b.exact_tail, 0.0);
  EXPECT_TRUE(b.holds);
  auto c = chernoff_check(1000, 0.01, 60.0);
  EXPECT_TRUE(c.applicable);
  EXPECT_LE(c.exact_tail, std::exp(-30.0));
}

TEST(Chernoff, ApplicabilityGrid) {
  for (long n : {1L, 5L, 20L, 100L, 1000L})
    for (double p : {0.0, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.2})
      for (double x = 0.0; x <= 80.0; x += 0.5) {
        auto c = chernoff_check(n, p, x);
        if (c.applicable) {
          EXPECT_LE(c.exact_tail, c.bound) << n << " " << p << " " << x;
        }
      }
}

TEST(Discrete, RejectsBadLaws) {
  EXPECT_THROW(DiscreteDistribution({0.0, 1.0}, {0.5, 0.4}), Error);
  EXPECT_THROW(DiscreteDistribution({0.0}, {-1.0}), Error);
  EXPECT_THROW(DiscreteDistribution({}, {}), Error);
}
