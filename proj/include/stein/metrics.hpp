#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "error.hpp"
#include "stats.hpp"

namespace stein {

// Finite-support law; support sorted and merged on construction.
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;
  DiscreteDistribution(std::vector<double> values, std::vector<double> probs) {
    require(values.size() == probs.size() && !values.empty(), "support and probabilities must match");
    std::vector<std::pair<double, double>> vp;
    double tot = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      require(probs[i] >= 0.0 && std::isfinite(values[i]), "negative probability or non-finite support point");
      tot += probs[i];
      vp.push_back({values[i], probs[i]});
    }
    require(std::fabs(tot - 1.0) <= 1e-12, "probabilities must sum to 1");
    std::sort(vp.begin(), vp.end());
    for (auto& [x, p] : vp) {
      if (!x_.empty() && x == x_.back()) p_.back() += p;
      else { x_.push_back(x); p_.push_back(p); }
    }
  }

  const std::vector<double>& support() const { return x_; }
  const std::vector<double>& probs() const { return p_; }

  double mean() const {
    KahanSum s;
    for (std::size_t i = 0; i < x_.size(); ++i) s.add(x_[i] * p_[i]);
    return s.value();
  }
  double variance() const {
    double m = mean();
    KahanSum s;
    for (std::size_t i = 0; i < x_.size(); ++i) s.add((x_[i] - m) * (x_[i] - m) * p_[i]);
    return s.value();
  }

 private:
  std::vector<double> x_, p_;
};

namespace detail {
// antiderivative of the normal cdf
inline double psi(double x) { return x * normal_cdf(x) + normal_pdf(x); }

// integral of |c - Phi(x)| over [a, b]; a may be -inf, b may be +inf when c is 0 or 1
inline double abs_gap_integral(double c, double a, double b) {
  if (!(b > a)) return 0.0;
  if (c <= 0.0) {
    if (std::isinf(a)) return psi(b);
    return psi(b) - psi(a);
  }
  if (c >= 1.0) {
    if (std::isinf(b)) return psi(-a);  // int_a^inf (1 - Phi) = Psi(-a)
    return psi(-a) - psi(-b);
  }
  double xs = normal_quantile(c);
  double m = std::clamp(xs, a, b);
  double left = (m > a) ? c * (m - a) - (psi(m) - psi(a)) : 0.0;
  double right = (b > m) ? (psi(b) - psi(m)) - c * (b - m) : 0.0;
  return left + right;
}

inline double dk_sorted_cdf(const std::vector<double>& x, const std::vector<double>& cum) {
  double sup = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double ph = normal_cdf(x[i]);
    sup = std::max({sup, std::fabs(prev - ph), std::fabs(cum[i] - ph)});
    prev = cum[i];
  }
  return sup;
}

inline double dw_sorted_cdf(const std::vector<double>& x, const std::vector<double>& cum) {
  const double inf = std::numeric_limits<double>::infinity();
  KahanSum s;
  s.add(abs_gap_integral(0.0, -inf, x.front()));
  for (std::size_t i = 0; i + 1 < x.size(); ++i) s.add(abs_gap_integral(cum[i], x[i], x[i + 1]));
  s.add(abs_gap_integral(1.0, x.back(), inf));
  return s.value();
}

inline void ecdf(std::vector<double> v, std::vector<double>& x, std::vector<double>& cum) {
  require(!v.empty(), "empty sample");
  for (double a : v)
    if (!std::isfinite(a)) numeric_error("non-finite sample value");
  std::sort(v.begin(), v.end());
  const double n = double(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!x.empty() && v[i] == x.back()) cum.back() = double(i + 1) / n;
    else { x.push_back(v[i]); cum.push_back(double(i + 1) / n); }
  }
}
}  // namespace detail

enum class Metric { kolmogorov, wasserstein };

struct DistanceEstimate {
  Metric metric = Metric::kolmogorov;
  double value = 0.0;
  std::size_t n = 0;
  double dkw_halfwidth = 0.0;  // kolmogorov only, delta = 0.01
};

// sup_x |F_n(x) - Phi(x)|
inline DistanceEstimate empirical_dk(const std::vector<double>& samples) {
  std::vector<double> x, cum;
  detail::ecdf(samples, x, cum);
  const double n = double(samples.size());
  return {Metric::kolmogorov, detail::dk_sorted_cdf(x, cum), samples.size(), std::sqrt(std::log(200.0) / (2.0 * n))};
}

inline double exact_dk(const DiscreteDistribution& d) {
  std::vector<double> cum;
  double c = 0.0;
  for (double p : d.probs()) cum.push_back(c += p);
  cum.back() = 1.0;
  return detail::dk_sorted_cdf(d.support(), cum);
}

// int |F_n(x) - Phi(x)| dx, closed form on each segment
inline DistanceEstimate empirical_dw(const std::vector<double>& samples) {
  std::vector<double> x, cum;
  detail::ecdf(samples, x, cum);
  return {Metric::wasserstein, detail::dw_sorted_cdf(x, cum), samples.size(), 0.0};
}

inline double exact_dw(const DiscreteDistribution& d) {
  std::vector<double> cum;
  double c = 0.0;
  for (double p : d.probs()) cum.push_back(c += p);
  cum.back() = 1.0;
  return detail::dw_sorted_cdf(d.support(), cum);
}

// Wasserstein distance to N(0,1) for an arbitrary cdf, by quadrature on [-10, 10].
inline double dw_to_normal_cdf(const std::function<double(double)>& cdf) {
  using boost::math::quadrature::gauss_kronrod;
  KahanSum s;
  for (int k = -40; k < 40; ++k) {
    double a = k * 0.25, b = a + 0.25;
    s.add(gauss_kronrod<double, 31>::integrate([&](double x) { return std::fabs(cdf(x) - normal_cdf(x)); }, a, b, 6,
                                               1e-13));
  }
  return s.value();
}

inline double dk_from_dw(double dw) {
  require(dw >= 0.0, "d_W must be non-negative");
  return 1.35 * std::sqrt(dw);
}

// P[a <= W <= b] <= (b - a)/sqrt(2 pi) + 2 d_K
inline double lemma8_bound(double a, double b, double dk) {
  require(a < b, "interval must satisfy a < b");
  require(dk >= 0.0, "d_K must be non-negative");
  return (b - a) / std::sqrt(2.0 * M_PI) + 2.0 * dk;
}

inline double dkw_halfwidth(std::size_t n, double delta = 0.01) {
  require(n > 0 && delta > 0.0 && delta < 1.0, "DKW needs n > 0 and delta in (0,1)");
  return std::sqrt(std::log(2.0 / delta) / (2.0 * double(n)));
}

struct ChernoffCheck {
  double exact_tail;  // P[Bi(n,p) > x]
  double bound;       // exp(-x/2)
  bool applicable;    // x > 5 n p
  bool holds;
};

inline ChernoffCheck chernoff_check(long n, double p, double x) {
  require(n >= 0 && p >= 0.0 && p <= 1.0, "binomial parameters out of range");
  ChernoffCheck c{};
  if (x < 0.0) c.exact_tail = 1.0;
  else if (x >= double(n)) c.exact_tail = 0.0;
  else if (p == 0.0) c.exact_tail = 0.0;
  else if (p == 1.0) c.exact_tail = 1.0;
  else {
    boost::math::binomial_distribution<double> bd(double(n), p);
    c.exact_tail = boost::math::cdf(boost::math::complement(bd, std::floor(x)));
  }
  c.bound = std::exp(-x / 2.0);
  c.applicable = x > 5.0 * double(n) * p;
  c.holds = !c.applicable || c.exact_tail <= c.bound;
  return c;
}

}  // namespace stein
