#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "core.hpp"
#include "estimation.hpp"
#include "metrics.hpp"

namespace stein {

struct ZeroBiasDensity {
  std::vector<double> grid, rho_hat, ci;
  std::uint64_t n = 0;
  bool exact = false;
  bool non_informative = false;  // W' = W throughout
  Estimate integral;             // Riemann sum of rho_hat over the grid
};

inline std::vector<double> default_zero_bias_grid() { return uniform_grid(-5.0, 5.0, 401); }

namespace detail {
// grid indices k with lo <= grid[k] < hi
inline std::pair<std::size_t, std::size_t> grid_span(const std::vector<double>& g, double lo, double hi) {
  auto a = std::lower_bound(g.begin(), g.end(), lo);
  auto b = std::lower_bound(g.begin(), g.end(), hi);
  return {std::size_t(a - g.begin()), std::size_t(b - g.begin())};
}

inline double grid_step(const std::vector<double>& g) { return g.size() > 1 ? (g.back() - g.front()) / double(g.size() - 1) : 0.0; }

inline void check_grid(const std::vector<double>& g) {
  require(g.size() >= 2, "grid needs at least two points");
  for (std::size_t k = 1; k < g.size(); ++k) require(g[k] > g[k - 1], "grid must be increasing");
}

// per-sample contribution to each grid point: +G on [W, W'), -G on [W', W)
struct DensityAcc {
  std::vector<double> s1, s2;  // difference arrays
  Moments integral;
  bool moved = false;
  explicit DensityAcc(std::size_t m = 0) : s1(m + 1, 0.0), s2(m + 1, 0.0) {}
  void merge(const DensityAcc& o) {
    for (std::size_t k = 0; k < s1.size(); ++k) {
      s1[k] += o.s1[k];
      s2[k] += o.s2[k];
    }
    integral.merge(o.integral);
    moved = moved || o.moved;
  }
  void add(const std::vector<double>& g, double h, const CouplingSample& c, double weight = 1.0) {
    double lo = std::min(c.w, c.wp), hi = std::max(c.w, c.wp);
    double v = c.wp > c.w ? c.g : -c.g;
    if (c.wp != c.w) moved = true;
    auto [a, b] = grid_span(g, lo, hi);
    if (c.wp != c.w && a < b) {
      s1[a] += weight * v;
      s1[b] -= weight * v;
      s2[a] += weight * v * v;
      s2[b] -= weight * v * v;
    }
    integral.add(c.wp != c.w ? v * double(b - a) * h : 0.0);
  }
};
}  // namespace detail

inline ZeroBiasDensity zero_bias_density(const Coupling& cp, const std::vector<double>& grid, const McOptions& o,
                                          double z = kZ99) {
  detail::check_grid(grid);
  const double h = detail::grid_step(grid);
  auto acc = run_chunked(o, detail::DensityAcc(grid.size()),
                         [&](Rng& rng, std::uint64_t cnt, detail::DensityAcc& a, std::uint64_t) {
                           for (std::uint64_t r = 0; r < cnt; ++r) a.add(grid, h, cp.draw(rng));
                         });
  ZeroBiasDensity out;
  out.grid = grid;
  out.n = o.n_samples;
  out.non_informative = !acc.moved;
  const double n = double(std::max<std::uint64_t>(o.n_samples, 1));
  double c1 = 0.0, c2 = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    c1 += acc.s1[k];
    c2 += acc.s2[k];
    double m = c1 / n, var = std::max(0.0, c2 / n - m * m);
    out.rho_hat.push_back(m);
    out.ci.push_back(o.n_samples > 1 ? z * std::sqrt(var * n / (n - 1.0) / n) : 0.0);
  }
  out.integral = acc.integral.estimate(z);
  return out;
}

inline ZeroBiasDensity zero_bias_density_exact(const Enumeration& en, const std::vector<double>& grid) {
  detail::check_grid(grid);
  const double h = detail::grid_step(grid);
  detail::DensityAcc acc(grid.size());
  KahanSum integral;
  for (const auto& x : en.flatten()) {
    acc.add(grid, h, x.s, x.prob);
  }
  ZeroBiasDensity out;
  out.grid = grid;
  out.exact = true;
  out.n = en.size();
  out.non_informative = !acc.moved;
  double c1 = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    c1 += acc.s1[k];
    out.rho_hat.push_back(c1);
    out.ci.push_back(0.0);
    integral.add(c1 * h);
  }
  out.integral = {integral.value(), 0.0, en.size(), true};
  return out;
}

inline ZeroBiasDensity zero_bias_density(const Coupling& cp, const std::vector<double>& grid, const McOptions& o,
                                          bool prefer_exact) {
  if (prefer_exact)
    if (auto en = cp.enumerate()) return zero_bias_density_exact(*en, grid);
  return zero_bias_density(cp, grid, o);
}

// rho(u) = E[W I(W > u)] for a discrete mean-zero, unit-variance law
inline std::vector<double> zero_bias_density_discrete(const DiscreteDistribution& d, const std::vector<double>& grid) {
  std::vector<double> out;
  for (double u : grid) {
    KahanSum s;
    for (std::size_t k = 0; k < d.support().size(); ++k)
      if (d.support()[k] > u) s.add(d.support()[k] * d.probs()[k]);
    out.push_back(s.value());
  }
  return out;
}

inline void write_density_csv(std::ostream& os, const ZeroBiasDensity& d) {
  os << "u,rho_hat,ci\n";
  char buf[96];
  for (std::size_t k = 0; k < d.grid.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6f,%.10g,%.6g\n", d.grid[k], d.rho_hat[k], d.ci[k]);
    os << buf;
  }
}

// W^z draws by systematic resampling of (W, W') in proportion to G D.
inline std::vector<double> zero_bias_sampler(const Coupling& cp, const McOptions& o, std::uint64_t draws = 0) {
  require(o.n_samples > 0, "resampling pool must be non-empty");
  if (draws == 0) draws = o.n_samples;
  auto pool = draw_samples(cp, o);
  std::uint64_t negative = 0;
  std::vector<double> cum;
  cum.reserve(pool.size());
  double tot = 0.0;
  for (const auto& c : pool) {
    double w = c.g * c.d();
    if (w < 0.0) ++negative;
    tot += std::max(w, 0.0);
    cum.push_back(tot);
  }
  if (negative > 0)
    unsupported("zero-bias sampler needs G D >= 0; " + std::to_string(negative) + " of " +
                std::to_string(pool.size()) + " samples are negative");
  if (!(tot > 0.0)) numeric_error("zero-bias weights vanish, coupling carries no information");
  Rng rng = make_stream(o.seed ^ 0x5a5a5a5a5a5a5a5aULL, 0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double start = u01(rng);
  std::vector<double> out;
  out.reserve(draws);
  std::size_t idx = 0;
  for (std::uint64_t j = 0; j < draws; ++j) {
    double target = (start + double(j)) / double(draws) * tot;
    while (idx + 1 < cum.size() && cum[idx] <= target) ++idx;
    const auto& c = pool[idx];
    double u = u01(rng);
    out.push_back(u * c.wp + (1.0 - u) * c.w);
  }
  // systematic picks come out sorted by pool index; shuffle so the stream is exchangeable
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// sup |F_n - F| against an arbitrary continuous cdf
inline double ks_distance(std::vector<double> x, const std::function<double(double)>& cdf) {
  require(!x.empty(), "empty sample");
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double f = cdf(x[i]);
    d = std::max({d, std::fabs(double(i + 1) / n - f), std::fabs(double(i) / n - f)});
  }
  return d;
}

struct IdentityProbe {
  Estimate lhs;  // E W f(W)
  Estimate rhs;  // E f'(W^z)
  bool pass = false;
};

// E W f(W) = E f'(W^z), both sides by Monte Carlo
inline IdentityProbe zero_bias_identity_probe(const Coupling& cp, const std::function<double(double)>& f,
                                              const std::function<double(double)>& fprime, const McOptions& o,
                                              double z = kZ99) {
  auto lhs = run_chunked(o, Moments{}, [&](Rng& rng, std::uint64_t cnt, Moments& a, std::uint64_t) {
    for (std::uint64_t r = 0; r < cnt; ++r) {
      auto c = cp.draw(rng);
      a.add(c.w * f(c.w));
    }
  });
  McOptions o2 = o;
  o2.seed = o.seed + 1;
  Moments rhs;
  for (double w : zero_bias_sampler(cp, o2)) rhs.add(fprime(w));
  IdentityProbe p;
  p.lhs = lhs.estimate(z);
  p.rhs = rhs.estimate(z);
  p.pass = std::fabs(p.lhs.value - p.rhs.value) <= std::hypot(p.lhs.ci, p.rhs.ci);
  return p;
}

}  // namespace stein
