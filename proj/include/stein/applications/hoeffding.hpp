#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "../core.hpp"
#include "../couplings.hpp"
#include "../metrics.hpp"

namespace stein {

// W = sum_i a_{i, pi(i)} for a uniform permutation pi.
struct HoeffdingInstance {
  std::size_t n = 0;
  std::vector<std::vector<double>> a;

  double norm() const {
    double m = 0.0;
    for (const auto& r : a)
      for (double x : r) m = std::max(m, std::fabs(x));
    return m;
  }
  bool degenerate() const { return norm() == 0.0; }

  void validate() const {
    require(n >= 1 && a.size() == n, "matrix must be n x n");
    for (const auto& r : a) require(r.size() == n, "matrix must be n x n");
    for (std::size_t i = 0; i < n; ++i) {
      double rs = 0.0, cs = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        require(std::isfinite(a[i][j]), "matrix entries must be finite");
        rs += a[i][j];
        cs += a[j][i];
      }
      require(std::fabs(rs) <= 1e-10 && std::fabs(cs) <= 1e-10, "row and column sums must vanish");
    }
    if (n >= 2 && !degenerate()) {
      double s = 0.0;
      for (const auto& r : a)
        for (double x : r) s += x * x;
      require(std::fabs(s / double(n - 1) - 1.0) <= 1e-10, "matrix must satisfy sum a^2 = n - 1");
    }
  }

  // Doubly centres and rescales an arbitrary square matrix.
  static HoeffdingInstance normalized(std::vector<std::vector<double>> raw) {
    const std::size_t n = raw.size();
    require(n >= 1, "matrix must be non-empty");
    for (const auto& r : raw) require(r.size() == n, "matrix must be square");
    std::vector<double> rm(n, 0.0), cm(n, 0.0);
    double tot = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        rm[i] += raw[i][j] / double(n);
        cm[j] += raw[i][j] / double(n);
        tot += raw[i][j] / double(n * n);
      }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        raw[i][j] = raw[i][j] - rm[i] - cm[j] + tot;
        s += raw[i][j] * raw[i][j];
      }
    if (n >= 2 && s > 0.0) {
      double c = std::sqrt(double(n - 1) / s);
      for (auto& r : raw)
        for (double& x : r) x *= c;
    }
    HoeffdingInstance h{n, std::move(raw)};
    h.validate();
    return h;
  }

  static HoeffdingInstance random(std::size_t n, Rng& rng) {
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> raw(n, std::vector<double>(n));
    for (auto& r : raw)
      for (double& x : r) x = nd(rng);
    return normalized(std::move(raw));
  }
};

namespace detail {
template <class Src>
std::vector<std::size_t> uniform_permutation(Src& src, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[src.index(i)]);
  return p;
}

inline double perm_stat(const HoeffdingInstance& h, const std::vector<std::size_t>& p) {
  double w = 0.0;
  for (std::size_t i = 0; i < h.n; ++i) w += h.a[i][p[i]];
  return w;
}

inline double factorial(std::size_t n) {
  double f = 1.0;
  for (std::size_t k = 2; k <= n; ++k) f *= double(k);
  return f;
}

inline CouplingInfo hoeffding_info(const HoeffdingInstance& h, const char* name, double leaves) {
  CouplingInfo inf;
  inf.name = name;
  inf.n = h.n;
  inf.enumerable = fits_cap(leaves);
  inf.degenerate = h.degenerate();
  if (inf.degenerate) inf.flags.push_back("degenerate");
  return inf;
}
}  // namespace detail

// Transposition pair, lambda = 2/n.
inline CouplingPtr hoeffding_variant1(const HoeffdingInstance& h) {
  h.validate();
  auto prog = [h](auto& src) {
    auto p = detail::uniform_permutation(src, h.n);
    src.mark();
    std::size_t i1 = src.index(h.n), i2 = src.index(h.n);
    double w = detail::perm_stat(h, p);
    double wp = i1 == i2 ? w : w - h.a[i1][p[i1]] - h.a[i2][p[i2]] + h.a[i1][p[i2]] + h.a[i2][p[i1]];
    return make_sample(w, wp, 0.25 * double(h.n) * (wp - w));
  };
  auto inf = detail::hoeffding_info(h, "hoeffding_variant1", detail::factorial(h.n) * h.n * h.n);
  inf.exchangeable = true;
  inf.inner_enumerable = h.n <= 100;  // n^2 index pairs per configuration
  return make_coupling(prog, inf);
}

inline CouplingPtr hoeffding_variant2(const HoeffdingInstance& h) {
  h.validate();
  auto prog = [h](auto& src) {
    auto p = detail::uniform_permutation(src, h.n);
    src.mark();
    std::size_t i1 = src.index(h.n), i2 = src.index(h.n);
    double w = detail::perm_stat(h, p);
    double wp = i1 == i2 ? w : w - h.a[i1][p[i1]] - h.a[i2][p[i2]] + h.a[i1][p[i2]] + h.a[i2][p[i1]];
    return make_sample(w, wp, -double(h.n) * h.a[i1][p[i1]]);
  };
  auto inf = detail::hoeffding_info(h, "hoeffding_variant2", detail::factorial(h.n) * h.n * h.n);
  inf.exchangeable = true;
  inf.inner_enumerable = h.n <= 100;  // n^2 index pairs per configuration
  return make_coupling(prog, inf);
}

// Full record of one Variant-3 draw, exposing the auxiliary permutation.
struct HoeffdingV3Draw {
  std::vector<std::size_t> tau, pi;
  std::size_t i1, i2, j1, j2;
  CouplingSample s;
};

namespace detail {
// tau uniform, then (I1, I2, J1, J2) independent of tau; pi obtained from tau by at
// most two transpositions so that pi(I1) = J1, pi(I2) = J2.
template <class Src>
HoeffdingV3Draw hoeffding_v3_draw(const HoeffdingInstance& h, Src& src, double an) {
  const std::size_t n = h.n;
  HoeffdingV3Draw d;
  d.tau = uniform_permutation(src, n);
  src.mark();
  d.i1 = src.index(n);
  d.i2 = src.index(n);
  d.j1 = src.index(n);
  if (d.i1 == d.i2) d.j2 = d.j1;
  else {
    std::size_t k = src.index(n - 1);
    d.j2 = k >= d.j1 ? k + 1 : k;
  }
  d.pi = d.tau;
  auto force = [&](std::size_t pos, std::size_t val) {
    std::size_t k = std::size_t(std::find(d.pi.begin(), d.pi.end(), val) - d.pi.begin());
    std::swap(d.pi[k], d.pi[pos]);
  };
  force(d.i1, d.j1);
  if (d.i1 != d.i2) force(d.i2, d.j2);
  double w = perm_stat(h, d.pi);
  double removed = d.i1 == d.i2 ? h.a[d.i1][d.j1] : h.a[d.i1][d.j1] + h.a[d.i2][d.j2];
  d.s = make_sample(w, w - removed, double(n) * (h.a[d.i1][d.j2] - h.a[d.i1][d.j1]));
  d.s.wdd = perm_stat(h, d.tau);
  const double tol = 1e-12 * (1.0 + an * double(n));
  if (std::fabs(d.s.g) > 2.0 * double(n) * an + tol || std::fabs(d.s.d()) > 2.0 * an + tol ||
      std::fabs(d.s.dp()) > 8.0 * an + tol)
    numeric_error("Variant 3 sample violates its almost-sure bounds");
  return d;
}
}  // namespace detail

inline CouplingPtr hoeffding_variant3(const HoeffdingInstance& h) {
  h.validate();
  require(h.n >= 2, "Variant 3 needs n >= 2");
  auto prog = [h, an = h.norm()](auto& src) { return detail::hoeffding_v3_draw(h, src, an).s; };
  double n = double(h.n);
  auto inf = detail::hoeffding_info(h, "hoeffding_variant3", detail::factorial(h.n) * n * n * n * n);
  inf.inner_enumerable = h.n <= 10;  // n^4 index tuples per configuration
  inf.config_determines_w = false;  // the configuration is tau, which fixes W'' but not W
  inf.config_determines_wdd = true;
  inf.r3_zero = true;
  TruncationParams t;
  double an = h.norm();
  t.alpha = 2.0 * n * an;
  t.beta = 2.0 * an;
  t.beta_t = t.beta;
  t.beta_p = 8.0 * an;
  t.gamma = 1.0;
  inf.as_bounds = t;
  return make_coupling(prog, inf);
}

// Law of W by brute force over all permutations.
inline DiscreteDistribution hoeffding_exact_oracle(const HoeffdingInstance& h) {
  h.validate();
  require(h.n <= 10, "exact oracle limited to n <= 10");
  std::vector<std::size_t> p(h.n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::vector<double> vals;
  do vals.push_back(detail::perm_stat(h, p));
  while (std::next_permutation(p.begin(), p.end()));
  std::vector<double> probs(vals.size(), 1.0 / double(vals.size()));
  return DiscreteDistribution(std::move(vals), std::move(probs));
}

}  // namespace stein
