#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "error.hpp"
#include "metrics.hpp"

namespace stein {

using CouplingPtr = std::shared_ptr<const Coupling>;

template <class Prog>
std::shared_ptr<ProgramCoupling<Prog>> make_coupling(Prog p, CouplingInfo info, double mu = 0.0, double sigma = 1.0) {
  return std::make_shared<ProgramCoupling<Prog>>(std::move(p), std::move(info), mu, sigma);
}

inline bool fits_cap(double leaves) { return leaves <= double(kOutcomeCap); }

// ---- summand laws -------------------------------------------------------------

struct SummandLaw {
  enum class Kind { discrete, uniform, normal };
  Kind kind = Kind::discrete;
  std::vector<double> values, probs;

  static SummandLaw discrete_law(std::vector<double> v, std::vector<double> p) {
    DiscreteDistribution check(v, p);
    (void)check;
    SummandLaw l;
    l.values = std::move(v);
    l.probs = std::move(p);
    return l;
  }
  static SummandLaw rademacher() { return discrete_law({-1.0, 1.0}, {0.5, 0.5}); }
  static SummandLaw uniform01() { SummandLaw l; l.kind = Kind::uniform; return l; }
  static SummandLaw standard_normal() { SummandLaw l; l.kind = Kind::normal; return l; }

  bool discrete() const { return kind == Kind::discrete; }
  std::size_t support_size() const { return values.size(); }

  double mean() const {
    switch (kind) {
      case Kind::uniform: return 0.5;
      case Kind::normal: return 0.0;
      default: {
        double m = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) m += values[i] * probs[i];
        return m;
      }
    }
  }
  double variance() const {
    switch (kind) {
      case Kind::uniform: return 1.0 / 12.0;
      case Kind::normal: return 1.0;
      default: {
        double m = mean(), v = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) v += (values[i] - m) * (values[i] - m) * probs[i];
        return v;
      }
    }
  }
  template <class Src>
  double draw(Src& s) const {
    switch (kind) {
      case Kind::uniform: return s.uniform();
      case Kind::normal: return s.normal();
      default: return values[s.categorical(probs)];
    }
  }
};

// n independent centred summands; standardised to Var X_i = 1/n unless raw is requested.
struct IndependentSumSpec {
  std::size_t n = 2;
  SummandLaw law = SummandLaw::rademacher();
  bool standardize = true;

  double scale() const {
    if (!standardize) return 1.0;
    double v = law.variance();
    require(v > 0.0, "summand law is degenerate");
    return 1.0 / std::sqrt(double(n) * v);
  }
};

namespace detail {
template <class Src>
std::vector<double> draw_summands(Src& src, const IndependentSumSpec& sp) {
  const double mu = sp.law.mean(), sc = sp.scale();
  std::vector<double> x(sp.n);
  for (auto& v : x) v = (sp.law.draw(src) - mu) * sc;
  return x;
}

inline double sum_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

inline CouplingInfo sum_info(const std::string& name, const IndependentSumSpec& sp, double leaves) {
  CouplingInfo inf;
  inf.name = name;
  inf.n = sp.n;
  inf.enumerable = sp.law.discrete() && fits_cap(leaves);
  inf.inner_enumerable = true;
  return inf;
}
}  // namespace detail

// W' = W - X_I, G = -n X_I
inline CouplingPtr indep_sum_deletion(const IndependentSumSpec& sp) {
  require(sp.n >= 1, "need at least one summand");
  auto prog = [sp](auto& src) {
    auto x = detail::draw_summands(src, sp);
    src.mark();
    std::size_t i = src.index(sp.n);
    double w = detail::sum_of(x);
    return make_sample(w, w - x[i], -double(sp.n) * x[i]);
  };
  auto inf = detail::sum_info("indep_sum_deletion", sp, std::pow(double(sp.law.support_size()), double(sp.n)) * sp.n);
  return make_coupling(prog, inf);
}

// W' = W - X_I + X'_I, G = (n/2)(X'_I - X_I); exchangeable with lambda = 1/n
inline CouplingPtr indep_sum_replacement(const IndependentSumSpec& sp) {
  require(sp.n >= 1, "need at least one summand");
  const bool disc = sp.law.discrete();
  auto prog = [sp, disc](auto& src) {
    auto x = detail::draw_summands(src, sp);
    std::vector<double> xp;
    if (!disc) xp = detail::draw_summands(src, sp);
    src.mark();
    std::size_t i = src.index(sp.n);
    double xpi = disc ? (sp.law.draw(src) - sp.law.mean()) * sp.scale() : xp[i];
    double w = detail::sum_of(x);
    return make_sample(w, w - x[i] + xpi, 0.5 * double(sp.n) * (xpi - x[i]));
  };
  double k = double(sp.law.support_size());
  auto inf = detail::sum_info("indep_sum_replacement", sp, std::pow(k, double(sp.n)) * sp.n * k);
  inf.exchangeable = true;
  return make_coupling(prog, inf);
}

// W' = W + X'_I, G = n(X'_I - X_I); W' is not distributed as W
inline CouplingPtr indep_sum_duplication(const IndependentSumSpec& sp) {
  require(sp.n >= 1, "need at least one summand");
  const bool disc = sp.law.discrete();
  auto prog = [sp, disc](auto& src) {
    auto x = detail::draw_summands(src, sp);
    std::vector<double> xp;
    if (!disc) xp = detail::draw_summands(src, sp);
    src.mark();
    std::size_t i = src.index(sp.n);
    double xpi = disc ? (sp.law.draw(src) - sp.law.mean()) * sp.scale() : xp[i];
    double w = detail::sum_of(x);
    return make_sample(w, w + xpi, double(sp.n) * (xpi - x[i]));
  };
  double k = double(sp.law.support_size());
  auto inf = detail::sum_info("indep_sum_duplication", sp, std::pow(k, double(sp.n)) * sp.n * k);
  inf.equal_marginals = false;
  inf.flags.push_back("unequal-marginals");
  return make_coupling(prog, inf);
}

// ---- exchangeable pairs -------------------------------------------------------

// pair(src) -> (W, W') with E^W(W' - W) = -lambda W (asserted by the caller)
template <class Pair>
CouplingPtr exchangeable_pair_linear(Pair pair, double lambda, CouplingInfo inf) {
  require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
  auto prog = [pair, lambda](auto& src) {
    auto [w, wp] = pair(src);
    return make_sample(w, wp, (wp - w) / (2.0 * lambda));
  };
  inf.exchangeable = true;
  return make_coupling(prog, inf);
}

inline CouplingPtr antithetic_pair(const SummandLaw& law) {
  require(law.discrete(), "antithetic pair needs a discrete symmetric law");
  DiscreteDistribution d(law.values, law.probs);
  std::vector<double> neg;
  for (double v : law.values) neg.push_back(-v);
  DiscreteDistribution dn(neg, law.probs);
  require(d.support() == dn.support() && d.probs() == dn.probs(), "antithetic pair needs a symmetric law");
  double sd = std::sqrt(law.variance());
  CouplingInfo inf;
  inf.name = "antithetic_pair";
  inf.n = 1;
  inf.enumerable = true;
  inf.inner_enumerable = true;
  return exchangeable_pair_linear(
      [law, sd](auto& src) {
        double w = law.draw(src) / sd;
        return std::make_pair(w, -w);
      },
      2.0, inf);
}

inline CouplingPtr independent_copy_pair(const SummandLaw& law) {
  double mu = law.mean(), sd = std::sqrt(law.variance());
  CouplingInfo inf;
  inf.name = "independent_copy_pair";
  inf.n = 1;
  inf.enumerable = law.discrete();
  inf.inner_enumerable = law.discrete();
  return exchangeable_pair_linear(
      [law, mu, sd](auto& src) {
        double w = (law.draw(src) - mu) / sd;
        src.mark();
        double wp = (law.draw(src) - mu) / sd;
        return std::make_pair(w, wp);
      },
      1.0, inf);
}

// Replacement pair expressed through the linear-regression construction (lambda = 1/n).
inline CouplingPtr replacement_pair_linear(const IndependentSumSpec& sp) {
  require(sp.law.discrete(), "replacement pair is built for discrete laws");
  CouplingInfo inf;
  inf.name = "exchangeable_pair_linear";
  inf.n = sp.n;
  double k = double(sp.law.support_size());
  inf.enumerable = fits_cap(std::pow(k, double(sp.n)) * sp.n * k);
  inf.inner_enumerable = true;
  return exchangeable_pair_linear(
      [sp](auto& src) {
        auto x = detail::draw_summands(src, sp);
        src.mark();
        std::size_t i = src.index(sp.n);
        double xpi = (sp.law.draw(src) - sp.law.mean()) * sp.scale();
        double w = detail::sum_of(x);
        return std::make_pair(w, w - x[i] + xpi);
      },
      1.0 / double(sp.n), inf);
}

// E|R| / lambda with R = E^W(W' - W) + lambda W, from an enumeration.
inline double exchangeable_remainder_exact(const Enumeration& en, double lambda) {
  require(lambda > 0.0, "lambda must be positive");
  std::vector<KeyedValue> kv;
  for (const auto& x : en.flatten()) kv.push_back({x.prob, x.s.w, x.s.d() + lambda * x.s.w});
  return conditional_abs_mean(std::move(kv)) / lambda;
}

// Same, from samples of a discrete W (grouped by exact value).
inline Estimate exchangeable_remainder_mc(const std::vector<CouplingSample>& xs, double lambda) {
  require(lambda > 0.0 && !xs.empty(), "lambda must be positive and samples non-empty");
  std::map<long long, Moments> cells;
  for (const auto& x : xs) cells[std::llround(x.w * 1e9)].add(x.d() + lambda * x.w);
  double tot = 0.0, var = 0.0, n = double(xs.size());
  for (auto& [k, m] : cells) {
    double p = double(m.n) / n;
    tot += p * std::fabs(m.mean);
    var += p * p * (m.n > 1 ? m.variance() / double(m.n) : 0.0);
  }
  return {tot / lambda, kZ99 * std::sqrt(var) / lambda, xs.size(), false};
}

// ---- 2-runs on the circle -----------------------------------------------------

enum class TwoRunsG { eq27c, eq27d, classic };

inline CouplingPtr two_runs_coupling(std::size_t n, double p, TwoRunsG variant = TwoRunsG::eq27c) {
  require(n >= 3, "2-runs needs n >= 3");
  require(p >= 0.0 && p <= 1.0, "p must lie in [0,1]");
  const double var = double(n) * (p * p + 2 * p * p * p - 3 * p * p * p * p);
  const bool degenerate = !(var > 0.0);
  auto prog = [n, p, variant](auto& src) {
    std::vector<int> xi(n);
    for (auto& v : xi) v = src.bernoulli(p) ? 1 : 0;
    src.mark();
    std::size_t i = src.index(n);
    int xp = src.bernoulli(p) ? 1 : 0;
    std::size_t prev = (i + n - 1) % n, next = (i + 1) % n;
    double v = 0.0, u = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      v += xi[k] * xi[(k + 1) % n];
      u += xi[k];
    }
    v -= double(n) * p * p;
    u -= double(n) * p;
    double vp = v - xi[prev] * xi[i] - xi[i] * xi[next] + xi[prev] * xp + xp * xi[next];
    double up = u - xi[i] + xp;
    double g = 0.0, nn = double(n);
    switch (variant) {
      case TwoRunsG::eq27c: g = 0.5 * nn * (p * xp - p * xi[i] + xp * xi[next] - xi[i] * xi[next]); break;
      case TwoRunsG::eq27d: g = 0.5 * nn * (p * (up - u) + 0.5 * (vp - v)); break;
      case TwoRunsG::classic: g = 0.25 * nn * (vp - v); break;
    }
    return make_sample(v, vp, g);
  };
  CouplingInfo inf;
  inf.name = variant == TwoRunsG::classic ? "two_runs_classic" : (variant == TwoRunsG::eq27d ? "two_runs_27d" : "two_runs");
  inf.n = n;
  inf.exact_stein = variant != TwoRunsG::classic;
  inf.exchangeable = true;
  inf.enumerable = fits_cap(std::pow(2.0, double(n)) * 2.0 * n);
  inf.inner_enumerable = true;
  inf.degenerate = degenerate;
  if (degenerate) inf.flags.push_back("degenerate");
  if (variant == TwoRunsG::classic) inf.flags.push_back("not-a-stein-coupling");
  return make_coupling(prog, inf, 0.0, degenerate ? 1.0 : std::sqrt(var));
}

// ---- Curie-Weiss ---------------------------------------------------------------

enum class CurieWeissW { exact, approximate };
enum class CurieWeissSampling { exact, glauber };

struct CurieWeissSpec {
  std::size_t n = 4;
  double beta = 0.5;
  double h = 0.0;
  CurieWeissW w = CurieWeissW::exact;
  CurieWeissSampling sampling = CurieWeissSampling::exact;
  std::size_t burnin = 200;  // sweeps per draw under Glauber sampling
};

namespace detail {
// weights over the number k of + spins under exp{(beta/n) sum_{i<j} s_i s_j + beta h sum s_i}
inline std::vector<double> curie_weiss_count_law(std::size_t n, double beta, double h) {
  std::vector<double> lw(n + 1);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= n; ++k) {
    double m = 2.0 * double(k) - double(n);
    lw[k] = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + beta / double(n) * 0.5 * (m * m - double(n)) +
            beta * h * m;
    mx = std::max(mx, lw[k]);
  }
  double tot = 0.0;
  for (auto& x : lw) tot += (x = std::exp(x - mx));
  for (auto& x : lw) x /= tot;
  return lw;
}

// W for a configuration with total magnetisation M (sum of spins)
inline double curie_weiss_w(std::size_t n, double beta, double h, double mag, std::size_t plus, CurieWeissW kind) {
  double nn = double(n), m = mag / nn;
  if (kind == CurieWeissW::approximate) return m - std::tanh(beta * m + beta * h);
  double tp = std::tanh(beta * (mag - 1.0) / nn + beta * h);
  double tm = std::tanh(beta * (mag + 1.0) / nn + beta * h);
  return m - (double(plus) * tp + double(n - plus) * tm) / nn;
}
}  // namespace detail

inline std::shared_ptr<const Coupling> curie_weiss_coupling(const CurieWeissSpec& sp) {
  require(sp.n >= 2, "Curie-Weiss needs n >= 2");
  require(sp.beta >= 0.0 && std::isfinite(sp.beta) && std::isfinite(sp.h), "beta must be >= 0");
  const std::size_t n = sp.n;
  auto law = detail::curie_weiss_count_law(n, sp.beta, sp.h);
  // exact second moment of W from the count law
  double e2 = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    double w = detail::curie_weiss_w(n, sp.beta, sp.h, 2.0 * k - double(n), k, sp.w);
    e2 += law[k] * w * w;
  }
  const double sigma = std::sqrt(e2);
  auto prog = [sp, law, n](auto& src) {
    std::vector<int> s(n);
    if (sp.sampling == CurieWeissSampling::exact) {
      std::size_t k = src.categorical(law);
      std::size_t left = k;
      for (std::size_t i = 0; i < n; ++i) {
        bool plus = left > 0 && src.bernoulli(double(left) / double(n - i));
        s[i] = plus ? 1 : -1;
        if (plus) --left;
      }
    } else {
      long mag = 0;
      for (auto& v : s) mag += (v = src.bernoulli(0.5) ? 1 : -1);
      for (std::size_t sweep = 0; sweep < sp.burnin; ++sweep)
        for (std::size_t i = 0; i < n; ++i) {
          double mi = double(mag - s[i]) / double(n);
          double x = sp.beta * mi + sp.beta * sp.h;
          int nv = src.bernoulli(1.0 / (1.0 + std::exp(-2.0 * x))) ? 1 : -1;
          mag += nv - s[i];
          s[i] = nv;
        }
    }
    long mag = 0;
    std::size_t plus = 0;
    for (int v : s) { mag += v; plus += v > 0; }
    src.mark();
    std::size_t i = src.index(n);
    double x = sp.beta * double(mag - s[i]) / double(n) + sp.beta * sp.h;
    int si = src.bernoulli(1.0 / (1.0 + std::exp(-2.0 * x))) ? 1 : -1;
    long magp = mag - s[i] + si;
    std::size_t plusp = plus - (s[i] > 0) + (si > 0);
    double w = detail::curie_weiss_w(n, sp.beta, sp.h, double(mag), plus, sp.w);
    double wp = detail::curie_weiss_w(n, sp.beta, sp.h, double(magp), plusp, sp.w);
    return make_sample(w, wp, -0.5 * double(s[i] - si));
  };
  CouplingInfo inf;
  inf.name = sp.w == CurieWeissW::exact ? "curie_weiss" : "curie_weiss_approx";
  inf.n = n;
  inf.exchangeable = true;
  inf.exact_stein = sp.w == CurieWeissW::exact;
  if (sp.w == CurieWeissW::approximate) inf.r0_bound = sp.beta / (double(n) * sigma);
  inf.enumerable = sp.sampling == CurieWeissSampling::exact && n <= 20 && fits_cap(std::pow(2.0, double(n)) * 2.0 * n);
  inf.inner_enumerable = true;
  if (sp.sampling == CurieWeissSampling::glauber) inf.flags.push_back("glauber");
  require(sigma > 0.0, "Curie-Weiss statistic is degenerate");
  return make_coupling(prog, inf, 0.0, sigma);
}

// Kolmogorov distance between Glauber magnetisations and the exact count law; a warning above tol.
inline std::pair<double, bool> curie_weiss_chain_diagnostic(const CurieWeissSpec& sp, const McOptions& o, double tol = 0.02) {
  auto law = detail::curie_weiss_count_law(sp.n, sp.beta, sp.h);
  auto acc = run_chunked(o, Collect<long>{}, [&](Rng& rng, std::uint64_t cnt, Collect<long>& a, std::uint64_t) {
    RandomSource src(rng);
    for (std::uint64_t r = 0; r < cnt; ++r) {
      std::vector<int> s(sp.n);
      long mag = 0;
      for (auto& v : s) mag += (v = src.bernoulli(0.5) ? 1 : -1);
      for (std::size_t sweep = 0; sweep < sp.burnin; ++sweep)
        for (std::size_t i = 0; i < sp.n; ++i) {
          double x = sp.beta * double(mag - s[i]) / double(sp.n) + sp.beta * sp.h;
          int nv = src.bernoulli(1.0 / (1.0 + std::exp(-2.0 * x))) ? 1 : -1;
          mag += nv - s[i];
          s[i] = nv;
        }
      a.v.push_back((mag + long(sp.n)) / 2);
    }
  });
  std::vector<double> emp(sp.n + 1, 0.0);
  for (long k : acc.v) emp[k] += 1.0 / double(acc.v.size());
  double ce = 0.0, cl = 0.0, dk = 0.0;
  for (std::size_t k = 0; k <= sp.n; ++k) {
    ce += emp[k];
    cl += law[k];
    dk = std::max(dk, std::fabs(ce - cl));
  }
  return {dk, dk > tol};
}

// ---- Poisson equation on a finite chain ------------------------------------------

struct FiniteChainSpec {
  std::vector<std::vector<double>> P;
  std::vector<double> phi;
  std::size_t t_max = 100000;
};

struct ChainSolution {
  std::vector<double> pi;
  std::vector<double> psi;
  bool reversible = false;
  bool aperiodic = false;
  double bound_c = 0.0;  // max_{x,y} sum_k |P^k phi(x) - P^k phi(y)|
};

inline ChainSolution solve_chain(const FiniteChainSpec& sp) {
  const std::size_t k = sp.P.size();
  require(k >= 1 && sp.phi.size() == k, "kernel and reward sizes differ");
  Eigen::MatrixXd P(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    require(sp.P[i].size() == k, "kernel must be square");
    double rs = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      require(sp.P[i][j] >= 0.0, "negative transition probability");
      P(i, j) = sp.P[i][j];
      rs += sp.P[i][j];
    }
    require(std::fabs(rs - 1.0) <= 1e-12, "kernel rows must sum to 1");
  }
  // irreducibility by reachability from state 0, both directions
  auto reach = [&](bool fwd) {
    std::vector<char> seen(k, 0);
    std::vector<std::size_t> st{0};
    seen[0] = 1;
    while (!st.empty()) {
      auto u = st.back();
      st.pop_back();
      for (std::size_t v = 0; v < k; ++v)
        if (!seen[v] && (fwd ? P(u, v) : P(v, u)) > 0.0) { seen[v] = 1; st.push_back(v); }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  if (!reach(true) || !reach(false)) invalid_parameter("chain is not irreducible");
  ChainSolution sol;
  // period: gcd of level differences along edges of a BFS tree
  {
    std::vector<long> lvl(k, -1);
    std::vector<std::size_t> q{0};
    lvl[0] = 0;
    for (std::size_t h = 0; h < q.size(); ++h)
      for (std::size_t v = 0; v < k; ++v)
        if (P(q[h], v) > 0.0 && lvl[v] < 0) { lvl[v] = lvl[q[h]] + 1; q.push_back(v); }
    long g = 0;
    for (std::size_t u = 0; u < k; ++u)
      for (std::size_t v = 0; v < k; ++v)
        if (P(u, v) > 0.0) g = std::gcd(g, std::labs(lvl[u] + 1 - lvl[v]));
    sol.aperiodic = g == 1;
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(k, k) - P.transpose();
  A.row(k - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  rhs(k - 1) = 1.0;
  Eigen::VectorXd pi = A.fullPivLu().solve(rhs);
  sol.pi.assign(pi.data(), pi.data() + k);
  double mean = 0.0;
  for (std::size_t i = 0; i < k; ++i) mean += sol.pi[i] * sp.phi[i];
  require(std::fabs(mean) <= 1e-10, "reward must be centred under the stationary law");
  // (I - P + 1 pi^T) psi = phi gives the solution with pi psi = pi phi = 0
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(k, k) - P + Eigen::VectorXd::Ones(k) * pi.transpose();
  Eigen::VectorXd phi = Eigen::Map<const Eigen::VectorXd>(sp.phi.data(), k);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (!lu.isInvertible()) invalid_parameter("Poisson system is singular");
  Eigen::VectorXd psi = lu.solve(phi);
  sol.psi.assign(psi.data(), psi.data() + k);
  sol.reversible = true;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (std::fabs(sol.pi[i] * P(i, j) - sol.pi[j] * P(j, i)) > 1e-12) sol.reversible = false;
  // C by summing the differences of P^k phi until they vanish
  if (sol.aperiodic) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd v = phi;
    for (std::size_t it = 0; it < 200000; ++it) {
      double spread = v.maxCoeff() - v.minCoeff();
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) acc(x, y) += std::fabs(v(x) - v(y));
      if (spread < 1e-16) break;
      v = P * v;
    }
    sol.bound_c = acc.maxCoeff();
  } else {
    sol.bound_c = std::numeric_limits<double>::infinity();
  }
  return sol;
}

enum class PoissonVariant { psi, coupled_chains };

class PoissonCoupling;

namespace detail {
struct PoissonProg {
  std::vector<std::vector<double>> P;
  std::vector<double> pi, phi, psi;
  PoissonVariant variant;
  std::size_t t_max;
  std::shared_ptr<std::atomic<std::uint64_t>> rejected;

  template <class Src>
  CouplingSample operator()(Src& src) const {
    const std::size_t k = pi.size();
    for (;;) {
      std::size_t x = src.categorical(pi);
      if (variant == PoissonVariant::psi) src.mark();
      std::size_t xp = src.categorical(P[x]);
      double w = phi[x], wp = phi[xp];
      if (variant == PoissonVariant::psi) return make_sample(w, wp, 0.5 * (psi[xp] - psi[x]));
      // Doeblin coupling: independent moves until the chains meet, identical afterwards
      std::vector<std::size_t> a{x}, b{xp};
      std::size_t t = 0;
      bool met = false;
      while (t < t_max) {
        ++t;
        std::size_t na = src.categorical(P[a.back()]);
        std::size_t nb = src.categorical(P[b.back()]);
        a.push_back(na);
        b.push_back(nb);
        if (na == nb) { met = true; break; }
      }
      if (!met) {
        rejected->fetch_add(1);
        continue;
      }
      std::size_t i = src.index(t);
      (void)k;
      return make_sample(w, wp, 0.5 * double(t) * (phi[b[i]] - phi[a[i]]));
    }
  }
};
}  // namespace detail

struct PoissonCouplingResult {
  CouplingPtr coupling;
  ChainSolution solution;
  std::shared_ptr<std::atomic<std::uint64_t>> rejected;
};

inline PoissonCouplingResult poisson_equation_coupling(const FiniteChainSpec& sp, PoissonVariant variant = PoissonVariant::psi) {
  auto sol = solve_chain(sp);
  if (!sol.reversible) invalid_parameter("chain must be reversible for (X, X') to be exchangeable");
  double var = 0.0;
  for (std::size_t i = 0; i < sol.pi.size(); ++i) var += sol.pi[i] * sp.phi[i] * sp.phi[i];
  auto rej = std::make_shared<std::atomic<std::uint64_t>>(0);
  detail::PoissonProg prog{sp.P, sol.pi, sp.phi, sol.psi, variant, sp.t_max, rej};
  CouplingInfo inf;
  inf.name = variant == PoissonVariant::psi ? "poisson_equation" : "poisson_coupled_chains";
  inf.n = sol.pi.size();
  inf.exchangeable = true;
  inf.enumerable = variant == PoissonVariant::psi && fits_cap(double(inf.n * inf.n));
  inf.inner_enumerable = variant == PoissonVariant::psi;
  if (!sol.aperiodic) inf.flags.push_back("periodic-chain");
  bool degen = !(var > 0.0);
  inf.degenerate = degen;
  if (degen) inf.flags.push_back("degenerate");
  if (std::isfinite(sol.bound_c)) {
    TruncationParams t;
    t.alpha = 0.5 * sol.bound_c / (degen ? 1.0 : std::sqrt(var));
    inf.as_bounds = t;
  }
  return {make_coupling(prog, inf, 0.0, degen ? 1.0 : std::sqrt(var)), sol, rej};
}

// ---- local dependence -----------------------------------------------------------

struct DependencyNeighborhoods {
  std::vector<std::vector<std::size_t>> A;                 // i in A_i
  std::vector<std::vector<std::size_t>> B;                 // optional, A_i subset B_i
  std::vector<std::vector<std::vector<std::size_t>>> Bij;  // optional, per j in A_i (same order)
  std::function<double(std::size_t, std::size_t)> sigma;   // optional E(X_i X_j)

  void validate(std::size_t n) const {
    require(A.size() == n, "one first-order neighbourhood per index");
    auto contains = [](const std::vector<std::size_t>& s, std::size_t x) { return std::find(s.begin(), s.end(), x) != s.end(); };
    for (std::size_t i = 0; i < n; ++i) {
      require(contains(A[i], i), "i must belong to A_i");
      for (auto j : A[i]) require(j < n, "neighbourhood index out of range");
      if (!B.empty())
        for (auto j : A[i]) require(contains(B[i], j), "A_i must be contained in B_i");
      if (!Bij.empty()) {
        require(Bij[i].size() == A[i].size(), "one B_{i,j} per j in A_i");
        for (auto& b : Bij[i])
          for (auto j : A[i]) require(contains(b, j), "A_i must be contained in B_{i,j}");
      }
    }
  }
};

// X sampler: xs(src) -> vector of n values, centred, with Var W = 1 if no standardisation is wanted downstream
template <class XS>
CouplingPtr local_dependence_coupling(XS xs, std::size_t n, DependencyNeighborhoods hoods, double sigma = 1.0,
                                      double leaves = std::numeric_limits<double>::infinity()) {
  hoods.validate(n);
  const bool has_b = !hoods.B.empty();
  auto prog = [xs, n, hoods, has_b](auto& src) {
    std::vector<double> x = xs(src);
    src.mark();
    std::size_t i = src.index(n);
    double w = detail::sum_of(x), sa = 0.0, sb = 0.0;
    for (auto j : hoods.A[i]) sa += x[j];
    CouplingSample c = make_sample(w, w - sa, -double(n) * x[i]);
    if (has_b) {
      for (auto j : hoods.B[i]) sb += x[j];
      c.wdd = w - sb;
    }
    return c;
  };
  CouplingInfo inf;
  inf.name = "local_dependence";
  inf.n = n;
  inf.r3_zero = has_b;
  inf.config_determines_wdd = !has_b;
  inf.enumerable = fits_cap(leaves * n);
  inf.inner_enumerable = true;
  return make_coupling(prog, inf, 0.0, sigma);
}

template <class XS>
CouplingPtr decomposable_coupling(XS xs, std::size_t n, DependencyNeighborhoods hoods, double sigma = 1.0,
                                  double leaves = std::numeric_limits<double>::infinity()) {
  hoods.validate(n);
  require(!hoods.Bij.empty() && static_cast<bool>(hoods.sigma), "decomposable coupling needs B_{i,j} and sigma_{i,j}");
  double maxk = 0.0;
  for (auto& a : hoods.A) maxk = std::max(maxk, double(a.size()));
  auto prog = [xs, n, hoods, sigma](auto& src) {
    std::vector<double> x = xs(src);
    src.mark();
    std::size_t i = src.index(n);
    const auto& a = hoods.A[i];
    std::size_t jj = src.index(a.size());
    std::size_t j = a[jj];
    double w = detail::sum_of(x), sa = 0.0, sb = 0.0;
    for (auto k : a) sa += x[k];
    for (auto k : hoods.Bij[i][jj]) sb += x[k];
    double kk = double(a.size());
    // D = W' - W = -sum_{A_I} X, so D~ carries the same sign
    CouplingSample c{w, w - sa, -double(n) * x[i], w - sb, -kk * x[j], double(n) * kk * hoods.sigma(i, j) / (sigma * sigma)};
    return c;
  };
  CouplingInfo inf;
  inf.name = "decomposable";
  inf.n = n;
  inf.r1_zero = false;
  inf.r2_zero = false;
  inf.r3_zero = true;
  inf.config_determines_wdd = false;
  inf.enumerable = fits_cap(leaves * n * maxk);
  inf.inner_enumerable = true;
  return make_coupling(prog, inf, 0.0, sigma);
}

// 1-dependent-style moving sums X_i = c (xi_i + ... + xi_{i+m}) of Rademacher xi, normalised to Var W = 1.
struct MovingSum {
  std::size_t n, m;
  double c;
  template <class Src>
  std::vector<double> operator()(Src& src) const {
    std::vector<double> xi(n + m);
    for (auto& v : xi) v = src.bernoulli(0.5) ? 1.0 : -1.0;
    std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k <= m; ++k) x[i] += c * xi[i + k];
    return x;
  }
  double leaves() const { return std::pow(2.0, double(n + m)); }
};

inline MovingSum moving_sum(std::size_t n, std::size_t m) {
  require(n >= 1, "need n >= 1");
  double s = 0.0;
  for (std::size_t j = 0; j < n + m; ++j) {
    // number of windows covering xi_j
    long lo = std::max<long>(0, long(j) - long(m)), hi = std::min<long>(long(n) - 1, long(j));
    double cnt = double(std::max<long>(0, hi - lo + 1));
    s += cnt * cnt;
  }
  return {n, m, 1.0 / std::sqrt(s)};
}

inline DependencyNeighborhoods moving_sum_neighborhoods(std::size_t n, std::size_t m, bool with_b, bool with_bij) {
  DependencyNeighborhoods h;
  auto within = [n](std::size_t i, std::size_t r) {
    std::vector<std::size_t> v;
    for (std::size_t j = 0; j < n; ++j)
      if ((j > i ? j - i : i - j) <= r) v.push_back(j);
    return v;
  };
  for (std::size_t i = 0; i < n; ++i) {
    h.A.push_back(within(i, m));
    if (with_b) h.B.push_back(within(i, 2 * m));
  }
  if (with_bij) {
    h.Bij.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      for (auto j : h.A[i]) {
        std::vector<std::size_t> b;
        for (std::size_t k = 0; k < n; ++k)
          if ((k > i ? k - i : i - k) <= m || (k > j ? k - j : j - k) <= m) b.push_back(k);
        h.Bij[i].push_back(b);
      }
    auto ms = moving_sum(n, m);
    h.sigma = [ms](std::size_t i, std::size_t j) {
      std::size_t d = i > j ? i - j : j - i;
      return d > ms.m ? 0.0 : ms.c * ms.c * double(ms.m + 1 - d);
    };
  }
  return h;
}

// von Mises pair statistic over two independent Rademacher families: X_(p,q) = xi_p + zeta_q + xi_p zeta_q.
struct VonMisesPairs {
  std::size_t n;
  template <class Src>
  std::vector<double> operator()(Src& src) const {
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = src.bernoulli(0.5) ? 1.0 : -1.0;
    for (auto& v : b) v = src.bernoulli(0.5) ? 1.0 : -1.0;
    std::vector<double> x(n * n);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q) x[p * n + q] = a[p] + b[q] + a[p] * b[q];
    return x;
  }
};

inline DependencyNeighborhoods von_mises_neighborhoods(std::size_t n) {
  DependencyNeighborhoods h;
  const std::size_t N = n * n;
  h.A.resize(N);
  h.Bij.resize(N);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q) {
      std::size_t i = p * n + q;
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l)
          if (k == p || l == q) h.A[i].push_back(k * n + l);
      for (auto j : h.A[i]) {
        std::size_t pp = j / n, qp = j % n;
        std::vector<std::size_t> b;
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t l = 0; l < n; ++l)
            if (k == p || k == pp || l == q || l == qp) b.push_back(k * n + l);
        h.Bij[i].push_back(b);
      }
    }
  h.sigma = [n](std::size_t i, std::size_t j) {
    bool sp = i / n == j / n, sq = i % n == j % n;
    return double(sp) + double(sq) + double(sp && sq);
  };
  return h;
}

inline double von_mises_variance(std::size_t n) {
  auto h = von_mises_neighborhoods(n);
  double v = 0.0;
  for (std::size_t i = 0; i < n * n; ++i)
    for (std::size_t j = 0; j < n * n; ++j) v += h.sigma(i, j);
  return v;
}

// ---- quadratic forms ------------------------------------------------------------

inline CouplingPtr quadratic_form_coupling(const std::vector<std::vector<double>>& a, const SummandLaw& xi_law) {
  const std::size_t n = a.size();
  require(n >= 1, "matrix must be non-empty");
  for (std::size_t i = 0; i < n; ++i) {
    require(a[i].size() == n, "matrix must be square");
    for (std::size_t j = 0; j < n; ++j) require(std::fabs(a[i][j] - a[j][i]) <= 1e-12, "matrix must be symmetric");
  }
  require(std::fabs(xi_law.mean()) < 1e-12 && std::fabs(xi_law.variance() - 1.0) < 1e-12,
          "xi must be centred with unit variance");
  double m4 = 0.0;
  if (xi_law.discrete())
    for (std::size_t k = 0; k < xi_law.values.size(); ++k) m4 += std::pow(xi_law.values[k], 4) * xi_law.probs[k];
  else m4 = xi_law.kind == SummandLaw::Kind::normal ? 3.0 : 1.8;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) var += i == j ? a[i][i] * a[i][i] * (m4 - 1.0) : 2.0 * a[i][j] * a[i][j];
  const bool degen = !(var > 1e-300);
  auto prog = [a, n, xi_law](auto& src) {
    std::vector<double> xi(n);
    for (auto& v : xi) v = xi_law.draw(src);
    src.mark();
    std::size_t I = src.index(n);
    double w = 0.0, yI = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) w += a[i][j] * xi[i] * xi[j];
    for (std::size_t i = 0; i < n; ++i) w -= a[i][i];
    for (std::size_t j = 0; j < n; ++j) yI += a[I][j] * xi[j];
    double g = -double(n) * (xi[I] * yI - a[I][I]);
    double wp = w - (2.0 * xi[I] * yI - a[I][I] * xi[I] * xi[I]);
    return make_sample(w, wp, g);
  };
  CouplingInfo inf;
  inf.name = "quadratic_form";
  inf.n = n;
  inf.enumerable = xi_law.discrete() && fits_cap(std::pow(double(xi_law.support_size()), double(n)) * n);
  inf.inner_enumerable = true;
  inf.degenerate = degen;
  if (degen) inf.flags.push_back("degenerate");
  return make_coupling(prog, inf, 0.0, degen ? 1.0 : std::sqrt(var));
}

// ---- size bias --------------------------------------------------------------------

// pair(src) -> (V, V^s); consumer-supplied law with mean mu.
template <class Pair>
CouplingPtr size_bias_coupling(Pair pair, double mu, double sigma, CouplingInfo inf, std::optional<double> g_value = {}) {
  require(mu > 0.0, "size bias needs mu > 0");
  require(sigma > 0.0, "size bias needs sigma > 0");
  double g = g_value.value_or(mu);
  auto prog = [pair, mu, g](auto& src) {
    auto [v, vs] = pair(src);
    if (v < 0.0) invalid_parameter("size-biased variable must be non-negative");
    return make_sample(v - mu, vs - mu, g);
  };
  if (g_value && *g_value != mu) {
    inf.exact_stein = false;
    inf.flags.push_back("misspecified-mu");
  }
  return make_coupling(prog, inf, 0.0, sigma);
}

inline CouplingPtr size_bias_bernoulli(double p, std::optional<double> g_value = {}) {
  require(p > 0.0 && p < 1.0, "p must lie in (0,1)");
  CouplingInfo inf;
  inf.name = "size_bias_bernoulli";
  inf.n = 1;
  inf.enumerable = true;
  inf.inner_enumerable = true;
  return size_bias_coupling([p](auto& src) { return std::make_pair(src.bernoulli(p) ? 1.0 : 0.0, 1.0); }, p,
                            std::sqrt(p * (1 - p)), inf, g_value);
}

// V = sum of n Bernoulli(p), V^s = V - xi_I + 1
inline CouplingPtr size_bias_binomial(std::size_t n, double p, std::optional<double> g_value = {}) {
  require(n >= 1 && p > 0.0 && p < 1.0, "binomial size bias needs n >= 1, p in (0,1)");
  CouplingInfo inf;
  inf.name = "size_bias_binomial";
  inf.n = n;
  inf.enumerable = fits_cap(std::pow(2.0, double(n)) * n);
  inf.inner_enumerable = true;
  double mu = double(n) * p;
  return size_bias_coupling(
      [n, p](auto& src) {
        std::vector<int> xi(n);
        double v = 0.0;
        for (auto& x : xi) v += (x = src.bernoulli(p) ? 1 : 0);
        src.mark();
        std::size_t i = src.index(n);
        return std::make_pair(v, v - xi[i] + 1.0);
      },
      mu, std::sqrt(mu * (1 - p)), inf, g_value);
}

// ---- interpolation ------------------------------------------------------------------

enum class InterpolationOrder { fixed, random };

// F(x) -> real on n independent coordinates drawn from `law`. mean: E F(X), pilot-estimated when absent.
template <class F>
CouplingPtr interpolation_coupling(F f, std::size_t n, SummandLaw law, InterpolationOrder order,
                                   std::optional<double> mean = {}, std::optional<double> sigma = {},
                                   std::uint64_t pilot = 1000000, std::uint64_t pilot_seed = 12345) {
  require(n >= 1, "need n >= 1");
  CouplingInfo inf;
  inf.name = order == InterpolationOrder::fixed ? "interpolation_fixed" : "interpolation_random";
  inf.n = n;
  double mu = 0.0, sd = 1.0;
  if (!mean || !sigma) {
    McOptions o{pilot, pilot_seed, 10000, 0};
    auto acc = run_chunked(o, Moments{}, [&](Rng& rng, std::uint64_t cnt, Moments& a, std::uint64_t) {
      RandomSource src(rng);
      std::vector<double> x(n);
      for (std::uint64_t r = 0; r < cnt; ++r) {
        for (auto& v : x) v = law.draw(src);
        a.add(f(x));
      }
    });
    mu = acc.mean;
    sd = std::sqrt(acc.variance());
    if (!mean) {
      // the residual is off by (E F - mu_hat) E f(W) at most
      inf.exact_stein = false;
      inf.r0_bound = acc.halfwidth() / (sigma ? *sigma : (sd > 0 ? sd : 1.0));
      inf.flags.push_back("pilot-centering");
    }
  }
  if (mean) mu = *mean;
  if (sigma) sd = *sigma;
  bool degen = !(sd > 0.0);
  inf.degenerate = degen;
  if (degen) inf.flags.push_back("degenerate");
  double fact = 1.0;
  for (std::size_t k = 2; k <= n; ++k) fact *= double(k);
  double k = double(law.support_size());
  inf.enumerable = law.discrete() && fits_cap(std::pow(k, 2.0 * n) * n * (order == InterpolationOrder::random ? fact : 1.0));
  inf.inner_enumerable = true;
  auto prog = [f, n, law, order, mu](auto& src) {
    std::vector<double> x(n), xp(n);
    for (auto& v : x) v = law.draw(src);
    for (auto& v : xp) v = law.draw(src);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (order == InterpolationOrder::random)
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[src.index(i)]);
    src.mark();
    std::size_t I = src.index(n) + 1;  // 1..n
    std::vector<double> y = x;
    for (std::size_t k2 = 0; k2 + 1 < I; ++k2) y[perm[k2]] = xp[perm[k2]];
    double v_prev = f(y);
    y[perm[I - 1]] = xp[perm[I - 1]];
    double v_cur = f(y);
    std::vector<double> single = x;
    single[perm[I - 1]] = xp[perm[I - 1]];
    return make_sample(f(x) - mu, f(single) - mu, 0.5 * double(n) * (v_cur - v_prev));
  };
  return make_coupling(prog, inf, 0.0, degen ? 1.0 : sd);
}

// ---- tabulated couplings and the abstract telescoping G ------------------------------

// A coupling given by an explicit finite table of configurations.
class TabulatedCoupling : public Coupling {
 public:
  TabulatedCoupling(Enumeration e, CouplingInfo inf) : e_(std::move(e)), info_(std::move(inf)) {
    double c = 0.0;
    for (const auto& cf : e_.configs) cum_.push_back(c += cf.prob);
    require(std::fabs(c - 1.0) <= 1e-12, "table probabilities must sum to 1");
    info_.enumerable = true;
    info_.inner_enumerable = true;
  }
  const CouplingInfo& info() const override { return info_; }
  CouplingSample draw(Rng& rng) const override {
    const auto& c = pick(rng);
    RandomSource src(rng);
    std::vector<double> w;
    for (const auto& x : c.inner) w.push_back(x.prob);
    return c.inner[src.categorical(w)].s;
  }
  std::optional<Configuration> draw_configuration(Rng& rng) const override {
    Configuration c = pick(rng);
    c.prob = 1.0;
    return c;
  }
  std::optional<Enumeration> enumerate(std::size_t cap = kOutcomeCap) const override {
    if (e_.size() > cap) return std::nullopt;
    return e_;
  }

 private:
  const Configuration& pick(Rng& rng) const {
    double u = std::uniform_real_distribution<double>(0.0, cum_.back())(rng);
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    std::size_t k = std::min<std::size_t>(std::size_t(it - cum_.begin()), cum_.size() - 1);
    return e_.configs[k];
  }
  Enumeration e_;
  CouplingInfo info_;
  std::vector<double> cum_;
};

struct TelescopeOutcome {
  double w, wp, v;
  double key_f, key_fp;  // cells of the sigma-algebras F (contains sigma(W)) and F' (contains sigma(W'))
};

struct TelescopeResult {
  std::shared_ptr<const Coupling> coupling;
  std::vector<double> term_norms;  // E|U_{2j}| for j = 0..depth
  double tail = 0.0;               // E|U_{2 depth}|
  bool contracting = true;
};

// G = -V + E(V|F') - E(E(V|F')|F) + ..., with depth pairs of projections.
template <class Prog>
TelescopeResult abstract_telescoping_g(Prog base, std::size_t depth) {
  auto leaves = enumerate_program(base);
  const std::size_t L = leaves.size();
  std::vector<double> p(L), u(L), g(L);
  for (std::size_t i = 0; i < L; ++i) {
    p[i] = leaves[i].config_prob * leaves[i].inner_prob;
    u[i] = leaves[i].value.v;
    g[i] = -u[i];
  }
  auto project = [&](const std::vector<double>& y, bool onto_fp) {
    std::map<long long, std::pair<double, double>> cell;
    auto key = [&](std::size_t i) {
      double k = onto_fp ? leaves[i].value.key_fp : leaves[i].value.key_f;
      return std::llround(k * 1e9);
    };
    for (std::size_t i = 0; i < L; ++i) {
      auto& c = cell[key(i)];
      c.first += p[i];
      c.second += p[i] * y[i];
    }
    std::vector<double> out(L);
    for (std::size_t i = 0; i < L; ++i) {
      auto& c = cell[key(i)];
      out[i] = c.first > 0 ? c.second / c.first : 0.0;
    }
    return out;
  };
  auto abs_mean = [&](const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < L; ++i) s += p[i] * std::fabs(y[i]);
    return s;
  };
  TelescopeResult r;
  r.term_norms.push_back(abs_mean(u));
  for (std::size_t d = 0; d < depth; ++d) {
    auto u1 = project(u, true);
    auto u2 = project(u1, false);
    for (std::size_t i = 0; i < L; ++i) g[i] += u1[i] - u2[i];
    u = std::move(u2);
    r.term_norms.push_back(abs_mean(u));
  }
  r.tail = r.term_norms.back();
  for (std::size_t j = 1; j < r.term_norms.size(); ++j)
    if (r.term_norms[j] > r.term_norms[j - 1] * (1 + 1e-12) && r.term_norms[j] > 1e-14) r.contracting = false;
  Enumeration e;
  std::size_t cur = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < L; ++i) {
    if (leaves[i].config != cur) {
      e.configs.push_back({leaves[i].config_prob, {}});
      cur = leaves[i].config;
    }
    e.configs.back().inner.push_back({leaves[i].inner_prob, make_sample(leaves[i].value.w, leaves[i].value.wp, g[i])});
  }
  CouplingInfo inf;
  inf.name = "abstract_telescoping";
  inf.exact_stein = false;
  if (!r.contracting) inf.flags.push_back("non-contracting");
  r.coupling = std::make_shared<TabulatedCoupling>(std::move(e), inf);
  return r;
}

}  // namespace stein
