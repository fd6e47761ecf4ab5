#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "../core.hpp"
#include "../couplings.hpp"

namespace stein {

struct UrnFunction {
  std::string name;
  std::function<double(long)> h;
};

inline UrnFunction urn_count_eq(long k) {
  require(k >= 0, "k must be non-negative");
  return {"count_eq_" + std::to_string(k), [k](long x) { return x == k ? 1.0 : 0.0; }};
}
inline UrnFunction urn_empty() { return {"empty", [](long x) { return x == 0 ? 1.0 : 0.0; }}; }
inline UrnFunction urn_exceed(long m0) {
  require(m0 >= 0, "m0 must be non-negative");
  return {"exceed_" + std::to_string(m0), [m0](long x) { return x > m0 ? 1.0 : 0.0; }};
}
inline UrnFunction urn_excess(long m0) {
  require(m0 >= 0, "m0 must be non-negative");
  return {"excess_" + std::to_string(m0), [m0](long x) { return x > m0 ? double(x - m0) : 0.0; }};
}
inline UrnFunction urn_zero() { return {"zero", [](long) { return 0.0; }}; }

inline std::vector<std::string> occupancy_statistics_library() { return {"empty", "count_eq", "exceed", "excess"}; }

inline UrnFunction urn_function_by_name(const std::string& name, long param) {
  if (name == "empty") return urn_empty();
  if (name == "count_eq") return urn_count_eq(param);
  if (name == "exceed" || name == "threshold") return urn_exceed(param);
  if (name == "excess") return urn_excess(param);
  if (name == "zero") return urn_zero();
  invalid_parameter("unknown urn function '" + name + "'");
}

// m balls into n urns with probabilities p; U = sum_i h_i(xi_i).
struct OccupancyInstance {
  std::size_t n = 0;
  long m = 0;
  std::vector<double> p;
  std::vector<UrnFunction> h;  // one shared function or one per urn
  bool shifted = false;        // h_i replaced by h_i - h_i(0)

  static OccupancyInstance make(long m, std::vector<double> p, std::vector<UrnFunction> h) {
    OccupancyInstance o;
    o.n = p.size();
    o.m = m;
    o.p = std::move(p);
    o.h = std::move(h);
    require(o.n >= 1 && o.m >= 0, "need at least one urn and m >= 0");
    require(o.h.size() == 1 || o.h.size() == o.n, "give one urn function or one per urn");
    KahanSum s;
    for (double x : o.p) {
      require(x >= 0.0 && std::isfinite(x), "urn probabilities must be non-negative");
      s.add(x);
    }
    require(std::fabs(s.value() - 1.0) <= 1e-12, "urn probabilities must sum to 1");
    for (auto& f : o.h) {
      double h0 = f.h(0);
      if (h0 != 0.0) {
        o.shifted = true;
        auto g = f.h;
        f.h = [g, h0](long x) { return g(x) - h0; };
      }
    }
    return o;
  }
  static OccupancyInstance equiprobable(std::size_t n, long m, UrnFunction h) {
    return make(m, std::vector<double>(n, 1.0 / double(n)), {std::move(h)});
  }

  double hval(std::size_t i, long x) const { return (h.size() == 1 ? h[0] : h[i]).h(x); }
  bool shared_h() const { return h.size() == 1; }
  bool equal_p() const {
    for (double x : p)
      if (std::fabs(x - p[0]) > 1e-15) return false;
    return true;
  }
  double p_bar() const { return *std::max_element(p.begin(), p.end()); }
  double h_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < (shared_h() ? 1 : n); ++i)
      for (long x = 0; x <= m; ++x) s = std::max(s, std::fabs(hval(i, x)));
    return s;
  }
  double dh_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < (shared_h() ? 1 : n); ++i)
      for (long x = 0; x < m; ++x) s = std::max(s, std::fabs(hval(i, x + 1) - hval(i, x)));
    return s;
  }
};

namespace detail {
// binomial pmf restricted to the range where it exceeds 1e-18
struct PmfRange {
  long lo = 0;
  std::vector<double> w;
};
inline PmfRange trimmed_pmf(long m, double p) {
  auto pm = binomial_pmf(m, p);
  long lo = 0, hi = m;
  while (lo < hi && pm[lo] < 1e-18) ++lo;
  while (hi > lo && pm[hi] < 1e-18) --hi;
  return {lo, std::vector<double>(pm.begin() + lo, pm.begin() + hi + 1)};
}

inline double occupancy_mean_i(const OccupancyInstance& o, std::size_t i) {
  auto r = trimmed_pmf(o.m, o.p[i]);
  KahanSum s;
  for (std::size_t k = 0; k < r.w.size(); ++k) s.add(r.w[k] * o.hval(i, r.lo + long(k)));
  return s.value();
}

// E h_i(xi_i) h_j(xi_j), conditioning on xi_i
inline double occupancy_cross(const OccupancyInstance& o, std::size_t i, std::size_t j) {
  auto ri = trimmed_pmf(o.m, o.p[i]);
  KahanSum s;
  for (std::size_t a = 0; a < ri.w.size(); ++a) {
    long xa = ri.lo + long(a);
    double hi = o.hval(i, xa);
    if (hi == 0.0) continue;
    double q = o.p[i] < 1.0 ? std::min(1.0, o.p[j] / (1.0 - o.p[i])) : 0.0;
    auto rj = trimmed_pmf(o.m - xa, q);
    KahanSum t;
    for (std::size_t b = 0; b < rj.w.size(); ++b) t.add(rj.w[b] * o.hval(j, rj.lo + long(b)));
    s.add(ri.w[a] * hi * t.value());
  }
  return s.value();
}

inline double occupancy_var_i(const OccupancyInstance& o, std::size_t i, double mu) {
  auto r = trimmed_pmf(o.m, o.p[i]);
  KahanSum s;
  for (std::size_t k = 0; k < r.w.size(); ++k) {
    double v = o.hval(i, r.lo + long(k)) - mu;
    s.add(r.w[k] * v * v);
  }
  return s.value();
}

// balls added one urn at a time: multinomial(count; weights over idx)
template <class Src>
void multinomial_add(Src& src, std::vector<long>& urns, long count, const std::vector<std::size_t>& idx,
                     const std::vector<double>& p) {
  double rest = 0.0;
  for (auto k : idx) rest += p[k];
  for (std::size_t t = 0; t < idx.size() && count > 0; ++t) {
    std::size_t k = idx[t];
    double q = t + 1 == idx.size() || rest <= 0.0 ? 1.0 : std::min(1.0, p[k] / rest);
    long b = src.binomial(count, q);
    urns[k] += b;
    count -= b;
    rest -= p[k];
  }
}

// removes balls one at a time, uniformly among the balls in urns idx
template <class Src>
void uniform_remove(Src& src, std::vector<long>& urns, long count, const std::vector<std::size_t>& idx) {
  std::vector<double> w(idx.size());
  for (long r = 0; r < count; ++r) {
    for (std::size_t t = 0; t < idx.size(); ++t) w[t] = double(urns[idx[t]]);
    urns[idx[src.categorical(w)]] -= 1;
  }
}
}  // namespace detail

struct OccupancyDraw {
  std::vector<long> white, black, red;
  std::size_t i = 0;
  std::vector<char> kbar;  // membership of K-bar_I
  CouplingSample raw;      // unstandardised: U - mu, U' - mu, G, U'' - mu
};

struct OccupancyModel {
  OccupancyInstance inst;
  std::vector<double> mu_i;
  std::vector<std::size_t> suffix_order;
  std::vector<double> suffix;  // suffix[k] = sum_{l >= k} p_l
  double mu = 0.0;

  explicit OccupancyModel(OccupancyInstance o) : inst(std::move(o)) {
    if (inst.shared_h() && inst.equal_p()) mu_i.assign(inst.n, detail::occupancy_mean_i(inst, 0));
    else
      for (std::size_t i = 0; i < inst.n; ++i) mu_i.push_back(detail::occupancy_mean_i(inst, i));
    KahanSum s;
    for (double v : mu_i) s.add(v);
    mu = s.value();
    suffix.assign(inst.n + 1, 0.0);
    for (std::size_t k = inst.n; k-- > 0;) suffix[k] = suffix[k + 1] + inst.p[k];
  }

  double u_of(const std::vector<long>& x) const {
    double u = 0.0;
    for (std::size_t j = 0; j < inst.n; ++j) u += inst.hval(j, x[j]);
    return u;
  }

  template <class Src>
  OccupancyDraw draw(Src& src) const {
    const std::size_t n = inst.n;
    const auto& p = inst.p;
    OccupancyDraw d;
    d.white.assign(n, 0);
    long left = inst.m;
    for (std::size_t k = 0; k < n && left > 0; ++k) {
      double q = k + 1 == n || suffix[k] <= 0.0 ? 1.0 : std::min(1.0, p[k] / suffix[k]);
      long b = src.binomial(left, q);
      d.white[k] = b;
      left -= b;
    }
    src.mark();
    const std::size_t i = d.i = src.index(n);
    d.black = d.white;
    d.black[i] = src.binomial(inst.m, p[i]);
    std::vector<std::size_t> others;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) others.push_back(k);
    long n1 = d.white[i] - d.black[i];
    if (n1 > 0) detail::multinomial_add(src, d.black, n1, others, p);
    else if (n1 < 0) detail::uniform_remove(src, d.black, -n1, others);

    d.kbar.assign(n, 0);
    std::vector<std::size_t> kb, kbc;
    double pk = 0.0;
    long n2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i || d.black[k] != d.white[k]) {
        d.kbar[k] = 1;
        kb.push_back(k);
        pk += p[k];
        n2 += d.white[k];
      } else {
        kbc.push_back(k);
      }
    }
    if (kbc.empty()) pk = 1.0;
    d.red = d.white;
    for (auto k : kb) d.red[k] = 0;
    long n2pp = src.binomial(inst.m, std::min(1.0, pk));
    detail::multinomial_add(src, d.red, n2pp, kb, p);
    long n3 = n2 - n2pp;
    if (n3 > 0) detail::multinomial_add(src, d.red, n3, kbc, p);
    else if (n3 < 0) detail::uniform_remove(src, d.red, -n3, kbc);

    double u = u_of(d.white), up = u_of(d.black), upp = u_of(d.red);
    d.raw = make_sample(u - mu, up - mu, -double(n) * (inst.hval(i, d.white[i]) - mu_i[i]));
    d.raw.wdd = upp - mu;
    return d;
  }
};

// Var U by exact pair sums when feasible, otherwise by a pilot run.
inline double occupancy_variance(const OccupancyModel& md, std::uint64_t pilot = 200000, std::uint64_t seed = 777) {
  const auto& o = md.inst;
  const std::size_t n = o.n;
  if (o.shared_h() && o.equal_p()) {
    double v = detail::occupancy_var_i(o, 0, md.mu_i[0]);
    double c = n >= 2 ? detail::occupancy_cross(o, 0, 1) - md.mu_i[0] * md.mu_i[1] : 0.0;
    return std::max(0.0, double(n) * v + double(n) * double(n - 1) * c);
  }
  double work = double(n) * double(n) * std::pow(std::min<double>(double(o.m) + 1.0, 60.0), 2);
  if (work <= 5e8) {
    KahanSum s;
    for (std::size_t i = 0; i < n; ++i) {
      s.add(detail::occupancy_var_i(o, i, md.mu_i[i]));
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) s.add(detail::occupancy_cross(o, i, j) - md.mu_i[i] * md.mu_i[j]);
    }
    return std::max(0.0, s.value());
  }
  McOptions op{pilot, seed, 10000, 0};
  auto acc = run_chunked(op, Moments{}, [&](Rng& rng, std::uint64_t cnt, Moments& a, std::uint64_t) {
    RandomSource src(rng);
    for (std::uint64_t r = 0; r < cnt; ++r) a.add(md.draw(src).raw.w);
  });
  return acc.variance();
}

struct OccupancyCoupling {
  std::shared_ptr<OccupancyModel> model;
  double sigma = 1.0;
  CouplingPtr coupling;
};

inline OccupancyCoupling occupancy_coupling(const OccupancyInstance& inst) {
  auto md = std::make_shared<OccupancyModel>(inst);
  double var = occupancy_variance(*md);
  OccupancyCoupling oc;
  oc.model = md;
  CouplingInfo inf;
  inf.name = "occupancy";
  inf.n = inst.n;
  inf.r3_zero = true;
  inf.config_determines_wdd = false;
  inf.inner_enumerable = true;
  inf.enumerable = inst.n * std::size_t(std::max<long>(inst.m, 1)) <= 16;
  if (inst.shifted) inf.flags.push_back("h-shifted-to-zero");
  inf.degenerate = !(var > 1e-300);
  if (inf.degenerate) inf.flags.push_back("degenerate");
  if (inst.h_norm() < 1.0 || inst.dh_norm() < 1.0) inf.flags.push_back("norm-below-one");
  oc.sigma = inf.degenerate ? 1.0 : std::sqrt(var);
  auto prog = [md](auto& src) { return md->draw(src).raw; };
  oc.coupling = make_coupling(prog, inf, 0.0, oc.sigma);
  return oc;
}

}  // namespace stein
