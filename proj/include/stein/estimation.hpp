#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "error.hpp"
#include "stats.hpp"

namespace stein {

inline Estimate missing_estimate() { return {std::numeric_limits<double>::quiet_NaN(), 0.0, 0, false}; }
inline Estimate exact_zero() { return {0.0, 0.0, 0, true}; }

struct ErrorTermReport {
  Estimate r0 = missing_estimate();  // lower estimate from the test family
  Estimate r1 = missing_estimate(), r2 = missing_estimate(), r3 = missing_estimate();
  Estimate r3_hat = missing_estimate();  // E|E^W(GD) - 1|
  Estimate r4 = missing_estimate(), r5 = missing_estimate(), r4p = missing_estimate(), r5p = missing_estimate();
  Estimate r6 = missing_estimate(), r6p = missing_estimate();
  Estimate r7 = missing_estimate(), r8 = missing_estimate();
  Estimate r9 = missing_estimate(), r10 = missing_estimate();
  Estimate r11 = missing_estimate(), r12 = missing_estimate();
  Estimate var_cond_gd = missing_estimate();
  Estimate e_abs_w = missing_estimate(), e_w1_sq = missing_estimate();
  Estimate e_gd2 = missing_estimate(), e_gdt_dp = missing_estimate(), e_s_dp = missing_estimate();
  Estimate m3_d = missing_estimate(), m3_dt = missing_estimate(), m3_dp = missing_estimate(), m3_g = missing_estimate();
  std::optional<double> epsilon;
  std::vector<std::string> flags;
};

// theta(sample) bounds sup_a P[a <= W <= a + eps | X] for the configuration behind the sample.
struct ConditionalConcentration {
  double epsilon = 0.1;
  std::function<double(const CouplingSample&)> theta;
};

// Concentration from a Kolmogorov estimate of a conditional law with spread `scale`.
inline double theta_lemma8(double eps, double scale, double dk) {
  require(eps > 0.0 && scale > 0.0 && dk >= 0.0, "concentration inputs out of range");
  return std::min(1.0, eps / (scale * std::sqrt(2.0 * M_PI)) + 2.0 * dk);
}

namespace detail {
enum Term : std::size_t {
  kR4, kR5, kR4p, kR5p, kR9, kR10, kAbsW, kW1sq, kGD2, kGDtDp, kSDp, kM3d, kM3dt, kM3dp, kM3g, kR6, kR6p, kR11, kR12,
  kTermCount
};

inline void term_values(const CouplingSample& c, const TruncationParams* tr, const ConditionalConcentration* cc,
                        double* out) {
  const double d = c.d(), dp = c.dp();
  const double gd = c.g * d, gts = c.g * c.dt - c.s;
  out[kR4] = std::fabs(gd) * (std::fabs(d) > 1.0 ? 1.0 : 0.0);
  out[kR5] = std::fabs(c.g) * std::min(d * d, 1.0);
  out[kR4p] = std::fabs(gts) * (std::fabs(dp) > 1.0 ? 1.0 : 0.0);
  out[kR5p] = std::fabs(gts) * std::min(std::fabs(dp), 1.0);
  out[kR9] = std::fabs(gts) * (std::fabs(c.w) + 1.0) * std::min(std::fabs(dp), 1.0);
  out[kR10] = std::fabs(c.g) * (std::fabs(c.w) + 1.0) * std::min(d * d, 1.0);
  out[kAbsW] = std::fabs(c.w);
  out[kW1sq] = (std::fabs(c.w) + 1.0) * (std::fabs(c.w) + 1.0);
  out[kGD2] = std::fabs(c.g * d * d);
  out[kGDtDp] = std::fabs(c.g * c.dt * dp);
  out[kSDp] = std::fabs(c.s * dp);
  out[kM3d] = std::pow(std::fabs(d), 3);
  out[kM3dt] = std::pow(std::fabs(c.dt), 3);
  out[kM3dp] = std::pow(std::fabs(dp), 3);
  out[kM3g] = std::pow(std::fabs(c.g), 3);
  if (tr) {
    bool f6 = std::fabs(c.g) > tr->alpha || std::fabs(d) > tr->beta;
    bool f6p = std::fabs(c.g) > tr->alpha || std::fabs(c.dt) > tr->beta_t || std::fabs(dp) > tr->beta_p ||
               std::fabs(c.s) > tr->gamma;
    out[kR6] = f6 ? std::fabs(gd) : 0.0;
    out[kR6p] = f6p ? std::fabs(gts) : 0.0;
  } else {
    out[kR6] = out[kR6p] = 0.0;
  }
  if (cc) {
    double th = cc->theta(c);
    if (!(th >= 0.0 && th <= 1.0)) numeric_error("concentration estimate outside [0,1]");
    out[kR11] = std::fabs(gts * dp) * th;
    out[kR12] = std::fabs(c.g * d * d) * th;
  } else {
    out[kR11] = out[kR12] = 0.0;
  }
  for (std::size_t i = 0; i < kTermCount; ++i)
    if (!std::isfinite(out[i])) numeric_error("non-finite error-term value");
}

inline void fill_terms(ErrorTermReport& r, const std::vector<Estimate>& e, bool trunc, bool conc) {
  r.r4 = e[kR4]; r.r5 = e[kR5]; r.r4p = e[kR4p]; r.r5p = e[kR5p];
  r.r9 = e[kR9]; r.r10 = e[kR10];
  r.e_abs_w = e[kAbsW]; r.e_w1_sq = e[kW1sq];
  r.e_gd2 = e[kGD2]; r.e_gdt_dp = e[kGDtDp]; r.e_s_dp = e[kSDp];
  r.m3_d = e[kM3d]; r.m3_dt = e[kM3dt]; r.m3_dp = e[kM3dp]; r.m3_g = e[kM3g];
  if (trunc) { r.r6 = e[kR6]; r.r6p = e[kR6p]; }
  if (conc) { r.r11 = e[kR11]; r.r12 = e[kR12]; }
}
}  // namespace detail

inline ErrorTermReport estimate_unconditional_terms(const Coupling& cp, const McOptions& o,
                                                    const TruncationParams* trunc = nullptr,
                                                    const ConditionalConcentration* cc = nullptr) {
  require(o.n_samples >= 2, "need at least two samples");
  using namespace detail;
  auto acc = run_chunked(o, MomentsVec(kTermCount), [&](Rng& rng, std::uint64_t cnt, MomentsVec& a, std::uint64_t) {
    double v[kTermCount];
    for (std::uint64_t i = 0; i < cnt; ++i) {
      term_values(cp.draw(rng), trunc, cc, v);
      for (std::size_t k = 0; k < kTermCount; ++k) a[k].add(v[k]);
    }
  });
  std::vector<Estimate> e;
  for (std::size_t k = 0; k < kTermCount; ++k) e.push_back(acc[k].estimate());
  ErrorTermReport r;
  fill_terms(r, e, trunc != nullptr, cc != nullptr);
  if (cc) r.epsilon = cc->epsilon;
  return r;
}

inline ErrorTermReport exact_unconditional_terms(const Enumeration& en, const TruncationParams* trunc = nullptr,
                                                 const ConditionalConcentration* cc = nullptr) {
  using namespace detail;
  std::vector<KahanSum> s(kTermCount);
  double v[kTermCount];
  auto flat = en.flatten();
  for (const auto& x : flat) {
    term_values(x.s, trunc, cc, v);
    for (std::size_t k = 0; k < kTermCount; ++k) s[k].add(x.prob * v[k]);
  }
  std::vector<Estimate> e;
  for (auto& k : s) e.push_back({k.value(), 0.0, flat.size(), true});
  ErrorTermReport r;
  fill_terms(r, e, trunc != nullptr, cc != nullptr);
  if (cc) r.epsilon = cc->epsilon;
  return r;
}

inline std::pair<Estimate, Estimate> estimate_truncated_terms(const Coupling& cp, const TruncationParams& tr,
                                                              const McOptions& o) {
  require(tr.alpha >= 0 && tr.beta >= 0 && tr.beta_t >= 0 && tr.beta_p >= 0 && tr.gamma >= 0,
          "truncation levels must be non-negative");
  auto r = estimate_unconditional_terms(cp, o, &tr);
  return {r.r6, r.r6p};
}

// ---- conditional terms --------------------------------------------------------

struct ConditionalTerms {
  Estimate r1 = missing_estimate(), r2 = missing_estimate(), r3 = missing_estimate();
  Estimate r3_hat = missing_estimate();
  Estimate var_cond_gd = missing_estimate();
  std::vector<std::string> flags;
};

namespace detail {
struct CondValues {
  double gd, gdt, s;
};

inline CondValues cond_values(const Configuration& c) {
  CondValues v{0, 0, 0};
  for (const auto& x : c.inner) {
    v.gd += x.prob * x.s.g * x.s.d();
    v.gdt += x.prob * x.s.g * x.s.dt;
    v.s += x.prob * x.s.s;
  }
  return v;
}

inline Estimate sample_variance_estimate(const std::vector<double>& x) {
  const double n = double(x.size());
  if (x.size() < 2) return {0.0, 0.0, x.size(), false};
  double m = 0.0;
  for (double a : x) m += a;
  m /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double a : x) {
    double d2 = (a - m) * (a - m);
    m2 += d2;
    m4 += d2 * d2;
  }
  double var = m2 / (n - 1.0);
  double mu2 = m2 / n, mu4 = m4 / n;
  double se = std::sqrt(std::max(0.0, mu4 - mu2 * mu2) / n);
  return {var, kZ99 * se, x.size(), false};
}
}  // namespace detail

// Conditions on the coupling's configuration, which refines sigma(W) (and sigma(W'')) when the coupling says so.
inline ConditionalTerms estimate_conditional_terms(const Coupling& cp, const McOptions& o) {
  const auto& inf = cp.info();
  if (!inf.inner_enumerable) unsupported("coupling '" + inf.name + "' has no conditional hook");
  ConditionalTerms t;
  auto acc = run_chunked(o, Collect<detail::CondValues>{},
                         [&](Rng& rng, std::uint64_t cnt, Collect<detail::CondValues>& a, std::uint64_t) {
                           for (std::uint64_t i = 0; i < cnt; ++i) a.v.push_back(detail::cond_values(*cp.draw_configuration(rng)));
                         });
  Moments r1, r2, r3, r3h;
  std::vector<double> gdv;
  for (const auto& v : acc.v) {
    r1.add(std::fabs(v.gd - v.gdt));
    r2.add(std::fabs(1.0 - v.s));
    r3.add(std::fabs(v.gdt - v.s));
    r3h.add(std::fabs(v.gd - 1.0));
    gdv.push_back(v.gd);
  }
  if (inf.config_determines_w) {
    t.r1 = inf.r1_zero ? exact_zero() : r1.estimate();
    t.r2 = inf.r2_zero ? exact_zero() : r2.estimate();
    t.r3_hat = r3h.estimate();
    t.var_cond_gd = detail::sample_variance_estimate(gdv);
  } else {
    if (inf.r1_zero) t.r1 = exact_zero();
    if (inf.r2_zero) t.r2 = exact_zero();
    t.flags.push_back("configuration-does-not-determine-W");
  }
  if (inf.r3_zero) {
    t.r3 = exact_zero();
    t.flags.push_back("r3-zero-by-construction");
  } else if (inf.config_determines_wdd) {
    t.r3 = r3.estimate();
  } else {
    t.flags.push_back("r3-unavailable");
  }
  return t;
}

// Exact conditional terms from an enumeration; conditioning on W (and W'') itself.
inline ConditionalTerms exact_conditional_terms(const Enumeration& en) {
  std::vector<KeyedValue> d1, d2, d3, dh, dg;
  for (const auto& x : en.flatten()) {
    const auto& c = x.s;
    d1.push_back({x.prob, c.w, c.g * c.d() - c.g * c.dt});
    d2.push_back({x.prob, c.w, 1.0 - c.s});
    d3.push_back({x.prob, c.wdd, c.g * c.dt - c.s});
    dh.push_back({x.prob, c.w, c.g * c.d() - 1.0});
    dg.push_back({x.prob, c.w, c.g * c.d()});
  }
  ConditionalTerms t;
  t.r1 = {conditional_abs_mean(d1), 0.0, 0, true};
  t.r2 = {conditional_abs_mean(d2), 0.0, 0, true};
  t.r3 = {conditional_abs_mean(d3), 0.0, 0, true};
  t.r3_hat = {conditional_abs_mean(dh), 0.0, 0, true};
  t.var_cond_gd = {conditional_variance(dg), 0.0, 0, true};
  return t;
}

// ---- r7, r8 -------------------------------------------------------------------

struct R78 {
  Estimate r7, r8;
  std::vector<double> t;
  std::vector<double> var_k;  // variance curve on the grid
  std::vector<std::string> flags;
};

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t pts) {
  require(pts >= 2 && hi > lo, "grid needs two points and hi > lo");
  std::vector<double> t(pts);
  for (std::size_t i = 0; i < pts; ++i) t[i] = lo + (hi - lo) * double(i) / double(pts - 1);
  return t;
}

namespace detail {
inline double khat(double g, double d, double t) {
  if (t >= 0.0 && t < d) return g;
  if (t < 0.0 && t >= d) return -g;
  return 0.0;
}

inline double trapz(const std::vector<double>& t, const std::vector<double>& y, std::size_t step = 1) {
  double s = 0.0;
  for (std::size_t i = 0; i + step < t.size(); i += step) s += 0.5 * (t[i + step] - t[i]) * (y[i] + y[i + step]);
  return s;
}

inline R78 finish_r78(const std::vector<double>& t, std::vector<double> var, const std::vector<double>& ci, bool exact) {
  R78 r;
  std::vector<double> tv(t.size()), tci(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    tv[i] = std::fabs(t[i]) * var[i];
    tci[i] = std::fabs(t[i]) * ci[i];
  }
  double r7 = trapz(t, var), r8sq = trapz(t, tv);
  double r7ci = trapz(t, ci), r8sqci = trapz(t, tci);
  r.r7 = {r7, r7ci, 0, exact};
  double r8 = std::sqrt(std::max(0.0, r8sq));
  double r8hi = std::sqrt(std::max(0.0, r8sq + r8sqci));
  r.r8 = {r8, r8hi - r8, 0, exact};
  // grid refinement check: the same data on every other point
  if (t.size() >= 5 && t.size() % 2 == 1) {
    double coarse = trapz(t, var, 2);
    if (std::fabs(coarse - r7) > 0.01 * std::max(std::fabs(r7), 1e-12)) r.flags.push_back("grid-refinement-warning");
  }
  r.t = t;
  r.var_k = std::move(var);
  return r;
}
}  // namespace detail

// Var K^W(t) <= Var K^X(t) where X is the configuration; estimated from independent
// configuration pairs as 1/2 (K^X(t) - K^{X*}(t))^2.
inline R78 estimate_r7_r8(const Coupling& cp, const McOptions& pairs, std::size_t grid_points = 201) {
  if (!cp.info().inner_enumerable) unsupported("coupling '" + cp.info().name + "' has no component access");
  // refine internally so the reported grid is checked against its doubling
  const std::size_t fine = 2 * grid_points - 1;
  auto tf = uniform_grid(-1.0, 1.0, fine);
  auto kx = [&](const Configuration& c, std::vector<double>& k) {
    std::fill(k.begin(), k.end(), 0.0);
    for (const auto& x : c.inner)
      for (std::size_t j = 0; j < tf.size(); ++j) k[j] += x.prob * detail::khat(x.s.g, x.s.d(), tf[j]);
  };
  auto acc = run_chunked(pairs, MomentsVec(fine), [&](Rng& rng, std::uint64_t cnt, MomentsVec& a, std::uint64_t) {
    std::vector<double> k1(fine), k2(fine);
    for (std::uint64_t i = 0; i < cnt; ++i) {
      kx(*cp.draw_configuration(rng), k1);
      kx(*cp.draw_configuration(rng), k2);
      for (std::size_t j = 0; j < fine; ++j) a[j].add(0.5 * (k1[j] - k2[j]) * (k1[j] - k2[j]));
    }
  });
  std::vector<double> var(fine), ci(fine);
  for (std::size_t j = 0; j < fine; ++j) {
    var[j] = acc[j].mean;
    ci[j] = acc[j].halfwidth();
  }
  // report on the requested grid (every other fine point), refinement flag from the fine grid
  std::vector<double> t, v, c;
  for (std::size_t j = 0; j < fine; j += 2) {
    t.push_back(tf[j]);
    v.push_back(var[j]);
    c.push_back(ci[j]);
  }
  R78 r = detail::finish_r78(t, v, c, false);
  double r7fine = detail::trapz(tf, var);
  r.flags.clear();
  if (std::fabs(r7fine - r.r7.value) > 0.01 * std::max(std::fabs(r7fine), 1e-12)) r.flags.push_back("grid-refinement-warning");
  return r;
}

// Exact variance curves from an enumeration. by_w = false conditions on the configuration
// (the quantity estimate_r7_r8 targets), by_w = true conditions on W itself.
inline R78 exact_r7_r8(const Enumeration& en, bool by_w, std::size_t grid_points = 201) {
  auto t = uniform_grid(-1.0, 1.0, grid_points);
  std::vector<double> var(t.size()), ci(t.size(), 0.0);
  for (std::size_t j = 0; j < t.size(); ++j) {
    std::vector<KeyedValue> kv;
    if (by_w) {
      for (const auto& x : en.flatten()) kv.push_back({x.prob, x.s.w, detail::khat(x.s.g, x.s.d(), t[j])});
      var[j] = conditional_variance(std::move(kv));
    } else {
      KahanSum m1, m2;
      for (const auto& c : en.configs) {
        double k = 0.0;
        for (const auto& x : c.inner) k += x.prob * detail::khat(x.s.g, x.s.d(), t[j]);
        m1.add(c.prob * k);
        m2.add(c.prob * k * k);
      }
      var[j] = std::max(0.0, m2.value() - m1.value() * m1.value());
    }
  }
  return detail::finish_r78(t, var, ci, true);
}

// Everything at once; exact when the coupling enumerates.
struct EstimateOptions {
  std::optional<TruncationParams> trunc;
  std::optional<ConditionalConcentration> conc;
  bool r7r8 = false;
  std::uint64_t n_configs = 20000;
  std::uint64_t n_pairs = 20000;
};

inline ErrorTermReport estimate_all(const Coupling& cp, const TestFunctionFamily& fam, const McOptions& o,
                                    const EstimateOptions& eo = {}) {
  const TruncationParams* tr = eo.trunc ? &*eo.trunc : nullptr;
  const ConditionalConcentration* cc = eo.conc ? &*eo.conc : nullptr;
  ErrorTermReport r;
  if (auto en = cp.enumerate()) {
    r = exact_unconditional_terms(*en, tr, cc);
    auto res = stein_residual_exact(*en, fam);
    r.r0 = {res.r0_lower, 0.0, 0, true};
    auto ct = exact_conditional_terms(*en);
    r.r1 = ct.r1; r.r2 = ct.r2; r.r3 = ct.r3; r.r3_hat = ct.r3_hat; r.var_cond_gd = ct.var_cond_gd;
    if (eo.r7r8) {
      auto rr = exact_r7_r8(*en, true);
      r.r7 = rr.r7; r.r8 = rr.r8;
    }
    r.flags.push_back("exact-enumeration");
    return r;
  }
  r = estimate_unconditional_terms(cp, o, tr, cc);
  auto res = stein_residual_mc(cp, fam, o);
  r.r0 = {res.r0_lower, res.r0_ci, o.n_samples, false};
  if (cp.info().exact_stein) r.r0 = exact_zero();
  const auto& inf = cp.info();
  if (inf.inner_enumerable) {
    McOptions oc = o;
    oc.n_samples = eo.n_configs;
    auto ct = estimate_conditional_terms(cp, oc);
    r.r1 = ct.r1; r.r2 = ct.r2; r.r3 = ct.r3; r.r3_hat = ct.r3_hat; r.var_cond_gd = ct.var_cond_gd;
    r.flags.insert(r.flags.end(), ct.flags.begin(), ct.flags.end());
    if (eo.r7r8) {
      McOptions op = o;
      op.n_samples = eo.n_pairs;
      auto rr = estimate_r7_r8(cp, op);
      r.r7 = rr.r7; r.r8 = rr.r8;
      r.flags.insert(r.flags.end(), rr.flags.begin(), rr.flags.end());
    }
  } else {
    if (inf.r1_zero) r.r1 = exact_zero();
    if (inf.r2_zero) r.r2 = exact_zero();
    if (inf.r3_zero) r.r3 = exact_zero();
    r.flags.push_back("no-conditional-hook");
  }
  return r;
}

// ---- bound evaluators ---------------------------------------------------------

struct BoundReport {
  std::string id;
  double value = 0.0;
  bool condition_ok = true;
  std::vector<std::pair<std::string, double>> inputs;
  std::vector<std::string> flags;
};

namespace detail {
inline double need(const Estimate& e, const char* name) {
  if (!std::isfinite(e.value)) invalid_parameter(std::string("missing error term ") + name);
  if (e.value < 0.0) invalid_parameter(std::string("negative error term ") + name);
  return e.value;
}
inline double need(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) invalid_parameter(std::string("input must be finite and non-negative: ") + name);
  return v;
}
}  // namespace detail

inline BoundReport bound_theorem1(const ErrorTermReport& r) {
  using detail::need;
  double r0 = need(r.r0, "r0"), r1 = need(r.r1, "r1"), r2 = need(r.r2, "r2"), r3 = need(r.r3, "r3");
  double r4 = need(r.r4, "r4"), r5 = need(r.r5, "r5"), r4p = need(r.r4p, "r4p"), r5p = need(r.r5p, "r5p");
  BoundReport b{"theorem1", 2 * r0 + 0.8 * (r1 + r2 + r3) + 1.6 * r4 + r5 + 1.6 * r4p + 2 * r5p, true,
                {{"r0", r0}, {"r1", r1}, {"r2", r2}, {"r3", r3}, {"r4", r4}, {"r5", r5}, {"r4p", r4p}, {"r5p", r5p}}, {}};
  b.flags.push_back("metric=dW");
  return b;
}

inline double bound_corollary1(double var_cond_gd, double e_abs_gd2) {
  return 0.8 * std::sqrt(detail::need(var_cond_gd, "var_cond_gd")) + detail::need(e_abs_gd2, "e_abs_gd2");
}

inline double bound_corollary2(double e_gd2, double e_gdtilde_dprime, double e_s_dprime) {
  return detail::need(e_gd2, "e_gd2") + 2 * detail::need(e_gdtilde_dprime, "e_gdtilde_dprime") +
         2 * detail::need(e_s_dprime, "e_s_dprime");
}

inline double bound_corollary3(double a, double b) {
  a = detail::need(a, "A");
  b = detail::need(b, "B");
  return 5 * a * a * b;
}

// A^3 = max third absolute moment of D, D~, D'; B^3 = E|G|^3
inline std::pair<double, double> corollary3_constants(const ErrorTermReport& r) {
  using detail::need;
  double a3 = std::max({need(r.m3_d, "m3_d"), need(r.m3_dt, "m3_dt"), need(r.m3_dp, "m3_dp")});
  return {std::cbrt(a3), std::cbrt(need(r.m3_g, "m3_g"))};
}

inline double bound_theorem2(const ErrorTermReport& r, const TruncationParams& t, double e_abs_w) {
  using detail::need;
  double s = need(r.r0, "r0") + need(r.r1, "r1") + need(r.r2, "r2") + need(r.r3, "r3") + need(r.r6, "r6") +
             need(r.r6p, "r6p");
  double al = need(t.alpha, "alpha"), be = need(t.beta, "beta"), bt = need(t.beta_t, "beta_tilde"),
         bp = need(t.beta_p, "beta_prime"), ga = need(t.gamma, "gamma");
  double ew = need(e_abs_w, "e_abs_w");
  return 2 * (s + (al * bt + ga) * (ew + 5) * bp + (ew + 3) * al * be * be);
}

inline double bound_corollary4(double var_cond_gd, double alpha, double beta) {
  return 2 * std::sqrt(detail::need(var_cond_gd, "var_cond_gd")) +
         8 * detail::need(alpha, "alpha") * detail::need(beta, "beta") * beta;
}

inline double bound_corollary5(double alpha, double beta, double beta_tilde, double beta_prime, double gamma) {
  using detail::need;
  alpha = need(alpha, "alpha"); beta = need(beta, "beta"); beta_tilde = need(beta_tilde, "beta_tilde");
  beta_prime = need(beta_prime, "beta_prime"); gamma = need(gamma, "gamma");
  return 8 * alpha * beta * beta + 12 * alpha * beta_tilde * beta_prime + 12 * gamma * beta_prime;
}

inline double bound_theorem3(const ErrorTermReport& r, double e_abs_w, double e_w1_sq) {
  using detail::need;
  double ew = need(e_abs_w, "e_abs_w"), e2 = need(e_w1_sq, "e_w1_sq");
  return 2 * need(r.r0, "r0") + 2 * need(r.r3_hat, "r3_hat") + 2 * need(r.r4, "r4") +
         2 * (ew + 2.4) * need(r.r5, "r5") + 1.4 * need(r.r7, "r7") + 2 * (std::sqrt(e2) + 1.1) * need(r.r8, "r8");
}

inline double bound_theorem4(const ErrorTermReport& r, double epsilon) {
  using detail::need;
  require(epsilon > 0.0 && std::isfinite(epsilon), "epsilon must be positive");
  if (r.epsilon && std::fabs(*r.epsilon - epsilon) > 1e-15 * epsilon)
    invalid_parameter("r11, r12 were estimated at a different epsilon");
  return need(r.r0, "r0") + need(r.r1, "r1") + need(r.r2, "r2") + need(r.r3, "r3") + need(r.r9, "r9") +
         0.5 * need(r.r10, "r10") + need(r.r11, "r11") / epsilon + 0.5 * need(r.r12, "r12") / epsilon + 0.4 * epsilon;
}

// Minimises over a log grid on [1e-4, 1]; r11 and r12 are supplied as functions of epsilon.
inline std::pair<double, double> bound_theorem4_min(ErrorTermReport r, const std::function<double(double)>& r11,
                                                    const std::function<double(double)>& r12, std::size_t pts = 401) {
  double best = std::numeric_limits<double>::infinity(), be = 1.0;
  for (std::size_t i = 0; i < pts; ++i) {
    double eps = std::pow(10.0, -4.0 + 4.0 * double(i) / double(pts - 1));
    r.epsilon = eps;
    r.r11 = {r11(eps), 0.0, 0, true};
    r.r12 = {r12(eps), 0.0, 0, true};
    double v = bound_theorem4(r, eps);
    if (v < best) { best = v; be = eps; }
  }
  return {best, be};
}

inline double hoeffding_bound(std::size_t n, double a_norm) {
  detail::need(a_norm, "a_norm");
  return 448.0 * double(n) * a_norm * a_norm * a_norm + 96.0 * a_norm;
}

inline BoundReport occupancy_bound(double n, double sigma, double h_norm, double dh_norm, double m, double p_bar) {
  require(n >= 1 && sigma > 0 && m >= 1 && p_bar > 0 && p_bar <= 1, "occupancy bound inputs out of range");
  detail::need(h_norm, "h_norm");
  detail::need(dh_norm, "dh_norm");
  BoundReport b;
  b.id = "occupancy";
  double l = std::log(n * h_norm);
  b.inputs = {{"n", n}, {"sigma", sigma}, {"h_norm", h_norm}, {"dh_norm", dh_norm}, {"m", m}, {"p_bar", p_bar}};
  b.condition_ok = (1.0 + 10.0 * m * p_bar <= 4.0 * l) && (4.0 * l <= 1.0 / std::sqrt(2.0 * p_bar));
  if (h_norm < 1.0 || dh_norm < 1.0) {
    b.condition_ok = false;
    b.flags.push_back("norm-below-one");
  }
  b.value = 409600.0 * n * std::pow(dh_norm, 3) * std::pow(l, 6) * (1.0 + sigma * sigma / n) / std::pow(sigma, 3) +
            3888.0 * l * l / (sigma * sigma);
  if (!b.condition_ok) b.flags.push_back("condition-violated");
  b.flags.push_back("metric=dK");
  return b;
}

inline double geometry_min_radius(int d) {
  require(d >= 1, "dimension must be positive");
  return std::pow(std::tgamma(1.0 + d / 2.0), 1.0 / d) / std::sqrt(M_PI);
}

inline BoundReport geometry_bound(double n, double sigma, double psi_norm, double rho, int d, double c_d = 1.0) {
  require(n >= 1 && sigma > 0 && rho > 0 && c_d > 0, "geometry bound inputs out of range");
  detail::need(psi_norm, "psi_norm");
  if (rho < geometry_min_radius(d) * (1.0 - 1e-12)) invalid_parameter("radius below the admissible minimum");
  BoundReport b;
  b.id = "geometry";
  b.value = c_d * std::pow(psi_norm, 3) * std::pow(rho, 6.0 * d) * n / std::pow(sigma, 3);
  b.inputs = {{"n", n}, {"sigma", sigma}, {"psi_norm", psi_norm}, {"rho", rho}, {"d", double(d)}, {"C_d", c_d}};
  b.flags = {"modulo-universal-constant", "metric=dK"};
  return b;
}

inline double graph_rate(double lambda) {
  require(lambda > 0.0 && lambda < 1.0, "lambda must lie in (0,1)");
  return lambda - 1.0 - std::log(lambda);
}

inline BoundReport graph_bound(double n, double sigma, double lambda, double h_norm, double dh_norm, double k = 1.0) {
  require(n >= 2 && sigma > 0 && k > 0, "graph bound inputs out of range");
  detail::need(h_norm, "h_norm");
  detail::need(dh_norm, "dh_norm");
  double a = graph_rate(lambda);
  double l = std::log(n * h_norm);
  BoundReport b;
  b.id = "graph";
  b.condition_ok = a <= 4.0 * l;
  b.value = k * (n * std::pow(l, 11) * std::pow(dh_norm, 3) * (1.0 + 1.0 / (a * a) + sigma * sigma / n) /
                     (lambda * std::pow(a, 11) * std::pow(sigma, 3)) +
                 std::exp(a) * l * l / (lambda * a * a * sigma * sigma));
  b.inputs = {{"n", n}, {"sigma", sigma}, {"lambda", lambda}, {"h_norm", h_norm}, {"dh_norm", dh_norm}, {"K", k}, {"a", a}};
  b.flags = {"modulo-universal-constant", "metric=dK"};
  if (!b.condition_ok) b.flags.push_back("condition-violated");
  return b;
}

}  // namespace stein
