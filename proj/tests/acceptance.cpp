// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stein/experiment.hpp"
#include "stein/recursion.hpp"
#include "stein/selftest.hpp"
#include "stein/zero_bias.hpp"

using namespace stein;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream why;
  void expect(bool c, const std::string& what) {
    if (!c) {
      ok = false;
      why << " [" << what << "]";
    }
  }
};

std::string fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1 --------------------------------------------------------------------------

void c1(Check& c) {
  auto t0 = std::chrono::steady_clock::now();
  const auto fam = default_family();
  double worst = 0.0;
  for (const auto& sc : selftest_cases()) {
    auto b = build_coupling(sc.spec);
    auto en = b.coupling->enumerate();
    c.expect(bool(en), sc.label + " not enumerable");
    if (!en) continue;
    auto r = stein_residual_exact(*en, fam);
    double w = 0.0;
    for (std::size_t k = 0; k < r.values.size(); ++k)
      if (!fam[k].probe) w = std::max(w, std::fabs(r.values[k].value));
    c.expect(w < 1e-12, sc.label + " residual " + fmt("%.3e", w));
    worst = std::max(worst, w);
  }
  double t = elapsed(t0);
  c.expect(t < 60.0, "runtime " + fmt("%.1f s", t));
  c.why << " cases=" << selftest_cases().size() << " max_residual=" << fmt("%.2e", worst) << " time=" << fmt("%.1fs", t);
}

// ---- 2 --------------------------------------------------------------------------

void c2(Check& c) {
  auto t0 = std::chrono::steady_clock::now();
  int exact = 0, mc = 0;
  for (const auto& sc : selftest_cases()) {
    auto en = build_coupling(sc.spec).coupling->enumerate();
    if (!en) continue;
    auto m = moment_probe_exact(*en);
    c.expect(std::fabs(m.mean_w.value) < 1e-12, sc.label + " E W");
    c.expect(std::fabs(m.gd_minus_var.value) < 1e-12, sc.label + " E GD - Var W");
    ++exact;
  }
  // every family again, at sizes that force Monte Carlo
  std::vector<const char*> specs = {
      R"({"name":"indep_sum_deletion","n":30,"law":"normal"})",
      R"({"name":"indep_sum_replacement","n":25,"law":"uniform"})",
      R"({"name":"indep_sum_duplication","n":40})",
      R"({"name":"antithetic_pair","law":{"values":[-2,-1,1,2],"probs":[0.1,0.4,0.4,0.1]}})",
      R"({"name":"independent_copy_pair","law":"uniform"})",
      R"({"name":"exchangeable_pair_linear","n":30})",
      R"({"name":"two_runs","n":60,"p":0.3})",
      R"({"name":"curie_weiss","n":60,"beta":0.6})",
      R"({"name":"poisson_equation","P":[[0.7,0.3,0,0,0],[0.2,0.5,0.3,0,0],[0,0.2,0.5,0.3,0],[0,0,0.2,0.5,0.3],[0,0,0,0.2,0.8]],"phi":[-2,-1,0,1,3],"variant":"coupled_chains"})",
      R"({"name":"local_dependence","n":40,"m":2,"second_order":true})",
      R"({"name":"decomposable","n":40,"m":1})",
      R"({"name":"decomposable","example":"von_mises","n":5})",
      R"({"name":"quadratic_form","matrix":[[0,1,0.5,0,0],[1,0,1,0.5,0],[0.5,1,0,1,0.5],[0,0.5,1,0,1],[0,0,0.5,1,0]],"law":"normal"})",
      R"({"name":"size_bias_binomial","n":40,"p":0.2})",
      R"({"name":"interpolation","n":12,"law":"normal","functional":"sum","order":"random"})",
      R"({"name":"hoeffding_variant1","n":30,"matrix_seed":4})",
      R"({"name":"hoeffding_variant2","n":30,"matrix_seed":4})",
      R"({"name":"hoeffding_variant3","n":30,"matrix_seed":4})",
      R"({"name":"occupancy","n":100,"m":150,"h":"empty"})",
      R"({"name":"geometry","d":2,"n":30,"rho":1.0,"psi":"non_isolated","pilot_samples":400000})",
      R"({"name":"graph","n":80,"lambda":0.5,"h":"same_component","pilot_samples":1000000})",
  };
  McOptions o{100000, 777, 10000, 0};
  for (const char* s : specs) {
    std::string nm = s;
    MomentReport m;
    try {
      auto b = build_coupling(json::parse(s));
      nm = b.coupling->info().name;
      m = moment_probe_mc(*b.coupling, o);
    } catch (const std::exception& e) {
      c.expect(false, nm + ": " + e.what());
      continue;
    }
    c.expect(std::fabs(m.mean_w.value) <= m.mean_w.ci, nm + " E W = " + fmt("%.4g", m.mean_w.value) + " ci " + fmt("%.3g", m.mean_w.ci));
    c.expect(std::fabs(m.gd_minus_var.value) <= m.gd_minus_var.ci,
             nm + " E GD - Var W = " + fmt("%.4g", m.gd_minus_var.value) + " ci " + fmt("%.3g", m.gd_minus_var.ci));
    ++mc;
  }
  double t = elapsed(t0);
  c.expect(t < 120.0, "runtime " + fmt("%.1f s", t));
  c.why << " exact=" << exact << " mc=" << mc << " time=" << fmt("%.1fs", t);
}

// ---- 3 --------------------------------------------------------------------------

void c3(Check& c) {
  const std::size_t n = 8;
  auto cp = two_runs_coupling(n, 0.4, TwoRunsG::classic);
  auto eno = cp->enumerate();
  if (!eno) {
    c.expect(false, "two_runs n=8 not enumerable");
    return;
  }
  const auto& en = *eno;
  const double lambda = 2.0 / double(n);
  const auto fam = default_family();
  auto r = stein_residual_exact(en, fam);
  auto flat = en.flatten();
  double gap = 0.0;
  for (std::size_t k = 0; k < fam.size(); ++k) {
    if (fam[k].probe) continue;
    KahanSum proj;
    for (const auto& x : flat) proj.add(x.prob * fam[k].f(x.s.w) * (x.s.d() + lambda * x.s.w));
    gap = std::max(gap, std::fabs(r.values[k].value + proj.value() / lambda));
  }
  c.expect(r.r0_lower > 1e-6, "classic residual vanished");
  c.expect(gap < 1e-12, "residual differs from remainder projection by " + fmt("%.3e", gap));
  c.why << " classic_r0=" << fmt("%.4g", r.r0_lower) << " remainder=" << fmt("%.4g", exchangeable_remainder_exact(en, lambda))
        << " gap=" << fmt("%.1e", gap);
  double worst_ratio = 0.0;
  for (std::size_t m : {4u, 8u, 12u})
    for (double beta : {0.3, 0.7, 1.2}) {
      CurieWeissSpec sp;
      sp.n = m;
      sp.beta = beta;
      sp.w = CurieWeissW::approximate;
      auto cw = curie_weiss_coupling(sp);
      auto cen = cw->enumerate();
      c.expect(bool(cen), "curie-weiss n=" + std::to_string(m) + " not enumerable");
      if (!cen) continue;
      auto rr = stein_residual_exact(*cen, fam);
      double bound = *cw->info().r0_bound;
      c.expect(rr.r0_lower <= bound + 1e-12, "curie-weiss n=" + std::to_string(m) + " beta=" + fmt("%.1f", beta));
      worst_ratio = std::max(worst_ratio, rr.r0_lower / bound);
    }
  c.why << " cw_max_r0_over_bound=" << fmt("%.3f", worst_ratio);
}

// ---- 4 --------------------------------------------------------------------------

void c4(Check& c) {
  const double s = 1.0 / std::sqrt(2.0);
  HoeffdingInstance h;
  h.n = 3;
  h.a = {{s, -s, 0}, {-s, s, 0}, {0, 0, 0}};
  auto law = hoeffding_exact_oracle(h);
  double var = 0.0;
  for (std::size_t k = 0; k < law.support().size(); ++k) var += law.probs()[k] * law.support()[k] * law.support()[k];
  // by hand: atoms -sqrt2, -1/sqrt2, 1/sqrt2, sqrt2 with masses 1/6, 1/3, 1/3, 1/6
  const double r2 = std::sqrt(2.0);
  std::vector<double> at = {-r2, -s, s, r2}, cum = {0, 1.0 / 6, 0.5, 5.0 / 6, 1.0};
  double dk_hand = 0.0;
  for (std::size_t k = 0; k < at.size(); ++k)
    dk_hand = std::max({dk_hand, std::fabs(cum[k] - normal_cdf(at[k])), std::fabs(cum[k + 1] - normal_cdf(at[k]))});
  double dk = exact_dk(law);
  double bound = hoeffding_bound(3, h.norm());
  c.expect(std::fabs(var - 1.0) < 1e-12, "Var W");
  c.expect(std::fabs(dk - dk_hand) < 1e-6, "d_K vs hand derivation");
  c.expect(std::fabs(dk - 0.2601) < 2e-4, "d_K near 0.2601");
  c.expect(std::fabs(bound - 543.0) < 0.1, "bound near 543.0");
  c.expect(bound >= dk, "bound dominates");
  // n = 50 by Monte Carlo
  auto b = build_coupling(json::parse(R"({"name":"hoeffding_variant1","n":50,"matrix_seed":3})"));
  McOptions o{1000000, 50, 20000, 0};
  auto ws = run_chunked(o, Collect<double>{}, [&](Rng& rng, std::uint64_t cnt, Collect<double>& a, std::uint64_t) {
    for (std::uint64_t i = 0; i < cnt; ++i) a.v.push_back(b.coupling->draw(rng).w);
  });
  auto de = empirical_dk(ws.v);
  c.expect(bool(b.app_bound), "application bound missing");
  auto rep = b.app_bound();
  double a50 = rep.inputs.at(1).second, bound50 = rep.value;
  c.expect(de.value <= bound50, "n=50 d_K above bound");
  c.why << " var=" << fmt("%.12f", var) << " dk=" << fmt("%.6f", dk) << " hand=" << fmt("%.6f", dk_hand)
        << " bound=" << fmt("%.2f", bound) << " | n=50 dk_hat=" << fmt("%.5f", de.value) << " bound=" << fmt("%.2f", bound50)
        << " a_norm=" << fmt("%.4f", a50);
}

// ---- 5 --------------------------------------------------------------------------

void c5(Check& c) {
  const double a = 5.0 * std::sqrt(2.0), ap = std::sqrt(2 * a * (2 * a + 40.0));
  const double closed = (40.0 + 2 * a + ap) * (2 * a + ap) / (5 * ap);
  double worst = 0.0;
  for (std::size_t n = 2; n <= 2000; n += (n < 100 ? 1 : 97)) {
    auto r = lemma1_solve(RecursionProblem::iid_example(n));
    worst = std::max(worst, std::fabs(r.kappa_n_bound * std::sqrt(double(n)) - closed));
    c.expect(r.kappa_n_bound <= 25.0 / std::sqrt(double(n)), "25/sqrt(n) at n=" + std::to_string(n));
  }
  c.expect(worst < 1e-10, "closed form mismatch " + fmt("%.2e", worst));
  c.expect(std::fabs(closed - 24.72) < 0.01, "constant near 24.72");
  std::mt19937_64 g(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + std::size_t(u(g) * 80);
    RecursionProblem p(n, u(g) * 12.0);
    double sg = 1.0;
    for (std::size_t k = 2; k <= n; ++k) {
      sg += u(g) * 2.0;
      p.sigma[k] = sg;
      for (std::size_t l = 1; l < k; ++l)
        if (u(g) < 0.25) p.set(k, l, u(g) * 4.0);
    }
    auto r = lemma1_solve(p);
    auto it = recursion_iterate(p);
    for (std::size_t k = 2; k <= n; ++k)
      if (it[k] > r.kappa_n_bound * p.sigma[n] / p.sigma[k] * (1 + 1e-10)) ++violations;
  }
  c.expect(violations == 0, std::to_string(violations) + " iterate violations");
  c.why << " kappa*sqrt(n)=" << fmt("%.6f", closed) << " max_dev=" << fmt("%.1e", worst) << " random_problems=100";
}

// ---- 6 --------------------------------------------------------------------------

void c6(Check& c) {
  auto t0 = std::chrono::steady_clock::now();
  IndependentSumSpec sp;
  sp.n = 1;
  auto cp = indep_sum_deletion(sp);
  McOptions o{1000000, 6, 20000, 0};
  auto grid = uniform_grid(-2.0, 2.0, 81);
  auto d = zero_bias_density(*cp, grid, o);
  int bad = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double want = grid[k] > -1.0 && grid[k] < 1.0 ? 0.5 : (grid[k] < -1.0 || grid[k] > 1.0 ? 0.0 : -1.0);
    if (want < 0) continue;  // endpoints
    if (std::fabs(d.rho_hat[k] - want) > 3 * d.ci[k] + 1e-12) ++bad;
  }
  c.expect(bad == 0, std::to_string(bad) + " grid points outside 3 CI");
  c.expect(std::fabs(d.integral.value - 1.0) <= 0.01, "integral " + fmt("%.5f", d.integral.value));
  auto xs = zero_bias_sampler(*cp, o);
  double dk = ks_distance(xs, [](double x) { return std::clamp((x + 1.0) / 2.0, 0.0, 1.0); });
  c.expect(dk < 0.01, "sampler d_K " + fmt("%.4f", dk));
  auto p = zero_bias_identity_probe(*cp, [](double x) { return x * x; }, [](double x) { return 2 * x; }, o);
  c.expect(p.pass, "x^2 probe");
  double t = elapsed(t0);
  c.expect(t < 120.0, "runtime");
  c.why << " integral=" << fmt("%.5f", d.integral.value) << " dk_uniform=" << fmt("%.5f", dk)
        << " probe_lhs=" << fmt("%.4g", p.lhs.value) << " probe_rhs=" << fmt("%.4g", p.rhs.value) << " time=" << fmt("%.1fs", t);
}

// ---- 7 --------------------------------------------------------------------------

void c7(Check& c) {
  auto t0 = std::chrono::steady_clock::now();
  const int n = 2000;
  auto us = graph_u_samples(n, 0.5, graph_same_component(), McOptions{40000, 71, 5000, 0});
  Moments m;
  for (double x : us) m.add(x);
  double ratio = m.variance() / (32.0 * n);
  c.expect(ratio >= 0.8 && ratio <= 1.2, "Var U / 32n = " + fmt("%.3f", ratio));
  c.why << " var_ratio=" << fmt("%.3f", ratio);
  for (int cc : {10, 20, 30}) {
    auto t = component_tail_check(n, 0.5, cc, 200000, 72);
    c.expect(t.ok, "tail C=" + std::to_string(cc));
    c.why << " tail" << cc << "=" << fmt("%.4f", t.empirical) << "<=" << fmt("%.4f", t.bound);
  }
  json tmpl = json::parse(R"({"experiment_id":"graph-rate",
      "coupling":{"name":"graph","lambda":0.5,"n":250,"h":"same_component","pilot_samples":50000},
      "n_samples":50000,"seed":1,"tasks":{"distance":["dk"]}})");
  auto sw = run_sweep(tmpl, json::parse(R"({"coupling.n":[250,500,1000,2000],"_seeds":10})"));
  double prev = 1.0;
  c.why << " median_dk:";
  for (const auto& r : sw.runs) {
    double v = std::numeric_limits<double>::quiet_NaN();
    for (const auto& row : r.rows)
      if (row.metric == "distance:dk") v = row.value;
    c.expect(std::isfinite(v) && v <= prev, "median d_K increases at n=" + std::to_string(r.n));
    c.why << " " << r.n << "=" << fmt("%.4f", v);
    prev = v;
  }
  double t = elapsed(t0);
  c.expect(t < 300.0, "runtime");
  c.why << " time=" << fmt("%.1fs", t);
}

// ---- 8 --------------------------------------------------------------------------

void c8(Check& c) {
  auto t0 = std::chrono::steady_clock::now();
  auto pass = occupancy_bound(1e5, std::sqrt(1e5), 1, 1, 1e3, 1e-5);
  auto fail = occupancy_bound(1e3, std::sqrt(1e3), 1, 1, 1e2, 1e-3);
  c.expect(pass.condition_ok, "n=1e5 m=1e3 should pass");
  c.expect(!fail.condition_ok, "n=1e3 m=1e2 should fail");
  auto b = build_coupling(json::parse(R"({"name":"occupancy","n":200,"m":200,"h":"empty"})"));
  McOptions o{200000, 81, 10000, 0};
  const auto fam = default_family();
  auto r = stein_residual_mc(*b.coupling, fam, o);
  int outside = 0;
  for (std::size_t k = 0; k < fam.size(); ++k)
    if (!fam[k].probe && std::fabs(r.values[k].value) > r.values[k].ci) ++outside;
  c.expect(outside == 0, std::to_string(outside) + " residual CIs exclude 0");
  // correlation of W'' with G D~ and with S
  auto xs = draw_samples(*b.coupling, o);
  auto corr = [&](auto fx) {
    Moments mx, my;
    for (const auto& x : xs) {
      mx.add(x.wdd);
      my.add(fx(x));
    }
    double cv = 0.0;
    for (const auto& x : xs) cv += (x.wdd - mx.mean) * (fx(x) - my.mean);
    cv /= double(xs.size() - 1);
    double den = std::sqrt(mx.variance() * my.variance());
    return den > 0 ? cv / den : 0.0;
  };
  double rg = corr([](const CouplingSample& x) { return x.g * x.dt; });
  double lim = kZ99 / std::sqrt(double(xs.size()));
  c.expect(std::fabs(rg) <= lim, "corr(W'', G D~) = " + fmt("%.4f", rg));
  double t = elapsed(t0);
  c.expect(t < 180.0, "runtime");
  c.why << " residual_r0=" << fmt("%.4g", r.r0_lower) << " corr=" << fmt("%.5f", rg) << " limit=" << fmt("%.5f", lim)
        << " time=" << fmt("%.1fs", t);
}

// ---- 9 --------------------------------------------------------------------------

void c9(Check& c) {
  std::mt19937_64 g(909);
  std::normal_distribution<double> nd;
  std::vector<double> x(100000);
  for (auto& v : x) v = nd(g);
  auto d = empirical_dk(x);
  c.expect(d.value <= 0.01 && d.value <= d.dkw_halfwidth, "normal draws d_K " + fmt("%.4f", d.value));
  std::vector<DiscreteDistribution> laws = {
      DiscreteDistribution({-1.0, 1.0}, {0.5, 0.5}), DiscreteDistribution({0.0}, {1.0}),
      DiscreteDistribution({-2.0, 0.5}, {0.2, 0.8}),
      DiscreteDistribution({-std::sqrt(2.0), -1 / std::sqrt(2.0), 1 / std::sqrt(2.0), std::sqrt(2.0)},
                           {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6})};
  for (int n : {2, 5, 20, 100}) {
    std::vector<double> xs, ps;
    for (int k = 0; k <= n; ++k) {
      xs.push_back((2.0 * k - n) / std::sqrt(double(n)));
      ps.push_back(std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0)));
    }
    double s = 0;
    for (double q : ps) s += q;
    for (double& q : ps) q /= s;
    laws.emplace_back(xs, ps);
  }
  for (const auto& selftest : selftest_cases()) {
    auto en = build_coupling(selftest.spec).coupling->enumerate();
    std::vector<double> w, p;
    for (const auto& f : en->flatten()) {
      w.push_back(f.s.w);
      p.push_back(f.prob);
    }
    laws.emplace_back(w, p);
  }
  int bad = 0;
  for (const auto& l : laws)
    if (exact_dk(l) > dk_from_dw(exact_dw(l)) + 1e-12) ++bad;
  c.expect(bad == 0, std::to_string(bad) + " laws violate d_K <= 1.35 sqrt(d_W)");
  int cells = 0, cbad = 0;
  for (long n : {1L, 5L, 20L, 100L, 1000L})
    for (double p : {0.0, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.2})
      for (double xx = 0.0; xx <= 80.0; xx += 0.5) {
        auto ch = chernoff_check(n, p, xx);
        if (!ch.applicable) continue;
        ++cells;
        if (ch.exact_tail > ch.bound) ++cbad;
      }
  c.expect(cbad == 0, std::to_string(cbad) + " chernoff violations");
  c.why << " normal_dk=" << fmt("%.5f", d.value) << " laws=" << laws.size() << " chernoff_cells=" << cells;
}

// ---- 10 -------------------------------------------------------------------------

std::string capture(const std::string& cmd, int& rc) {
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) {
    rc = -1;
    return out;
  }
  char buf[4096];
  std::size_t k;
  while ((k = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, k);
  int st = pclose(p);
  rc = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return out;
}

void c10(Check& c) {
  const std::string cli = STEIN_CLI_PATH;
  int r1, r2, r3, r4;
  auto a = capture("STEIN_WORKERS=1 " + cli + " selftest --seed 7 --chunk-size 5000", r1);
  auto b = capture("STEIN_WORKERS=1 " + cli + " selftest --seed 7 --chunk-size 5000", r2);
  auto d = capture("STEIN_WORKERS=4 " + cli + " selftest --seed 7 --chunk-size 5000", r3);
  auto e = capture(cli + " --workers 4 selftest --seed 7 --chunk-size 5000", r4);
  c.expect(r1 == 0 && r2 == 0 && r3 == 0 && r4 == 0, "selftest exit code");
  c.expect(!a.empty() && a == b, "repeat run differs");
  c.expect(a == d, "workers 1 vs 4 differ");
  c.expect(a == e, "--workers flag differs");
  c.why << " bytes=" << a.size();
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, std::function<void(Check&)>>> crit = {
      {"1 exact Stein identity under enumeration", c1},
      {"2 moment probes exact and Monte Carlo", c2},
      {"3 negative controls", c3},
      {"4 Hoeffding oracle and bound", c4},
      {"5 recursion example and iterate", c5},
      {"6 zero bias density and sampler", c6},
      {"7 graph variance, tails, rate", c7},
      {"8 occupancy condition and probes", c8},
      {"9 metrics", c9},
      {"10 determinism", c10},
  };
  int fails = 0;
  for (auto& [name, fn] : crit) {
    Check c;
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.why << " exception: " << e.what();
    }
    std::cout << (c.ok ? "PASS " : "FAIL ") << "criterion " << name << ":" << c.why.str() << std::endl;
    if (!c.ok) ++fails;
  }
  std::cout << "acceptance: " << (crit.size() - fails) << " passed, " << fails << " failed" << std::endl;
  return fails == 0 ? 0 : 1;
}
