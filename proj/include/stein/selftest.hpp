#pragma once

// Enumeration oracle suite behind `stein_cli selftest`.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "registry.hpp"

namespace stein {

struct SelftestCase {
  std::string label;
  json spec;
};

inline std::vector<SelftestCase> selftest_cases() {
  auto J = [](const char* s) { return json::parse(s); };
  return {
      {"indep_sum_deletion n=3 rademacher", J(R"({"name":"indep_sum_deletion","n":3})")},
      {"indep_sum_deletion n=2 skewed", J(R"({"name":"indep_sum_deletion","n":2,"law":{"values":[0,1,3],"probs":[0.5,0.3,0.2]}})")},
      {"indep_sum_replacement n=3", J(R"({"name":"indep_sum_replacement","n":3,"law":{"values":[-1,0,2],"probs":[0.25,0.5,0.25]}})")},
      {"indep_sum_duplication n=3", J(R"({"name":"indep_sum_duplication","n":3,"law":{"values":[0,1],"probs":[0.7,0.3]}})")},
      {"two_runs n=8 eq27c", J(R"({"name":"two_runs","n":8,"p":0.4,"g":"eq27c"})")},
      {"two_runs n=8 eq27d", J(R"({"name":"two_runs","n":8,"p":0.4,"g":"eq27d"})")},
      {"curie_weiss n=4", J(R"({"name":"curie_weiss","n":4,"beta":0.7,"h":0.2})")},
      {"poisson_equation 2-state", J(R"({"name":"poisson_equation","P":[[0.7,0.3],[0.4,0.6]],"phi":[1,0]})")},
      {"poisson_equation 5-state",
       J(R"({"name":"poisson_equation","P":[[0.7,0.3,0,0,0],[0.2,0.5,0.3,0,0],[0,0.2,0.5,0.3,0],[0,0,0.2,0.5,0.3],[0,0,0,0.2,0.8]],"phi":[-2,-1,0,1,3]})")},
      {"local_dependence n=6 m=1", J(R"({"name":"local_dependence","n":6,"m":1})")},
      {"decomposable n=6 m=1", J(R"({"name":"decomposable","n":6,"m":1})")},
      {"quadratic_form 2x2", J(R"({"name":"quadratic_form","matrix":[[0,1],[1,0]]})")},
      {"size_bias_bernoulli p=0.3", J(R"({"name":"size_bias_bernoulli","p":0.3})")},
      {"interpolation n=2", J(R"({"name":"interpolation","n":2,"functional":"pair_product","order":"fixed"})")},
      {"hoeffding_variant1 n=3", J(R"({"name":"hoeffding_variant1","n":3,"matrix":[[1,-1,0],[-1,1,0],[0,0,0]]})")},
      {"hoeffding_variant2 n=3", J(R"({"name":"hoeffding_variant2","n":3,"matrix":[[1,-1,0],[-1,1,0],[0,0,0]]})")},
      {"hoeffding_variant3 n=3", J(R"({"name":"hoeffding_variant3","n":3,"matrix":[[1,-1,0],[-1,1,0],[0,0,0]]})")},
      {"occupancy n=3 m=2 empty", J(R"({"name":"occupancy","n":3,"m":2,"h":"empty"})")},
      {"graph n=4 same_component", J(R"({"name":"graph","n":4,"lambda":0.5,"h":"same_component"})")},
  };
}

// Fixed-seed Monte Carlo lines; any change in stream layout shows up here.
inline std::vector<SelftestCase> selftest_mc_cases() {
  auto J = [](const char* s) { return json::parse(s); };
  return {
      {"mc indep_sum_replacement n=20 uniform", J(R"({"name":"indep_sum_replacement","n":20,"law":"uniform"})")},
      {"mc two_runs n=40", J(R"({"name":"two_runs","n":40,"p":0.3})")},
      {"mc hoeffding_variant3 n=20", J(R"({"name":"hoeffding_variant3","n":20,"matrix_seed":7})")},
      {"mc occupancy n=20 m=20", J(R"({"name":"occupancy","n":20,"m":20,"h":"empty"})")},
  };
}

struct SelftestOptions {
  std::uint64_t seed = 20240611;
  std::uint64_t chunk_size = 10000;
  std::uint64_t mc_samples = 50000;
  double tol = 1e-12;
};

// Returns the number of failures.
inline int run_selftest(std::ostream& os, const SelftestOptions& so = {}) {
  char buf[256];
  int fails = 0, passes = 0;
  const auto fam = default_family();
  for (const auto& c : selftest_cases()) {
    bool ok = false;
    std::string what;
    try {
      auto b = build_coupling(c.spec);
      auto en = b.coupling->enumerate();
      if (!en) {
        what = "not enumerable";
      } else {
        auto res = stein_residual_exact(*en, fam);
        double worst = 0.0;
        for (const auto& v : res.values) worst = std::max(worst, std::fabs(v.value));
        auto m = moment_probe_exact(*en);
        double mass = std::fabs(en->total() - 1.0);
        ok = worst < so.tol && mass < so.tol;
        std::snprintf(buf, sizeof buf, "outcomes=%zu max_residual=%.3e var_w=%.12f e_gd=%.12f", en->size(), worst,
                      m.var_w.value, m.e_gd.value);
        what = buf;
      }
    } catch (const std::exception& e) {
      what = std::string("error: ") + e.what();
    }
    (ok ? passes : fails)++;
    os << (ok ? "PASS " : "FAIL ") << c.label << " " << what << "\n";
  }
  McOptions o;
  o.n_samples = so.mc_samples;
  o.seed = so.seed;
  o.chunk_size = so.chunk_size;
  for (const auto& c : selftest_mc_cases()) {
    bool ok = false;
    std::string what;
    try {
      auto b = build_coupling(c.spec);
      auto res = stein_residual_mc(*b.coupling, fam, o);
      auto m = moment_probe_mc(*b.coupling, o);
      // every residual mean within 99% CI of zero, with slack for the multiplicity of the family
      ok = true;
      for (const auto& v : res.values)
        if (std::fabs(v.value) > 1.5 * v.ci + 1e-12) ok = false;
      std::snprintf(buf, sizeof buf, "r0=%.12g ci=%.12g mean_w=%.12g e_gd=%.12g", res.r0_lower, res.r0_ci,
                    m.mean_w.value, m.e_gd.value);
      what = buf;
    } catch (const std::exception& e) {
      what = std::string("error: ") + e.what();
    }
    (ok ? passes : fails)++;
    os << (ok ? "PASS " : "FAIL ") << c.label << " " << what << "\n";
  }
  os << "selftest: " << passes << " passed, " << fails << " failed\n";
  return fails;
}

}  // namespace stein
