#pragma once

// Builds couplings from JSON descriptions; unknown keys are rejected.

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "applications/geometry.hpp"
#include "applications/graph.hpp"
#include "applications/hoeffding.hpp"
#include "applications/occupancy.hpp"
#include "couplings.hpp"
#include "estimation.hpp"

namespace stein {

using json = nlohmann::ordered_json;

// Reads typed keys from a JSON object and remembers which were consumed.
class Params {
 public:
  Params(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) config_error(where_ + " must be a JSON object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  template <class T>
  T get(const std::string& k) {
    if (!j_.contains(k)) config_error(where_ + ": missing required key '" + k + "'");
    return convert<T>(k);
  }
  template <class T>
  T get(const std::string& k, T def) {
    if (!j_.contains(k)) {
      resolved_[k] = def;
      return def;
    }
    return convert<T>(k);
  }
  const json& raw(const std::string& k) {
    if (!j_.contains(k)) config_error(where_ + ": missing required key '" + k + "'");
    used_.insert(k);
    resolved_[k] = j_.at(k);
    return j_.at(k);
  }
  json raw_or(const std::string& k, json def) {
    if (!j_.contains(k)) {
      resolved_[k] = def;
      return def;
    }
    return raw(k);
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) config_error(where_ + ": unknown key '" + it.key() + "'");
  }
  json resolved() const { return resolved_; }

 private:
  template <class T>
  T convert(const std::string& k) {
    used_.insert(k);
    resolved_[k] = j_.at(k);
    try {
      return j_.at(k).get<T>();
    } catch (const nlohmann::json::exception&) {
      config_error(where_ + ": key '" + k + "' has the wrong type");
    }
  }
  json j_;
  std::string where_;
  std::set<std::string> used_;
  json resolved_ = json::object();
};

struct BuiltCoupling {
  std::string name;
  CouplingPtr coupling;
  std::size_t n = 0;
  json resolved;
  std::function<BoundReport()> app_bound;                          // optional application bound
  std::function<std::vector<double>(const McOptions&)> w_sampler;  // optional fast W sampler
};

struct CouplingEntry {
  std::string name;
  std::string params;
  std::string description;
};

inline std::vector<CouplingEntry> coupling_catalogue() {
  return {
      {"indep_sum_deletion", "n, law", "independent sum, W' = W - X_I, G = -n X_I"},
      {"indep_sum_replacement", "n, law", "independent sum, X_I replaced by an independent copy"},
      {"indep_sum_duplication", "n, law", "independent sum, W' = W + X'_I - X_I with unequal marginals"},
      {"antithetic_pair", "law", "exchangeable pair (W, -W), lambda = 2"},
      {"independent_copy_pair", "law", "exchangeable pair of independent copies, lambda = 1"},
      {"exchangeable_pair_linear", "n, law", "replacement pair through the linear-regression construction"},
      {"two_runs", "n, p, g = eq27c|eq27d|classic", "2-runs count on the circle"},
      {"curie_weiss", "n, beta, h, w = exact|approximate, sampling = exact|glauber, mcmc_burnin",
       "Curie-Weiss magnetisation, antisymmetric construction"},
      {"poisson_equation", "P, phi, centre, variant = psi|coupled_chains", "additive functional of a reversible finite chain"},
      {"local_dependence", "n, m, second_order", "moving sums of Rademacher variables"},
      {"decomposable", "example = moving_sum|von_mises, n, m", "decomposable local dependence"},
      {"quadratic_form", "matrix, law", "quadratic form in independent variables"},
      {"size_bias_bernoulli", "p, g", "size bias of a Bernoulli variable"},
      {"size_bias_binomial", "n, p, g", "size bias of a binomial variable"},
      {"interpolation", "n, law, functional = sum|pair_product|max, order = fixed|random",
       "interpolation to independence"},
      {"hoeffding_variant1", "n, matrix | matrix_seed", "combinatorial CLT, transposition pair"},
      {"hoeffding_variant2", "n, matrix | matrix_seed", "combinatorial CLT, G = -n a_{I, pi(I)}"},
      {"hoeffding_variant3", "n, matrix | matrix_seed", "combinatorial CLT, deletion form with W''"},
      {"occupancy", "n, m, p, h = {name, param}", "urn occupancy statistic with white/black/red urns"},
      {"geometry", "d, n, rho, psi, sigma, pilot_samples, pilot_seed", "torus point pattern neighbourhood statistic"},
      {"graph", "n, lambda, h = {name, param}, fixed_vertex, pilot_samples, pilot_seed",
       "subcritical Erdos-Renyi component statistic"},
  };
}

namespace detail {
inline SummandLaw law_from_json(const json& j) {
  if (j.is_string()) {
    auto s = j.get<std::string>();
    if (s == "rademacher") return SummandLaw::rademacher();
    if (s == "uniform") return SummandLaw::uniform01();
    if (s == "normal") return SummandLaw::standard_normal();
    config_error("unknown law '" + s + "'");
  }
  Params p(j, "law");
  auto v = p.get<std::vector<double>>("values");
  auto q = p.get<std::vector<double>>("probs");
  p.finish();
  return SummandLaw::discrete_law(v, q);
}

inline HoeffdingInstance hoeffding_from(Params& p) {
  auto n = p.get<std::size_t>("n");
  if (p.has("matrix")) {
    auto m = p.get<std::vector<std::vector<double>>>("matrix");
    if (m.size() != n) config_error("hoeffding: matrix size differs from n");
    return HoeffdingInstance::normalized(m);
  }
  Rng rng = make_stream(p.get<std::uint64_t>("matrix_seed", 1), 0);
  return HoeffdingInstance::random(n, rng);
}

inline std::pair<std::string, long> named_param(const json& j, const char* where) {
  if (j.is_string()) return {j.get<std::string>(), 1};
  Params p(j, where);
  auto name = p.get<std::string>("name");
  long param = p.get<long>("param", 1);
  p.finish();
  return {name, param};
}

inline BoundReport hoeffding_report(std::size_t n, double an) {
  BoundReport b;
  b.id = "hoeffding";
  b.value = hoeffding_bound(n, an);
  b.inputs = {{"n", double(n)}, {"a_norm", an}};
  b.flags = {"metric=dK"};
  return b;
}
}  // namespace detail

inline BuiltCoupling build_coupling(const json& spec) {
  Params p(spec, "coupling");
  BuiltCoupling b;
  b.name = p.get<std::string>("name");
  const std::string& nm = b.name;
  auto law = [&](const char* def) { return detail::law_from_json(p.raw_or("law", json(def))); };

  if (nm == "indep_sum_deletion" || nm == "indep_sum_replacement" || nm == "indep_sum_duplication") {
    IndependentSumSpec sp;
    sp.n = p.get<std::size_t>("n");
    sp.law = law("rademacher");
    b.coupling = nm == "indep_sum_deletion"      ? indep_sum_deletion(sp)
                 : nm == "indep_sum_replacement" ? indep_sum_replacement(sp)
                                                 : indep_sum_duplication(sp);
  } else if (nm == "antithetic_pair") {
    b.coupling = antithetic_pair(law("rademacher"));
  } else if (nm == "independent_copy_pair") {
    b.coupling = independent_copy_pair(law("rademacher"));
  } else if (nm == "exchangeable_pair_linear") {
    IndependentSumSpec sp;
    sp.n = p.get<std::size_t>("n");
    sp.law = law("rademacher");
    b.coupling = replacement_pair_linear(sp);
  } else if (nm == "two_runs") {
    auto g = p.get<std::string>("g", "eq27c");
    TwoRunsG v = g == "eq27c" ? TwoRunsG::eq27c : g == "eq27d" ? TwoRunsG::eq27d : g == "classic" ? TwoRunsG::classic
                                                                                               : (config_error("two_runs: unknown g '" + g + "'"), TwoRunsG::eq27c);
    b.coupling = two_runs_coupling(p.get<std::size_t>("n"), p.get<double>("p"), v);
  } else if (nm == "curie_weiss") {
    CurieWeissSpec sp;
    sp.n = p.get<std::size_t>("n");
    sp.beta = p.get<double>("beta");
    sp.h = p.get<double>("h", 0.0);
    auto w = p.get<std::string>("w", "exact");
    if (w != "exact" && w != "approximate") config_error("curie_weiss: w must be exact or approximate");
    sp.w = w == "exact" ? CurieWeissW::exact : CurieWeissW::approximate;
    auto s = p.get<std::string>("sampling", "exact");
    if (s != "exact" && s != "glauber") config_error("curie_weiss: sampling must be exact or glauber");
    sp.sampling = s == "exact" ? CurieWeissSampling::exact : CurieWeissSampling::glauber;
    sp.burnin = p.get<std::size_t>("mcmc_burnin", 200);
    b.coupling = curie_weiss_coupling(sp);
  } else if (nm == "poisson_equation") {
    FiniteChainSpec sp;
    sp.P = p.get<std::vector<std::vector<double>>>("P");
    sp.phi = p.get<std::vector<double>>("phi");
    if (p.get<bool>("centre", true)) {
      // shift the reward to mean zero under the stationary law
      auto pi = solve_chain({sp.P, std::vector<double>(sp.phi.size(), 0.0), sp.t_max}).pi;
      double m = 0.0;
      for (std::size_t i = 0; i < pi.size(); ++i) m += pi[i] * sp.phi[i];
      for (double& x : sp.phi) x -= m;
    }
    auto v = p.get<std::string>("variant", "psi");
    if (v != "psi" && v != "coupled_chains") config_error("poisson_equation: variant must be psi or coupled_chains");
    b.coupling = poisson_equation_coupling(sp, v == "psi" ? PoissonVariant::psi : PoissonVariant::coupled_chains).coupling;
  } else if (nm == "local_dependence") {
    auto n = p.get<std::size_t>("n");
    auto m = p.get<std::size_t>("m", 1);
    bool second = p.get<bool>("second_order", true);
    auto ms = moving_sum(n, m);
    b.coupling = local_dependence_coupling(ms, n, moving_sum_neighborhoods(n, m, second, false), 1.0, ms.leaves());
  } else if (nm == "decomposable") {
    auto ex = p.get<std::string>("example", "moving_sum");
    auto n = p.get<std::size_t>("n");
    if (ex == "moving_sum") {
      auto m = p.get<std::size_t>("m", 1);
      auto ms = moving_sum(n, m);
      b.coupling = decomposable_coupling(ms, n, moving_sum_neighborhoods(n, m, false, true), 1.0, ms.leaves());
    } else if (ex == "von_mises") {
      double var = von_mises_variance(n);
      b.coupling = decomposable_coupling(VonMisesPairs{n}, n * n, von_mises_neighborhoods(n), std::sqrt(var),
                                         std::pow(2.0, 2.0 * double(n)));
    } else {
      config_error("decomposable: unknown example '" + ex + "'");
    }
  } else if (nm == "quadratic_form") {
    b.coupling = quadratic_form_coupling(p.get<std::vector<std::vector<double>>>("matrix"), law("rademacher"));
  } else if (nm == "size_bias_bernoulli") {
    std::optional<double> g;
    if (p.has("g")) g = p.get<double>("g");
    b.coupling = size_bias_bernoulli(p.get<double>("p"), g);
  } else if (nm == "size_bias_binomial") {
    std::optional<double> g;
    if (p.has("g")) g = p.get<double>("g");
    b.coupling = size_bias_binomial(p.get<std::size_t>("n"), p.get<double>("p"), g);
  } else if (nm == "interpolation") {
    auto n = p.get<std::size_t>("n");
    auto l = law("rademacher");
    auto fn = p.get<std::string>("functional", "pair_product");
    auto ord = p.get<std::string>("order", "fixed");
    if (ord != "fixed" && ord != "random") config_error("interpolation: order must be fixed or random");
    auto order = ord == "fixed" ? InterpolationOrder::fixed : InterpolationOrder::random;
    std::function<double(const std::vector<double>&)> f;
    std::optional<double> mean, sd;
    const double lm = l.mean(), lv = l.variance();
    if (fn == "sum") {
      f = [](const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0); };
      mean = double(n) * lm;
      sd = std::sqrt(double(n) * lv);
    } else if (fn == "pair_product") {
      f = [](const std::vector<double>& x) {
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < x.size(); ++i) s += x[i] * x[i + 1];
        return x.size() == 1 ? x[0] : s;
      };
      if (n == 1) {
        mean = lm;
        sd = std::sqrt(lv);
      } else {
        // E (x_i x_{i+1})^2 = (v + m^2)^2; neighbouring terms share one factor
        double m2 = lv + lm * lm, m4 = lm * lm * lm * lm;
        mean = double(n - 1) * lm * lm;
        double var = double(n - 1) * (m2 * m2 - m4) + 2.0 * double(n - 2) * (lm * lm * m2 - m4);
        sd = std::sqrt(std::max(var, 0.0));
      }
    } else if (fn == "max") {
      f = [](const std::vector<double>& x) { return *std::max_element(x.begin(), x.end()); };
    } else {
      config_error("interpolation: unknown functional '" + fn + "'");
    }
    b.coupling = interpolation_coupling(f, n, l, order, mean, sd, p.get<std::uint64_t>("pilot_samples", 200000));
  } else if (nm == "hoeffding_variant1" || nm == "hoeffding_variant2" || nm == "hoeffding_variant3") {
    auto h = detail::hoeffding_from(p);
    b.coupling = nm == "hoeffding_variant1"   ? hoeffding_variant1(h)
                 : nm == "hoeffding_variant2" ? hoeffding_variant2(h)
                                              : hoeffding_variant3(h);
    double an = h.norm();
    std::size_t n = h.n;
    b.app_bound = [n, an] { return detail::hoeffding_report(n, an); };
  } else if (nm == "occupancy") {
    auto n = p.get<std::size_t>("n");
    auto m = p.get<long>("m");
    auto [hn, hp] = detail::named_param(p.raw_or("h", json("empty")), "h");
    auto hf = urn_function_by_name(hn, hp);
    std::optional<OccupancyInstance> oi;
    if (p.has("p")) {
      auto pr = p.get<std::vector<double>>("p");
      if (pr.size() != n) config_error("occupancy: p must have n entries");
      oi = OccupancyInstance::make(m, pr, {hf});
    } else {
      oi = OccupancyInstance::equiprobable(n, m, hf);
    }
    const auto& inst = *oi;
    auto oc = occupancy_coupling(inst);
    b.coupling = oc.coupling;
    double sigma = oc.sigma, hnorm = inst.h_norm(), dh = inst.dh_norm(), pbar = inst.p_bar();
    b.app_bound = [=] { return occupancy_bound(double(n), sigma, hnorm, dh, double(m), pbar); };
  } else if (nm == "geometry") {
    GeometryInstance g;
    g.d = p.get<std::size_t>("d", 1);
    g.n = p.get<std::size_t>("n");
    g.rho = p.get<double>("rho");
    auto psi = p.get<std::string>("psi", "non_isolated");
    g.psi = point_functional_by_name(psi, g.n, g.rho, g.d);
    if (p.has("sigma")) g.sigma = p.get<double>("sigma");
    auto pilot = p.get<std::uint64_t>("pilot_samples", 100000);
    auto seed = p.get<std::uint64_t>("pilot_seed", 99);
    double cd = p.get<double>("C_d", 1.0);
    g.validate();
    auto gc = geometry_coupling(g, pilot, seed);
    b.coupling = gc.coupling;
    double sigma = gc.sigma, pn = g.psi.norm, rho = g.rho;
    std::size_t n = g.n;
    int d = int(g.d);
    b.app_bound = [=] { return geometry_bound(double(n), sigma, pn, rho, d, cd); };
  } else if (nm == "graph") {
    GraphInstance gi;
    gi.n = p.get<int>("n");
    gi.lambda = p.get<double>("lambda");
    auto [hn, hp] = detail::named_param(p.raw_or("h", json("same_component")), "h");
    gi.h = graph_functional_by_name(hn, int(hp));
    if (p.has("fixed_vertex")) gi.fixed_vertex = p.get<int>("fixed_vertex");
    gi.pilot_samples = p.get<std::uint64_t>("pilot_samples", 100000);
    gi.pilot_seed = p.get<std::uint64_t>("pilot_seed", 4242);
    double k = p.get<double>("K", 1.0);
    auto gc = graph_coupling(gi);
    b.coupling = gc.coupling;
    double sigma = gc.sigma, mu = gc.model->mu, lam = gi.lambda;
    int n = gi.n;
    auto h = gi.h;
    b.app_bound = [=] { return graph_bound(double(n), sigma, lam, h.h_norm, h.dh_norm, k); };
    if (h.size_term)
      b.w_sampler = [=](const McOptions& o) {
        auto u = graph_u_samples(n, lam, h, o);
        for (double& x : u) x = (x - mu) / sigma;
        return u;
      };
  } else {
    config_error("unknown coupling '" + nm + "'");
  }
  p.finish();
  b.n = b.coupling->info().n;
  b.resolved = p.resolved();
  return b;
}

}  // namespace stein
