#pragma once

// Configured experiment runner shared by the CLI and the tests.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "metrics.hpp"
#include "recursion.hpp"
#include "registry.hpp"
#include "zero_bias.hpp"

namespace stein {

struct ResultRow {
  std::string metric;
  double value = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> ci;
  std::optional<double> bound;
  std::vector<std::string> flags;
};

struct ExperimentResult {
  std::string experiment_id;
  std::string coupling;
  std::size_t n = 0;
  std::string seed;  // string so sweep aggregates can say "median"
  json config;       // fully resolved
  std::vector<ResultRow> rows;
  std::optional<double> kappa_bound;
  std::vector<std::string> check_failures;
  std::string output_path;
  std::string format = "csv";
};

inline const char* csv_header() { return "experiment_id,coupling,n,seed,metric,value,ci,bound,flags,version,config"; }

namespace detail {
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) {
    if (c == '"') o += '"';
    o += c;
  }
  return o + "\"";
}

inline std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string join(const std::vector<std::string>& v, const char* sep = ";") {
  std::string o;
  for (std::size_t i = 0; i < v.size(); ++i) o += (i ? sep : "") + v[i];
  return o;
}

inline bool has_flag(const std::vector<std::string>& f, const std::string& x) {
  return std::find(f.begin(), f.end(), x) != f.end();
}

// theorem id aliases
inline std::string canonical_theorem(const std::string& s) {
  static const std::map<std::string, std::string> m = {
      {"thm1", "theorem1"}, {"thm2", "theorem2"}, {"thm3", "theorem3"}, {"thm4", "theorem4"},
      {"cor1", "corollary1"}, {"cor2", "corollary2"}, {"cor3", "corollary3"}, {"cor4", "corollary4"},
      {"cor5", "corollary5"}, {"app", "application"}};
  auto it = m.find(s);
  std::string c = it == m.end() ? s : it->second;
  static const std::set<std::string> ok = {"theorem1", "theorem2", "theorem3", "theorem4", "corollary1",
                                           "corollary2", "corollary3", "corollary4", "corollary5", "application"};
  if (!ok.count(c)) config_error("unknown theorem id '" + s + "'");
  return c;
}

inline TruncationParams truncation_from(const json& j) {
  Params p(j, "truncation");
  TruncationParams t;
  const double inf = std::numeric_limits<double>::infinity();
  t.alpha = p.get<double>("alpha", inf);
  t.beta = p.get<double>("beta", inf);
  t.beta_t = p.get<double>("beta_tilde", inf);
  t.beta_p = p.get<double>("beta_prime", inf);
  t.gamma = p.get<double>("gamma", inf);
  p.finish();
  return t;
}

inline std::vector<std::string> string_list(const json& j, const char* where) {
  std::vector<std::string> out;
  if (j.is_string()) out.push_back(j.get<std::string>());
  else if (j.is_array())
    for (const auto& x : j) {
      if (!x.is_string()) config_error(std::string(where) + ": expected strings");
      out.push_back(x.get<std::string>());
    }
  else config_error(std::string(where) + ": expected a string or a list of strings");
  return out;
}

inline void add_estimate(std::vector<ResultRow>& rows, const std::string& name, const Estimate& e,
                         std::vector<std::string> flags = {}) {
  if (!std::isfinite(e.value)) return;
  ResultRow r{name, e.value, e.exact ? std::optional<double>(0.0) : std::optional<double>(e.ci), std::nullopt,
              std::move(flags)};
  if (e.exact) r.flags.push_back("exact");
  rows.push_back(std::move(r));
}

inline std::string metric_of(const BoundReport& b) {
  for (const auto& f : b.flags)
    if (f.rfind("metric=", 0) == 0) return f.substr(7);
  return "";
}

inline BoundReport wrap(const char* id, double v, const char* metric) {
  BoundReport b;
  b.id = id;
  b.value = v;
  b.flags.push_back(std::string("metric=") + metric);
  return b;
}

inline RecursionProblem recursion_problem_from(const json& j) {
  Params p(j, "tasks.recursion");
  auto kind = p.get<std::string>("problem", "iid");
  RecursionProblem prob;
  if (kind == "iid") {
    prob = RecursionProblem::iid_example(p.get<std::size_t>("n"), p.get<double>("gamma", 1.0));
  } else if (kind == "custom") {
    auto n = p.get<std::size_t>("n");
    prob = RecursionProblem(n, p.get<double>("A"));
    auto sig = p.get<std::vector<double>>("sigma");
    if (sig.size() != n) config_error("tasks.recursion: sigma needs n entries (sigma_1 .. sigma_n)");
    for (std::size_t k = 1; k <= n; ++k) prob.sigma[k] = sig[k - 1];
    prob.sigma[1] = 1.0;
    for (const auto& e : p.raw("entries")) {
      if (!e.is_array() || e.size() != 3) config_error("tasks.recursion: entries are [k, l, value]");
      prob.set(e[0].get<std::size_t>(), e[1].get<std::size_t>(), e[2].get<double>());
    }
  } else {
    config_error("tasks.recursion: problem must be iid or custom");
  }
  p.finish();
  return prob;
}
}  // namespace detail

inline ExperimentResult run_experiment(const json& cfg) {
  using namespace detail;
  Params top(cfg, "config");
  ExperimentResult res;
  res.experiment_id = top.get<std::string>("experiment_id", "experiment");
  McOptions o;
  o.seed = top.get<std::uint64_t>("seed");
  o.n_samples = top.get<std::uint64_t>("n_samples", 100000);
  o.chunk_size = top.get<std::uint64_t>("chunk_size", 10000);
  if (o.chunk_size == 0) config_error("chunk_size must be positive");
  res.seed = std::to_string(o.seed);

  json out = top.raw_or("output", json::object());
  {
    Params po(out, "output");
    res.output_path = po.get<std::string>("path", "-");
    res.format = po.get<std::string>("format", "csv");
    if (res.format != "csv" && res.format != "json") config_error("output.format must be csv or json");
    po.finish();
  }

  // tasks: object keyed by task name, or a list of names
  json tasks_in = top.raw("tasks");
  json tasks = json::object();
  if (tasks_in.is_array()) {
    for (const auto& t : tasks_in) {
      if (!t.is_string()) config_error("tasks: list entries must be task names");
      tasks[t.get<std::string>()] = json::object();
    }
  } else if (tasks_in.is_object()) {
    tasks = tasks_in;
  } else {
    config_error("tasks must be an object or a list");
  }
  static const std::set<std::string> known = {"residual", "moments", "terms", "bounds", "distance", "zero_bias",
                                              "recursion"};
  for (auto it = tasks.begin(); it != tasks.end(); ++it)
    if (!known.count(it.key())) config_error("unknown task '" + it.key() + "'");
  const bool needs_coupling = !(tasks.empty() || (tasks.size() == 1 && tasks.contains("recursion")));

  std::optional<BuiltCoupling> bc;
  json resolved_coupling;
  if (top.has("coupling") || needs_coupling) {
    bc = build_coupling(top.raw("coupling"));
    res.coupling = bc->name;
    res.n = bc->n;
    resolved_coupling = bc->resolved;
  }
  top.finish();
  res.config = top.resolved();
  if (bc) res.config["coupling"] = resolved_coupling;

  auto sub = [&](const char* name) -> json {
    const json& t = tasks.at(name);
    return t.is_null() || t.is_boolean() ? json::object() : t;
  };
  json resolved_tasks = json::object();

  if (tasks.contains("residual")) {
    Params p(sub("residual"), "tasks.residual");
    bool exact = p.get<bool>("prefer_exact", true);
    p.finish();
    resolved_tasks["residual"] = p.resolved();
    auto r = stein_residual(*bc->coupling, default_family(), o, exact);
    for (std::size_t k = 0; k < r.names.size(); ++k) add_estimate(res.rows, "residual:" + r.names[k], r.values[k]);
    ResultRow r0{"residual:r0_lower", r.r0_lower, r.exact ? 0.0 : r.r0_ci, std::nullopt, {}};
    if (r.exact) r0.flags.push_back("exact");
    res.rows.push_back(r0);
  }

  if (tasks.contains("moments")) {
    Params p(sub("moments"), "tasks.moments");
    bool exact = p.get<bool>("prefer_exact", true);
    p.finish();
    resolved_tasks["moments"] = p.resolved();
    auto m = moment_probe(*bc->coupling, o, exact);
    add_estimate(res.rows, "moment:mean_w", m.mean_w);
    add_estimate(res.rows, "moment:var_w", m.var_w);
    add_estimate(res.rows, "moment:e_gd", m.e_gd);
    add_estimate(res.rows, "moment:gd_minus_var", m.gd_minus_var);
    add_estimate(res.rows, "moment:e_abs_w", m.e_abs_w);
  }

  // one error-term report serves both terms and bounds
  std::optional<ErrorTermReport> terms;
  std::optional<TruncationParams> trunc;
  std::vector<std::string> theorems;
  std::optional<double> epsilon;
  bool want_terms = tasks.contains("terms"), want_bounds = tasks.contains("bounds");
  if (want_terms || want_bounds) {
    EstimateOptions eo;
    auto read_common = [&](Params& p) {
      if (p.has("truncation")) {
        const json& t = p.raw("truncation");
        if (!(t.is_string() && t.get<std::string>() == "auto")) trunc = truncation_from(t);
      }
      if (p.has("epsilon")) epsilon = p.get<double>("epsilon");
      if (p.get<bool>("r7r8", false)) eo.r7r8 = true;
      eo.n_configs = p.get<std::uint64_t>("n_configs", eo.n_configs);
      eo.n_pairs = p.get<std::uint64_t>("n_pairs", eo.n_pairs);
    };
    if (want_terms) {
      Params p(sub("terms"), "tasks.terms");
      read_common(p);
      p.finish();
      resolved_tasks["terms"] = p.resolved();
    }
    if (want_bounds) {
      json b = sub("bounds");
      if (b.is_string() || b.is_array()) b = json{{"theorems", b}};
      Params p(b, "tasks.bounds");
      for (const auto& t : string_list(p.raw_or("theorems", json::array({"theorem1"})), "tasks.bounds.theorems"))
        theorems.push_back(canonical_theorem(t));
      read_common(p);
      p.finish();
      resolved_tasks["bounds"] = p.resolved();
    }
    if (!trunc) trunc = bc->coupling->info().as_bounds;
    if (trunc) eo.trunc = trunc;
    if (has_flag(theorems, "theorem3")) eo.r7r8 = true;
    if (has_flag(theorems, "theorem4") && !epsilon) epsilon = 0.1;
    if (epsilon) {
      if (!(*epsilon > 0.0)) config_error("epsilon must be positive");
      // sup_a P[a <= W <= a + eps | X] <= 1 always holds
      eo.conc = ConditionalConcentration{*epsilon, [](const CouplingSample&) { return 1.0; }};
    }
    bool needs_terms = want_terms || std::any_of(theorems.begin(), theorems.end(),
                                                 [](const std::string& t) { return t != "application"; });
    if (needs_terms) terms = estimate_all(*bc->coupling, default_family(), o, eo);
  }

  if (want_terms && terms) {
    const auto& r = *terms;
    const std::pair<const char*, const Estimate*> list[] = {
        {"r0", &r.r0},     {"r1", &r.r1},   {"r2", &r.r2},        {"r3", &r.r3},         {"r3_hat", &r.r3_hat},
        {"r4", &r.r4},     {"r5", &r.r5},   {"r4p", &r.r4p},      {"r5p", &r.r5p},       {"r6", &r.r6},
        {"r6p", &r.r6p},   {"r7", &r.r7},   {"r8", &r.r8},        {"r9", &r.r9},         {"r10", &r.r10},
        {"r11", &r.r11},   {"r12", &r.r12}, {"var_cond_gd", &r.var_cond_gd}, {"e_abs_w", &r.e_abs_w},
        {"e_w1_sq", &r.e_w1_sq}, {"e_gd2", &r.e_gd2}, {"e_gdt_dp", &r.e_gdt_dp}, {"e_s_dp", &r.e_s_dp}};
    for (const auto& [nm, e] : list) add_estimate(res.rows, std::string("term:") + nm, *e, r.flags);
  }

  std::vector<BoundReport> bounds;
  for (const auto& t : theorems) {
    try {
      const auto* r = terms ? &*terms : nullptr;
      auto need_trunc = [&]() -> const TruncationParams& {
        if (!trunc) invalid_parameter("no truncation levels given and the coupling has none");
        return *trunc;
      };
      BoundReport b;
      if (t == "theorem1") b = bound_theorem1(*r);
      else if (t == "corollary1") b = wrap("corollary1", bound_corollary1(r->var_cond_gd.value, r->e_gd2.value), "dW");
      else if (t == "corollary2")
        b = wrap("corollary2", bound_corollary2(r->e_gd2.value, r->e_gdt_dp.value, r->e_s_dp.value), "dW");
      else if (t == "corollary3") {
        auto [a, bb] = corollary3_constants(*r);
        b = wrap("corollary3", bound_corollary3(a, bb), "dW");
        b.inputs = {{"A", a}, {"B", bb}};
      } else if (t == "theorem2") b = wrap("theorem2", bound_theorem2(*r, need_trunc(), r->e_abs_w.value), "dK");
      else if (t == "theorem3") b = wrap("theorem3", bound_theorem3(*r, r->e_abs_w.value, r->e_w1_sq.value), "dK");
      else if (t == "theorem4") {
        b = wrap("theorem4", bound_theorem4(*r, *epsilon), "dK");
        b.inputs = {{"epsilon", *epsilon}};
        b.flags.push_back("theta=1");
      } else if (t == "corollary4") {
        const auto& tr = need_trunc();
        b = wrap("corollary4", bound_corollary4(r->var_cond_gd.value, tr.alpha, tr.beta), "dK");
      } else if (t == "corollary5") {
        const auto& tr = need_trunc();
        b = wrap("corollary5", bound_corollary5(tr.alpha, tr.beta, tr.beta_t, tr.beta_p, tr.gamma), "dK");
      } else {
        if (!bc->app_bound) invalid_parameter("coupling '" + bc->name + "' has no application bound");
        b = bc->app_bound();
      }
      if (r && t != "application")
        for (const auto& f : r->flags)
          if (!has_flag(b.flags, f)) b.flags.push_back(f);
      if (!b.condition_ok && !has_flag(b.flags, "condition-violated")) b.flags.push_back("condition-violated");
      bounds.push_back(b);
      ResultRow row{"bound:" + b.id, b.value, std::nullopt, std::nullopt, b.flags};
      res.rows.push_back(row);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::invalid_parameter) throw;
      res.rows.push_back({"bound:" + t, std::numeric_limits<double>::quiet_NaN(), std::nullopt, std::nullopt,
                          {std::string("unavailable: ") + e.what()}});
    }
  }

  if (tasks.contains("distance")) {
    json d = sub("distance");
    if (d.is_string() || d.is_array()) d = json{{"metrics", d}};
    Params p(d, "tasks.distance");
    auto metrics = string_list(p.raw_or("metrics", json::array({"dk"})), "tasks.distance.metrics");
    bool exact = p.get<bool>("prefer_exact", true);
    McOptions od = o;
    od.n_samples = p.get<std::uint64_t>("n_samples", o.n_samples);
    p.finish();
    resolved_tasks["distance"] = p.resolved();
    for (const auto& m : metrics)
      if (m != "dk" && m != "dw") config_error("tasks.distance: metric must be dk or dw");

    std::optional<DiscreteDistribution> law;
    std::vector<double> ws;
    if (exact)
      if (auto en = bc->coupling->enumerate()) {
        std::vector<double> v, q;
        double tot = en->total();
        for (const auto& x : en->flatten()) {
          v.push_back(x.s.w);
          q.push_back(x.prob / tot);
        }
        law = DiscreteDistribution(v, q);
      }
    if (!law) {
      if (bc->w_sampler) ws = bc->w_sampler(od);
      else {
        const auto& cp = *bc->coupling;
        ws = run_chunked(od, Collect<double>{}, [&](Rng& rng, std::uint64_t cnt, Collect<double>& a, std::uint64_t) {
               for (std::uint64_t k = 0; k < cnt; ++k) a.v.push_back(cp.draw(rng).w);
             }).v;
      }
    }
    for (const auto& m : metrics) {
      ResultRow row;
      row.metric = "distance:" + m;
      double slack = 0.0;
      if (law) {
        row.value = m == "dk" ? exact_dk(*law) : exact_dw(*law);
        row.ci = 0.0;
        row.flags.push_back("exact");
      } else {
        auto de = m == "dk" ? empirical_dk(ws) : empirical_dw(ws);
        row.value = de.value;
        if (m == "dk") row.ci = slack = de.dkw_halfwidth;
        row.flags.push_back("n=" + std::to_string(de.n));
      }
      // tightest finite bound for the same metric
      const std::string want = m == "dk" ? "dK" : "dW";
      for (const auto& b : bounds)
        if (metric_of(b) == want && std::isfinite(b.value) && (!row.bound || b.value < *row.bound)) {
          row.bound = b.value;
        }
      for (const auto& b : bounds)
        if (metric_of(b) == want && std::isfinite(b.value) && b.value < row.value - slack) {
          std::ostringstream s;
          s << res.experiment_id << ": bound " << b.id << " = " << b.value << " below distance " << m << " = "
            << row.value << " (slack " << slack << ")";
          res.check_failures.push_back(s.str());
        }
      res.rows.push_back(row);
    }
  }

  if (tasks.contains("zero_bias")) {
    Params p(sub("zero_bias"), "tasks.zero_bias");
    std::vector<double> grid = default_zero_bias_grid();
    if (p.has("grid")) {
      const json& g = p.raw("grid");
      if (g.is_array()) grid = g.get<std::vector<double>>();
      else {
        Params pg(g, "tasks.zero_bias.grid");
        grid = uniform_grid(pg.get<double>("lo", -5.0), pg.get<double>("hi", 5.0), pg.get<std::size_t>("points", 401));
        pg.finish();
      }
    }
    auto path = p.get<std::string>("output", "");
    bool exact = p.get<bool>("prefer_exact", true);
    p.finish();
    resolved_tasks["zero_bias"] = p.resolved();
    auto zd = zero_bias_density(*bc->coupling, grid, o, exact);
    if (!path.empty()) {
      std::ofstream f(path);
      if (!f) config_error("cannot open zero-bias output '" + path + "'");
      write_density_csv(f, zd);
    }
    std::vector<std::string> fl;
    if (zd.exact) fl.push_back("exact");
    if (zd.non_informative) fl.push_back("non-informative");
    res.rows.push_back({"zero_bias:integral", zd.integral.value, zd.integral.ci, std::nullopt, fl});
    double mx = 0.0;
    for (double v : zd.rho_hat) mx = std::max(mx, v);
    res.rows.push_back({"zero_bias:max_rho", mx, std::nullopt, std::nullopt, fl});
  }

  if (tasks.contains("recursion")) {
    auto prob = recursion_problem_from(sub("recursion"));
    resolved_tasks["recursion"] = sub("recursion");
    auto sol = lemma1_solve(prob);
    auto it = recursion_iterate(prob);
    res.kappa_bound = sol.kappa_n_bound;
    res.rows.push_back({"recursion:kappa_bound", sol.kappa_n_bound, std::nullopt, std::nullopt, {}});
    res.rows.push_back({"recursion:alpha_n", sol.alpha_n, std::nullopt, std::nullopt, {}});
    res.rows.push_back({"recursion:c_n", sol.c_n, std::nullopt, std::nullopt, {}});
    res.rows.push_back({"recursion:iterate_kappa_n", it[prob.n], std::nullopt, sol.kappa_n_bound, {}});
  }

  res.config["tasks"] = resolved_tasks;
  for (auto& r : res.rows)
    if (r.value < 0.0 && r.metric.rfind("bound:", 0) == 0) numeric_error("negative bound " + r.metric);
  return res;
}

inline void write_rows_csv(std::ostream& os, const ExperimentResult& r, const std::string& version) {
  using detail::csv_field;
  using detail::num;
  const std::string cfg = csv_field(r.config.dump());
  for (const auto& row : r.rows) {
    os << csv_field(r.experiment_id) << ',' << csv_field(r.coupling) << ',' << r.n << ',' << r.seed << ','
       << csv_field(row.metric) << ',' << num(row.value) << ',' << (row.ci ? num(*row.ci) : "") << ','
       << (row.bound ? num(*row.bound) : "") << ',' << csv_field(detail::join(row.flags)) << ',' << csv_field(version)
       << ',' << cfg << '\n';
  }
}

inline json result_json(const ExperimentResult& r, const std::string& version) {
  json j;
  j["experiment_id"] = r.experiment_id;
  j["coupling"] = r.coupling;
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["version"] = version;
  j["config"] = r.config;
  if (r.kappa_bound) j["kappa_bound"] = *r.kappa_bound;
  json rows = json::array();
  for (const auto& row : r.rows) {
    json x;
    x["metric"] = row.metric;
    x["value"] = std::isnan(row.value) ? json(nullptr) : json(row.value);
    x["ci"] = row.ci ? json(*row.ci) : json(nullptr);
    x["bound"] = row.bound ? json(*row.bound) : json(nullptr);
    x["flags"] = row.flags;
    rows.push_back(x);
  }
  j["rows"] = rows;
  return j;
}

// ---- sweeps ------------------------------------------------------------------

namespace detail {
inline void set_dotted(json& j, const std::string& key, const json& v) {
  std::string ptr;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) ptr += "/" + part;
  j[json::json_pointer(ptr)] = v;
}
}  // namespace detail

struct SweepResult {
  std::vector<ExperimentResult> runs;  // aggregated per grid point when seeds are given
};

// Cartesian product over dotted keys; "_seeds" (list, or count starting at the template seed) aggregates by median.
inline SweepResult run_sweep(const json& tmpl, const json& grid) {
  if (!grid.is_object()) config_error("grid must be a JSON object");
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<std::string, std::vector<json>>> axes;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    if (it.key() == "_seeds") {
      if (it.value().is_array()) seeds = it.value().get<std::vector<std::uint64_t>>();
      else {
        std::uint64_t base = tmpl.value("seed", std::uint64_t(1));
        auto k = it.value().get<std::uint64_t>();
        for (std::uint64_t s = 0; s < k; ++s) seeds.push_back(base + s);
      }
      continue;
    }
    if (!it.value().is_array()) config_error("grid axis '" + it.key() + "' must be a list");
    axes.push_back({it.key(), it.value().get<std::vector<json>>()});
  }
  SweepResult out;
  if (axes.empty()) return out;
  for (const auto& a : axes)
    if (a.second.empty()) return out;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    json cfg = tmpl;
    for (std::size_t a = 0; a < axes.size(); ++a) detail::set_dotted(cfg, axes[a].first, axes[a].second[idx[a]]);
    if (seeds.empty()) {
      out.runs.push_back(run_experiment(cfg));
    } else {
      std::vector<ExperimentResult> rs;
      for (auto s : seeds) {
        json c = cfg;
        c["seed"] = s;
        rs.push_back(run_experiment(c));
      }
      ExperimentResult agg = rs.front();
      agg.seed = "median";
      agg.config["seed"] = seeds;
      for (std::size_t k = 0; k < agg.rows.size(); ++k) {
        std::vector<double> v, b;
        for (const auto& r : rs)
          if (k < r.rows.size()) {
            if (!std::isnan(r.rows[k].value)) v.push_back(r.rows[k].value);
            if (r.rows[k].bound) b.push_back(*r.rows[k].bound);
          }
        agg.rows[k].value = v.empty() ? std::numeric_limits<double>::quiet_NaN() : median(v);
        agg.rows[k].ci.reset();
        if (!b.empty()) agg.rows[k].bound = median(b);
        agg.rows[k].flags.push_back("seeds=" + std::to_string(seeds.size()));
      }
      agg.check_failures.clear();
      for (auto& r : rs) agg.check_failures.insert(agg.check_failures.end(), r.check_failures.begin(), r.check_failures.end());
      out.runs.push_back(std::move(agg));
    }
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }
  return out;
}

}  // namespace stein
