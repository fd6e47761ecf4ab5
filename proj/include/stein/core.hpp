#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "error.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace stein {

// One realisation of (W, W', G) with the auxiliary fields W'', D~ and S.
// Defaults: W'' = W, D~ = W' - W, S = 1.
struct CouplingSample {
  double w = 0.0;
  double wp = 0.0;
  double g = 0.0;
  double wdd = 0.0;
  double dt = 0.0;
  double s = 1.0;

  double d() const { return wp - w; }
  double dp() const { return wdd - w; }
};

inline CouplingSample make_sample(double w, double wp, double g) { return {w, wp, g, w, wp - w, 1.0}; }

inline CouplingSample standardize(const CouplingSample& x, double mu, double sigma) {
  require(sigma > 0.0 && std::isfinite(sigma), "standardisation needs sigma > 0");
  return {(x.w - mu) / sigma, (x.wp - mu) / sigma, x.g / sigma, (x.wdd - mu) / sigma, x.dt / sigma, x.s};
}

// Almost-sure truncation levels: |G| <= alpha, |D| <= beta, |D~| <= beta_t, |D'| <= beta_p, |S| <= gamma.
struct TruncationParams {
  double alpha = std::numeric_limits<double>::infinity();
  double beta = std::numeric_limits<double>::infinity();
  double beta_t = std::numeric_limits<double>::infinity();
  double beta_p = std::numeric_limits<double>::infinity();
  double gamma = std::numeric_limits<double>::infinity();
};

struct CouplingInfo {
  std::string name;
  std::size_t n = 0;
  bool exact_stein = true;             // residual zero for every f
  std::optional<double> r0_bound;      // known residual bound for sup|f| <= 1
  bool r1_zero = true;                 // E^W(G D~) = E^W(G D)
  bool r2_zero = true;                 // E^W S = 1
  bool r3_zero = false;                // W'' independent of (G D~, S)
  bool equal_marginals = true;
  bool exchangeable = false;
  bool config_determines_w = true;     // configuration sigma-algebra contains sigma(W)
  bool config_determines_wdd = true;   // ... and sigma(W'')
  bool enumerable = false;             // full enumeration within the outcome cap
  bool inner_enumerable = false;       // exact averaging over the index randomisation
  bool degenerate = false;
  std::optional<TruncationParams> as_bounds;
  std::vector<std::string> flags;
};

struct WeightedSample {
  double prob;
  CouplingSample s;
};

struct Configuration {
  double prob = 1.0;
  std::vector<WeightedSample> inner;  // probabilities conditional on the configuration
};

struct Enumeration {
  std::vector<Configuration> configs;

  std::vector<WeightedSample> flatten() const {
    std::vector<WeightedSample> out;
    for (const auto& c : configs)
      for (const auto& x : c.inner) out.push_back({c.prob * x.prob, x.s});
    return out;
  }
  double total() const {
    KahanSum k;
    for (const auto& c : configs)
      for (const auto& x : c.inner) k.add(c.prob * x.prob);
    return k.value();
  }
  std::size_t size() const {
    std::size_t k = 0;
    for (const auto& c : configs) k += c.inner.size();
    return k;
  }
};

class Coupling {
 public:
  virtual ~Coupling() = default;
  virtual const CouplingInfo& info() const = 0;
  virtual CouplingSample draw(Rng& rng) const = 0;
  // Random configuration with its inner randomisation averaged exactly.
  virtual std::optional<Configuration> draw_configuration(Rng&) const { return std::nullopt; }
  virtual std::optional<Enumeration> enumerate(std::size_t = kOutcomeCap) const { return std::nullopt; }

  // E(G D | configuration) for a fresh configuration.
  std::optional<double> conditional_gd(Rng& rng) const {
    auto c = draw_configuration(rng);
    if (!c) return std::nullopt;
    double a = 0.0;
    for (const auto& x : c->inner) a += x.prob * x.s.g * x.s.d();
    return a;
  }
  // (E(G D~ | conf), E(S | conf)) for a fresh configuration.
  std::optional<std::pair<double, double>> conditional_gdtilde_s(Rng& rng) const {
    auto c = draw_configuration(rng);
    if (!c) return std::nullopt;
    double a = 0.0, b = 0.0;
    for (const auto& x : c->inner) {
      a += x.prob * x.s.g * x.s.dt;
      b += x.prob * x.s.s;
    }
    return std::make_pair(a, b);
  }
};

// Adapts a program `CouplingSample prog(Source&)` to the Coupling interface,
// optionally standardising its output.
template <class Prog>
class ProgramCoupling : public Coupling {
 public:
  ProgramCoupling(Prog prog, CouplingInfo info, double mu = 0.0, double sigma = 1.0)
      : prog_(std::move(prog)), info_(std::move(info)), mu_(mu), sigma_(sigma) {
    require(sigma_ > 0.0 && std::isfinite(sigma_), "standardisation needs sigma > 0");
  }

  const CouplingInfo& info() const override { return info_; }
  CouplingInfo& mutable_info() { return info_; }
  const Prog& program() const { return prog_; }
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }

  CouplingSample draw(Rng& rng) const override {
    RandomSource src(rng);
    return post(prog_(src));
  }

  std::optional<Configuration> draw_configuration(Rng& rng) const override {
    if (!info_.inner_enumerable) return std::nullopt;
    auto leaves = enumerate_inner([this](TreeSource& s) { return prog_(s); }, rng);
    Configuration c;
    c.inner.reserve(leaves.size());
    for (auto& l : leaves) c.inner.push_back({l.inner_prob, post(l.value)});
    return c;
  }

  std::optional<Enumeration> enumerate(std::size_t cap = kOutcomeCap) const override {
    if (!info_.enumerable) return std::nullopt;
    try {
      auto leaves = enumerate_program([this](TreeSource& s) { return prog_(s); }, cap);
      Enumeration e;
      std::size_t cur = std::numeric_limits<std::size_t>::max();
      for (auto& l : leaves) {
        if (l.config != cur) {
          e.configs.push_back({l.config_prob, {}});
          cur = l.config;
        }
        e.configs.back().inner.push_back({l.inner_prob, post(l.value)});
      }
      return e;
    } catch (const NotEnumerable&) {
      return std::nullopt;
    } catch (const TooManyOutcomes&) {
      return std::nullopt;
    }
  }

 private:
  CouplingSample post(const CouplingSample& x) const {
    if (mu_ == 0.0 && sigma_ == 1.0) return x;
    return standardize(x, mu_, sigma_);
  }

  Prog prog_;
  CouplingInfo info_;
  double mu_, sigma_;
};

// ---- test functions -------------------------------------------------------

struct TestFunction {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
  double sup = 1.0;    // sup |f|
  bool probe = false;  // moment probe, not part of the r0 maximum
};

using TestFunctionFamily = std::vector<TestFunction>;

inline TestFunctionFamily default_family() {
  TestFunctionFamily fam;
  fam.push_back({"one", [](double) { return 1.0; }, [](double) { return 0.0; }, 1.0, true});
  fam.push_back({"identity", [](double x) { return x; }, [](double) { return 1.0; },
                 std::numeric_limits<double>::infinity(), true});
  for (int k : {1, 2, 4, 8}) {
    for (int ph = 0; ph < 2; ++ph) {
      double phi = ph ? M_PI / 2 : 0.0;
      double scale = 1.0 / std::max(1, k);
      std::string nm = "sin_k" + std::to_string(k) + (ph ? "_phi_half_pi" : "_phi0");
      fam.push_back({nm, [=](double x) { return std::sin(k * x + phi) * scale; },
                     [=](double x) { return std::cos(k * x + phi) * k * scale; }, scale, false});
    }
  }
  // linear ramp from 0 to 1 over [-1/2, 1/2]
  fam.push_back({"ramp", [](double x) { return std::clamp(x + 0.5, 0.0, 1.0); },
                 [](double x) { return std::fabs(x) < 0.5 ? 1.0 : 0.0; }, 1.0, false});
  return fam;
}

// ---- chunked deterministic Monte Carlo ------------------------------------

struct McOptions {
  std::uint64_t n_samples = 100000;
  std::uint64_t seed = 1;
  std::uint64_t chunk_size = 10000;
  unsigned workers = 0;  // 0: STEIN_WORKERS or hardware concurrency
};

inline unsigned resolve_workers(unsigned w) {
  if (w > 0) return w;
  if (const char* e = std::getenv("STEIN_WORKERS")) {
    long v = std::strtol(e, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  unsigned h = std::thread::hardware_concurrency();
  return h ? h : 1;
}

// fn(Rng&, count, Acc&, chunk index) fills one chunk; chunks merge in order, so
// the result depends on (seed, chunk_size) only.
template <class Acc, class Fn>
Acc run_chunked(const McOptions& o, const Acc& proto, Fn&& fn) {
  require(o.chunk_size > 0, "chunk_size must be positive");
  const std::uint64_t chunks = o.n_samples == 0 ? 0 : (o.n_samples + o.chunk_size - 1) / o.chunk_size;
  std::vector<Acc> parts(chunks, proto);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr err;
  std::uint64_t err_chunk = std::numeric_limits<std::uint64_t>::max();
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::uint64_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        Rng rng = make_stream(o.seed, c);
        std::uint64_t cnt = std::min(o.chunk_size, o.n_samples - c * o.chunk_size);
        fn(rng, cnt, parts[c], c);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (c < err_chunk) { err_chunk = c; err = std::current_exception(); }
      }
    }
  };
  unsigned nw = std::min<std::uint64_t>(resolve_workers(o.workers), std::max<std::uint64_t>(chunks, 1));
  if (nw <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
  Acc total = proto;
  for (auto& p : parts) total.merge(p);
  return total;
}

template <class T>
struct Collect {
  std::vector<T> v;
  void merge(const Collect& o) { v.insert(v.end(), o.v.begin(), o.v.end()); }
};

inline std::vector<CouplingSample> draw_samples(const Coupling& c, const McOptions& o) {
  auto acc = run_chunked(o, Collect<CouplingSample>{}, [&](Rng& rng, std::uint64_t cnt, Collect<CouplingSample>& a, std::uint64_t) {
    a.v.reserve(cnt);
    for (std::uint64_t i = 0; i < cnt; ++i) a.v.push_back(c.draw(rng));
  });
  return std::move(acc.v);
}

// ---- grouping used by exact conditional expectations ------------------------

struct KeyedValue {
  double prob;
  double key;
  double y;
};

// Cells of equal key (relative tolerance 1e-9) with their probabilities and conditional means.
inline std::vector<std::pair<double, double>> conditional_cells(std::vector<KeyedValue> v) {
  std::sort(v.begin(), v.end(), [](const KeyedValue& a, const KeyedValue& b) { return a.key < b.key; });
  std::vector<std::pair<double, double>> cells;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    KahanSum p, py;
    while (j < v.size() && std::fabs(v[j].key - v[i].key) <= 1e-9 * (1.0 + std::fabs(v[i].key))) {
      p.add(v[j].prob);
      py.add(v[j].prob * v[j].y);
      ++j;
    }
    double pc = p.value();
    cells.push_back({pc, pc > 0.0 ? py.value() / pc : 0.0});
    i = j;
  }
  return cells;
}

// E|E(y | key)|
inline double conditional_abs_mean(std::vector<KeyedValue> v) {
  KahanSum s;
  for (auto& [p, m] : conditional_cells(std::move(v))) s.add(p * std::fabs(m));
  return s.value();
}

// Var E(y | key)
inline double conditional_variance(std::vector<KeyedValue> v) {
  auto cells = conditional_cells(std::move(v));
  KahanSum m1, m2;
  for (auto& [p, m] : cells) {
    m1.add(p * m);
    m2.add(p * m * m);
  }
  double mu = m1.value();
  return std::max(0.0, m2.value() - mu * mu);
}

// ---- Stein residual and moment probes ---------------------------------------

struct ResidualReport {
  std::vector<std::string> names;
  std::vector<Estimate> values;
  double r0_lower = 0.0;  // max over the non-probe members
  double r0_ci = 0.0;
  bool exact = false;
};

inline ResidualReport stein_residual_exact(const Enumeration& e, const TestFunctionFamily& fam) {
  ResidualReport r;
  r.exact = true;
  auto flat = e.flatten();
  for (const auto& tf : fam) {
    KahanSum s;
    for (const auto& x : flat) {
      const auto& c = x.s;
      s.add(x.prob * (c.g * (tf.f(c.wp) - tf.f(c.w)) - c.w * tf.f(c.w)));
    }
    r.names.push_back(tf.name);
    r.values.push_back({s.value(), 0.0, flat.size(), true});
    if (!tf.probe) r.r0_lower = std::max(r.r0_lower, std::fabs(s.value()));
  }
  return r;
}

inline ResidualReport stein_residual_mc(const Coupling& cp, const TestFunctionFamily& fam, const McOptions& o,
                                        double z = kZ99) {
  const std::size_t k = fam.size();
  auto acc = run_chunked(o, MomentsVec(k), [&](Rng& rng, std::uint64_t cnt, MomentsVec& a, std::uint64_t) {
    for (std::uint64_t i = 0; i < cnt; ++i) {
      auto c = cp.draw(rng);
      for (std::size_t j = 0; j < k; ++j) {
        const auto& f = fam[j].f;
        double fw = f(c.w);
        a[j].add(c.g * (f(c.wp) - fw) - c.w * fw);
      }
    }
  });
  ResidualReport r;
  for (std::size_t j = 0; j < k; ++j) {
    r.names.push_back(fam[j].name);
    r.values.push_back(acc[j].estimate(z));
    if (!fam[j].probe && std::fabs(acc[j].mean) > r.r0_lower) {
      r.r0_lower = std::fabs(acc[j].mean);
      r.r0_ci = acc[j].halfwidth(z);
    }
  }
  return r;
}

inline ResidualReport stein_residual(const Coupling& cp, const TestFunctionFamily& fam, const McOptions& o,
                                      bool prefer_exact = true) {
  if (prefer_exact)
    if (auto e = cp.enumerate()) return stein_residual_exact(*e, fam);
  return stein_residual_mc(cp, fam, o);
}

struct MomentReport {
  Estimate mean_w;
  Estimate var_w;
  Estimate e_gd;
  Estimate gd_minus_var;  // E(G D) - Var W
  Estimate e_abs_w;
  Estimate e_w1_sq;       // E(|W| + 1)^2
};

inline MomentReport moment_probe_exact(const Enumeration& e) {
  KahanSum w, w2, gd, aw;
  for (const auto& x : e.flatten()) {
    w.add(x.prob * x.s.w);
    w2.add(x.prob * x.s.w * x.s.w);
    gd.add(x.prob * x.s.g * x.s.d());
    aw.add(x.prob * std::fabs(x.s.w));
  }
  double m = w.value(), v = w2.value() - m * m;
  MomentReport r;
  r.mean_w = {m, 0.0, e.size(), true};
  r.var_w = {v, 0.0, e.size(), true};
  r.e_gd = {gd.value(), 0.0, e.size(), true};
  r.gd_minus_var = {gd.value() - v, 0.0, e.size(), true};
  r.e_abs_w = {aw.value(), 0.0, e.size(), true};
  r.e_w1_sq = {w2.value() + 2.0 * aw.value() + 1.0, 0.0, e.size(), true};
  return r;
}

inline MomentReport moment_probe_mc(const Coupling& cp, const McOptions& o, double z = kZ99) {
  auto acc = run_chunked(o, MomentsVec(5), [&](Rng& rng, std::uint64_t cnt, MomentsVec& a, std::uint64_t) {
    for (std::uint64_t i = 0; i < cnt; ++i) {
      auto c = cp.draw(rng);
      double gd = c.g * c.d();
      a[0].add(c.w);
      a[1].add(gd);
      a[2].add(gd - c.w * c.w);
      a[3].add(std::fabs(c.w));
      a[4].add((std::fabs(c.w) + 1.0) * (std::fabs(c.w) + 1.0));
    }
  });
  MomentReport r;
  r.mean_w = acc[0].estimate(z);
  r.var_w = {acc[0].variance(), 0.0, acc[0].n, false};
  r.e_gd = acc[1].estimate(z);
  r.gd_minus_var = acc[2].estimate(z);
  // Var W subtracts the sample mean squared; widen by the spread of m^2 over the mean's interval
  const double m = std::fabs(acc[0].mean), hm = r.mean_w.ci;
  r.gd_minus_var.value += m * m;
  r.gd_minus_var.ci += 2.0 * m * hm + hm * hm;
  r.e_abs_w = acc[3].estimate(z);
  r.e_w1_sq = acc[4].estimate(z);
  return r;
}

inline MomentReport moment_probe(const Coupling& cp, const McOptions& o, bool prefer_exact = true) {
  if (prefer_exact)
    if (auto e = cp.enumerate()) return moment_probe_exact(*e);
  return moment_probe_mc(cp, o);
}

}  // namespace stein
