#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "../core.hpp"
#include "../couplings.hpp"

namespace stein {

// Volume of the radius-r ball in R^d.
inline double ball_volume(double r, std::size_t d) {
  return std::pow(r, double(d)) * std::pow(M_PI, 0.5 * double(d)) / std::tgamma(1.0 + 0.5 * double(d));
}

// psi(x, X) seen through the offsets y - x of the other points within distance rho.
struct PointFunctional {
  std::string name;
  double norm = 0.0;
  // offsets: k points, d coordinates each
  std::function<double(const std::vector<double>& offsets, std::size_t k)> psi;
  bool exactly_centred = true;
};

struct GeometryInstance {
  std::size_t d = 1;
  std::size_t n = 0;
  double rho = 0.0;
  PointFunctional psi;
  std::optional<double> sigma;  // sd of U, else a pilot run is used

  double side() const { return std::pow(double(n), 1.0 / double(d)); }
  double kappa() const { return ball_volume(rho, d); }

  void validate() const {
    require(d >= 1 && n >= 1, "need d >= 1 and n >= 1");
    require(rho > 0.0 && std::isfinite(rho), "rho must be positive");
    require(rho < 0.5 * side(), "rho must be below half the torus side");
    require(bool(psi.psi), "psi must be set");
  }
};

// Non-isolation indicator minus its exact mean 1 - (1 - kappa/n)^(n-1).
inline PointFunctional psi_non_isolated(std::size_t n, double rho, std::size_t d) {
  double q = ball_volume(rho, d) / double(n);
  double c = 1.0 - std::pow(1.0 - q, double(n) - 1.0);
  return {"non_isolated", std::max(c, 1.0 - c),
          [c](const std::vector<double>&, std::size_t k) { return (k > 0 ? 1.0 : 0.0) - c; }, true};
}

// Neighbour count minus (n-1) kappa / n.
inline PointFunctional psi_neighbour_count(std::size_t n, double rho, std::size_t d) {
  double c = (double(n) - 1.0) * ball_volume(rho, d) / double(n);
  return {"neighbour_count", std::max(c, double(n) - 1.0 - c),
          [c](const std::vector<double>&, std::size_t k) { return double(k) - c; }, true};
}

inline PointFunctional psi_zero() {
  return {"zero", 0.0, [](const std::vector<double>&, std::size_t) { return 0.0; }, true};
}

inline PointFunctional point_functional_by_name(const std::string& name, std::size_t n, double rho, std::size_t d) {
  if (name == "non_isolated" || name == "isolation") return psi_non_isolated(n, rho, d);
  if (name == "neighbour_count" || name == "neighbor_count") return psi_neighbour_count(n, rho, d);
  if (name == "zero") return psi_zero();
  invalid_parameter("unknown point functional '" + name + "'");
}

struct PointSet {
  std::size_t d = 1;
  std::vector<double> c;  // flattened coordinates
  std::size_t size() const { return c.size() / d; }
  const double* at(std::size_t k) const { return c.data() + k * d; }
  void push(const double* p) { c.insert(c.end(), p, p + d); }
  void erase(std::size_t k) {
    std::size_t last = size() - 1;
    if (k != last) std::copy(at(last), at(last) + d, c.begin() + k * d);
    c.resize(last * d);
  }
};

struct TorusSpace {
  std::size_t d;
  double side;

  double delta(double a, double b) const {
    double t = std::fmod(b - a, side);
    if (t < -0.5 * side) t += side;
    else if (t >= 0.5 * side) t -= side;
    return t;
  }
  double dist2(const double* x, const double* y) const {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      double t = delta(x[k], y[k]);
      s += t * t;
    }
    return s;
  }
  bool within(const double* x, const double* y, double r) const { return dist2(x, y) <= r * r; }
};

struct GeometryDraw {
  PointSet x, xp, xpp;
  std::size_t i = 0;
  std::vector<std::size_t> n1, n3;   // indices into x
  PointSet n2, n4;
  std::size_t added = 0, removed = 0;
  double u = 0, up = 0, upp = 0;
  double delta_n2 = 0, delta_n3 = 0, delta_n1 = 0, delta_i = 0;  // U' - U = n2 + n3 - n1 - i
  double psi_i = 0;

  double delta_total() const { return delta_n2 + delta_n3 - delta_n1 - delta_i; }
};

struct GeometryModel {
  GeometryInstance inst;
  TorusSpace sp;

  explicit GeometryModel(GeometryInstance g) : inst(std::move(g)), sp{inst.d, inst.side()} { inst.validate(); }

  double psi_at(const PointSet& s, const double* x, std::ptrdiff_t skip) const {
    std::vector<double> off;
    std::size_t k = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (std::ptrdiff_t(j) == skip) continue;
      const double* y = s.at(j);
      if (!sp.within(x, y, inst.rho)) continue;
      for (std::size_t a = 0; a < inst.d; ++a) off.push_back(sp.delta(x[a], y[a]));
      ++k;
    }
    return inst.psi.psi(off, k);
  }
  double u_of(const PointSet& s) const {
    double u = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) u += psi_at(s, s.at(j), std::ptrdiff_t(j));
    return u;
  }

  // M_k = B_{(k+1) rho}(x_i) united with B_{k rho}(y) over y in N2
  bool in_m(std::size_t k, const GeometryDraw& g, const double* p) const {
    if (sp.within(p, g.x.at(g.i), double(k + 1) * inst.rho)) return true;
    for (std::size_t j = 0; j < g.n2.size(); ++j)
      if (sp.within(p, g.n2.at(j), double(k) * inst.rho)) return true;
    return false;
  }

  template <class Src>
  void uniform_point(Src& src, double* p) const {
    for (std::size_t a = 0; a < inst.d; ++a) p[a] = src.uniform() * sp.side;
  }

  template <class Src>
  GeometryDraw draw(Src& src) const {
    const std::size_t n = inst.n, d = inst.d;
    const double rho = inst.rho;
    GeometryDraw g;
    g.x.d = g.xp.d = g.xpp.d = g.n2.d = g.n4.d = d;
    std::vector<double> p(d);
    for (std::size_t j = 0; j < n; ++j) {
      uniform_point(src, p.data());
      g.x.push(p.data());
    }
    src.mark();
    g.i = src.index(n);
    const double* xi = g.x.at(g.i);
    std::vector<char> near(n, 0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != g.i && sp.within(xi, g.x.at(j), rho)) {
        g.n1.push_back(j);
        near[j] = 1;
      }
    for (std::size_t t = 0; t < g.n1.size(); ++t) {
      std::size_t tries = 0;
      do {
        uniform_point(src, p.data());
        if (++tries > 10000000) numeric_error("rejection sampling outside B_rho failed");
      } while (sp.within(xi, p.data(), rho));
      g.n2.push(p.data());
    }
    for (std::size_t j = 0; j < n; ++j)
      if (j != g.i && !near[j]) g.xp.push(g.x.at(j));
    for (std::size_t j = 0; j < g.n2.size(); ++j) g.xp.push(g.n2.at(j));
    if (g.xp.size() != n - 1) numeric_error("|X'| != n - 1");

    // W'' from a fresh process on M2 and the add/remove completion outside it
    PointSet fresh_out;
    fresh_out.d = d;
    for (std::size_t j = 0; j < n; ++j) {
      uniform_point(src, p.data());
      if (in_m(2, g, p.data())) g.n4.push(p.data());
      else fresh_out.push(p.data());
    }
    std::size_t inside = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_m(2, g, g.x.at(j))) ++inside;
      else g.xpp.push(g.x.at(j));
    }
    long k = long(inside) - long(g.n4.size());
    if (k > 0) {
      for (long t = 0; t < k; ++t) g.xpp.push(fresh_out.at(std::size_t(t)));
      g.added = std::size_t(k);
    } else if (k < 0) {
      for (long t = 0; t < -k; ++t) g.xpp.erase(src.index(g.xpp.size()));
      g.removed = std::size_t(-k);
    }
    for (std::size_t j = 0; j < g.n4.size(); ++j) g.xpp.push(g.n4.at(j));
    if (g.xpp.size() != n) numeric_error("|X''| != n");

    g.u = u_of(g.x);
    g.up = u_of(g.xp);
    g.upp = u_of(g.xpp);

    // decomposition of U' - U
    g.psi_i = psi_at(g.x, xi, std::ptrdiff_t(g.i));
    g.delta_i = g.psi_i;
    for (auto j : g.n1) g.delta_n1 += psi_at(g.x, g.x.at(j), std::ptrdiff_t(j));
    const std::size_t base = g.xp.size() - g.n2.size();
    for (std::size_t j = 0; j < g.n2.size(); ++j) g.delta_n2 += psi_at(g.xp, g.n2.at(j), std::ptrdiff_t(base + j));
    std::size_t pos = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == g.i || near[j]) continue;
      if (in_m(1, g, g.x.at(j))) {
        g.n3.push_back(j);
        g.delta_n3 += psi_at(g.xp, g.x.at(j), std::ptrdiff_t(pos)) - psi_at(g.x, g.x.at(j), std::ptrdiff_t(j));
      }
      ++pos;
    }
    return g;
  }

  // U must not change under a common translation of all points
  double translation_defect(Rng& rng) const {
    RandomSource src(rng);
    PointSet s;
    s.d = inst.d;
    std::vector<double> p(inst.d), shift(inst.d);
    for (std::size_t j = 0; j < inst.n; ++j) {
      uniform_point(src, p.data());
      s.push(p.data());
    }
    uniform_point(src, shift.data());
    PointSet t = s;
    for (std::size_t j = 0; j < t.c.size(); ++j) t.c[j] = std::fmod(t.c[j] + shift[j % inst.d], sp.side);
    return std::fabs(u_of(s) - u_of(t));
  }
};

struct GeometryCoupling {
  std::shared_ptr<GeometryModel> model;
  double sigma = 1.0;
  CouplingPtr coupling;
};

inline double geometry_pilot_variance(const GeometryModel& md, std::uint64_t samples, std::uint64_t seed) {
  McOptions op{samples, seed, 5000, 0};
  auto acc = run_chunked(op, Moments{}, [&](Rng& rng, std::uint64_t cnt, Moments& a, std::uint64_t) {
    RandomSource src(rng);
    for (std::uint64_t r = 0; r < cnt; ++r) {
      PointSet s;
      s.d = md.inst.d;
      std::vector<double> p(md.inst.d);
      for (std::size_t j = 0; j < md.inst.n; ++j) {
        md.uniform_point(src, p.data());
        s.push(p.data());
      }
      a.add(md.u_of(s));
    }
  });
  return acc.variance();
}

inline GeometryCoupling geometry_coupling(const GeometryInstance& inst, std::uint64_t pilot = 200000,
                                          std::uint64_t pilot_seed = 99) {
  auto md = std::make_shared<GeometryModel>(inst);
  GeometryCoupling gc;
  gc.model = md;
  double var = inst.sigma ? (*inst.sigma) * (*inst.sigma) : geometry_pilot_variance(*md, pilot, pilot_seed);
  CouplingInfo inf;
  inf.name = "geometry";
  inf.n = inst.n;
  inf.r3_zero = true;
  inf.exact_stein = inst.psi.exactly_centred;
  inf.config_determines_wdd = false;
  inf.degenerate = !(var > 1e-300) || inst.psi.norm == 0.0;
  if (inf.degenerate) inf.flags.push_back("degenerate");
  if (!inst.sigma) inf.flags.push_back("sigma-from-pilot");
  gc.sigma = inf.degenerate ? 1.0 : std::sqrt(var);
  auto prog = [md](auto& src) {
    auto g = md->draw(src);
    CouplingSample s = make_sample(g.u, g.up, -double(md->inst.n) * g.psi_i);
    s.wdd = g.upp;
    return s;
  };
  gc.coupling = make_coupling(prog, inf, 0.0, gc.sigma);
  return gc;
}

}  // namespace stein
