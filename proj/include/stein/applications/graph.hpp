#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "../core.hpp"
#include "../couplings.hpp"

namespace stein {

struct Graph {
  int n = 0;
  std::vector<std::vector<int>> adj;

  explicit Graph(int n_ = 0) : n(n_), adj(std::size_t(n_)) {}
  void add_edge(int a, int b) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  bool has_edge(int a, int b) const { return std::find(adj[a].begin(), adj[a].end(), b) != adj[a].end(); }
  std::size_t edges() const {
    std::size_t s = 0;
    for (const auto& v : adj) s += v.size();
    return s / 2;
  }
  // drops every edge with at least one endpoint flagged in `in`
  void drop_touching(const std::vector<int>& set, const std::vector<char>& in) {
    for (int k : set) {
      for (int nb : adj[k])
        if (!in[nb]) {
          auto& v = adj[nb];
          v.erase(std::find(v.begin(), v.end(), k));
        }
      adj[k].clear();
    }
  }
};

// Components by BFS; comp_of[v] indexes into comps.
struct Components {
  std::vector<std::vector<int>> comps;
  std::vector<int> comp_of;

  explicit Components(const Graph& g) : comp_of(std::size_t(g.n), -1) {
    std::vector<int> q;
    for (int s = 0; s < g.n; ++s) {
      if (comp_of[s] >= 0) continue;
      int id = int(comps.size());
      comps.emplace_back();
      auto& c = comps.back();
      comp_of[s] = id;
      c.push_back(s);
      for (std::size_t h = 0; h < c.size(); ++h)
        for (int nb : g.adj[c[h]])
          if (comp_of[nb] < 0) {
            comp_of[nb] = id;
            c.push_back(nb);
          }
    }
  }
  const std::vector<int>& of(int v) const { return comps[std::size_t(comp_of[v])]; }
  bool connected(int a, int b) const { return comp_of[a] == comp_of[b]; }
};

inline std::vector<int> component_of(const Graph& g, int s) {
  std::vector<char> seen(std::size_t(g.n), 0);
  std::vector<int> c{s};
  seen[s] = 1;
  for (std::size_t h = 0; h < c.size(); ++h)
    for (int nb : g.adj[c[h]])
      if (!seen[nb]) {
        seen[nb] = 1;
        c.push_back(nb);
      }
  return c;
}

// h(H, i, j), vanishing across components. rows() gives sum_{j in C} h(H, i, j)
// for every i of one component; pair() is a slow reference.
struct GraphFunctional {
  std::string name;
  double h_norm = 1.0;
  double dh_norm = 1.0;
  std::function<void(const Graph&, const std::vector<int>& comp, std::vector<double>& rows)> rows;
  std::function<double(const Graph&, int i, int j)> pair;
  // set when U depends on the component sizes only: U = sum over components of size_term(|C|)
  std::function<double(std::size_t)> size_term;
};

namespace detail {
inline std::vector<int> bfs_dist(const Graph& g, int s, int cap) {
  std::vector<int> dist(std::size_t(g.n), -1);
  std::vector<int> q{s};
  dist[s] = 0;
  for (std::size_t h = 0; h < q.size(); ++h) {
    int v = q[h];
    if (cap >= 0 && dist[v] >= cap) continue;
    for (int nb : g.adj[v])
      if (dist[nb] < 0) {
        dist[nb] = dist[v] + 1;
        q.push_back(nb);
      }
  }
  return dist;
}

// Biconnected blocks (vertex sets) of the component containing comp[0].
inline std::vector<std::vector<int>> blocks(const Graph& g, const std::vector<int>& comp) {
  std::vector<int> disc(std::size_t(g.n), -1), low(std::size_t(g.n), 0);
  std::vector<std::pair<int, int>> estack;
  std::vector<std::vector<int>> out;
  int timer = 0;
  struct Frame { int v, parent; std::size_t it; };
  std::vector<Frame> st;
  int root = comp[0];
  disc[root] = low[root] = timer++;
  st.push_back({root, -1, 0});
  while (!st.empty()) {
    auto& f = st.back();
    if (f.it < g.adj[f.v].size()) {
      int w = g.adj[f.v][f.it++];
      if (disc[w] < 0) {
        estack.push_back({f.v, w});
        disc[w] = low[w] = timer++;
        st.push_back({w, f.v, 0});
      } else if (w != f.parent && disc[w] < disc[f.v]) {
        estack.push_back({f.v, w});
        low[f.v] = std::min(low[f.v], disc[w]);
      }
    } else {
      int v = f.v, u = f.parent;
      st.pop_back();
      if (u < 0) break;
      low[u] = std::min(low[u], low[v]);
      if (low[v] >= disc[u]) {
        std::vector<int> b;
        while (!estack.empty()) {
          auto e = estack.back();
          estack.pop_back();
          b.push_back(e.first);
          b.push_back(e.second);
          if (e.first == u && e.second == v) break;
        }
        std::sort(b.begin(), b.end());
        b.erase(std::unique(b.begin(), b.end()), b.end());
        out.push_back(std::move(b));
      }
    }
  }
  return out;
}
}  // namespace detail

inline GraphFunctional graph_same_component() {
  return {"same_component", 1.0, 1.0,
          [](const Graph&, const std::vector<int>& c, std::vector<double>& r) { r.assign(c.size(), double(c.size())); },
          [](const Graph& g, int i, int j) {
            auto c = component_of(g, i);
            return std::find(c.begin(), c.end(), j) != c.end() ? 1.0 : 0.0;
          },
          [](std::size_t k) { return double(k) * double(k); }};
}

// connected and at graph distance <= m0
inline GraphFunctional graph_distance_capped(int m0) {
  require(m0 >= 0, "m0 must be non-negative");
  return {"distance_capped_" + std::to_string(m0), 1.0, 1.0,
          [m0](const Graph& g, const std::vector<int>& c, std::vector<double>& r) {
            r.assign(c.size(), 0.0);
            for (std::size_t k = 0; k < c.size(); ++k) {
              auto d = detail::bfs_dist(g, c[k], m0);
              for (int v : c)
                if (d[v] >= 0 && d[v] <= m0) r[k] += 1.0;
            }
          },
          [m0](const Graph& g, int i, int j) {
            auto d = detail::bfs_dist(g, i, -1);
            return d[j] >= 0 && d[j] <= m0 ? 1.0 : 0.0;
          },
          nullptr};
}

// i and j lie on a common cycle (i = j: i lies on some cycle)
inline GraphFunctional graph_same_cycle() {
  auto cyc_blocks = [](const Graph& g, const std::vector<int>& c) {
    std::vector<std::vector<int>> out;
    if (c.size() < 3) return out;
    for (auto& b : detail::blocks(g, c))
      if (b.size() >= 3) out.push_back(std::move(b));
    return out;
  };
  return {"same_cycle", 1.0, 1.0,
          [cyc_blocks](const Graph& g, const std::vector<int>& c, std::vector<double>& r) {
            r.assign(c.size(), 0.0);
            std::vector<double> acc(std::size_t(g.n), 0.0);
            std::vector<char> on(std::size_t(g.n), 0);
            for (const auto& b : cyc_blocks(g, c))
              for (int v : b) {
                acc[v] += double(b.size() - 1);
                on[v] = 1;
              }
            for (std::size_t k = 0; k < c.size(); ++k) r[k] = acc[c[k]] + (on[c[k]] ? 1.0 : 0.0);
          },
          [cyc_blocks](const Graph& g, int i, int j) {
            for (const auto& b : cyc_blocks(g, component_of(g, i))) {
              bool a = std::binary_search(b.begin(), b.end(), i), z = std::binary_search(b.begin(), b.end(), j);
              if (a && z) return 1.0;
            }
            return 0.0;
          },
          nullptr};
}

// I[connected] / |C(i)|; U counts components
inline GraphFunctional graph_inverse_size() {
  return {"inverse_size", 1.0, 1.0,
          [](const Graph&, const std::vector<int>& c, std::vector<double>& r) { r.assign(c.size(), 1.0); },
          [](const Graph& g, int i, int j) {
            auto c = component_of(g, i);
            return std::find(c.begin(), c.end(), j) != c.end() ? 1.0 / double(c.size()) : 0.0;
          },
          [](std::size_t) { return 1.0; }};
}

inline GraphFunctional graph_singleton() {
  return {"singleton", 1.0, 1.0,
          [](const Graph&, const std::vector<int>& c, std::vector<double>& r) {
            r.assign(c.size(), c.size() == 1 ? 1.0 : 0.0);
          },
          [](const Graph& g, int i, int j) { return i == j && g.adj[i].empty() ? 1.0 : 0.0; },
          [](std::size_t k) { return k == 1 ? 1.0 : 0.0; }};
}

// vertex indicator deg(i) = 1 spread over the component: h = (h0(i) + h0(j)) / (2|C|), so U counts leaves
inline GraphFunctional graph_debiased_leaf() {
  return {"debiased_leaf", 1.0, 1.0,
          [](const Graph& g, const std::vector<int>& c, std::vector<double>& r) {
            double tot = 0.0;
            for (int v : c) tot += g.adj[v].size() == 1 ? 1.0 : 0.0;
            r.assign(c.size(), 0.0);
            for (std::size_t k = 0; k < c.size(); ++k)
              r[k] = (double(c.size()) * (g.adj[c[k]].size() == 1 ? 1.0 : 0.0) + tot) / (2.0 * double(c.size()));
          },
          [](const Graph& g, int i, int j) {
            auto c = component_of(g, i);
            if (std::find(c.begin(), c.end(), j) == c.end()) return 0.0;
            double a = g.adj[i].size() == 1, b = g.adj[j].size() == 1;
            return (a + b) / (2.0 * double(c.size()));
          },
          nullptr};
}

inline std::vector<std::string> graph_statistics_library() {
  return {"same_component", "distance_capped", "same_cycle", "inverse_size", "singleton", "debiased_leaf"};
}

inline GraphFunctional graph_functional_by_name(const std::string& name, int param) {
  if (name == "same_component") return graph_same_component();
  if (name == "distance_capped") return graph_distance_capped(param);
  if (name == "same_cycle") return graph_same_cycle();
  if (name == "inverse_size") return graph_inverse_size();
  if (name == "singleton") return graph_singleton();
  if (name == "debiased_leaf") return graph_debiased_leaf();
  invalid_parameter("unknown graph functional '" + name + "'");
}

inline double graph_u(const Graph& g, const GraphFunctional& h) {
  Components cs(g);
  std::vector<double> r;
  double u = 0.0;
  for (const auto& c : cs.comps) {
    h.rows(g, c, r);
    for (double x : r) u += x;
  }
  return u;
}

inline double graph_row(const Graph& g, const GraphFunctional& h, int i) {
  auto c = component_of(g, i);
  std::vector<double> r;
  h.rows(g, c, r);
  return r[0];  // component_of lists i first
}

// 0 <= h(H,i,i) <= 2 ||Delta h|| on an isolated vertex
inline bool singleton_cap_ok(const GraphFunctional& h) {
  Graph g(1);
  double v = graph_row(g, h, 0);
  return v >= 0.0 && v <= 2.0 * h.dh_norm + 1e-12;
}

struct GraphCheck {
  double max_asymmetry = 0.0;
  double max_cross = 0.0;
  double max_row_defect = 0.0;
};

// symmetry, zero across components and rows() against pair() on random small graphs
inline GraphCheck graph_functional_spot_check(const GraphFunctional& h, int n, double lambda, std::uint64_t seed,
                                              int trials = 20) {
  Rng rng = make_stream(seed, 0);
  RandomSource src(rng);
  GraphCheck out;
  for (int t = 0; t < trials; ++t) {
    Graph g(n);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (src.bernoulli(lambda / double(n))) g.add_edge(a, b);
    Components cs(g);
    std::vector<double> r;
    for (const auto& c : cs.comps) {
      h.rows(g, c, r);
      for (std::size_t k = 0; k < c.size(); ++k) {
        double s = 0.0;
        for (int j : c) s += h.pair(g, c[k], j);
        out.max_row_defect = std::max(out.max_row_defect, std::fabs(s - r[k]));
      }
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        out.max_asymmetry = std::max(out.max_asymmetry, std::fabs(h.pair(g, i, j) - h.pair(g, j, i)));
        if (!cs.connected(i, j)) out.max_cross = std::max(out.max_cross, std::fabs(h.pair(g, i, j)));
      }
  }
  return out;
}

struct GraphInstance {
  int n = 0;
  double lambda = 0.5;
  GraphFunctional h = graph_same_component();
  std::optional<int> fixed_vertex;  // enumerate at one vertex (vertex exchangeability)
  std::uint64_t pilot_samples = 100000;
  std::uint64_t pilot_seed = 4242;

  double p() const { return lambda / double(n); }
  void validate() const {
    require(n >= 1, "need n >= 1");
    require(lambda > 0.0 && lambda < 1.0, "lambda must lie in (0, 1)");
    require(bool(h.rows), "graph functional must be set");
    if (fixed_vertex) require(*fixed_vertex >= 0 && *fixed_vertex < n, "fixed vertex out of range");
  }
};

namespace detail {
// every pair touching `set`: internal pairs first, then (set, outside)
template <class Src>
void resample_touching(Src& src, Graph& g, const std::vector<int>& set, const std::vector<char>& in, double p) {
  g.drop_touching(set, in);
  const std::uint64_t c = set.size();
  std::vector<int> out;
  for (int v = 0; v < g.n; ++v)
    if (!in[v]) out.push_back(v);
  const std::uint64_t inner = c * (c - 1) / 2, total = inner + c * out.size();
  src.bernoulli_process(total, p, [&](std::uint64_t t) {
    if (t < inner) {
      std::uint64_t a = std::uint64_t((1.0 + std::sqrt(1.0 + 8.0 * double(t))) / 2.0);
      while (a * (a - 1) / 2 > t) --a;
      while ((a + 1) * a / 2 <= t) ++a;
      std::uint64_t b = t - a * (a - 1) / 2;
      g.add_edge(set[a], set[b]);
    } else {
      std::uint64_t r = t - inner;
      g.add_edge(set[r / out.size()], out[r % out.size()]);
    }
  });
}

template <class Src>
Graph random_graph(Src& src, int n, double p) {
  Graph g(n);
  const std::uint64_t nn = std::uint64_t(n);
  src.bernoulli_process(nn * (nn - 1) / 2, p, [&](std::uint64_t t) {
    std::uint64_t a = std::uint64_t((1.0 + std::sqrt(1.0 + 8.0 * double(t))) / 2.0);
    while (a * (a - 1) / 2 > t) --a;
    while ((a + 1) * a / 2 <= t) ++a;
    g.add_edge(int(a), int(t - a * (a - 1) / 2));
  });
  return g;
}
}  // namespace detail

struct GraphDraw {
  Graph h, hp, hpp;
  int i = 0;
  std::vector<int> c, v;  // C(H, I) and V_I
  double row_i = 0.0;
  double u = 0, up = 0, upp = 0;
};

struct GraphModel {
  GraphInstance inst;
  double mu = 0.0;     // E U
  double var = 0.0;    // Var U
  bool exact = false;  // mu and var by enumeration over graphs

  template <class Src>
  GraphDraw draw(Src& src) const {
    const int n = inst.n;
    const double p = inst.p();
    GraphDraw d;
    d.h = detail::random_graph(src, n, p);
    src.mark();
    d.i = inst.fixed_vertex ? *inst.fixed_vertex : int(src.index(std::size_t(n)));
    d.c = component_of(d.h, d.i);
    std::vector<char> in(std::size_t(n), 0);
    for (int k : d.c) in[k] = 1;
    d.hp = d.h;
    detail::resample_touching(src, d.hp, d.c, in, p);
    std::fill(in.begin(), in.end(), 0);
    for (int k : d.c)
      if (!in[k])
        for (int v : component_of(d.hp, k)) in[v] = 1;
    for (int v = 0; v < n; ++v)
      if (in[v]) d.v.push_back(v);
    d.hpp = d.h;
    detail::resample_touching(src, d.hpp, d.v, in, p);
    std::vector<double> r;
    inst.h.rows(d.h, d.c, r);
    d.row_i = r[0];
    d.u = graph_u(d.h, inst.h);
    d.up = graph_u(d.hp, inst.h);
    d.upp = graph_u(d.hpp, inst.h);
    return d;
  }
};

// E U and Var U: exact by summing over all graphs when n <= 6, else a pilot run.
inline std::vector<double> graph_u_samples(int n, double lambda, const GraphFunctional& h, const McOptions& o);

inline void graph_moments(GraphModel& md) {
  const auto& in = md.inst;
  if (in.n <= 6) {
    const int n = in.n;
    std::vector<std::pair<int, int>> pairs;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) pairs.push_back({a, b});
    const double p = in.p();
    KahanSum s1, s2;
    for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << pairs.size()); ++mask) {
      Graph g(n);
      int e = 0;
      for (std::size_t k = 0; k < pairs.size(); ++k)
        if (mask >> k & 1) {
          g.add_edge(pairs[k].first, pairs[k].second);
          ++e;
        }
      double w = std::pow(p, e) * std::pow(1.0 - p, double(pairs.size()) - e);
      double u = graph_u(g, in.h);
      s1.add(w * u);
      s2.add(w * u * u);
    }
    md.mu = s1.value();
    md.var = std::max(0.0, s2.value() - md.mu * md.mu);
    md.exact = true;
    return;
  }
  McOptions op{in.pilot_samples, in.pilot_seed, 5000, 0};
  Moments acc;
  for (double u : graph_u_samples(in.n, in.lambda, in.h, op)) acc.add(u);
  md.mu = acc.mean;
  md.var = acc.variance();
  md.exact = false;
}

struct GraphCoupling {
  std::shared_ptr<GraphModel> model;
  double sigma = 1.0;
  CouplingPtr coupling;
};

inline GraphCoupling graph_coupling(const GraphInstance& inst) {
  inst.validate();
  auto md = std::make_shared<GraphModel>();
  md->inst = inst;
  graph_moments(*md);
  GraphCoupling gc;
  gc.model = md;
  CouplingInfo inf;
  inf.name = "graph";
  inf.n = std::size_t(inst.n);
  inf.exchangeable = false;
  inf.flags.push_back("not-exchangeable");
  inf.exact_stein = md->exact;
  if (!md->exact) inf.flags.push_back("mu-from-pilot");
  inf.r3_zero = true;
  inf.config_determines_wdd = false;
  inf.inner_enumerable = inst.n <= 4;
  inf.enumerable = inst.n <= 4;
  inf.degenerate = !(md->var > 1e-300);
  if (inf.degenerate) inf.flags.push_back("degenerate");
  if (!singleton_cap_ok(inst.h)) inf.flags.push_back("singleton-cap-violated");
  gc.sigma = inf.degenerate ? 1.0 : std::sqrt(md->var);
  const double mu_i = md->mu / double(inst.n);
  auto prog = [md, mu_i](auto& src) {
    auto d = md->draw(src);
    CouplingSample s = make_sample(d.u, d.up, -double(md->inst.n) * (d.row_i - mu_i));
    s.wdd = d.upp;
    return s;
  };
  gc.coupling = make_coupling(prog, inf, md->mu, gc.sigma);
  return gc;
}

// U(H) samples, for distance sweeps. Size-only functionals skip the graph via union-find.
inline std::vector<double> graph_u_samples(int n, double lambda, const GraphFunctional& h, const McOptions& o) {
  require(lambda > 0.0 && lambda < 1.0 && n >= 1, "need n >= 1 and lambda in (0, 1)");
  const double p = lambda / double(n);
  const std::uint64_t nn = std::uint64_t(n), pairs = nn * (nn - 1) / 2;
  auto acc = run_chunked(o, Collect<double>{}, [&](Rng& rng, std::uint64_t cnt, Collect<double>& a, std::uint64_t) {
    RandomSource src(rng);
    std::vector<int> parent(nn), size(nn);
    auto find = [&](int v) {
      while (parent[v] != v) v = parent[v] = parent[parent[v]];
      return v;
    };
    for (std::uint64_t r = 0; r < cnt; ++r) {
      if (!h.size_term) {
        a.v.push_back(graph_u(detail::random_graph(src, n, p), h));
        continue;
      }
      for (int v = 0; v < n; ++v) parent[v] = v, size[v] = 1;
      src.bernoulli_process(pairs, p, [&](std::uint64_t t) {
        std::uint64_t x = std::uint64_t((1.0 + std::sqrt(1.0 + 8.0 * double(t))) / 2.0);
        while (x * (x - 1) / 2 > t) --x;
        while ((x + 1) * x / 2 <= t) ++x;
        int ra = find(int(x)), rb = find(int(t - x * (x - 1) / 2));
        if (ra == rb) return;
        if (size[ra] < size[rb]) std::swap(ra, rb);
        parent[rb] = ra;
        size[ra] += size[rb];
      });
      double u = 0.0;
      for (int v = 0; v < n; ++v)
        if (parent[v] == v) u += h.size_term(std::size_t(size[v]));
      a.v.push_back(u);
    }
  });
  return std::move(acc.v);
}

struct TailCheck {
  double empirical = 0.0;
  double se = 0.0;
  double bound = 0.0;
  double a = 0.0;
  bool ok = false;  // empirical <= bound + 3 se
};

// P(|C(H, 1)| >= C) against exp(-a C) / lambda, a = lambda - 1 - log lambda
inline TailCheck component_tail_check(int n, double lambda, int c, std::uint64_t samples = 200000,
                                      std::uint64_t seed = 1, unsigned workers = 0) {
  require(n >= 1 && lambda > 0.0 && lambda < 1.0 && c >= 0, "need n >= 1, lambda in (0, 1), C >= 0");
  const double p = lambda / double(n);
  McOptions o{samples, seed, 10000, workers};
  auto acc = run_chunked(o, Moments{}, [&](Rng& rng, std::uint64_t cnt, Moments& m, std::uint64_t) {
    RandomSource src(rng);
    std::vector<int> unseen;
    std::vector<std::uint64_t> hits;
    for (std::uint64_t r = 0; r < cnt; ++r) {
      unseen.resize(std::size_t(n - 1));
      for (int v = 1; v < n; ++v) unseen[std::size_t(v - 1)] = v;
      std::size_t size = 1, active = 1;
      while (active > 0 && size < std::size_t(c)) {
        --active;
        hits.clear();
        src.bernoulli_process(unseen.size(), p, [&](std::uint64_t k) { hits.push_back(k); });
        for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
          unseen[*it] = unseen.back();
          unseen.pop_back();
        }
        size += hits.size();
        active += hits.size();
      }
      m.add(size >= std::size_t(c) ? 1.0 : 0.0);
    }
  });
  TailCheck t;
  t.empirical = acc.mean;
  t.se = std::sqrt(std::max(acc.mean * (1.0 - acc.mean), 0.0) / double(std::max<std::uint64_t>(acc.n, 1)));
  t.a = lambda - 1.0 - std::log(lambda);
  t.bound = std::exp(-t.a * double(c)) / lambda;
  t.ok = t.empirical <= t.bound + 3.0 * t.se;
  return t;
}

}  // namespace stein
