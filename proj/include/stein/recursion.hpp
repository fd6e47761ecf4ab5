#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "error.hpp"

namespace stein {

// kappa_k <= A / sigma_k + 0.4 eps + (1 / (eps sigma_k)) sum_{l<k} A_{k,l} kappa_l, for 2 <= k <= n.
struct RecursionProblem {
  struct Entry {
    std::size_t l;
    double value;
  };
  std::size_t n = 1;
  double A = 0.0;
  std::vector<std::vector<Entry>> rows;  // rows[k] for k = 2..n
  std::vector<double> sigma;             // sigma[k], k = 1..n; sigma[1] is forced to 1

  explicit RecursionProblem(std::size_t n_ = 1, double a = 0.0)
      : n(n_), A(a), rows(n_ + 1), sigma(n_ + 1, 1.0) {}

  void set(std::size_t k, std::size_t l, double v) {
    require(k >= 2 && k <= n && l >= 1 && l < k, "A_{k,l} needs 1 <= l < k <= n");
    for (auto& e : rows[k])
      if (e.l == l) {
        e.value = v;
        return;
      }
    rows[k].push_back({l, v});
  }

  void validate() const {
    require(n >= 1 && rows.size() == n + 1 && sigma.size() == n + 1, "recursion arrays must have size n + 1");
    require(A >= 0.0 && std::isfinite(A), "A must be non-negative");
    for (std::size_t k = 2; k <= n; ++k) {
      require(sigma[k] > 0.0 && std::isfinite(sigma[k]), "sigma_k must be positive");
      for (const auto& e : rows[k]) {
        require(e.l >= 1 && e.l < k, "A_{k,l} needs l < k");
        require(e.value >= 0.0 && std::isfinite(e.value), "A_{k,l} must be non-negative");
      }
    }
  }

  // A = 8 gamma, A_{k,k-1} = 5 gamma, sigma_k = sqrt(k)
  static RecursionProblem iid_example(std::size_t n, double gamma = 1.0) {
    require(gamma >= 0.0, "gamma must be non-negative");
    RecursionProblem p(n, 8.0 * gamma);
    for (std::size_t k = 2; k <= n; ++k) {
      p.sigma[k] = std::sqrt(double(k));
      p.set(k, k - 1, 5.0 * gamma);
    }
    return p;
  }
};

struct Lemma1Result {
  double kappa_n_bound = 0.0;
  double alpha_n = 0.0;
  double alpha_n_prime = 0.0;
  double c_n = 0.0;  // eps = c_n alpha_n / sigma_k; 0 when alpha_n = 0
};

inline double recursion_alpha(const RecursionProblem& p) {
  double a = 0.0;
  for (std::size_t k = 2; k <= p.n; ++k) {
    double s = 0.0;
    for (const auto& e : p.rows[k]) s += p.sigma[k] / (e.l == 1 ? 1.0 : p.sigma[e.l]) * e.value;
    a = std::max(a, s);
  }
  return a;
}

inline Lemma1Result lemma1_solve(const RecursionProblem& p) {
  p.validate();
  Lemma1Result r;
  const double sn = p.n == 1 ? 1.0 : p.sigma[p.n];
  if (p.n == 1) {
    r.kappa_n_bound = 1.0;
    return r;
  }
  r.alpha_n = recursion_alpha(p);
  if (r.alpha_n == 0.0) {
    // no coupling to earlier terms: inf over eps of A / sigma_n + 0.4 eps
    r.kappa_n_bound = p.A / sn;
    return r;
  }
  const double abar = std::max(p.A, 1.0), a = r.alpha_n;
  r.alpha_n_prime = std::sqrt(2.0 * a * (2.0 * a + 5.0 * abar));
  const double ap = r.alpha_n_prime;
  r.c_n = 1.0 + ap / (2.0 * a);
  r.kappa_n_bound = (5.0 * abar + 2.0 * a + ap) * (2.0 * a + ap) / (5.0 * ap * sn);
  return r;
}

// Iterates the inequality with equality, eps_k = c_n alpha_n / sigma_k; kappa_1 = 1.
inline std::vector<double> recursion_iterate(const RecursionProblem& p) {
  p.validate();
  auto sol = lemma1_solve(p);
  std::vector<double> kap(p.n + 1, 0.0);
  kap[1] = 1.0;
  for (std::size_t k = 2; k <= p.n; ++k) {
    const double sk = p.sigma[k];
    if (sol.alpha_n == 0.0) {
      kap[k] = p.A / sk;
      continue;
    }
    const double eps = sol.c_n * sol.alpha_n / sk;
    double s = 0.0;
    for (const auto& e : p.rows[k]) s += e.value * kap[e.l];
    kap[k] = p.A / sk + 0.4 * eps + s / (eps * sk);
  }
  return kap;
}

}  // namespace stein
