#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

namespace stein {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
inline double normal_quantile(double p) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p); }

inline constexpr double kZ99 = 2.5758293035489004;  // two-sided 99%

struct Estimate {
  double value = 0.0;
  double ci = 0.0;  // half-width; 0 for exact values
  std::uint64_t n = 0;
  bool exact = false;
};

// Welford running moments with Chan's pairwise merge.
struct Moments {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    double d = x - mean;
    mean += d / double(n);
    m2 += d * (x - mean);
  }
  void merge(const Moments& o) {
    if (o.n == 0) return;
    if (n == 0) { *this = o; return; }
    double tot = double(n + o.n);
    double d = o.mean - mean;
    mean += d * double(o.n) / tot;
    m2 += o.m2 + d * d * double(n) * double(o.n) / tot;
    n += o.n;
  }
  double variance() const { return n > 1 ? m2 / double(n - 1) : 0.0; }
  double halfwidth(double z = kZ99) const { return n > 1 ? z * std::sqrt(variance() / double(n)) : 0.0; }
  Estimate estimate(double z = kZ99) const { return {mean, halfwidth(z), n, false}; }
};

struct MomentsVec {
  std::vector<Moments> m;
  MomentsVec() = default;
  explicit MomentsVec(std::size_t k) : m(k) {}
  void merge(const MomentsVec& o) {
    if (m.empty()) { m = o.m; return; }
    for (std::size_t i = 0; i < m.size(); ++i) m[i].merge(o.m[i]);
  }
  Moments& operator[](std::size_t i) { return m[i]; }
  const Moments& operator[](std::size_t i) const { return m[i]; }
  std::size_t size() const { return m.size(); }
};

// Neumaier summation, used for exact enumeration sums.
struct KahanSum {
  double s = 0.0, c = 0.0;
  void add(double x) {
    double t = s + x;
    if (std::fabs(s) >= std::fabs(x)) c += (s - t) + x;
    else c += (x - t) + s;
    s = t;
  }
  double value() const { return s + c; }
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

}  // namespace stein
