#pragma once

// Randomness sources. Couplings are written as programs over a source, so one
// definition gives plain Monte Carlo draws, exhaustive enumeration of small
// instances, and exact averaging over the inner (index) randomisation.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"

namespace stein {

using Rng = std::mt19937_64;

// One independent stream per (seed, chunk) pair.
inline Rng make_stream(std::uint64_t seed, std::uint64_t chunk) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32),
                    0x5eedu};
  return Rng(seq);
}

inline std::vector<double> binomial_pmf(long m, double p) {
  require(m >= 0, "binomial size must be non-negative");
  require(p >= 0.0 && p <= 1.0, "binomial probability outside [0,1]");
  std::vector<double> out(static_cast<std::size_t>(m) + 1, 0.0);
  if (p == 0.0) { out[0] = 1.0; return out; }
  if (p == 1.0) { out[m] = 1.0; return out; }
  const double lp = std::log(p), lq = std::log1p(-p);
  const double lm = std::lgamma(m + 1.0);
  for (long k = 0; k <= m; ++k)
    out[k] = std::exp(lm - std::lgamma(k + 1.0) - std::lgamma(m - k + 1.0) + k * lp + (m - k) * lq);
  return out;
}

class RandomSource {
 public:
  explicit RandomSource(Rng& rng) : rng_(rng) {}

  std::size_t index(std::size_t n) {
    require(n > 0, "index over empty range");
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }
  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
  }
  long binomial(long m, double p) {
    if (m == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return m;
    return std::binomial_distribution<long>(m, p)(rng_);
  }
  std::size_t categorical(std::span<const double> w) {
    double total = 0.0;
    for (double x : w) total += x;
    if (!(total > 0.0)) invalid_parameter("categorical weights sum to zero");
    double u = uniform() * total;
    std::size_t last = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] <= 0.0) continue;
      last = i;
      if (u < w[i]) return i;
      u -= w[i];
    }
    return last;
  }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

  // Calls hit(k) for each k in [0,count) that succeeds with probability p.
  template <class F>
  void bernoulli_process(std::uint64_t count, double p, F&& hit) {
    if (p <= 0.0 || count == 0) return;
    if (p >= 1.0) {
      for (std::uint64_t k = 0; k < count; ++k) hit(k);
      return;
    }
    std::geometric_distribution<std::uint64_t> skip(p);
    std::uint64_t k = skip(rng_);
    while (k < count) {
      hit(k);
      std::uint64_t s = skip(rng_);
      if (s >= count) break;
      k += s + 1;
    }
  }
  void mark() {}

  Rng& engine() { return rng_; }

 private:
  Rng& rng_;
};

class NotEnumerable : public Error {
 public:
  NotEnumerable() : Error(ErrorKind::unsupported, "unsupported: continuous randomness cannot be enumerated") {}
};

class TooManyOutcomes : public Error {
 public:
  TooManyOutcomes() : Error(ErrorKind::unsupported, "unsupported: enumeration exceeds the outcome cap") {}
};

namespace detail {
struct TreeNode {
  std::vector<double> probs;
  std::size_t idx = 0;
};
}  // namespace detail

// Walks the choice tree depth first. With a prefix engine, everything before
// mark() is drawn at random once (and replayed), only the rest is enumerated.
class TreeSource {
 public:
  TreeSource(std::vector<detail::TreeNode>& path, Rng* prefix, std::vector<double>* tape)
      : path_(path), prefix_(prefix), tape_(tape) {}

  std::size_t index(std::size_t n) {
    require(n > 0, "index over empty range");
    if (random_phase()) return static_cast<std::size_t>(taped([&](RandomSource& r) { return double(r.index(n)); }));
    return choose(std::vector<double>(n, 1.0 / double(n)));
  }
  bool bernoulli(double p) {
    if (random_phase()) return taped([&](RandomSource& r) { return r.bernoulli(p) ? 1.0 : 0.0; }) != 0.0;
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return choose({1.0 - p, p}) == 1;
  }
  long binomial(long m, double p) {
    if (random_phase()) return static_cast<long>(taped([&](RandomSource& r) { return double(r.binomial(m, p)); }));
    if (m == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return m;
    return static_cast<long>(choose(binomial_pmf(m, p)));
  }
  std::size_t categorical(std::span<const double> w) {
    if (random_phase()) return static_cast<std::size_t>(taped([&](RandomSource& r) { return double(r.categorical(w)); }));
    double total = 0.0;
    for (double x : w) total += x;
    if (!(total > 0.0)) invalid_parameter("categorical weights sum to zero");
    std::vector<double> p(w.begin(), w.end());
    for (double& x : p) x = x > 0.0 ? x / total : 0.0;
    return choose(std::move(p));
  }
  double uniform() {
    if (random_phase()) return taped([](RandomSource& r) { return r.uniform(); });
    throw NotEnumerable();
  }
  double normal() {
    if (random_phase()) return taped([](RandomSource& r) { return r.normal(); });
    throw NotEnumerable();
  }
  template <class F>
  void bernoulli_process(std::uint64_t count, double p, F&& hit) {
    if (random_phase()) {
      if (replaying()) {
        auto hits = static_cast<std::uint64_t>((*tape_)[cursor_++]);
        for (std::uint64_t h = 0; h < hits; ++h) hit(static_cast<std::uint64_t>((*tape_)[cursor_++]));
        return;
      }
      std::size_t slot = tape_->size();
      tape_->push_back(0.0);
      RandomSource r(*prefix_);
      std::uint64_t hits = 0;
      r.bernoulli_process(count, p, [&](std::uint64_t k) {
        tape_->push_back(double(k));
        ++hits;
        hit(k);
      });
      (*tape_)[slot] = double(hits);
      cursor_ = tape_->size();
      return;
    }
    for (std::uint64_t k = 0; k < count; ++k)
      if (bernoulli(p)) hit(k);
  }
  void mark() {
    if (!marked_) {
      marked_ = true;
      mark_pos_ = pos_;
      prefix_prob_ = prob_;
    }
  }

  double prob() const { return prob_; }
  std::size_t depth() const { return pos_; }
  std::size_t mark_pos() const { return marked_ ? mark_pos_ : pos_; }
  double prefix_prob() const { return marked_ ? prefix_prob_ : prob_; }

 private:
  bool random_phase() const { return prefix_ != nullptr && !marked_; }
  bool replaying() const { return cursor_ < tape_->size(); }

  template <class F>
  double taped(F&& draw) {
    if (replaying()) return (*tape_)[cursor_++];
    RandomSource r(*prefix_);
    double v = draw(r);
    tape_->push_back(v);
    cursor_ = tape_->size();
    return v;
  }

  std::size_t choose(std::vector<double> probs) {
    if (pos_ < path_.size()) {
      auto& nd = path_[pos_++];
      prob_ *= nd.probs[nd.idx];
      return nd.idx;
    }
    std::size_t first = 0;
    while (first < probs.size() && !(probs[first] > 0.0)) ++first;
    if (first == probs.size()) invalid_parameter("choice with no positive probability");
    prob_ *= probs[first];
    path_.push_back({std::move(probs), first});
    ++pos_;
    return first;
  }

  std::vector<detail::TreeNode>& path_;
  Rng* prefix_;
  std::vector<double>* tape_;
  std::size_t cursor_ = 0;
  std::size_t pos_ = 0;
  double prob_ = 1.0;
  bool marked_ = false;
  std::size_t mark_pos_ = 0;
  double prefix_prob_ = 1.0;
};

template <class T>
struct TreeLeaf {
  double config_prob;
  double inner_prob;
  std::size_t config;
  T value;
};

namespace detail {
// Moves to the next leaf; returns the depth that changed or npos when done.
inline std::size_t advance(std::vector<TreeNode>& path) {
  while (!path.empty()) {
    auto& nd = path.back();
    std::size_t j = nd.idx + 1;
    while (j < nd.probs.size() && !(nd.probs[j] > 0.0)) ++j;
    if (j < nd.probs.size()) {
      nd.idx = j;
      return path.size() - 1;
    }
    path.pop_back();
  }
  return std::numeric_limits<std::size_t>::max();
}

template <class Prog>
auto walk(const Prog& prog, Rng* prefix, std::size_t cap) {
  using T = decltype(prog(std::declval<TreeSource&>()));
  std::vector<TreeLeaf<T>> out;
  std::vector<TreeNode> path;
  std::vector<double> tape;
  std::size_t config = 0;
  for (;;) {
    TreeSource src(path, prefix, &tape);
    T v = prog(src);
    // nodes created past the program's last choice cannot exist, trim defensively
    path.resize(src.depth());
    if (out.size() >= cap) throw TooManyOutcomes();
    double pp = src.prefix_prob();
    out.push_back({pp, pp > 0.0 ? src.prob() / pp : 0.0, config, std::move(v)});
    std::size_t mp = src.mark_pos();
    std::size_t changed = advance(path);
    if (changed == std::numeric_limits<std::size_t>::max()) break;
    if (prefix == nullptr && changed < mp) ++config;
  }
  return out;
}
}  // namespace detail

inline constexpr std::size_t kOutcomeCap = 1'000'000;

// All leaves of a purely discrete program with exact probabilities.
template <class Prog>
auto enumerate_program(const Prog& prog, std::size_t cap = kOutcomeCap) {
  return detail::walk(prog, nullptr, cap);
}

// Draws the part before mark() from rng and enumerates the rest exactly.
template <class Prog>
auto enumerate_inner(const Prog& prog, Rng& rng, std::size_t cap = kOutcomeCap) {
  return detail::walk(prog, &rng, cap);
}

}  // namespace stein
