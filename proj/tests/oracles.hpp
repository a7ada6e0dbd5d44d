#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library routine it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

inline std::vector<double> gaussian(std::mt19937_64& g, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

inline double mean_abs(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += std::abs(v);
  return s / static_cast<double>(w.size());
}

// Binary: every sign pattern is tried; the best under ||w - a b||^2 with
// a = mean |w| wins, preferring +1 on ties (element order breaks ties).
inline std::vector<int> brute_binary_levels(const std::vector<double>& w, double alpha) {
  const std::size_t n = w.size();
  std::vector<int> best(n, 1);
  double best_err = std::numeric_limits<double>::infinity();
  std::uint64_t best_mask = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double l = (mask >> i & 1) ? -1.0 : 1.0;
      err += (w[i] - alpha * l) * (w[i] - alpha * l);
    }
    // Ties between patterns only arise on zero entries; the pattern with
    // fewer -1 bits (smaller mask popcount, then value) keeps sign(0) = +1.
    if (err < best_err || (err == best_err && __builtin_popcountll(mask) < __builtin_popcountll(best_mask))) {
      best_err = err;
      best_mask = mask;
    }
  }
  for (std::size_t i = 0; i < n; ++i) best[i] = (best_mask >> i & 1) ? -1 : 1;
  return best;
}

struct Ternary {
  std::vector<int> levels;
  double alpha = 0.0;
};

// Ternary: each element tries the three levels against the threshold test
// written out case by case.
inline Ternary reference_ternary(const std::vector<double>& w) {
  const double thr = 0.7 * mean_abs(w);
  Ternary t;
  double sum = 0.0;
  int kept = 0;
  for (double v : w) {
    int level = 0;
    for (int cand : {-1, 0, 1}) {
      const bool above = std::abs(v) > thr;
      const bool ok = above ? (cand == (v < 0.0 ? -1 : 1)) : cand == 0;
      if (ok) level = cand;
    }
    t.levels.push_back(level);
    if (level != 0) {
      sum += std::abs(v);
      ++kept;
    }
  }
  t.alpha = kept ? sum / kept : 0.0;
  return t;
}

inline double orientation_loss(const std::vector<double>& w, const std::vector<int>& levels) {
  double dot = 0.0, ww = 0.0, ll = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    dot += w[i] * levels[i];
    ww += w[i] * w[i];
    ll += static_cast<double>(levels[i]) * levels[i];
  }
  if (ll == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 - dot / std::sqrt(ww * ll);
}

inline std::vector<int> round_clamp(const std::vector<double>& w, double interval, int qmax) {
  std::vector<int> l(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double r = std::round(w[i] / interval);
    l[i] = static_cast<int>(std::clamp(r, -static_cast<double>(qmax), static_cast<double>(qmax)));
  }
  return l;
}

inline double stddev(const std::vector<double>& w) {
  double m = 0.0;
  for (double v : w) m += v;
  m /= static_cast<double>(w.size());
  double s = 0.0;
  for (double v : w) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(w.size()));
}

// Exhaustive log-spaced interval sweep between lo and hi.
inline double grid_best_interval(const std::vector<double>& w, int bits, double lo, double hi, int points) {
  const int qmax = (1 << (bits - 1)) - 1;
  double best = lo, best_loss = std::numeric_limits<double>::infinity();
  for (int k = 0; k < points; ++k) {
    const double lam = lo * std::exp(std::log(hi / lo) * k / (points - 1));
    const double j = orientation_loss(w, round_clamp(w, lam, qmax));
    if (j < best_loss) {
      best_loss = j;
      best = lam;
    }
  }
  return best;
}

inline double modulus_loss(const std::vector<double>& w, const std::vector<int>& levels, double scale) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += (w[i] - scale * levels[i]) * (w[i] - scale * levels[i]);
  return s;
}

// O(n^2) dominance check: maximise accuracy, minimise cost.
inline std::vector<std::size_t> brute_pareto(const std::vector<double>& acc, const std::vector<double>& cost) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < acc.size() && !dominated; ++j)
      dominated = acc[j] >= acc[i] && cost[j] <= cost[i] && (acc[j] > acc[i] || cost[j] < cost[i]);
    if (!dominated) keep.push_back(i);
  }
  return keep;
}

// Central differences of f around x, step h.
inline std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0.0 ? std::sqrt(d) : std::sqrt(d) / den;
}

// Startup of a stage chain where each stage waits for two output columns
// of its producer: sum over all but the last of L * min(1, (K+S)/H), plus
// the last stage's full latency.
struct Stage {
  double latency;
  int rows, kernel, stride;
};

inline double startup_closed_form(const std::vector<Stage>& s) {
  double t = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i)
    t += s[i].latency * std::min(1.0, static_cast<double>(s[i].kernel + s[i].stride) / s[i].rows);
  return t + s.back().latency;
}

}  // namespace oracle
