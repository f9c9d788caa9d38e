#pragma once

// Slow, independent reference implementations shared by the unit and
// acceptance tests. None of them call into the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace oracle {

// Knuth's MMIX LCG; deliberately not the library's generator.
struct Lcg {
  std::uint64_t state;
  explicit Lcg(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return state;
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  int below(int n) { return static_cast<int>(uniform() * n); }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
};

/// O(n^2) pairwise AUC: P(s+ > s-) + 0.5 P(s+ == s-).
inline double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

struct Dataset {
  std::vector<std::vector<double>> X;
  std::vector<std::uint8_t> y;
};

/// The fixed 20-point, 3-feature logistic dataset drawn from Lcg(seed).
inline Dataset logistic_dataset(std::uint64_t seed = 7, int n = 20) {
  Lcg g(seed);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(3);
    for (auto& v : x) v = 4.0 * g.uniform() - 2.0;
    const double z = x[0] - x[1] + 0.5 * x[2];
    const double p = 1.0 / (1.0 + std::exp(-z));
    d.X.push_back(x);
    d.y.push_back(g.uniform() < p ? 1 : 0);
  }
  return d;
}

struct LogisticSolution {
  std::vector<double> w;  // standardized space
  double b = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

/// Balanced-class-weight, L2 (||w||^2 / 2C) logistic regression on
/// population-standardized features, solved by fixed-step gradient descent
/// until the gradient norm is below `tol`.
inline LogisticSolution logistic_gd(const Dataset& data, double C, double tol = 1e-10,
                                    int max_iter = 50000000) {
  const std::size_t n = data.y.size();
  const std::size_t d = data.X.front().size();
  std::vector<std::vector<double>> Z(n, std::vector<double>(d));
  for (std::size_t j = 0; j < d; ++j) {
    long double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += data.X[i][j];
    mean /= n;
    long double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (data.X[i][j] - mean) * (data.X[i][j] - mean);
    var /= n;
    const double sd = var > 0 ? std::sqrt(static_cast<double>(var)) : 1.0;
    for (std::size_t i = 0; i < n; ++i) Z[i][j] = (data.X[i][j] - static_cast<double>(mean)) / sd;
  }
  double pos = 0;
  for (auto v : data.y) pos += v;
  const double w_pos = n / (2.0 * pos), w_neg = n / (2.0 * (n - pos));

  // Lipschitz bound of the gradient: max weight * ||[Z 1]||_F^2 / 4 + 1/C.
  double frob = 0.0;
  for (const auto& row : Z) {
    frob += 1.0;
    for (double v : row) frob += v * v;
  }
  const double L = std::max(w_pos, w_neg) * frob / 4.0 + 1.0 / C;
  const double step = 1.0 / L;

  LogisticSolution s;
  s.w.assign(d, 0.0);
  std::vector<double> g(d + 1);
  for (int it = 0; it < max_iter; ++it) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double z = s.b;
      for (std::size_t j = 0; j < d; ++j) z += s.w[j] * Z[i][j];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double r = (data.y[i] ? w_pos : w_neg) * (p - data.y[i]);
      for (std::size_t j = 0; j < d; ++j) g[j] += r * Z[i][j];
      g[d] += r;
    }
    for (std::size_t j = 0; j < d; ++j) g[j] += s.w[j] / C;
    double norm = 0.0;
    for (double v : g) norm += v * v;
    s.grad_norm = std::sqrt(norm);
    s.iterations = it;
    if (s.grad_norm <= tol) break;
    for (std::size_t j = 0; j < d; ++j) s.w[j] -= step * g[j];
    s.b -= step * g[d];
  }
  return s;
}

/// Holm step-down rejections written from the textbook definition.
inline std::vector<bool> holm_reject(const std::vector<double>& p, double alpha) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<bool> reject(m, false);
  for (std::size_t r = 0; r < m; ++r) {
    if (p[order[r]] <= alpha / static_cast<double>(m - r)) reject[order[r]] = true;
    else break;
  }
  return reject;
}

}  // namespace oracle
