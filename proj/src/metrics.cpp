#include "privgap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "privgap/error.hpp"
#include "privgap/random.hpp"

namespace privgap {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(a) + " vs " + std::to_string(b));
  }
}

// Midrank AUC over scores[order[i]] for i in [0, n). Labels index the same way.
template <typename ScoreAt, typename LabelAt>
double midrank_auc(std::size_t n, ScoreAt score_at, LabelAt label_at) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return score_at(a) < score_at(b); });

  std::size_t n_pos = 0;
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && score_at(order[j]) == score_at(order[i])) ++j;
    // ranks i+1 .. j share their average
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (label_at(order[k]) != 0) {
        ++n_pos;
        pos_rank_sum += midrank;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorCode::SingleClass, "AUC needs both classes (n=" + std::to_string(n) + ")");
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

void check_scores(std::span<const double> scores) {
  for (double s : scores) {
    if (std::isnan(s)) throw Error(ErrorCode::NonFinite, "NaN score");
  }
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores.size(), labels.size());
  check_scores(scores);
  return midrank_auc(
      scores.size(), [&](std::size_t i) { return scores[i]; },
      [&](std::size_t i) { return labels[i]; });
}

double auc_subset(std::span<const double> scores, std::span<const std::uint8_t> labels,
                  std::span<const std::size_t> indices) {
  check_lengths(scores.size(), labels.size());
  for (auto idx : indices) {
    if (idx >= scores.size()) throw Error(ErrorCode::InvalidArgument, "subset index out of range");
    if (std::isnan(scores[idx])) throw Error(ErrorCode::NonFinite, "NaN score");
  }
  return midrank_auc(
      indices.size(), [&](std::size_t i) { return scores[indices[i]]; },
      [&](std::size_t i) { return labels[indices[i]]; });
}

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::EmptyInput, "quantile of an empty sample");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::pair<double, double> bootstrap_ci(std::span<const double> scores,
                                       std::span<const std::uint8_t> labels, int B,
                                       std::uint64_t seed) {
  check_lengths(scores.size(), labels.size());
  if (B < 1) throw Error(ErrorCode::InvalidArgument, "bootstrap needs B >= 1");
  // Validates both classes are present before resampling.
  (void)auc(scores, labels);

  const std::size_t n = scores.size();
  Rng rng(seed);
  std::vector<double> resampled_scores(n);
  std::vector<std::uint8_t> resampled_labels(n);
  std::vector<double> aucs;
  aucs.reserve(static_cast<std::size_t>(B));
  while (aucs.size() < static_cast<std::size_t>(B)) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(rng.below(n));
      resampled_scores[i] = scores[j];
      resampled_labels[i] = labels[j];
      pos += labels[j] != 0;
    }
    if (pos == 0 || pos == n) continue;  // redraw
    aucs.push_back(auc(resampled_scores, resampled_labels));
  }
  std::sort(aucs.begin(), aucs.end());
  return {sorted_quantile(aucs, 0.025), sorted_quantile(aucs, 0.975)};
}

AucEstimate estimate_auc(std::span<const double> scores, std::span<const std::uint8_t> labels,
                         int B, std::uint64_t seed) {
  AucEstimate est;
  est.auc = auc(scores, labels);
  est.n_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                     [](std::uint8_t v) { return v != 0; }));
  est.n_neg = labels.size() - est.n_pos;
  est.bootstrap_B = B;
  est.seed = seed;
  if (B > 0) {
    std::tie(est.ci_low, est.ci_high) = bootstrap_ci(scores, labels, B, seed);
  } else {
    est.ci_low = est.ci_high = est.auc;
  }
  return est;
}

double paired_t_test(std::span<const double> a, std::span<const double> b) {
  check_lengths(a.size(), b.size());
  std::vector<double> d;
  d.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) continue;
    d.push_back(a[i] - b[i]);
  }
  if (d.size() < 2) {
    throw Error(ErrorCode::TooFewFolds, std::to_string(d.size()) + " usable pairs");
  }
  const auto s = stats::summarize(d);
  if (s.sd == 0.0) return s.mean == 0.0 ? 1.0 : 0.0;
  const double t = s.mean / (s.sd / std::sqrt(static_cast<double>(s.n)));
  return stats::student_t_two_sided_p(t, static_cast<double>(s.n - 1));
}

SignificanceReport holm_correct(std::span<const double> pvals, double alpha) {
  SignificanceReport rep;
  rep.alpha = alpha;
  rep.raw_p.assign(pvals.begin(), pvals.end());
  const std::size_t m = pvals.size();
  rep.adjusted_p.assign(m, 1.0);
  rep.adjusted_reject.assign(m, false);
  for (double p : pvals) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "p-value outside [0,1]");
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return pvals[x] < pvals[y]; });

  bool rejecting = true;
  double running_max = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double p = pvals[order[i]];
    const double factor = static_cast<double>(m - i);
    running_max = std::max(running_max, std::min(1.0, p * factor));
    rep.adjusted_p[order[i]] = running_max;
    if (rejecting && p <= alpha / factor) {
      rep.adjusted_reject[order[i]] = true;
    } else {
      rejecting = false;
    }
  }
  return rep;
}

double premium_gap(double self_auc, std::span<const double> external_aucs) {
  if (external_aucs.empty()) throw Error(ErrorCode::EmptyExternalSet, "no external AUCs");
  return self_auc - *std::max_element(external_aucs.begin(), external_aucs.end());
}

double gap_closed_pct(double self_auc, double best_external_auc) {
  if (best_external_auc >= 1.0) {
    throw Error(ErrorCode::DegenerateBaseline, "best external AUC is 1");
  }
  return (self_auc - best_external_auc) / (1.0 - best_external_auc) * 100.0;
}

// ---------------------------------------------------------------------------

namespace stats {

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fast for x < (a+1)/(a+b+2); use the
  // symmetry I_x(a,b) = 1 - I_{1-x}(b,a) otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(incomplete_beta(0.5 * df, 0.5, x), 0.0, 1.0);
}

double student_t_cdf(double t, double df) {
  const double tail = 0.5 * student_t_two_sided_p(t, df);
  return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile needs p in (0,1)");
  double lo = -1.0;
  double hi = 1.0;
  while (student_t_cdf(lo, df) > p) lo *= 2.0;
  while (student_t_cdf(hi, df) < p) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, std::fabs(hi)); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (student_t_cdf(mid, df) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Summary summarize(std::span<const double> values) {
  Summary s;
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    ++s.n;
    sum += v;
  }
  if (s.n == 0) {
    s.mean = kNaN;
    s.sd = kNaN;
    return s;
  }
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) {
    s.sd = kNaN;
    return s;
  }
  double ss = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
  }
  s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  return s;
}

std::pair<double, double> t_interval(std::span<const double> values, double level) {
  const auto s = summarize(values);
  if (s.n < 2) return {kNaN, kNaN};
  const double q = student_t_quantile(0.5 + 0.5 * level, static_cast<double>(s.n - 1));
  const double half = q * s.sd / std::sqrt(static_cast<double>(s.n));
  return {s.mean - half, s.mean + half};
}

}  // namespace stats

}  // namespace privgap
