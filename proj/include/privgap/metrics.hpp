#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace privgap {

struct AucEstimate {
  double auc = 0.5;
  double ci_low = 0.0;
  double ci_high = 1.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  int bootstrap_B = 0;
  std::uint64_t seed = 0;

  bool operator==(const AucEstimate&) const = default;
};

struct SignificanceReport {
  std::vector<double> raw_p;
  std::vector<double> adjusted_p;  // Holm step-down adjusted, capped at 1
  std::vector<bool> adjusted_reject;
  double alpha = 0.05;

  bool operator==(const SignificanceReport&) const = default;
};

/// Mann-Whitney AUC with midranks for ties. Throws SingleClass.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// AUC restricted to the given row indices.
double auc_subset(std::span<const double> scores, std::span<const std::uint8_t> labels,
                  std::span<const std::size_t> indices);

/// Percentile bootstrap over (score, label) pairs. Single-class resamples
/// are redrawn so exactly B AUCs are collected; the interval is the 2.5th
/// and 97.5th percentile with linear interpolation between order statistics.
std::pair<double, double> bootstrap_ci(std::span<const double> scores,
                                       std::span<const std::uint8_t> labels, int B,
                                       std::uint64_t seed);

AucEstimate estimate_auc(std::span<const double> scores, std::span<const std::uint8_t> labels,
                         int B, std::uint64_t seed);

/// Linear-interpolated quantile of an ascending-sorted sample, q in [0, 1].
double sorted_quantile(std::span<const double> sorted, double q);

/// Two-sided paired t-test on a - b. Pairs with a NaN on either side are
/// dropped. Zero differences give p = 1; constant non-zero differences
/// give p = 0.
double paired_t_test(std::span<const double> a, std::span<const double> b);

SignificanceReport holm_correct(std::span<const double> pvals, double alpha = 0.05);

double premium_gap(double self_auc, std::span<const double> external_aucs);
double gap_closed_pct(double self_auc, double best_external_auc);

namespace stats {

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);
/// Two-sided tail probability P(|T| >= |t|).
double student_t_two_sided_p(double t, double df);
double student_t_quantile(double p, double df);

/// Mean and sample standard deviation of the finite entries; count first.
struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};
Summary summarize(std::span<const double> values);

/// mean +/- t_{0.975, n-1} * sd / sqrt(n) over the finite entries.
std::pair<double, double> t_interval(std::span<const double> values, double level = 0.95);

}  // namespace stats

}  // namespace privgap
