#pragma once

// Correctness probes: L2 logistic regression with inner-CV choice of C, and
// a one-hidden-layer ReLU MLP with early stopping. Both standardize inputs
// with statistics fitted on their own training rows only.

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace privgap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::span<const std::uint8_t>;

struct Standardizer {
  Vector means;
  Vector scales;  // population sd; 1 for zero-variance columns

  Matrix transform(const Matrix& X) const;
  Eigen::Index dim() const { return means.size(); }
  bool operator==(const Standardizer&) const = default;
};

Standardizer fit_standardizer(const Matrix& X);

struct ClassWeights {
  double w_pos = 1.0;
  double w_neg = 1.0;
};

/// w_c = n / (2 n_c). Throws SingleClass.
ClassWeights balanced_weights(Labels y);

struct TrainInfo {
  std::uint64_t seed = 0;
  bool converged = false;
  int iterations = 0;
  double final_objective = 0.0;
  double gradient_norm = 0.0;
  std::vector<double> objective_trace;  // one entry per accepted iterate

  bool operator==(const TrainInfo&) const = default;
};

struct LinearProbe {
  Vector weights;  // in standardized feature space
  double intercept = 0.0;
  double C = 1.0;
  Standardizer standardizer;
  TrainInfo info;

  Eigen::Index dim() const { return weights.size(); }
  bool operator==(const LinearProbe&) const = default;
};

inline constexpr int kMlpHidden = 100;
inline constexpr double kMlpAlpha = 0.1;

struct MlpOptions {
  int hidden = kMlpHidden;
  double alpha = kMlpAlpha;
  double learning_rate = 1e-3;
  int max_epochs = 500;
  int patience = 10;
  double tol = 1e-4;
  double validation_fraction = 0.1;
  int batch_size = 200;
};

struct MLPProbe {
  Matrix hidden_weights;  // dim x hidden
  Vector hidden_bias;
  Vector out_weights;
  double out_bias = 0.0;
  double alpha = kMlpAlpha;
  Standardizer standardizer;
  TrainInfo info;

  Eigen::Index dim() const { return hidden_weights.rows(); }
  Eigen::Index hidden_width() const { return hidden_weights.cols(); }
  bool operator==(const MLPProbe&) const = default;
};

using Probe = std::variant<LinearProbe, MLPProbe>;

// ---- logistic regression --------------------------------------------------

struct LogisticOptions {
  int max_iter = 500;
  double grad_tol = 1e-4;
};

/// Weighted L2-penalized logistic loss on already standardized inputs:
///   sum_i s_i * (softplus(z_i) - y_i z_i) + ||w||^2 / (2C),  z = Xw + b.
/// The gradient is written to grad (size dim + 1, intercept last).
double logistic_objective(const Matrix& X, Labels y, const Vector& sample_weights,
                          const Vector& weights, double intercept, double C, Vector* grad);

/// Damped Newton on logistic_objective. Deterministic; objective values
/// along the accepted iterates are non-increasing.
LinearProbe fit_logistic(const Matrix& X, Labels y, const Vector& sample_weights, double C,
                         const LogisticOptions& options = {});

/// Standardizes X, weights classes by balanced_weights and fits.
LinearProbe train_linear_probe(const Matrix& X, Labels y, double C,
                               const LogisticOptions& options = {});

/// Stratified 3-fold inner CV over grid, maximizing mean inner AUC; ties
/// go to the smaller C. A singleton grid is returned without CV.
double tune_C(const Matrix& X, Labels y, std::span<const double> grid, std::uint64_t seed,
              int inner_folds = 3, const LogisticOptions& options = {});

// ---- MLP -------------------------------------------------------------------

MLPProbe train_mlp_probe(const Matrix& X, Labels y, std::uint64_t seed,
                         const MlpOptions& options = {});

// ---- scoring ---------------------------------------------------------------

Vector predict_proba(const LinearProbe& probe, const Matrix& X);
Vector predict_proba(const MLPProbe& probe, const Matrix& X);
Vector predict_proba(const Probe& probe, const Matrix& X);

/// Process-wide count of probe fits, for checking that scoring never trains.
std::uint64_t training_calls();

std::string probe_to_json(const Probe& probe);
Probe probe_from_json(const std::string& text);

}  // namespace privgap
