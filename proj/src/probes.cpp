#include "privgap/probes.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "privgap/crossval.hpp"
#include "privgap/error.hpp"
#include "privgap/metrics.hpp"
#include "privgap/random.hpp"

namespace privgap {

using nlohmann::json;

namespace {

std::atomic<std::uint64_t> g_training_calls{0};

constexpr double kProbFloor = std::numeric_limits<double>::min();
constexpr double kProbCeil = 1.0 - 0x1.0p-53;

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double open_unit(double p) { return std::clamp(p, kProbFloor, kProbCeil); }

void require_both_classes(Labels y) {
  const auto pos = std::count_if(y.begin(), y.end(), [](std::uint8_t v) { return v != 0; });
  if (pos == 0 || static_cast<std::size_t>(pos) == y.size()) {
    throw Error(ErrorCode::SingleClass, "training labels contain a single class");
  }
}

void require_rows(const Matrix& X, Labels y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(X.rows()) + " rows vs " +
                                               std::to_string(y.size()) + " labels");
  }
}

Matrix take_rows(const Matrix& X, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<std::uint8_t> take(Labels y, const std::vector<std::size_t>& rows) {
  std::vector<std::uint8_t> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y[rows[i]];
  return out;
}

Vector class_sample_weights(Labels y, const ClassWeights& w) {
  Vector s(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) s(static_cast<Eigen::Index>(i)) = y[i] ? w.w_pos : w.w_neg;
  return s;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json standardizer_json(const Standardizer& s) {
  return {{"means", to_std(s.means)}, {"scales", to_std(s.scales)}};
}

Standardizer standardizer_from(const json& j) {
  return {from_std(j.at("means").get<std::vector<double>>()),
          from_std(j.at("scales").get<std::vector<double>>())};
}

json info_json(const TrainInfo& info) {
  return {{"seed", info.seed},
          {"converged", info.converged},
          {"iterations", info.iterations},
          {"final_objective", info.final_objective},
          {"gradient_norm", info.gradient_norm}};
}

TrainInfo info_from(const json& j) {
  TrainInfo info;
  info.seed = j.value("seed", std::uint64_t{0});
  info.converged = j.value("converged", false);
  info.iterations = j.value("iterations", 0);
  info.final_objective = j.value("final_objective", 0.0);
  info.gradient_norm = j.value("gradient_norm", 0.0);
  return info;
}

}  // namespace

// ---------------------------------------------------------------------------

Matrix Standardizer::transform(const Matrix& X) const {
  if (X.cols() != means.size()) {
    throw Error(ErrorCode::DimMismatch, "input width " + std::to_string(X.cols()) +
                                            ", standardizer width " + std::to_string(means.size()));
  }
  return ((X.rowwise() - means.transpose()).array().rowwise() / scales.transpose().array()).matrix();
}

Standardizer fit_standardizer(const Matrix& X) {
  if (X.rows() < 2) throw Error(ErrorCode::EmptyInput, "standardizer needs at least 2 rows");
  Standardizer s;
  s.means = X.colwise().mean().transpose();
  s.scales.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double var = (X.col(j).array() - s.means(j)).square().mean();
    const double sd = std::sqrt(var);
    s.scales(j) = sd > 1e-12 * std::max(1.0, std::fabs(s.means(j))) ? sd : 1.0;
  }
  return s;
}

ClassWeights balanced_weights(Labels y) {
  require_both_classes(y);
  const double n = static_cast<double>(y.size());
  const double pos = static_cast<double>(std::count_if(y.begin(), y.end(), [](std::uint8_t v) { return v != 0; }));
  return {n / (2.0 * pos), n / (2.0 * (n - pos))};
}

// ---------------------------------------------------------------------------

double logistic_objective(const Matrix& X, Labels y, const Vector& sample_weights,
                          const Vector& weights, double intercept, double C, Vector* grad) {
  const Vector z = (X * weights).array() + intercept;
  double value = 0.5 * weights.squaredNorm() / C;
  Vector residual(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double yi = y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    value += sample_weights(i) * (softplus(z(i)) - yi * z(i));
    residual(i) = sample_weights(i) * (sigmoid(z(i)) - yi);
  }
  if (grad != nullptr) {
    grad->resize(weights.size() + 1);
    grad->head(weights.size()).noalias() = X.transpose() * residual;
    grad->head(weights.size()) += weights / C;
    (*grad)(weights.size()) = residual.sum();
  }
  return value;
}

std::uint64_t training_calls() { return g_training_calls.load(); }

LinearProbe fit_logistic(const Matrix& X, Labels y, const Vector& sample_weights, double C,
                         const LogisticOptions& options) {
  ++g_training_calls;
  require_rows(X, y);
  if (!(C > 0.0) || !std::isfinite(C)) throw Error(ErrorCode::InvalidArgument, "C must be positive");
  const Eigen::Index d = X.cols();
  const Eigen::Index n = X.rows();

  LinearProbe probe;
  probe.C = C;
  probe.weights = Vector::Zero(d);
  probe.intercept = 0.0;
  probe.standardizer = {Vector::Zero(d), Vector::Ones(d)};

  Vector grad;
  double f = logistic_objective(X, y, sample_weights, probe.weights, 0.0, C, &grad);
  probe.info.objective_trace.push_back(f);

  Matrix H(d + 1, d + 1);
  Vector w_new;
  Vector grad_new;
  int iter = 0;
  for (; iter < options.max_iter; ++iter) {
    if (grad.norm() <= options.grad_tol) {
      probe.info.converged = true;
      break;
    }
    // Hessian: [X^T S X + I/C, X^T s; s^T X, sum s], s_i = w_i p_i (1 - p_i)
    const Vector z = (X * probe.weights).array() + probe.intercept;
    Vector curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(z(i));
      curv(i) = sample_weights(i) * p * (1.0 - p);
    }
    const Matrix Xs = X.array().colwise() * curv.array().sqrt();
    H.topLeftCorner(d, d).noalias() = Xs.transpose() * Xs;
    H.topLeftCorner(d, d).diagonal().array() += 1.0 / C;
    const Vector cross = X.transpose() * curv;
    H.topRightCorner(d, 1) = cross;
    H.bottomLeftCorner(1, d) = cross.transpose();
    H(d, d) = curv.sum() + 1e-12;

    const Vector step = -H.ldlt().solve(grad);
    const double slope = grad.dot(step);
    if (!(slope < 0.0)) break;

    double t = 1.0;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      w_new = probe.weights + t * step.head(d);
      const double b_new = probe.intercept + t * step(d);
      const double f_new = logistic_objective(X, y, sample_weights, w_new, b_new, C, &grad_new);
      if (f_new <= f + 1e-4 * t * slope) {
        probe.weights = w_new;
        probe.intercept = b_new;
        f = f_new;
        grad = grad_new;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    probe.info.objective_trace.push_back(f);
  }
  if (!probe.info.converged && grad.norm() <= options.grad_tol) probe.info.converged = true;
  probe.info.iterations = iter;
  probe.info.final_objective = f;
  probe.info.gradient_norm = grad.norm();
  return probe;
}

LinearProbe train_linear_probe(const Matrix& X, Labels y, double C, const LogisticOptions& options) {
  require_rows(X, y);
  require_both_classes(y);
  Standardizer standardizer = fit_standardizer(X);
  const Matrix Xs = standardizer.transform(X);
  LinearProbe probe = fit_logistic(Xs, y, class_sample_weights(y, balanced_weights(y)), C, options);
  probe.standardizer = std::move(standardizer);
  return probe;
}

double tune_C(const Matrix& X, Labels y, std::span<const double> grid, std::uint64_t seed,
              int inner_folds, const LogisticOptions& options) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty C grid");
  require_rows(X, y);
  require_both_classes(y);
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.size() == 1) return sorted.front();

  const FoldPlan plan = stratified_folds(y, inner_folds, seed);
  std::vector<double> mean_auc(sorted.size(), 0.0);
  std::vector<int> used(sorted.size(), 0);
  for (int f = 0; f < plan.k; ++f) {
    const auto train_rows = plan.complement(f);
    const auto val_rows = plan.members(f);
    const auto y_train = take(y, train_rows);
    const auto y_val = take(y, val_rows);
    const auto val_pos = std::count(y_val.begin(), y_val.end(), 1);
    if (val_pos == 0 || static_cast<std::size_t>(val_pos) == y_val.size()) continue;
    const Matrix X_train = take_rows(X, train_rows);
    const Standardizer standardizer = fit_standardizer(X_train);
    const Matrix Xs_train = standardizer.transform(X_train);
    const Matrix Xs_val = standardizer.transform(take_rows(X, val_rows));
    const Vector s = class_sample_weights(y_train, balanced_weights(y_train));
    for (std::size_t c = 0; c < sorted.size(); ++c) {
      LinearProbe probe = fit_logistic(Xs_train, y_train, s, sorted[c], options);
      const Vector z = (Xs_val * probe.weights).array() + probe.intercept;
      mean_auc[c] += auc(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())), y_val);
      ++used[c];
    }
  }
  std::size_t best = 0;
  double best_auc = -1.0;
  for (std::size_t c = 0; c < sorted.size(); ++c) {
    if (used[c] == 0) continue;
    const double m = mean_auc[c] / used[c];
    if (m > best_auc) {
      best_auc = m;
      best = c;
    }
  }
  return sorted[best];
}

// ---------------------------------------------------------------------------

namespace {

struct MlpParams {
  Matrix W1;
  Vector b1;
  Vector w2;
  double b2 = 0.0;
};

struct AdamState {
  MlpParams m, v;
  int t = 0;
};

MlpParams zeros_like(const MlpParams& p) {
  return {Matrix::Zero(p.W1.rows(), p.W1.cols()), Vector::Zero(p.b1.size()),
          Vector::Zero(p.w2.size()), 0.0};
}

Vector mlp_logits(const MlpParams& p, const Matrix& X) {
  const Matrix H = ((X * p.W1).rowwise() + p.b1.transpose()).cwiseMax(0.0);
  return (H * p.w2).array() + p.b2;
}

double mean_log_loss(const Vector& z, Labels y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    s += softplus(z(i)) - (y[static_cast<std::size_t>(i)] ? z(i) : 0.0);
  }
  return s / static_cast<double>(z.size());
}

template <typename T>
void adam_update(T& param, T& m, T& v, const T& g, double lr_t, double b1, double b2, double eps) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
  param -= (lr_t * m.array() / (v.array().sqrt() + eps)).matrix();
}

}  // namespace

MLPProbe train_mlp_probe(const Matrix& X, Labels y, std::uint64_t seed, const MlpOptions& opt) {
  ++g_training_calls;
  require_rows(X, y);
  require_both_classes(y);
  if (X.rows() < 20) throw Error(ErrorCode::TooFewExamples, "MLP probe needs at least 20 rows");

  // Stratified validation split for early stopping.
  Rng split_rng(derive_seed(seed, 1));
  std::vector<std::size_t> train_rows, val_rows;
  for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if ((y[i] != 0) == (cls != 0)) members.push_back(i);
    }
    if (members.size() < 2) {
      throw Error(ErrorCode::TooFewExamples, "each class needs 2 rows for the validation split");
    }
    split_rng.shuffle(std::span<std::size_t>(members));
    auto n_val = static_cast<std::size_t>(std::lround(opt.validation_fraction * static_cast<double>(members.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, members.size() - 1);
    val_rows.insert(val_rows.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_rows.insert(train_rows.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(val_rows.begin(), val_rows.end());

  MLPProbe probe;
  probe.alpha = opt.alpha;
  probe.standardizer = fit_standardizer(X);
  const Matrix Xs = probe.standardizer.transform(X);
  const Matrix X_train = take_rows(Xs, train_rows);
  const Matrix X_val = take_rows(Xs, val_rows);
  const auto y_train = take(y, train_rows);
  const auto y_val = take(y, val_rows);

  const Eigen::Index d = X.cols();
  const Eigen::Index h = opt.hidden;
  Rng init_rng(derive_seed(seed, 2));
  auto uniform_fill = [&](double bound, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = (2.0 * init_rng.uniform() - 1.0) * bound;
    return m;
  };
  const double bound1 = std::sqrt(6.0 / static_cast<double>(d + h));
  const double bound2 = std::sqrt(2.0 / static_cast<double>(h + 1));
  MlpParams p;
  p.W1 = uniform_fill(bound1, d, h);
  p.b1 = uniform_fill(bound1, h, 1);
  p.w2 = uniform_fill(bound2, h, 1);
  p.b2 = uniform_fill(bound2, 1, 1)(0, 0);

  AdamState adam{zeros_like(p), zeros_like(p), 0};
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  const auto n_train = static_cast<std::size_t>(X_train.rows());
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(opt.batch_size), n_train);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng batch_rng(derive_seed(seed, 3));

  MlpParams best = p;
  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;
  int epoch = 0;
  bool stopped_early = false;
  for (; epoch < opt.max_epochs; ++epoch) {
    batch_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t end = std::min(start + batch, n_train);
      const auto bn = static_cast<Eigen::Index>(end - start);
      Matrix Xb(bn, d);
      Vector yb(bn);
      for (Eigen::Index i = 0; i < bn; ++i) {
        const auto r = order[start + static_cast<std::size_t>(i)];
        Xb.row(i) = X_train.row(static_cast<Eigen::Index>(r));
        yb(i) = y_train[r] ? 1.0 : 0.0;
      }
      const Matrix pre = (Xb * p.W1).rowwise() + p.b1.transpose();
      const Matrix H = pre.cwiseMax(0.0);
      const Vector z = (H * p.w2).array() + p.b2;
      Vector delta2(bn);
      for (Eigen::Index i = 0; i < bn; ++i) delta2(i) = (sigmoid(z(i)) - yb(i)) / static_cast<double>(bn);
      MlpParams g;
      g.w2 = H.transpose() * delta2 + (opt.alpha / static_cast<double>(bn)) * p.w2;
      g.b2 = delta2.sum();
      const Matrix delta1 = ((delta2 * p.w2.transpose()).array() * (pre.array() > 0.0).cast<double>()).matrix();
      g.W1 = Xb.transpose() * delta1 + (opt.alpha / static_cast<double>(bn)) * p.W1;
      g.b1 = delta1.colwise().sum().transpose();

      ++adam.t;
      const double lr_t = opt.learning_rate * std::sqrt(1.0 - std::pow(beta2, adam.t)) /
                          (1.0 - std::pow(beta1, adam.t));
      adam_update(p.W1, adam.m.W1, adam.v.W1, g.W1, lr_t, beta1, beta2, eps);
      adam_update(p.b1, adam.m.b1, adam.v.b1, g.b1, lr_t, beta1, beta2, eps);
      adam_update(p.w2, adam.m.w2, adam.v.w2, g.w2, lr_t, beta1, beta2, eps);
      adam.m.b2 = beta1 * adam.m.b2 + (1.0 - beta1) * g.b2;
      adam.v.b2 = beta2 * adam.v.b2 + (1.0 - beta2) * g.b2 * g.b2;
      p.b2 -= lr_t * adam.m.b2 / (std::sqrt(adam.v.b2) + eps);
    }
    const double val_loss = mean_log_loss(mlp_logits(p, X_val), y_val);
    probe.info.objective_trace.push_back(val_loss);
    if (val_loss < best_loss - opt.tol) {
      best_loss = val_loss;
      best = p;
      stale = 0;
    } else if (++stale >= opt.patience) {
      ++epoch;
      stopped_early = true;
      break;
    }
  }

  probe.hidden_weights = std::move(best.W1);
  probe.hidden_bias = std::move(best.b1);
  probe.out_weights = std::move(best.w2);
  probe.out_bias = best.b2;
  probe.info.seed = seed;
  probe.info.iterations = epoch;
  probe.info.converged = stopped_early;
  probe.info.final_objective = best_loss;
  return probe;
}

// ---------------------------------------------------------------------------

Vector predict_proba(const LinearProbe& probe, const Matrix& X) {
  if (X.cols() != probe.dim()) {
    throw Error(ErrorCode::DimMismatch, "input width " + std::to_string(X.cols()) +
                                            ", probe width " + std::to_string(probe.dim()));
  }
  const Vector z = (probe.standardizer.transform(X) * probe.weights).array() + probe.intercept;
  return z.unaryExpr([](double v) { return open_unit(sigmoid(v)); });
}

Vector predict_proba(const MLPProbe& probe, const Matrix& X) {
  if (X.cols() != probe.dim()) {
    throw Error(ErrorCode::DimMismatch, "input width " + std::to_string(X.cols()) +
                                            ", probe width " + std::to_string(probe.dim()));
  }
  const MlpParams p{probe.hidden_weights, probe.hidden_bias, probe.out_weights, probe.out_bias};
  const Vector z = mlp_logits(p, probe.standardizer.transform(X));
  return z.unaryExpr([](double v) { return open_unit(sigmoid(v)); });
}

Vector predict_proba(const Probe& probe, const Matrix& X) {
  return std::visit([&](const auto& p) { return predict_proba(p, X); }, probe);
}

// ---------------------------------------------------------------------------

std::string probe_to_json(const Probe& probe) {
  json j;
  if (const auto* lin = std::get_if<LinearProbe>(&probe)) {
    j["type"] = "linear";
    j["dim"] = lin->dim();
    j["C"] = lin->C;
    j["weights"] = to_std(lin->weights);
    j["intercept"] = lin->intercept;
    j["standardizer"] = standardizer_json(lin->standardizer);
    j["metadata"] = info_json(lin->info);
  } else {
    const auto& mlp = std::get<MLPProbe>(probe);
    j["type"] = "mlp";
    j["dim"] = mlp.dim();
    j["alpha"] = mlp.alpha;
    json rows = json::array();
    for (Eigen::Index i = 0; i < mlp.hidden_weights.rows(); ++i) {
      rows.push_back(to_std(mlp.hidden_weights.row(i).transpose()));
    }
    j["hidden_weights"] = std::move(rows);
    j["hidden_bias"] = to_std(mlp.hidden_bias);
    j["out_weights"] = to_std(mlp.out_weights);
    j["out_bias"] = mlp.out_bias;
    j["standardizer"] = standardizer_json(mlp.standardizer);
    j["metadata"] = info_json(mlp.info);
  }
  return j.dump();
}

Probe probe_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const auto type = j.at("type").get<std::string>();
    if (type == "linear") {
      LinearProbe p;
      p.C = j.at("C").get<double>();
      p.weights = from_std(j.at("weights").get<std::vector<double>>());
      p.intercept = j.at("intercept").get<double>();
      p.standardizer = standardizer_from(j.at("standardizer"));
      p.info = info_from(j.at("metadata"));
      return p;
    }
    if (type == "mlp") {
      MLPProbe p;
      p.alpha = j.at("alpha").get<double>();
      const auto rows = j.at("hidden_weights").get<std::vector<std::vector<double>>>();
      const auto width = rows.empty() ? 0 : rows.front().size();
      p.hidden_weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != width) throw Error(ErrorCode::ParseError, "ragged hidden_weights");
        p.hidden_weights.row(static_cast<Eigen::Index>(i)) = from_std(rows[i]).transpose();
      }
      p.hidden_bias = from_std(j.at("hidden_bias").get<std::vector<double>>());
      p.out_weights = from_std(j.at("out_weights").get<std::vector<double>>());
      p.out_bias = j.at("out_bias").get<double>();
      p.standardizer = standardizer_from(j.at("standardizer"));
      p.info = info_from(j.at("metadata"));
      return p;
    }
    throw Error(ErrorCode::ParseError, "unknown probe type " + type);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace privgap
