#include "privgap/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "privgap/error.hpp"
#include "privgap/metrics.hpp"
#include "privgap/random.hpp"

namespace privgap {

using nlohmann::json;

std::vector<std::size_t> FoldPlan::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::complement(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) out.push_back(i);
  }
  return out;
}

FoldPlan stratified_folds(Labels y, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "need k >= 2 folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) {
    throw Error(ErrorCode::SingleClass, "stratified folds need both classes");
  }
  const auto uk = static_cast<std::size_t>(k);
  if (pos.size() < uk && neg.size() < uk) {
    throw Error(ErrorCode::TooFewPerClass,
                std::to_string(k) + " folds but classes have " + std::to_string(pos.size()) +
                    " and " + std::to_string(neg.size()) + " members");
  }

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(y.size(), -1);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(pos));
  rng.shuffle(std::span<std::size_t>(neg));
  std::size_t slot = 0;
  for (const auto* cls : {&pos, &neg}) {
    for (std::size_t idx : *cls) {
      plan.assignments[idx] = static_cast<int>(slot % uk);
      ++slot;
    }
  }
  return plan;
}

std::string to_string(ProbeType type) { return type == ProbeType::Linear ? "linear" : "mlp"; }

ProbeType probe_type_from_string(const std::string& name) {
  if (name == "linear") return ProbeType::Linear;
  if (name == "mlp") return ProbeType::Mlp;
  throw Error(ErrorCode::InvalidArgument, "unknown probe type '" + name + "'");
}

std::uint64_t inner_seed(std::uint64_t outer_seed, int fold) {
  return mix64(outer_seed ^ static_cast<std::uint64_t>(fold));
}

OOFResult run_nested_cv(const Matrix& X, Labels y, const ProbeSpec& spec, const FoldPlan& plan) {
  if (static_cast<std::size_t>(X.rows()) != y.size() || y.size() != plan.size()) {
    throw Error(ErrorCode::LengthMismatch, "X rows, labels and fold plan must have equal length");
  }
  const std::size_t n = y.size();
  OOFResult out;
  out.scores.assign(n, std::numeric_limits<double>::quiet_NaN());
  out.fold_of = plan.assignments;
  out.per_fold_auc.assign(static_cast<std::size_t>(plan.k), std::numeric_limits<double>::quiet_NaN());

  for (int f = 0; f < plan.k; ++f) {
    const auto train_rows = plan.complement(f);
    const auto test_rows = plan.members(f);
    Matrix X_train(static_cast<Eigen::Index>(train_rows.size()), X.cols());
    std::vector<std::uint8_t> y_train(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      X_train.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(train_rows[i]));
      y_train[i] = y[train_rows[i]];
    }
    const auto train_pos = std::count(y_train.begin(), y_train.end(), 1);
    if (train_pos == 0 || static_cast<std::size_t>(train_pos) == y_train.size()) {
      throw Error(ErrorCode::FoldClassCollapse,
                  "training split of fold " + std::to_string(f) + " lost a class");
    }
    Matrix X_test(static_cast<Eigen::Index>(test_rows.size()), X.cols());
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      X_test.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(test_rows[i]));
    }

    const std::uint64_t fold_seed = inner_seed(plan.seed, f);
    FoldRecord record;
    record.fold = f;
    record.seed = fold_seed;
    Probe probe;
    if (spec.type == ProbeType::Linear) {
      const double C = tune_C(X_train, y_train, spec.C_grid, fold_seed, spec.inner_folds, spec.logistic);
      LinearProbe lin = train_linear_probe(X_train, y_train, C, spec.logistic);
      lin.info.seed = fold_seed;
      record.C = C;
      record.converged = lin.info.converged;
      record.iterations = lin.info.iterations;
      probe = std::move(lin);
    } else {
      MLPProbe mlp = train_mlp_probe(X_train, y_train, fold_seed, spec.mlp);
      record.converged = mlp.info.converged;
      record.iterations = mlp.info.iterations;
      probe = std::move(mlp);
    }

    const Vector scores = predict_proba(probe, X_test);
    std::vector<double> fold_scores(scores.data(), scores.data() + scores.size());
    std::vector<std::uint8_t> fold_labels(test_rows.size());
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      out.scores[test_rows[i]] = fold_scores[i];
      fold_labels[i] = y[test_rows[i]];
    }
    const auto test_pos = std::count(fold_labels.begin(), fold_labels.end(), 1);
    if (test_pos > 0 && static_cast<std::size_t>(test_pos) < fold_labels.size()) {
      out.per_fold_auc[static_cast<std::size_t>(f)] = auc(fold_scores, fold_labels);
    }
    out.probe_metadata.push_back(record);
    out.fold_probes.push_back(std::move(probe));
  }
  return out;
}

std::string oof_to_json(const OOFResult& r) {
  json folds = json::array();
  for (double a : r.per_fold_auc) folds.push_back(std::isnan(a) ? json(nullptr) : json(a));
  json meta = json::array();
  for (const auto& m : r.probe_metadata) {
    meta.push_back({{"fold", m.fold}, {"C", m.C}, {"converged", m.converged},
                    {"iterations", m.iterations}, {"seed", m.seed}});
  }
  return json{{"scores", r.scores}, {"fold_of", r.fold_of}, {"per_fold_auc", folds}, {"metadata", meta}}
      .dump();
}

}  // namespace privgap
