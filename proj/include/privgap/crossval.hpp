#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "privgap/probes.hpp"

namespace privgap {

struct FoldPlan {
  int k = 10;
  std::uint64_t seed = 0;
  std::vector<int> assignments;  // example index -> fold id in [0, k)

  std::size_t size() const { return assignments.size(); }
  std::vector<std::size_t> members(int fold) const;
  std::vector<std::size_t> complement(int fold) const;
  bool operator==(const FoldPlan&) const = default;
};

/// Shuffles each class with a seeded generator and deals it round-robin
/// into k folds; negatives continue the deal where positives stopped, so
/// fold sizes also differ by at most one. Throws TooFewPerClass when no
/// class has k members, SingleClass when a class is absent.
FoldPlan stratified_folds(Labels y, int k, std::uint64_t seed);

enum class ProbeType { Linear, Mlp };

std::string to_string(ProbeType type);
ProbeType probe_type_from_string(const std::string& name);

struct ProbeSpec {
  ProbeType type = ProbeType::Linear;
  std::vector<double> C_grid{0.01, 0.1};
  int inner_folds = 3;
  LogisticOptions logistic{};
  MlpOptions mlp{};
};

struct FoldRecord {
  int fold = 0;
  double C = 0.0;  // 0 for MLP
  bool converged = false;
  int iterations = 0;
  std::uint64_t seed = 0;

  bool operator==(const FoldRecord&) const = default;
};

struct OOFResult {
  std::vector<double> scores;         // pooled out-of-fold probabilities
  std::vector<int> fold_of;
  std::vector<double> per_fold_auc;   // NaN where a fold lacks a class
  std::vector<FoldRecord> probe_metadata;
  std::vector<Probe> fold_probes;     // indexed by fold

  bool operator==(const OOFResult&) const = default;
};

/// Seed of the inner 3-fold plan (and MLP initialization) for one outer fold.
std::uint64_t inner_seed(std::uint64_t outer_seed, int fold);

OOFResult run_nested_cv(const Matrix& X, Labels y, const ProbeSpec& spec, const FoldPlan& plan);

std::string oof_to_json(const OOFResult& result);

}  // namespace privgap
