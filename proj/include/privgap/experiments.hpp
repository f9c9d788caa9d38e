#pragma once

// The self-versus-external probing grid: one nested-CV run per
// (target, source, dataset, probe type, layer) cell, full-set and
// disagreement-subset AUCs from the pooled out-of-fold scores, layer
// averaging, best-external selection, Holm-corrected heatmaps and
// per-layer premium-gap curves.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "privgap/crossval.hpp"
#include "privgap/metrics.hpp"
#include "privgap/repstore.hpp"

namespace privgap {

// ---- label comparisons -----------------------------------------------------

std::vector<std::size_t> disagreement_indices(Labels y_target, Labels y_source);
double agreement_rate(Labels y_a, Labels y_b);

/// {stride, 2 stride, ...} plus the final layer, ascending and deduplicated.
std::vector<std::uint32_t> probed_layers(std::uint32_t total_layers, std::uint32_t stride = 5);

/// Keeps the layers of `available` that probed_layers(max(available), stride)
/// would select. A model with a single layer (e.g. an embedding model at
/// layer 0) keeps it; stride 0 keeps everything.
std::vector<std::uint32_t> select_layers(std::vector<std::uint32_t> available, std::uint32_t stride);

// ---- cells -----------------------------------------------------------------

struct CellKey {
  std::string target;
  std::string source;
  std::string dataset;
  ProbeType probe = ProbeType::Linear;
  std::uint32_t layer = 0;

  bool is_self() const { return target == source; }
  auto operator<=>(const CellKey&) const = default;
  bool operator==(const CellKey&) const = default;
};

struct SubsetScore {
  std::optional<AucEstimate> estimate;  // empty when the subset is unusable
  std::vector<double> per_fold;         // NaN for folds lacking a class
  std::size_t size = 0;
  std::string unavailable_reason;

  bool available() const { return estimate.has_value(); }
  bool operator==(const SubsetScore&) const = default;
};

struct CellResult {
  CellKey key;
  AucEstimate full;
  std::vector<double> per_fold_full;
  std::map<std::string, SubsetScore> disagree;  // keyed by peer model
  std::vector<double> scores;                   // pooled out-of-fold scores
  std::vector<int> fold_of;
  std::vector<FoldRecord> probe_metadata;

  bool operator==(const CellResult&) const = default;
};

struct EvalConfig {
  int k = 10;
  std::vector<double> C_grid{0.01, 0.1};
  int bootstrap_B = 1000;
  std::uint64_t seed = 0;
  MlpOptions mlp{};
  std::size_t min_subset = 10;
  std::size_t min_per_class = 2;
};

/// Shared by every source probed against one (dataset, target) pair, so
/// per-fold AUCs line up for paired tests.
std::uint64_t fold_seed(std::uint64_t seed, const std::string& dataset, const std::string& target);

/// Scores one subset of pooled OOF predictions. Pure: never trains.
SubsetScore score_subset(std::span<const double> scores, Labels y_target,
                         std::span<const int> fold_of, int k,
                         std::span<const std::size_t> indices, int bootstrap_B,
                         std::uint64_t seed, std::size_t min_subset = 10,
                         std::size_t min_per_class = 2);

/// Disagreement entries of a cell from its pooled scores alone.
std::map<std::string, SubsetScore> score_disagreements(
    std::span<const double> scores, std::span<const int> fold_of, int k, Labels y_target,
    const std::map<std::string, LabelVector>& peers, int bootstrap_B, std::uint64_t seed,
    std::size_t min_subset = 10, std::size_t min_per_class = 2);

CellResult evaluate_cell(const CellKey& key, const RepresentationSet& reps,
                         const LabelVector& y_target,
                         const std::map<std::string, LabelVector>& peers,
                         const EvalConfig& config);

// ---- aggregation -----------------------------------------------------------

/// Which rows a statistic is computed on: the full set, or the
/// disagreement subset between the target and `peer`.
struct SubsetRef {
  std::optional<std::string> peer;

  static SubsetRef full() { return {}; }
  static SubsetRef disagree(std::string p) { return {std::move(p)}; }
  std::string name() const { return peer ? "disagree:" + *peer : "full"; }
  auto operator<=>(const SubsetRef&) const = default;
  bool operator==(const SubsetRef&) const = default;
};

struct LayerAggregate {
  std::string source;
  std::vector<std::uint32_t> layers;
  std::vector<double> per_layer_auc;
  double auc = 0.0;  // mean of pooled per-layer AUCs
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> per_fold_mean;  // per-fold AUC averaged over layers

  bool operator==(const LayerAggregate&) const = default;
};

/// Cells of one (target, source, dataset, probe type). Returns nothing when
/// the subset is unavailable at any layer. Throws MissingLayer when a
/// required layer has no cell.
std::optional<LayerAggregate> aggregate_over_layers(const std::vector<const CellResult*>& cells,
                                                    const SubsetRef& subset,
                                                    const std::vector<std::uint32_t>& layers);

struct BestExternal {
  std::string source;
  LayerAggregate aggregate;
};

/// Highest aggregated AUC; ties go to the lexicographically smaller name.
BestExternal best_external(const std::map<std::string, LayerAggregate>& aggregates,
                           const std::vector<std::string>& candidates, const std::string& target);

// ---- grid ------------------------------------------------------------------

enum class HolmFamily { Report, Subset, Dataset, Target };
std::string to_string(HolmFamily family);
HolmFamily holm_family_from_string(const std::string& name);

enum class SubsetKind { Full, Disagree };
std::string to_string(SubsetKind kind);
SubsetKind subset_kind_from_string(const std::string& name);

struct RunConfig {
  std::vector<std::string> manifests;
  std::vector<std::string> targets;   // empty: every labelled model
  std::vector<std::string> sources;   // empty: every model with layers
  std::vector<std::string> datasets;  // empty: every loaded dataset
  std::vector<ProbeType> probe_types{ProbeType::Linear};
  int k = 10;
  std::vector<double> C_grid{0.01, 0.1};
  std::uint32_t stride = 5;
  double alpha = 0.05;
  int bootstrap_B = 1000;
  std::uint64_t seed = 0;
  std::string output_dir = "privgap_out";
  HolmFamily holm_family = HolmFamily::Report;
  // Candidate external sources per figure; empty means every non-target source.
  std::vector<std::string> heatmap_candidates;
  std::vector<std::string> curve_candidates;
  std::vector<SubsetKind> curve_subsets{SubsetKind::Disagree};
  int jobs = 0;  // 0: hardware concurrency; not part of the result

  EvalConfig eval() const;
  bool operator==(const RunConfig&) const = default;
};

struct GridResult {
  std::vector<CellResult> cells;  // sorted by key

  const CellResult* find(const CellKey& key) const;
  std::vector<const CellResult*> select(const std::string& target, const std::string& source,
                                        const std::string& dataset, ProbeType probe) const;
  /// Probed layers of `source` present in the grid for this slice.
  std::vector<std::uint32_t> layers(const std::string& target, const std::string& source,
                                    const std::string& dataset, ProbeType probe) const;
  std::vector<std::string> sources(const std::string& target, const std::string& dataset,
                                   ProbeType probe) const;
  std::map<std::string, LabelVector> labels;  // "<dataset>/<model>" -> labels
};

/// Executes every cell with up to `jobs` workers and merges by key.
GridResult run_grid(const std::vector<RepresentationSet>& datasets, const RunConfig& config);

// ---- figures ---------------------------------------------------------------

struct HeatmapCell {
  std::string target;
  std::string dataset;
  ProbeType probe = ProbeType::Linear;
  bool available = false;
  std::string unavailable_reason;
  std::string best_external;
  double self_auc = 0.0;
  double self_ci_low = 0.0;
  double self_ci_high = 0.0;
  double best_auc = 0.0;
  double best_ci_low = 0.0;
  double best_ci_high = 0.0;
  double delta = 0.0;                 // self - best external, layer-averaged
  std::optional<double> gap_closed;   // percent; empty when best external = 1
  std::optional<double> p_value;      // empty when < 2 usable folds
  bool significant = false;           // after Holm correction
  double per_layer_gap_mean = 0.0;    // mean over layers of per-layer-best gaps

  bool operator==(const HeatmapCell&) const = default;
};

struct HeatmapReport {
  SubsetKind subset = SubsetKind::Full;
  double alpha = 0.05;
  HolmFamily family = HolmFamily::Report;
  std::vector<HeatmapCell> cells;

  bool operator==(const HeatmapReport&) const = default;
};

/// "+0.100 (50.0%)*": delta, gap closed and a star when significant.
std::string format_heatmap_cell(const HeatmapCell& cell);

/// One report per requested subset; Holm runs over the configured family
/// spanning all returned cells.
std::vector<HeatmapReport> build_heatmaps(const GridResult& grid,
                                          const std::vector<SubsetKind>& subsets,
                                          const RunConfig& config);
HeatmapReport build_heatmap(const GridResult& grid, SubsetKind subset, const RunConfig& config);

struct LayerPoint {
  std::uint32_t layer = 0;
  double depth = 0.0;
  double gap = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::string best_external;
  double self_auc = 0.0;
  double best_auc = 0.0;
  bool available = true;

  bool operator==(const LayerPoint&) const = default;
};

struct LayerCurve {
  std::string target;
  std::string dataset;
  ProbeType probe = ProbeType::Linear;
  SubsetKind subset = SubsetKind::Disagree;
  std::vector<LayerPoint> points;

  bool operator==(const LayerCurve&) const = default;
};

std::vector<double> normalized_depths(const std::vector<std::uint32_t>& layers);

LayerCurve per_layer_gap_curve(const GridResult& grid, const std::string& target,
                               const std::string& dataset, ProbeType probe, SubsetKind subset,
                               const std::vector<std::string>& candidates = {});

struct AgreementEntry {
  std::string dataset;
  std::string model_a;
  std::string model_b;
  double agreement = 0.0;
  std::size_t disagreements = 0;
  std::size_t n = 0;

  bool operator==(const AgreementEntry&) const = default;
};

std::vector<AgreementEntry> agreement_table(const std::vector<RepresentationSet>& datasets);

}  // namespace privgap
