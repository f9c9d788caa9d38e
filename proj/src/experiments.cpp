#include "privgap/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "privgap/error.hpp"
#include "privgap/log.hpp"
#include "privgap/random.hpp"

namespace privgap {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string label_key(const std::string& dataset, const std::string& model) {
  return dataset + "/" + model;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::size_t> disagreement_indices(Labels y_target, Labels y_source) {
  if (y_target.size() != y_source.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(y_target.size()) + " vs " + std::to_string(y_source.size()));
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < y_target.size(); ++i) {
    if ((y_target[i] != 0) != (y_source[i] != 0)) out.push_back(i);
  }
  return out;
}

double agreement_rate(Labels y_a, Labels y_b) {
  const auto disagree = disagreement_indices(y_a, y_b).size();
  if (y_a.empty()) throw Error(ErrorCode::EmptyInput, "agreement of empty label vectors");
  return 1.0 - static_cast<double>(disagree) / static_cast<double>(y_a.size());
}

std::vector<std::uint32_t> probed_layers(std::uint32_t total_layers, std::uint32_t stride) {
  if (stride == 0) throw Error(ErrorCode::InvalidArgument, "stride must be positive");
  std::vector<std::uint32_t> out;
  for (std::uint32_t l = stride; l <= total_layers; l += stride) out.push_back(l);
  if (out.empty() || out.back() != total_layers) out.push_back(total_layers);
  return out;
}

std::vector<std::uint32_t> select_layers(std::vector<std::uint32_t> available, std::uint32_t stride) {
  std::sort(available.begin(), available.end());
  available.erase(std::unique(available.begin(), available.end()), available.end());
  if (stride == 0 || available.size() <= 1) return available;
  const std::uint32_t last = available.back();
  std::vector<std::uint32_t> out;
  for (auto l : available) {
    if ((l > 0 && l % stride == 0) || l == last) out.push_back(l);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t fold_seed(std::uint64_t seed, const std::string& dataset, const std::string& target) {
  return derive_seed(derive_seed(seed, hash_name(dataset)), hash_name(target));
}

SubsetScore score_subset(std::span<const double> scores, Labels y_target,
                         std::span<const int> fold_of, int k,
                         std::span<const std::size_t> indices, int bootstrap_B,
                         std::uint64_t seed, std::size_t min_subset, std::size_t min_per_class) {
  SubsetScore out;
  out.size = indices.size();
  out.per_fold.assign(static_cast<std::size_t>(k), kNaN);
  std::size_t pos = 0;
  for (auto i : indices) pos += y_target[i] != 0;
  const std::size_t neg = indices.size() - pos;
  if (indices.size() < min_subset) {
    out.unavailable_reason = "subset has " + std::to_string(indices.size()) + " examples";
    return out;
  }
  if (pos < min_per_class || neg < min_per_class) {
    out.unavailable_reason = "subset has " + std::to_string(pos) + " positives and " +
                             std::to_string(neg) + " negatives";
    return out;
  }
  std::vector<double> s(indices.size());
  std::vector<std::uint8_t> y(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    s[j] = scores[indices[j]];
    y[j] = y_target[indices[j]];
  }
  out.estimate = estimate_auc(s, y, bootstrap_B, seed);

  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> in_fold;
    std::size_t fold_pos = 0;
    for (auto i : indices) {
      if (fold_of[i] == f) {
        in_fold.push_back(i);
        fold_pos += y_target[i] != 0;
      }
    }
    if (fold_pos == 0 || fold_pos == in_fold.size()) continue;
    out.per_fold[static_cast<std::size_t>(f)] = auc_subset(scores, y_target, in_fold);
  }
  return out;
}

std::map<std::string, SubsetScore> score_disagreements(
    std::span<const double> scores, std::span<const int> fold_of, int k, Labels y_target,
    const std::map<std::string, LabelVector>& peers, int bootstrap_B, std::uint64_t seed,
    std::size_t min_subset, std::size_t min_per_class) {
  std::map<std::string, SubsetScore> out;
  for (const auto& [peer, y_peer] : peers) {
    const auto idx = disagreement_indices(y_target, y_peer.labels);
    out.emplace(peer, score_subset(scores, y_target, fold_of, k, idx, bootstrap_B,
                                   derive_seed(seed, hash_name(peer)), min_subset, min_per_class));
  }
  return out;
}

CellResult evaluate_cell(const CellKey& key, const RepresentationSet& reps,
                         const LabelVector& y_target,
                         const std::map<std::string, LabelVector>& peers,
                         const EvalConfig& config) {
  if (y_target.size() != reps.size()) {
    throw Error(ErrorCode::LengthMismatch, "target labels do not match the manifest");
  }
  const Matrix X = reps.layer(key.source, key.layer).to_eigen();
  const std::uint64_t folds_seed = fold_seed(config.seed, key.dataset, key.target);
  const FoldPlan plan = stratified_folds(y_target.labels, config.k, folds_seed);

  ProbeSpec spec;
  spec.type = key.probe;
  spec.C_grid = config.C_grid;
  spec.mlp = config.mlp;
  OOFResult oof = run_nested_cv(X, y_target.labels, spec, plan);

  CellResult cell;
  cell.key = key;
  const std::uint64_t boot_seed = derive_seed(folds_seed, hash_name("bootstrap"));
  cell.full = estimate_auc(oof.scores, y_target.labels, config.bootstrap_B, boot_seed);
  cell.per_fold_full = oof.per_fold_auc;
  std::map<std::string, LabelVector> others;
  for (const auto& [name, labels] : peers) {
    if (name != key.target) others.emplace(name, labels);
  }
  cell.disagree = score_disagreements(oof.scores, oof.fold_of, config.k, y_target.labels, others,
                                      config.bootstrap_B, boot_seed, config.min_subset,
                                      config.min_per_class);
  cell.scores = std::move(oof.scores);
  cell.fold_of = std::move(oof.fold_of);
  cell.probe_metadata = std::move(oof.probe_metadata);
  return cell;
}

// ---------------------------------------------------------------------------

std::optional<LayerAggregate> aggregate_over_layers(const std::vector<const CellResult*>& cells,
                                                    const SubsetRef& subset,
                                                    const std::vector<std::uint32_t>& layers) {
  if (layers.empty()) throw Error(ErrorCode::MissingLayer, "no layers to aggregate");
  LayerAggregate agg;
  agg.layers = layers;
  std::size_t k = 0;
  std::vector<const std::vector<double>*> folds;
  for (auto layer : layers) {
    auto it = std::find_if(cells.begin(), cells.end(),
                           [&](const CellResult* c) { return c->key.layer == layer; });
    if (it == cells.end()) {
      throw Error(ErrorCode::MissingLayer, "no cell for layer " + std::to_string(layer));
    }
    const CellResult& cell = **it;
    agg.source = cell.key.source;
    if (!subset.peer) {
      agg.per_layer_auc.push_back(cell.full.auc);
      folds.push_back(&cell.per_fold_full);
    } else {
      auto d = cell.disagree.find(*subset.peer);
      if (d == cell.disagree.end() || !d->second.available()) return std::nullopt;
      agg.per_layer_auc.push_back(d->second.estimate->auc);
      folds.push_back(&d->second.per_fold);
    }
    if (k == 0) k = folds.back()->size();
    if (folds.back()->size() != k) {
      throw Error(ErrorCode::LengthMismatch, "cells disagree on the fold count");
    }
  }
  double sum = 0.0;
  for (double a : agg.per_layer_auc) sum += a;
  agg.auc = sum / static_cast<double>(agg.per_layer_auc.size());

  agg.per_fold_mean.assign(k, 0.0);
  for (std::size_t f = 0; f < k; ++f) {
    double s = 0.0;
    for (const auto* v : folds) s += (*v)[f];
    agg.per_fold_mean[f] = s / static_cast<double>(folds.size());  // NaN propagates
  }
  std::tie(agg.ci_low, agg.ci_high) = stats::t_interval(agg.per_fold_mean);
  return agg;
}

BestExternal best_external(const std::map<std::string, LayerAggregate>& aggregates,
                           const std::vector<std::string>& candidates, const std::string& target) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyExternalSet, "no external candidates");
  if (std::find(candidates.begin(), candidates.end(), target) != candidates.end()) {
    throw Error(ErrorCode::InvalidArgument, "candidate set contains the target " + target);
  }
  std::vector<std::string> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  const LayerAggregate* best = nullptr;
  std::string best_name;
  for (const auto& name : sorted) {
    auto it = aggregates.find(name);
    if (it == aggregates.end()) continue;
    if (best == nullptr || it->second.auc > best->auc) {
      best = &it->second;
      best_name = name;
    }
  }
  if (best == nullptr) throw Error(ErrorCode::EmptyExternalSet, "no candidate has an aggregate");
  return {best_name, *best};
}

// ---------------------------------------------------------------------------

std::string to_string(HolmFamily family) {
  switch (family) {
    case HolmFamily::Report: return "report";
    case HolmFamily::Subset: return "subset";
    case HolmFamily::Dataset: return "dataset";
    case HolmFamily::Target: return "target";
  }
  return "report";
}

HolmFamily holm_family_from_string(const std::string& name) {
  if (name == "report") return HolmFamily::Report;
  if (name == "subset") return HolmFamily::Subset;
  if (name == "dataset") return HolmFamily::Dataset;
  if (name == "target") return HolmFamily::Target;
  throw Error(ErrorCode::InvalidArgument, "unknown Holm family '" + name + "'");
}

std::string to_string(SubsetKind kind) { return kind == SubsetKind::Full ? "full" : "disagree"; }

SubsetKind subset_kind_from_string(const std::string& name) {
  if (name == "full") return SubsetKind::Full;
  if (name == "disagree") return SubsetKind::Disagree;
  throw Error(ErrorCode::InvalidArgument, "unknown subset '" + name + "'");
}

EvalConfig RunConfig::eval() const {
  EvalConfig e;
  e.k = k;
  e.C_grid = C_grid;
  e.bootstrap_B = bootstrap_B;
  e.seed = seed;
  return e;
}

const CellResult* GridResult::find(const CellKey& key) const {
  auto it = std::lower_bound(cells.begin(), cells.end(), key,
                             [](const CellResult& c, const CellKey& k) { return c.key < k; });
  return (it != cells.end() && it->key == key) ? &*it : nullptr;
}

std::vector<const CellResult*> GridResult::select(const std::string& target,
                                                  const std::string& source,
                                                  const std::string& dataset,
                                                  ProbeType probe) const {
  std::vector<const CellResult*> out;
  for (const auto& c : cells) {
    if (c.key.target == target && c.key.source == source && c.key.dataset == dataset &&
        c.key.probe == probe) {
      out.push_back(&c);
    }
  }
  return out;
}

std::vector<std::uint32_t> GridResult::layers(const std::string& target, const std::string& source,
                                              const std::string& dataset, ProbeType probe) const {
  std::vector<std::uint32_t> out;
  for (const auto* c : select(target, source, dataset, probe)) out.push_back(c->key.layer);
  return out;
}

std::vector<std::string> GridResult::sources(const std::string& target, const std::string& dataset,
                                             ProbeType probe) const {
  std::set<std::string> names;
  for (const auto& c : cells) {
    if (c.key.target == target && c.key.dataset == dataset && c.key.probe == probe) {
      names.insert(c.key.source);
    }
  }
  return {names.begin(), names.end()};
}

GridResult run_grid(const std::vector<RepresentationSet>& datasets, const RunConfig& config) {
  struct Job {
    CellKey key;
    const RepresentationSet* reps;
    const LabelVector* y_target;
    const std::map<std::string, LabelVector>* peers;
  };
  GridResult grid;
  std::vector<Job> jobs;
  // Stable storage for labels referenced by jobs.
  std::map<std::string, std::map<std::string, LabelVector>> peer_sets;

  std::set<std::string> seen_datasets;
  for (const auto& reps : datasets) {
    const std::string& ds = reps.dataset_id();
    if (!seen_datasets.insert(ds).second) {
      throw Error(ErrorCode::InvalidArgument, "dataset " + ds + " loaded twice");
    }
    if (!config.datasets.empty() &&
        std::find(config.datasets.begin(), config.datasets.end(), ds) == config.datasets.end()) {
      continue;
    }
    auto& labels = peer_sets[ds];
    for (const auto& m : reps.labelled_models()) labels.emplace(m, reps.labels_for(m));
    for (const auto& [m, y] : labels) grid.labels.emplace(label_key(ds, m), y);

    std::vector<std::string> targets = config.targets.empty() ? reps.labelled_models() : config.targets;
    std::vector<std::string> sources = config.sources.empty() ? reps.models() : config.sources;
    for (const auto& t : targets) {
      if (labels.count(t) == 0) {
        throw Error(ErrorCode::MissingLabel, "target " + t + " has no labels in dataset " + ds);
      }
    }
    for (const auto& s : sources) {
      if (reps.layers_of(s).empty()) {
        throw Error(ErrorCode::MissingLayer, "source " + s + " has no layers in dataset " + ds);
      }
    }
    for (const auto& t : targets) {
      for (const auto& s : sources) {
        for (auto layer : select_layers(reps.layers_of(s), config.stride)) {
          for (auto probe : config.probe_types) {
            jobs.push_back({{t, s, ds, probe, layer}, &reps, &labels.at(t), &labels});
          }
        }
      }
    }
  }
  if (jobs.empty()) throw Error(ErrorCode::EmptyReport, "the configured grid has no cells");

  const EvalConfig eval = config.eval();
  std::vector<std::optional<CellResult>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      try {
        results[i] = evaluate_cell(job.key, *job.reps, *job.y_target, *job.peers, eval);
        log::debug("cell " + job.key.target + " <- " + job.key.source + " " + job.key.dataset +
                   " L" + std::to_string(job.key.layer) + " auc " +
                   std::to_string(results[i]->full.auc));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n_workers =
      std::min<std::size_t>(jobs.size(), config.jobs > 0 ? static_cast<std::size_t>(config.jobs) : hw);
  log::info("running " + std::to_string(jobs.size()) + " cells on " + std::to_string(n_workers) +
            " worker(s)");
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  grid.cells.reserve(results.size());
  for (auto& r : results) grid.cells.push_back(std::move(*r));
  std::sort(grid.cells.begin(), grid.cells.end(),
            [](const CellResult& a, const CellResult& b) { return a.key < b.key; });
  return grid;
}

// ---------------------------------------------------------------------------

std::string format_heatmap_cell(const HeatmapCell& cell) {
  if (!cell.available) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << std::showpos << cell.delta << std::noshowpos;
  if (cell.gap_closed) {
    os << " (" << std::setprecision(1) << *cell.gap_closed << "%)";
  }
  if (cell.significant) os << '*';
  return os.str();
}

std::vector<double> normalized_depths(const std::vector<std::uint32_t>& layers) {
  std::vector<double> out(layers.size(), 0.0);
  if (layers.size() < 2) return out;
  const double lo = *std::min_element(layers.begin(), layers.end());
  const double hi = *std::max_element(layers.begin(), layers.end());
  for (std::size_t i = 0; i < layers.size(); ++i) out[i] = (layers[i] - lo) / (hi - lo);
  return out;
}

namespace {

std::vector<std::string> external_candidates(const GridResult& grid, const std::string& target,
                                             const std::string& dataset, ProbeType probe,
                                             const std::vector<std::string>& configured) {
  std::vector<std::string> out;
  for (const auto& s : grid.sources(target, dataset, probe)) {
    if (s == target) continue;
    if (!configured.empty() &&
        std::find(configured.begin(), configured.end(), s) == configured.end()) {
      continue;
    }
    out.push_back(s);
  }
  return out;
}

// Layer of `layers` whose normalized depth is closest to `depth`.
std::uint32_t nearest_depth_layer(const std::vector<std::uint32_t>& layers, double depth) {
  const auto depths = normalized_depths(layers);
  std::size_t best = 0;
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (std::fabs(depths[i] - depth) < std::fabs(depths[best] - depth)) best = i;
  }
  return layers[best];
}

struct SubsetView {
  double auc = 0.0;
  const std::vector<double>* per_fold = nullptr;
};

std::optional<SubsetView> view(const CellResult& cell, const SubsetRef& subset) {
  if (!subset.peer) return SubsetView{cell.full.auc, &cell.per_fold_full};
  auto it = cell.disagree.find(*subset.peer);
  if (it == cell.disagree.end() || !it->second.available()) return std::nullopt;
  return SubsetView{it->second.estimate->auc, &it->second.per_fold};
}

HeatmapCell heatmap_cell(const GridResult& grid, const std::string& target,
                         const std::string& dataset, ProbeType probe, SubsetKind kind,
                         const RunConfig& config) {
  HeatmapCell cell;
  cell.target = target;
  cell.dataset = dataset;
  cell.probe = probe;

  const auto self_cells = grid.select(target, target, dataset, probe);
  const auto self_layers = grid.layers(target, target, dataset, probe);
  const auto candidates = external_candidates(grid, target, dataset, probe, config.heatmap_candidates);
  if (candidates.empty()) {
    cell.unavailable_reason = "no external sources";
    return cell;
  }

  std::optional<LayerAggregate> self_agg;
  std::optional<BestExternal> best;
  if (kind == SubsetKind::Full) {
    self_agg = aggregate_over_layers(self_cells, SubsetRef::full(), self_layers);
    std::map<std::string, LayerAggregate> ext;
    for (const auto& c : candidates) {
      auto agg = aggregate_over_layers(grid.select(target, c, dataset, probe), SubsetRef::full(),
                                       grid.layers(target, c, dataset, probe));
      if (agg) ext.emplace(c, std::move(*agg));
    }
    best = best_external(ext, candidates, target);
  } else {
    // Each external is compared on its own disagreement subset with the target.
    std::map<std::string, LayerAggregate> ext;
    std::map<std::string, LayerAggregate> self_on;
    std::vector<std::string> usable;
    for (const auto& c : candidates) {
      if (grid.labels.count(label_key(dataset, c)) == 0) continue;
      const auto subset = SubsetRef::disagree(c);
      auto e = aggregate_over_layers(grid.select(target, c, dataset, probe), subset,
                                     grid.layers(target, c, dataset, probe));
      auto s = aggregate_over_layers(self_cells, subset, self_layers);
      if (!e || !s) continue;
      ext.emplace(c, std::move(*e));
      self_on.emplace(c, std::move(*s));
      usable.push_back(c);
    }
    if (usable.empty()) {
      cell.unavailable_reason = "no usable disagreement subset";
      return cell;
    }
    best = best_external(ext, usable, target);
    self_agg = self_on.at(best->source);
  }
  if (!self_agg) {
    cell.unavailable_reason = "self probe unavailable";
    return cell;
  }

  cell.available = true;
  cell.best_external = best->source;
  cell.self_auc = self_agg->auc;
  cell.self_ci_low = self_agg->ci_low;
  cell.self_ci_high = self_agg->ci_high;
  cell.best_auc = best->aggregate.auc;
  cell.best_ci_low = best->aggregate.ci_low;
  cell.best_ci_high = best->aggregate.ci_high;
  cell.delta = cell.self_auc - cell.best_auc;
  if (cell.best_auc < 1.0) cell.gap_closed = gap_closed_pct(cell.self_auc, cell.best_auc);
  try {
    cell.p_value = paired_t_test(self_agg->per_fold_mean, best->aggregate.per_fold_mean);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewFolds) throw;
  }

  const auto curve = per_layer_gap_curve(grid, target, dataset, probe, kind, config.heatmap_candidates);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : curve.points) {
    if (!p.available) continue;
    sum += p.gap;
    ++n;
  }
  cell.per_layer_gap_mean = n > 0 ? sum / static_cast<double>(n) : kNaN;
  return cell;
}

std::string family_key(HolmFamily family, SubsetKind subset, const HeatmapCell& cell) {
  switch (family) {
    case HolmFamily::Report: return "";
    case HolmFamily::Subset: return to_string(subset);
    case HolmFamily::Dataset: return cell.dataset;
    case HolmFamily::Target: return cell.target;
  }
  return "";
}

}  // namespace

std::vector<HeatmapReport> build_heatmaps(const GridResult& grid,
                                          const std::vector<SubsetKind>& subsets,
                                          const RunConfig& config) {
  std::set<std::tuple<std::string, std::string, ProbeType>> slices;
  for (const auto& c : grid.cells) {
    if (c.key.is_self()) slices.emplace(c.key.target, c.key.dataset, c.key.probe);
  }
  if (slices.empty()) throw Error(ErrorCode::EmptyReport, "grid has no self-probe cells");

  std::vector<HeatmapReport> reports;
  for (auto kind : subsets) {
    HeatmapReport rep;
    rep.subset = kind;
    rep.alpha = config.alpha;
    rep.family = config.holm_family;
    for (const auto& [t, d, p] : slices) rep.cells.push_back(heatmap_cell(grid, t, d, p, kind, config));
    reports.push_back(std::move(rep));
  }

  std::map<std::string, std::vector<HeatmapCell*>> families;
  for (auto& rep : reports) {
    for (auto& cell : rep.cells) {
      if (cell.p_value) families[family_key(config.holm_family, rep.subset, cell)].push_back(&cell);
    }
  }
  for (auto& [_, members] : families) {
    std::vector<double> p;
    for (const auto* c : members) p.push_back(*c->p_value);
    const auto sig = holm_correct(p, config.alpha);
    for (std::size_t i = 0; i < members.size(); ++i) members[i]->significant = sig.adjusted_reject[i];
  }
  return reports;
}

HeatmapReport build_heatmap(const GridResult& grid, SubsetKind subset, const RunConfig& config) {
  return build_heatmaps(grid, {subset}, config).front();
}

LayerCurve per_layer_gap_curve(const GridResult& grid, const std::string& target,
                               const std::string& dataset, ProbeType probe, SubsetKind subset,
                               const std::vector<std::string>& configured) {
  LayerCurve curve;
  curve.target = target;
  curve.dataset = dataset;
  curve.probe = probe;
  curve.subset = subset;
  auto self_layers = grid.layers(target, target, dataset, probe);
  if (self_layers.empty()) {
    throw Error(ErrorCode::MissingLayer, "no self-probe cells for " + target + " on " + dataset);
  }
  std::sort(self_layers.begin(), self_layers.end());
  const auto depths = normalized_depths(self_layers);
  const auto candidates = external_candidates(grid, target, dataset, probe, configured);
  if (candidates.empty()) throw Error(ErrorCode::EmptyExternalSet, "no external sources");

  for (std::size_t i = 0; i < self_layers.size(); ++i) {
    LayerPoint point;
    point.layer = self_layers[i];
    point.depth = depths[i];
    const CellResult* self_cell = grid.find({target, target, dataset, probe, self_layers[i]});

    std::optional<SubsetView> best_self, best_ext;
    for (const auto& c : candidates) {  // sorted, so ties keep the smaller name
      auto ext_layers = grid.layers(target, c, dataset, probe);
      const std::uint32_t ext_layer = nearest_depth_layer(ext_layers, depths[i]);
      const CellResult* ext_cell = grid.find({target, c, dataset, probe, ext_layer});
      if (ext_cell == nullptr) throw Error(ErrorCode::MissingLayer, c + " has no matching layer");
      SubsetRef ref = SubsetRef::full();
      if (subset == SubsetKind::Disagree) {
        if (grid.labels.count(label_key(dataset, c)) == 0) continue;
        ref = SubsetRef::disagree(c);
      }
      auto s = view(*self_cell, ref);
      auto e = view(*ext_cell, ref);
      if (!s || !e) continue;
      if (!best_ext || e->auc > best_ext->auc) {
        best_ext = e;
        best_self = s;
        point.best_external = c;
      }
    }
    if (!best_ext) {
      point.available = false;
      point.gap = point.ci_low = point.ci_high = kNaN;
      curve.points.push_back(point);
      continue;
    }
    point.self_auc = best_self->auc;
    point.best_auc = best_ext->auc;
    point.gap = point.self_auc - point.best_auc;
    std::vector<double> fold_gaps(best_self->per_fold->size());
    for (std::size_t f = 0; f < fold_gaps.size(); ++f) {
      fold_gaps[f] = (*best_self->per_fold)[f] - (*best_ext->per_fold)[f];
    }
    std::tie(point.ci_low, point.ci_high) = stats::t_interval(fold_gaps);
    curve.points.push_back(point);
  }
  return curve;
}

std::vector<AgreementEntry> agreement_table(const std::vector<RepresentationSet>& datasets) {
  std::vector<AgreementEntry> out;
  for (const auto& reps : datasets) {
    const auto models = reps.labelled_models();
    std::vector<LabelVector> labels;
    for (const auto& m : models) labels.push_back(reps.labels_for(m));
    for (std::size_t a = 0; a < models.size(); ++a) {
      for (std::size_t b = a + 1; b < models.size(); ++b) {
        AgreementEntry e;
        e.dataset = reps.dataset_id();
        e.model_a = models[a];
        e.model_b = models[b];
        e.n = reps.size();
        e.disagreements = disagreement_indices(labels[a].labels, labels[b].labels).size();
        e.agreement = agreement_rate(labels[a].labels, labels[b].labels);
        out.push_back(std::move(e));
      }
    }
  }
  return out;
}

}  // namespace privgap
