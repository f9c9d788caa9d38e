#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "oracles.hpp"
#include "privgap/experiments.hpp"
#include "privgap/synth.hpp"

using namespace privgap;
using testing::error_of;

namespace {

using U8 = std::vector<std::uint8_t>;

SyntheticWorld small_world(std::uint64_t seed, int n_layers = 1) {
  SyntheticWorldSpec spec;
  spec.n_examples = 300;
  spec.d_public = 3;
  spec.d_private = 3;
  spec.d_hidden = 8;
  spec.noise_sd = 0.5;
  spec.n_layers = n_layers;
  spec.seed = seed;
  return generate_world(spec);
}

RunConfig quick_config() {
  RunConfig c;
  c.k = 5;
  c.bootstrap_B = 50;
  c.stride = 1;
  c.jobs = 1;
  return c;
}

CellResult fake_cell(const std::string& source, std::uint32_t layer, double full_auc,
                     std::vector<double> per_fold) {
  CellResult c;
  c.key = {"t", source, "d", ProbeType::Linear, layer};
  c.full.auc = full_auc;
  c.full.ci_low = full_auc - 0.1;
  c.full.ci_high = full_auc + 0.1;
  c.per_fold_full = std::move(per_fold);
  return c;
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("disagreement indices and agreement") {
    const U8 a{1, 0, 1, 1, 0}, b{1, 1, 0, 1, 0};
    CHECK(disagreement_indices(a, b) == std::vector<std::size_t>{1, 2});
    CHECK(agreement_rate(a, b) == doctest::Approx(0.6));
    CHECK(agreement_rate(a, a) == 1.0);
    CHECK(error_of([&] { disagreement_indices(a, U8{1}); }) == ErrorCode::LengthMismatch);
    CHECK(error_of([] { agreement_rate(U8{}, U8{}); }) == ErrorCode::EmptyInput);
  }

  TEST_CASE("scoring with the peer's labels inverts on the disagreement subset") {
    oracle::Lcg g(31);
    for (int t = 0; t < 100; ++t) {
      const int n = 20 + g.below(200);
      U8 yt(static_cast<std::size_t>(n)), ys(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        yt[static_cast<std::size_t>(i)] = g.uniform() < 0.5;
        ys[static_cast<std::size_t>(i)] = g.uniform() < 0.3 ? !yt[static_cast<std::size_t>(i)] : yt[static_cast<std::size_t>(i)];
      }
      const auto idx = disagreement_indices(yt, ys);
      std::size_t pos = 0;
      for (auto i : idx) pos += yt[i];
      if (pos == 0 || pos == idx.size()) continue;
      std::vector<double> peer(ys.begin(), ys.end()), own(yt.begin(), yt.end());
      CHECK(auc_subset(peer, yt, idx) == 0.0);
      CHECK(auc_subset(own, yt, idx) == 1.0);
    }
  }

  TEST_CASE("probed layers") {
    CHECK(probed_layers(32, 5) == std::vector<std::uint32_t>{5, 10, 15, 20, 25, 30, 32});
    CHECK(probed_layers(10, 5) == std::vector<std::uint32_t>{5, 10});
    CHECK(probed_layers(3, 5) == std::vector<std::uint32_t>{3});
    CHECK(probed_layers(4, 1) == std::vector<std::uint32_t>{1, 2, 3, 4});
    CHECK(error_of([] { probed_layers(10, 0); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("select layers") {
    std::vector<std::uint32_t> all;
    for (std::uint32_t l = 0; l <= 32; ++l) all.push_back(l);
    CHECK(select_layers(all, 5) == std::vector<std::uint32_t>{5, 10, 15, 20, 25, 30, 32});
    CHECK(select_layers({0}, 5) == std::vector<std::uint32_t>{0});
    CHECK(select_layers({3, 1, 2, 2}, 0) == std::vector<std::uint32_t>{1, 2, 3});
    CHECK(select_layers({10, 20, 22}, 10) == std::vector<std::uint32_t>{10, 20, 22});
  }

  TEST_CASE("score_subset never trains") {
    oracle::Lcg g(5);
    std::vector<double> s(100);
    U8 y(100);
    std::vector<int> fold(100);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 100; ++i) {
      s[i] = g.uniform();
      y[i] = g.uniform() < s[i];
      fold[i] = static_cast<int>(i % 4);
      if (i % 2 == 0) idx.push_back(i);
    }
    const auto before = training_calls();
    const SubsetScore r = score_subset(s, y, fold, 4, idx, 100, 3);
    CHECK(training_calls() == before);
    REQUIRE(r.available());
    CHECK(r.size == 50);
    CHECK(r.estimate->auc == doctest::Approx(auc_subset(s, y, idx)));
    // Even-indexed rows only land in folds 0 and 2.
    CHECK(std::isnan(r.per_fold[1]));
    CHECK(std::isnan(r.per_fold[3]));
    CHECK_FALSE(std::isnan(r.per_fold[0]));
    CHECK(r.estimate == score_subset(s, y, fold, 4, idx, 100, 3).estimate);
  }

  TEST_CASE("score_subset reports unusable subsets") {
    std::vector<double> s(30, 0.5);
    U8 y(30, 0);
    y[0] = 1;
    std::vector<int> fold(30, 0);
    std::vector<std::size_t> few{0, 1, 2};
    const auto small = score_subset(s, y, fold, 2, few, 10, 0);
    CHECK_FALSE(small.available());
    CHECK(small.unavailable_reason.find("3 examples") != std::string::npos);
    std::vector<std::size_t> all(30);
    for (std::size_t i = 0; i < 30; ++i) all[i] = i;
    const auto lopsided = score_subset(s, y, fold, 2, all, 10, 0);
    CHECK_FALSE(lopsided.available());
    CHECK(lopsided.unavailable_reason.find("1 positives") != std::string::npos);
  }

  TEST_CASE("heatmap cell formatting") {
    HeatmapCell c;
    CHECK(format_heatmap_cell(c) == "n/a");
    c.available = true;
    c.delta = 0.1;
    c.gap_closed = 50.0;
    c.significant = true;
    CHECK(format_heatmap_cell(c) == "+0.100 (50.0%)*");
    c.delta = -0.0234;
    c.gap_closed = -7.26;
    c.significant = false;
    CHECK(format_heatmap_cell(c) == "-0.023 (-7.3%)");
    c.gap_closed.reset();
    CHECK(format_heatmap_cell(c) == "-0.023");
  }

  TEST_CASE("layer aggregation averages pooled and per-fold AUCs") {
    const CellResult a = fake_cell("s", 1, 0.6, {0.5, 0.7});
    const CellResult b = fake_cell("s", 2, 0.8, {0.9, 0.5});
    const auto agg = aggregate_over_layers({&a, &b}, SubsetRef::full(), {1, 2});
    REQUIRE(agg);
    CHECK(agg->auc == doctest::Approx(0.7));
    CHECK(agg->per_layer_auc == std::vector<double>{0.6, 0.8});
    CHECK(agg->per_fold_mean[0] == doctest::Approx(0.7));
    CHECK(agg->per_fold_mean[1] == doctest::Approx(0.6));
    CHECK(agg->ci_low <= agg->auc);
    CHECK(agg->ci_high >= agg->auc);
    CHECK(error_of([&] { aggregate_over_layers({&a}, SubsetRef::full(), {1, 2}); }) == ErrorCode::MissingLayer);
    // No disagreement entry for this peer.
    CHECK_FALSE(aggregate_over_layers({&a, &b}, SubsetRef::disagree("x"), {1, 2}).has_value());
  }

  TEST_CASE("best external breaks ties by name") {
    std::map<std::string, LayerAggregate> aggs;
    aggs["b"].auc = 0.7;
    aggs["a"].auc = 0.7;
    aggs["c"].auc = 0.6;
    CHECK(best_external(aggs, {"c", "b", "a"}, "t").source == "a");
    aggs["c"].auc = 0.71;
    CHECK(best_external(aggs, {"c", "b", "a"}, "t").source == "c");
    CHECK(error_of([&] { best_external(aggs, {}, "t"); }) == ErrorCode::EmptyExternalSet);
    CHECK(error_of([&] { best_external(aggs, {"a", "t"}, "t"); }) == ErrorCode::InvalidArgument);
    CHECK(error_of([&] { best_external(aggs, {"zz"}, "t"); }) == ErrorCode::EmptyExternalSet);
  }

  TEST_CASE("normalized depths") {
    CHECK(normalized_depths({5, 10, 15}) == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(normalized_depths({7}) == std::vector<double>{0.0});
  }

  TEST_CASE("enum names round-trip") {
    for (auto f : {HolmFamily::Report, HolmFamily::Subset, HolmFamily::Dataset, HolmFamily::Target}) {
      CHECK(holm_family_from_string(to_string(f)) == f);
    }
    CHECK(subset_kind_from_string(to_string(SubsetKind::Disagree)) == SubsetKind::Disagree);
    CHECK(error_of([] { holm_family_from_string("global"); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("grid covers every cell and shares folds per target") {
    const SyntheticWorld w = small_world(1, 2);
    const GridResult grid = run_grid({w.reps}, quick_config());
    CHECK(grid.cells.size() == 3 * 3 * 2);
    CHECK(grid.labels.size() == 3);
    for (const auto& c : grid.cells) {
      const CellResult* ref = grid.find({c.key.target, "m0", c.key.dataset, c.key.probe, c.key.layer});
      REQUIRE(ref != nullptr);
      CHECK(c.fold_of == ref->fold_of);
      CHECK(c.disagree.size() == 2);
      CHECK(c.disagree.count(c.key.target) == 0);
    }
    CHECK(grid.layers("m1", "m2", "synth", ProbeType::Linear) == std::vector<std::uint32_t>{1, 2});
    CHECK(grid.sources("m1", "synth", ProbeType::Linear) == std::vector<std::string>{"m0", "m1", "m2"});
  }

  TEST_CASE("grid result does not depend on worker count") {
    const SyntheticWorld w = small_world(2);
    RunConfig one = quick_config();
    RunConfig many = one;
    many.jobs = 3;
    const GridResult a = run_grid({w.reps}, one);
    const GridResult b = run_grid({w.reps}, many);
    CHECK(a.cells == b.cells);
    CHECK(build_heatmaps(a, {SubsetKind::Full, SubsetKind::Disagree}, one) ==
          build_heatmaps(b, {SubsetKind::Full, SubsetKind::Disagree}, one));
  }

  TEST_CASE("grid errors") {
    const SyntheticWorld w = small_world(3);
    RunConfig c = quick_config();
    c.targets = {"nobody"};
    CHECK(error_of([&] { run_grid({w.reps}, c); }) == ErrorCode::MissingLabel);
    c = quick_config();
    c.sources = {"ghost"};
    CHECK(error_of([&] { run_grid({w.reps}, c); }) == ErrorCode::MissingLayer);
    c = quick_config();
    c.datasets = {"elsewhere"};
    CHECK(error_of([&] { run_grid({w.reps}, c); }) == ErrorCode::EmptyReport);
    CHECK(error_of([&] { run_grid({w.reps, w.reps}, quick_config()); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("Holm families group cells as configured") {
    const SyntheticWorld w = small_world(4);
    const GridResult grid = run_grid({w.reps}, quick_config());
    for (auto family : {HolmFamily::Report, HolmFamily::Subset, HolmFamily::Target}) {
      RunConfig c = quick_config();
      c.holm_family = family;
      c.alpha = 0.2;
      const auto reports = build_heatmaps(grid, {SubsetKind::Full, SubsetKind::Disagree}, c);
      std::map<std::string, std::vector<const HeatmapCell*>> groups;
      for (const auto& r : reports) {
        CHECK(r.family == family);
        for (const auto& cell : r.cells) {
          if (!cell.p_value) {
            CHECK_FALSE(cell.significant);
            continue;
          }
          std::string key;
          if (family == HolmFamily::Subset) key = to_string(r.subset);
          if (family == HolmFamily::Target) key = cell.target;
          groups[key].push_back(&cell);
        }
      }
      for (const auto& [_, cells] : groups) {
        std::vector<double> p;
        for (const auto* cell : cells) p.push_back(*cell->p_value);
        const auto expect = oracle::holm_reject(p, 0.2);
        for (std::size_t i = 0; i < cells.size(); ++i) CHECK(cells[i]->significant == expect[i]);
      }
    }
  }

  TEST_CASE("heatmap cells are self minus best external") {
    const SyntheticWorld w = small_world(5, 2);
    RunConfig c = quick_config();
    const GridResult grid = run_grid({w.reps}, c);
    const HeatmapReport full = build_heatmap(grid, SubsetKind::Full, c);
    REQUIRE(full.cells.size() == 3);
    for (const auto& cell : full.cells) {
      REQUIRE(cell.available);
      CHECK(cell.best_external != cell.target);
      CHECK(cell.delta == doctest::Approx(cell.self_auc - cell.best_auc));
      double best = 0.0;
      for (const std::string s : {"m0", "m1", "m2"}) {
        if (s == cell.target) continue;
        const auto agg = aggregate_over_layers(grid.select(cell.target, s, "synth", ProbeType::Linear),
                                               SubsetRef::full(), {1, 2});
        best = std::max(best, agg->auc);
      }
      CHECK(cell.best_auc == best);
      CHECK(*cell.gap_closed == doctest::Approx(gap_closed_pct(cell.self_auc, cell.best_auc)));
    }

    c.heatmap_candidates = {"m2"};
    const HeatmapReport restricted = build_heatmap(grid, SubsetKind::Full, c);
    for (const auto& cell : restricted.cells) {
      if (cell.target == "m2") {
        CHECK_FALSE(cell.available);
      } else {
        CHECK(cell.best_external == "m2");
      }
    }
  }

  TEST_CASE("per-layer curve") {
    const SyntheticWorld w = small_world(6, 3);
    const GridResult grid = run_grid({w.reps}, quick_config());
    const LayerCurve curve = per_layer_gap_curve(grid, "m0", "synth", ProbeType::Linear, SubsetKind::Full);
    REQUIRE(curve.points.size() == 3);
    CHECK(curve.points[0].depth == 0.0);
    CHECK(curve.points[2].depth == 1.0);
    for (const auto& p : curve.points) {
      CHECK(p.gap == doctest::Approx(p.self_auc - p.best_auc));
      CHECK(p.best_external != "m0");
    }
  }

  TEST_CASE("agreement table") {
    const SyntheticWorld w = small_world(7);
    const auto table = agreement_table({w.reps});
    REQUIRE(table.size() == 3);
    for (const auto& e : table) {
      CHECK(e.model_a < e.model_b);
      CHECK(e.n == 300);
      CHECK(e.agreement == doctest::Approx(1.0 - static_cast<double>(e.disagreements) / 300.0));
    }
  }
}
