#include "privgap/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "privgap/error.hpp"
#include "privgap/log.hpp"
#include "privgap/report.hpp"
#include "privgap/repstore.hpp"
#include "privgap/synth.hpp"

namespace privgap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags a subcommand can use to build a RunConfig. Unset options leave the
// config file (or the defaults) alone.
struct RunFlags {
  std::string config_path;
  std::vector<std::string> manifests;
  std::vector<std::string> targets;
  std::vector<std::string> sources;
  std::vector<std::string> datasets;
  std::vector<std::string> probes;
  std::optional<int> k;
  std::vector<double> C_grid;
  std::optional<std::uint32_t> stride;
  std::optional<double> alpha;
  std::optional<int> bootstrap_B;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string holm_family;
  std::optional<int> jobs;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON run config; flags override its values")
        ->check(CLI::ExistingFile);
    app->add_option("-m,--manifest", manifests, "bundle manifest (repeatable)");
    app->add_option("--target", targets, "target model (repeatable)");
    app->add_option("--source", sources, "source model (repeatable)");
    app->add_option("--dataset", datasets, "dataset id (repeatable)");
    app->add_option("--probe", probes, "probe type")->check(CLI::IsMember({"linear", "mlp"}));
    app->add_option("-k,--folds", k, "outer folds");
    app->add_option("--C", C_grid, "regularization grid (repeatable)");
    app->add_option("--stride", stride, "layer stride");
    app->add_option("--alpha", alpha, "family-wise error rate");
    app->add_option("--bootstrap", bootstrap_B, "bootstrap resamples");
    app->add_option("--seed", seed, "master seed");
    app->add_option("-o,--out", output_dir, "output directory");
    app->add_option("--holm-family", holm_family, "Holm correction family")
        ->check(CLI::IsMember({"report", "subset", "dataset", "target"}));
    app->add_option("-j,--jobs", jobs, "worker threads (default: all cores)");
  }

  bool wants_run() const { return !config_path.empty() || !manifests.empty(); }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + config_path);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, config_path + ": " + e.what());
      }
      c = config_from_json(j);
      // Relative paths in a config file are relative to that file.
      const fs::path base = fs::path(config_path).parent_path();
      for (auto& m : c.manifests) {
        if (fs::path(m).is_relative()) m = (base / m).lexically_normal().string();
      }
      if (j.contains("output_dir") && fs::path(c.output_dir).is_relative()) {
        c.output_dir = (base / c.output_dir).lexically_normal().string();
      }
    }
    if (!manifests.empty()) c.manifests = manifests;
    if (!targets.empty()) c.targets = targets;
    if (!sources.empty()) c.sources = sources;
    if (!datasets.empty()) c.datasets = datasets;
    if (!probes.empty()) {
      c.probe_types.clear();
      for (const auto& p : probes) c.probe_types.push_back(probe_type_from_string(p));
    }
    if (k) c.k = *k;
    if (!C_grid.empty()) c.C_grid = C_grid;
    if (stride) c.stride = *stride;
    if (alpha) c.alpha = *alpha;
    if (bootstrap_B) c.bootstrap_B = *bootstrap_B;
    if (seed) c.seed = *seed;
    if (!output_dir.empty()) c.output_dir = output_dir;
    if (!holm_family.empty()) c.holm_family = holm_family_from_string(holm_family);
    if (jobs) c.jobs = *jobs;
    if (c.manifests.empty()) throw Error(ErrorCode::InvalidArgument, "no manifests given");
    if (c.k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
    if (c.C_grid.empty()) throw Error(ErrorCode::InvalidArgument, "C grid must be non-empty");
    return c;
  }
};

std::vector<RepresentationSet> load_all(const std::vector<std::string>& manifests) {
  std::vector<RepresentationSet> out;
  for (const auto& m : manifests) out.push_back(load_bundle(m));
  return out;
}

void check_targets(const RunConfig& c, const std::vector<RepresentationSet>& sets) {
  std::set<std::string> models;
  for (const auto& s : sets)
    for (const auto& m : s.models()) models.insert(m);
  for (const auto& t : c.targets) {
    if (models.count(t) == 0) throw Error(ErrorCode::InvalidArgument, "target " + t + " is not in any manifest");
  }
}

Report run_from_flags(const RunFlags& flags, RunConfig* resolved = nullptr) {
  const RunConfig c = flags.resolve();
  const auto sets = load_all(c.manifests);
  check_targets(c, sets);
  log::info("running grid over " + std::to_string(sets.size()) + " dataset(s)");
  if (resolved) *resolved = c;
  return run_experiment(sets, c);
}

void write_outputs(const Report& report, const fs::path& dir, std::ostream& out) {
  emit_report(report, ReportFormat::Json, dir / "report.json");
  emit_report(report, ReportFormat::Csv, dir / "cells.csv");
  emit_report(report, ReportFormat::Svg, dir / "heatmap.svg");
  emit_report(report, ReportFormat::Svg, dir / "layers.svg");
  out << "wrote " << (dir / "report.json").string() << ", cells.csv, heatmap.svg, layers.svg\n";
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_heatmaps(const Report& report, std::ostream& out, const std::string& only_subset) {
  for (const auto& h : report.heatmaps) {
    if (!only_subset.empty() && to_string(h.subset) != only_subset) continue;
    out << "[" << to_string(h.subset) << "] delta (gap closed), * = significant after Holm ("
        << to_string(h.family) << ", alpha " << h.alpha << ")\n";
    for (const auto& c : h.cells) {
      out << "  " << c.target << " " << c.dataset << " " << to_string(c.probe) << ": "
          << format_heatmap_cell(c);
      if (c.available) {
        out << "  self " << fixed(c.self_auc, 3) << " vs " << c.best_external << " "
            << fixed(c.best_auc, 3);
      } else {
        out << "  (" << c.unavailable_reason << ")";
      }
      out << "\n";
    }
  }
}

void print_curves(const Report& report, std::ostream& out) {
  for (const auto& c : report.curves) {
    out << c.target << " " << c.dataset << " " << to_string(c.probe) << " [" << to_string(c.subset)
        << "]\n";
    for (const auto& p : c.points) {
      out << "  layer " << p.layer << " depth " << fixed(p.depth, 2) << "  gap " << fixed(p.gap, 4)
          << " [" << fixed(p.ci_low, 4) << ", " << fixed(p.ci_high, 4) << "]";
      if (p.available) out << "  vs " << p.best_external;
      out << "\n";
    }
  }
}

void print_agreement(const std::vector<AgreementEntry>& table, std::ostream& out) {
  out << "dataset\tmodel_a\tmodel_b\tagreement\tdisagreements\tn\n";
  for (const auto& e : table) {
    out << e.dataset << '\t' << e.model_a << '\t' << e.model_b << '\t' << fixed(e.agreement, 4) << '\t'
        << e.disagreements << '\t' << e.n << '\n';
  }
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidArgument:
      return kExitUsage;
    default:
      return kExitFailure;
  }
}

}  // namespace

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"privgap: self vs. external probing of hidden representations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "privgap 0.1.0");

  // validate
  std::vector<std::string> validate_manifests;
  auto* validate = app.add_subcommand("validate", "check bundles for consistency");
  validate->add_option("manifests", validate_manifests, "manifest files")->required();

  // probe
  RunFlags probe_flags;
  auto* probe = app.add_subcommand("probe", "run the probing grid and write the report");
  probe_flags.attach(probe);

  // heatmap
  RunFlags heat_flags;
  std::string heat_report, heat_subset, heat_svg;
  auto* heatmap = app.add_subcommand("heatmap", "premium-gap heatmap from a report or a fresh run");
  heat_flags.attach(heatmap);
  heatmap->add_option("-r,--report", heat_report, "stored report.json")->check(CLI::ExistingFile);
  heatmap->add_option("--subset", heat_subset, "full or disagree")
      ->check(CLI::IsMember({"full", "disagree"}));
  heatmap->add_option("--svg", heat_svg, "write the heatmap SVG here");

  // layers
  RunFlags layer_flags;
  std::string layer_report, layer_svg;
  auto* layers = app.add_subcommand("layers", "per-layer premium-gap curves");
  layer_flags.attach(layers);
  layers->add_option("-r,--report", layer_report, "stored report.json")->check(CLI::ExistingFile);
  layers->add_option("--svg", layer_svg, "write the curves SVG here");

  // agreement
  std::vector<std::string> agree_manifests;
  auto* agreement = app.add_subcommand("agreement", "pairwise correctness agreement table");
  agreement->add_option("manifests", agree_manifests, "manifest files")->required();

  // synth
  std::string synth_preset_name = "masked-priv", synth_spec_path, synth_out = "synth_world";
  std::optional<std::uint64_t> synth_seed;
  double synth_agreement = 0.8;
  bool synth_no_calibrate = false, synth_validate = false;
  int synth_jobs = 0;
  auto* synth = app.add_subcommand("synth", "generate a synthetic world or validate the methodology");
  synth->add_option("--preset", synth_preset_name, "null, masked-priv or layered")
      ->check(CLI::IsMember(synth_preset_names()));
  synth->add_option("--spec", synth_spec_path, "world spec JSON instead of a preset")
      ->check(CLI::ExistingFile);
  synth->add_option("--seed", synth_seed, "world seed");
  synth->add_option("--agreement", synth_agreement, "target mean pairwise agreement");
  synth->add_flag("--no-calibrate", synth_no_calibrate, "use the spec as given");
  synth->add_flag("--validate", synth_validate,
                  "run the null and masked-priv worlds through the pipeline and check the signature");
  synth->add_option("-o,--out", synth_out, "output directory");
  synth->add_option("-j,--jobs", synth_jobs, "worker threads for --validate");

  // report
  std::string rerender_report, rerender_out;
  std::vector<std::string> rerender_formats;
  auto* report = app.add_subcommand("report", "re-render a stored report");
  report->add_option("report", rerender_report, "report.json")->required()->check(CLI::ExistingFile);
  report->add_option("-f,--format", rerender_formats, "json, csv or svg (repeatable; default csv and svg)")
      ->check(CLI::IsMember({"json", "csv", "svg"}));
  report->add_option("-o,--out", rerender_out, "output directory (default: next to the report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*validate) {
      bool ok = true;
      for (const auto& m : validate_manifests) {
        try {
          const auto reps = load_bundle(m);
          for (const auto& model : reps.labelled_models()) (void)reps.labels_for(model);
          for (const auto& model : reps.models()) {
            for (auto layer : reps.layers_of(model)) {
              for (float v : reps.layer(model, layer).data) {
                if (!std::isfinite(v)) {
                  throw Error(ErrorCode::NonFinite, model + " layer " + std::to_string(layer) +
                                                        " holds a non-finite value");
                }
              }
            }
          }
          out << m << ": ok (" << reps.dataset_id() << ", " << reps.size() << " questions, "
              << reps.models().size() << " models, " << reps.labelled_models().size() << " labelled)\n";
        } catch (const Error& e) {
          ok = false;
          err << m << ": " << to_string(e.code()) << ": " << e.what() << "\n";
        }
      }
      return ok ? kExitOk : kExitFailure;
    }

    if (*probe) {
      RunConfig c;
      const Report rep = run_from_flags(probe_flags, &c);
      write_outputs(rep, c.output_dir, out);
      return kExitOk;
    }

    if (*heatmap) {
      Report rep;
      if (!heat_report.empty()) {
        rep = read_report(heat_report);
      } else if (heat_flags.wants_run()) {
        rep = run_from_flags(heat_flags);
      } else {
        throw Error(ErrorCode::InvalidArgument, "heatmap needs --report or a config/manifest");
      }
      print_heatmaps(rep, out, heat_subset);
      if (!heat_svg.empty()) emit_report(rep, ReportFormat::Svg, heat_svg);
      return kExitOk;
    }

    if (*layers) {
      Report rep;
      if (!layer_report.empty()) {
        rep = read_report(layer_report);
      } else if (layer_flags.wants_run()) {
        rep = run_from_flags(layer_flags);
      } else {
        throw Error(ErrorCode::InvalidArgument, "layers needs --report or a config/manifest");
      }
      print_curves(rep, out);
      if (!layer_svg.empty()) {
        const fs::path p = layer_svg;
        std::error_code ec;
        if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
        std::ofstream f(p);
        if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + layer_svg);
        f << layers_svg(rep);
      }
      return kExitOk;
    }

    if (*agreement) {
      print_agreement(agreement_table(load_all(agree_manifests)), out);
      return kExitOk;
    }

    if (*synth) {
      const std::uint64_t seed = synth_seed.value_or(0);
      if (synth_validate) {
        const auto no_priv = calibrate_agreement(synth_preset("null", seed), synth_agreement);
        const auto with_priv = calibrate_agreement(synth_preset("masked-priv", seed), synth_agreement);
        RunConfig c;
        c.seed = seed;
        c.jobs = synth_jobs;
        const RecoveryReport r = validate_methodology(no_priv, with_priv, c);
        out << recovery_to_json(r).dump(1) << "\n";
        return r.passed() ? kExitOk : kExitFailure;
      }
      SyntheticWorldSpec spec;
      if (!synth_spec_path.empty()) {
        std::ifstream in(synth_spec_path);
        try {
          spec = spec_from_json(json::parse(in));
        } catch (const json::exception& e) {
          throw Error(ErrorCode::ParseError, synth_spec_path + ": " + e.what());
        }
        if (synth_seed) spec.seed = *synth_seed;
      } else {
        spec = synth_preset(synth_preset_name, seed);
      }
      if (!synth_no_calibrate) spec = calibrate_agreement(spec, synth_agreement);
      const SyntheticWorld world = generate_world(spec);
      const fs::path dir = synth_out;
      const fs::path manifest = write_world(world, dir);

      RunConfig c;
      c.manifests = {manifest.filename().string()};
      c.targets = {spec.model_id(0)};
      c.stride = spec.n_layers > 1 ? 1 : c.stride;
      c.seed = seed;
      c.output_dir = "run";
      std::ofstream cfg(dir / "config.json", std::ios::trunc);
      if (!cfg) throw Error(ErrorCode::IoFailure, "cannot write " + (dir / "config.json").string());
      cfg << config_to_json(c).dump(1) << "\n";
      out << "wrote " << manifest.string() << " (agreement " << fixed(mean_pairwise_agreement(world.labels), 4)
          << ", w_private " << fixed(spec.w_private, 4) << ", noise_sd " << fixed(spec.noise_sd, 4)
          << ") and " << (dir / "config.json").string() << "\n";
      return kExitOk;
    }

    if (*report) {
      const Report rep = read_report(rerender_report);
      const fs::path dir = rerender_out.empty() ? fs::path(rerender_report).parent_path() : fs::path(rerender_out);
      if (rerender_formats.empty()) rerender_formats = {"csv", "svg"};
      for (const auto& f : rerender_formats) {
        switch (report_format_from_string(f)) {
          case ReportFormat::Json:
            emit_report(rep, ReportFormat::Json, dir / "report.json");
            break;
          case ReportFormat::Csv:
            emit_report(rep, ReportFormat::Csv, dir / "cells.csv");
            break;
          case ReportFormat::Svg:
            emit_report(rep, ReportFormat::Svg, dir / "heatmap.svg");
            emit_report(rep, ReportFormat::Svg, dir / "layers.svg");
            break;
        }
      }
      out << "re-rendered " << rerender_report << " into " << (dir.empty() ? "." : dir.string()) << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "privgap: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "privgap: IoFailure: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run_command(int argc, const char* const* argv) { return run_command(argc, argv, std::cout, std::cerr); }

}  // namespace privgap
