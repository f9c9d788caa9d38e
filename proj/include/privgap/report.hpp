#pragma once

// Versioned run report: resolved config, every cell, heatmaps, layer curves
// and the agreement table, with JSON / CSV / SVG emitters.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "privgap/experiments.hpp"

namespace privgap {

inline constexpr const char* kReportSchema = "privgap.report/v1";

inline const std::vector<std::string> kCsvColumns = {
    "target", "source", "dataset", "probe", "subset", "layer", "auc",
    "ci_low", "ci_high", "delta", "gap_closed", "p", "significant"};

struct Report {
  RunConfig config;
  std::vector<CellResult> cells;
  std::vector<HeatmapReport> heatmaps;
  std::vector<LayerCurve> curves;
  std::vector<AgreementEntry> agreement;
  std::map<std::string, LabelVector> labels;  // "<dataset>/<model>"

  bool operator==(const Report&) const = default;
};

enum class ReportFormat { Json, Csv, Svg };
ReportFormat report_format_from_string(const std::string& name);

/// Grid, heatmaps for both subsets, the configured layer curves and the
/// agreement table.
Report run_experiment(const std::vector<RepresentationSet>& datasets, const RunConfig& config);
Report assemble_report(const GridResult& grid, const std::vector<RepresentationSet>& datasets,
                       const RunConfig& config);

nlohmann::json config_to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& j);

nlohmann::json report_to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);
Report read_report(const std::filesystem::path& path);

std::string report_to_csv(const Report& report);
std::string heatmap_svg(const Report& report);
std::string layers_svg(const Report& report);

/// Throws EmptyReport for a report without cells, IoFailure on write errors.
void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path);

/// Rebuilds the grid view for re-rendering figures from a stored report.
GridResult grid_from_report(const Report& report);

}  // namespace privgap
