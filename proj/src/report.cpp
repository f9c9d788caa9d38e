#include "privgap/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "privgap/error.hpp"

namespace privgap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double get_num(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

std::vector<double> get_nums(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(get_num(x));
  return out;
}

json opt_num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

std::optional<double> get_opt_num(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json auc_json(const AucEstimate& e) {
  return {{"auc", num(e.auc)},       {"ci_low", num(e.ci_low)}, {"ci_high", num(e.ci_high)},
          {"n_pos", e.n_pos},        {"n_neg", e.n_neg},        {"bootstrap_B", e.bootstrap_B},
          {"seed", e.seed}};
}

AucEstimate auc_from(const json& j) {
  AucEstimate e;
  e.auc = get_num(j.at("auc"));
  e.ci_low = get_num(j.at("ci_low"));
  e.ci_high = get_num(j.at("ci_high"));
  e.n_pos = j.at("n_pos").get<std::size_t>();
  e.n_neg = j.at("n_neg").get<std::size_t>();
  e.bootstrap_B = j.at("bootstrap_B").get<int>();
  e.seed = j.at("seed").get<std::uint64_t>();
  return e;
}

json cell_json(const CellResult& c) {
  json disagree = json::object();
  for (const auto& [peer, s] : c.disagree) {
    disagree[peer] = {{"available", s.available()},
                      {"size", s.size},
                      {"reason", s.unavailable_reason},
                      {"estimate", s.estimate ? auc_json(*s.estimate) : json(nullptr)},
                      {"per_fold", nums(s.per_fold)}};
  }
  json meta = json::array();
  for (const auto& m : c.probe_metadata) {
    meta.push_back({{"fold", m.fold}, {"C", m.C}, {"converged", m.converged},
                    {"iterations", m.iterations}, {"seed", m.seed}});
  }
  return {{"key",
           {{"target", c.key.target},
            {"source", c.key.source},
            {"dataset", c.key.dataset},
            {"probe", to_string(c.key.probe)},
            {"layer", c.key.layer}}},
          {"full", auc_json(c.full)},
          {"per_fold_full", nums(c.per_fold_full)},
          {"disagree", disagree},
          {"scores", nums(c.scores)},
          {"fold_of", c.fold_of},
          {"probe_metadata", meta}};
}

CellResult cell_from(const json& j) {
  CellResult c;
  const auto& k = j.at("key");
  c.key = {k.at("target").get<std::string>(), k.at("source").get<std::string>(),
           k.at("dataset").get<std::string>(), probe_type_from_string(k.at("probe").get<std::string>()),
           k.at("layer").get<std::uint32_t>()};
  c.full = auc_from(j.at("full"));
  c.per_fold_full = get_nums(j.at("per_fold_full"));
  for (const auto& [peer, s] : j.at("disagree").items()) {
    SubsetScore score;
    score.size = s.at("size").get<std::size_t>();
    score.unavailable_reason = s.at("reason").get<std::string>();
    if (!s.at("estimate").is_null()) score.estimate = auc_from(s.at("estimate"));
    score.per_fold = get_nums(s.at("per_fold"));
    c.disagree.emplace(peer, std::move(score));
  }
  c.scores = get_nums(j.at("scores"));
  c.fold_of = j.at("fold_of").get<std::vector<int>>();
  for (const auto& m : j.at("probe_metadata")) {
    c.probe_metadata.push_back({m.at("fold").get<int>(), m.at("C").get<double>(),
                                m.at("converged").get<bool>(), m.at("iterations").get<int>(),
                                m.at("seed").get<std::uint64_t>()});
  }
  return c;
}

json heatmap_json(const HeatmapReport& h) {
  json cells = json::array();
  for (const auto& c : h.cells) {
    cells.push_back({{"target", c.target},
                     {"dataset", c.dataset},
                     {"probe", to_string(c.probe)},
                     {"available", c.available},
                     {"reason", c.unavailable_reason},
                     {"best_external", c.best_external},
                     {"self_auc", num(c.self_auc)},
                     {"self_ci", {num(c.self_ci_low), num(c.self_ci_high)}},
                     {"best_auc", num(c.best_auc)},
                     {"best_ci", {num(c.best_ci_low), num(c.best_ci_high)}},
                     {"delta", num(c.delta)},
                     {"gap_closed", opt_num(c.gap_closed)},
                     {"p", opt_num(c.p_value)},
                     {"significant", c.significant},
                     {"per_layer_gap_mean", num(c.per_layer_gap_mean)},
                     {"label", format_heatmap_cell(c)}});
  }
  return {{"subset", to_string(h.subset)},
          {"alpha", h.alpha},
          {"holm_family", to_string(h.family)},
          {"cells", cells}};
}

HeatmapReport heatmap_from(const json& j) {
  HeatmapReport h;
  h.subset = subset_kind_from_string(j.at("subset").get<std::string>());
  h.alpha = j.at("alpha").get<double>();
  h.family = holm_family_from_string(j.at("holm_family").get<std::string>());
  for (const auto& c : j.at("cells")) {
    HeatmapCell cell;
    cell.target = c.at("target").get<std::string>();
    cell.dataset = c.at("dataset").get<std::string>();
    cell.probe = probe_type_from_string(c.at("probe").get<std::string>());
    cell.available = c.at("available").get<bool>();
    cell.unavailable_reason = c.at("reason").get<std::string>();
    cell.best_external = c.at("best_external").get<std::string>();
    cell.self_auc = get_num(c.at("self_auc"));
    cell.self_ci_low = get_num(c.at("self_ci")[0]);
    cell.self_ci_high = get_num(c.at("self_ci")[1]);
    cell.best_auc = get_num(c.at("best_auc"));
    cell.best_ci_low = get_num(c.at("best_ci")[0]);
    cell.best_ci_high = get_num(c.at("best_ci")[1]);
    cell.delta = get_num(c.at("delta"));
    cell.gap_closed = get_opt_num(c.at("gap_closed"));
    cell.p_value = get_opt_num(c.at("p"));
    cell.significant = c.at("significant").get<bool>();
    cell.per_layer_gap_mean = get_num(c.at("per_layer_gap_mean"));
    h.cells.push_back(std::move(cell));
  }
  return h;
}

json curve_json(const LayerCurve& c) {
  json points = json::array();
  for (const auto& p : c.points) {
    points.push_back({{"layer", p.layer},
                      {"depth", num(p.depth)},
                      {"gap", num(p.gap)},
                      {"ci_low", num(p.ci_low)},
                      {"ci_high", num(p.ci_high)},
                      {"best_external", p.best_external},
                      {"self_auc", num(p.self_auc)},
                      {"best_auc", num(p.best_auc)},
                      {"available", p.available}});
  }
  return {{"target", c.target},
          {"dataset", c.dataset},
          {"probe", to_string(c.probe)},
          {"subset", to_string(c.subset)},
          {"points", points}};
}

LayerCurve curve_from(const json& j) {
  LayerCurve c;
  c.target = j.at("target").get<std::string>();
  c.dataset = j.at("dataset").get<std::string>();
  c.probe = probe_type_from_string(j.at("probe").get<std::string>());
  c.subset = subset_kind_from_string(j.at("subset").get<std::string>());
  for (const auto& p : j.at("points")) {
    LayerPoint pt;
    pt.layer = p.at("layer").get<std::uint32_t>();
    pt.depth = get_num(p.at("depth"));
    pt.gap = get_num(p.at("gap"));
    pt.ci_low = get_num(p.at("ci_low"));
    pt.ci_high = get_num(p.at("ci_high"));
    pt.best_external = p.at("best_external").get<std::string>();
    pt.self_auc = get_num(p.at("self_auc"));
    pt.best_auc = get_num(p.at("best_auc"));
    pt.available = p.at("available").get<bool>();
    c.points.push_back(std::move(pt));
  }
  return c;
}

std::string csv_num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                    "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};

std::string fmt(double v, int precision = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------

ReportFormat report_format_from_string(const std::string& name) {
  if (name == "json") return ReportFormat::Json;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "svg") return ReportFormat::Svg;
  throw Error(ErrorCode::InvalidArgument, "unknown report format '" + name + "'");
}

json config_to_json(const RunConfig& c) {
  json probes = json::array();
  for (auto p : c.probe_types) probes.push_back(to_string(p));
  json curve_subsets = json::array();
  for (auto s : c.curve_subsets) curve_subsets.push_back(to_string(s));
  return {{"manifests", c.manifests},
          {"targets", c.targets},
          {"sources", c.sources},
          {"datasets", c.datasets},
          {"probe_types", probes},
          {"k", c.k},
          {"C_grid", c.C_grid},
          {"stride", c.stride},
          {"alpha", c.alpha},
          {"bootstrap_B", c.bootstrap_B},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"holm_family", to_string(c.holm_family)},
          {"heatmap_candidates", c.heatmap_candidates},
          {"curve_candidates", c.curve_candidates},
          {"curve_subsets", curve_subsets}};
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "config must be a JSON object");
    static const std::set<std::string> known = {
        "manifests", "targets", "sources", "datasets", "probe_types", "k",
        "C_grid", "stride", "alpha", "bootstrap_B", "seed", "output_dir",
        "holm_family", "heatmap_candidates", "curve_candidates", "curve_subsets", "jobs"};
    for (const auto& [key, _] : j.items()) {
      if (known.count(key) == 0) throw Error(ErrorCode::ParseError, "unknown config key '" + key + "'");
    }
    c.manifests = j.value("manifests", c.manifests);
    c.targets = j.value("targets", c.targets);
    c.sources = j.value("sources", c.sources);
    c.datasets = j.value("datasets", c.datasets);
    if (j.contains("probe_types")) {
      c.probe_types.clear();
      for (const auto& p : j["probe_types"]) c.probe_types.push_back(probe_type_from_string(p.get<std::string>()));
    }
    c.k = j.value("k", c.k);
    c.C_grid = j.value("C_grid", c.C_grid);
    c.stride = j.value("stride", c.stride);
    c.alpha = j.value("alpha", c.alpha);
    c.bootstrap_B = j.value("bootstrap_B", c.bootstrap_B);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("holm_family")) c.holm_family = holm_family_from_string(j["holm_family"].get<std::string>());
    c.heatmap_candidates = j.value("heatmap_candidates", c.heatmap_candidates);
    c.curve_candidates = j.value("curve_candidates", c.curve_candidates);
    if (j.contains("curve_subsets")) {
      c.curve_subsets.clear();
      for (const auto& s : j["curve_subsets"]) c.curve_subsets.push_back(subset_kind_from_string(s.get<std::string>()));
    }
    c.jobs = j.value("jobs", c.jobs);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
  if (c.k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  if (c.C_grid.empty()) throw Error(ErrorCode::InvalidArgument, "C_grid must be non-empty");
  if (c.probe_types.empty()) throw Error(ErrorCode::InvalidArgument, "probe_types must be non-empty");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0,1)");
  return c;
}

// ---------------------------------------------------------------------------

Report assemble_report(const GridResult& grid, const std::vector<RepresentationSet>& datasets,
                       const RunConfig& config) {
  Report rep;
  rep.config = config;
  rep.config.jobs = 0;
  rep.cells = grid.cells;
  rep.labels = grid.labels;
  rep.heatmaps = build_heatmaps(grid, {SubsetKind::Full, SubsetKind::Disagree}, config);
  std::set<std::tuple<std::string, std::string, ProbeType>> slices;
  for (const auto& c : grid.cells) {
    if (c.key.is_self()) slices.emplace(c.key.target, c.key.dataset, c.key.probe);
  }
  for (auto subset : config.curve_subsets) {
    for (const auto& [t, d, p] : slices) {
      if (grid.sources(t, d, p).size() < 2) continue;
      rep.curves.push_back(per_layer_gap_curve(grid, t, d, p, subset, config.curve_candidates));
    }
  }
  rep.agreement = agreement_table(datasets);
  return rep;
}

Report run_experiment(const std::vector<RepresentationSet>& datasets, const RunConfig& config) {
  return assemble_report(run_grid(datasets, config), datasets, config);
}

GridResult grid_from_report(const Report& report) {
  GridResult grid;
  grid.cells = report.cells;
  std::sort(grid.cells.begin(), grid.cells.end(),
            [](const CellResult& a, const CellResult& b) { return a.key < b.key; });
  grid.labels = report.labels;
  return grid;
}

json report_to_json(const Report& r) {
  json j;
  j["schema"] = kReportSchema;
  j["config"] = config_to_json(r.config);
  j["metadata"] = {
      {"holm_family", to_string(r.config.holm_family)},
      {"heatmap_convention",
       "layer-averaged pooled AUC; best external chosen on the reported subset"},
      {"curve_convention", "per-layer pooled AUC; best external chosen per layer"},
      {"interval_convention",
       "cell AUC: percentile bootstrap over pooled OOF scores; layer means and gaps: "
       "t interval over per-fold values"},
      {"fold_seed_policy", "one fold plan per (dataset, target) shared by all sources and layers"}};
  json labels = json::object();
  for (const auto& [key, y] : r.labels) labels[key] = y.labels;
  j["labels"] = labels;
  j["cells"] = json::array();
  for (const auto& c : r.cells) j["cells"].push_back(cell_json(c));
  j["heatmaps"] = json::array();
  for (const auto& h : r.heatmaps) j["heatmaps"].push_back(heatmap_json(h));
  j["curves"] = json::array();
  for (const auto& c : r.curves) j["curves"].push_back(curve_json(c));
  j["agreement"] = json::array();
  for (const auto& a : r.agreement) {
    j["agreement"].push_back({{"dataset", a.dataset}, {"model_a", a.model_a}, {"model_b", a.model_b},
                              {"agreement", a.agreement}, {"disagreements", a.disagreements},
                              {"n", a.n}});
  }
  return j;
}

Report report_from_json(const json& j) {
  try {
    if (j.value("schema", std::string()) != kReportSchema) {
      throw Error(ErrorCode::ParseError, "not a " + std::string(kReportSchema) + " document");
    }
    Report r;
    r.config = config_from_json(j.at("config"));
    for (const auto& [key, y] : j.at("labels").items()) {
      const auto slash = key.find('/');
      r.labels[key] = {key.substr(0, slash), slash == std::string::npos ? "" : key.substr(slash + 1),
                       y.get<std::vector<std::uint8_t>>()};
    }
    for (const auto& c : j.at("cells")) r.cells.push_back(cell_from(c));
    for (const auto& h : j.at("heatmaps")) r.heatmaps.push_back(heatmap_from(h));
    for (const auto& c : j.at("curves")) r.curves.push_back(curve_from(c));
    for (const auto& a : j.at("agreement")) {
      r.agreement.push_back({a.at("dataset").get<std::string>(), a.at("model_a").get<std::string>(),
                             a.at("model_b").get<std::string>(), a.at("agreement").get<double>(),
                             a.at("disagreements").get<std::size_t>(), a.at("n").get<std::size_t>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("report: ") + e.what());
  }
}

Report read_report(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

// ---------------------------------------------------------------------------

std::string report_to_csv(const Report& r) {
  std::ostringstream os;
  for (std::size_t i = 0; i < kCsvColumns.size(); ++i) os << (i ? "," : "") << kCsvColumns[i];
  os << '\n';
  auto row = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << csv_field(fields[i]);
    os << '\n';
  };
  for (const auto& c : r.cells) {
    const std::string layer = std::to_string(c.key.layer);
    row({c.key.target, c.key.source, c.key.dataset, to_string(c.key.probe), "full", layer,
         csv_num(c.full.auc), csv_num(c.full.ci_low), csv_num(c.full.ci_high), "", "", "", ""});
    for (const auto& [peer, s] : c.disagree) {
      if (!s.available()) continue;
      row({c.key.target, c.key.source, c.key.dataset, to_string(c.key.probe), "disagree:" + peer,
           layer, csv_num(s.estimate->auc), csv_num(s.estimate->ci_low),
           csv_num(s.estimate->ci_high), "", "", "", ""});
    }
  }
  for (const auto& h : r.heatmaps) {
    for (const auto& c : h.cells) {
      if (!c.available) continue;
      row({c.target, c.best_external, c.dataset, to_string(c.probe), to_string(h.subset), "mean",
           csv_num(c.self_auc), csv_num(c.self_ci_low), csv_num(c.self_ci_high), csv_num(c.delta),
           c.gap_closed ? csv_num(*c.gap_closed) : "", c.p_value ? csv_num(*c.p_value) : "",
           c.significant ? "true" : "false"});
    }
  }
  return os.str();
}

std::string heatmap_svg(const Report& r) {
  std::set<std::string> source_names;
  for (const auto& h : r.heatmaps)
    for (const auto& c : h.cells)
      if (c.available) source_names.insert(c.best_external);
  std::map<std::string, std::string> colour;
  std::size_t idx = 0;
  for (const auto& s : source_names) colour[s] = kPalette[idx++ % std::size(kPalette)];

  constexpr int kCellW = 150, kCellH = 34, kLeft = 170, kTop = 40, kGap = 30;
  int height = kTop;
  std::ostringstream body;
  for (const auto& h : r.heatmaps) {
    std::vector<std::string> cols;
    std::vector<std::string> rows;
    for (const auto& c : h.cells) {
      if (std::find(cols.begin(), cols.end(), c.dataset) == cols.end()) cols.push_back(c.dataset);
      const std::string row = c.target + " (" + to_string(c.probe) + ")";
      if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
    }
    body << "<text x=\"10\" y=\"" << height - 10 << "\" font-weight=\"bold\">"
         << xml_escape(to_string(h.subset)) << " subset</text>\n";
    for (std::size_t ci = 0; ci < cols.size(); ++ci) {
      body << "<text x=\"" << kLeft + ci * kCellW + kCellW / 2 << "\" y=\"" << height + 12
           << "\" text-anchor=\"middle\">" << xml_escape(cols[ci]) << "</text>\n";
    }
    const int grid_top = height + 20;
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
      body << "<text x=\"10\" y=\"" << grid_top + ri * kCellH + kCellH / 2 + 5 << "\">"
           << xml_escape(rows[ri]) << "</text>\n";
    }
    for (const auto& c : h.cells) {
      const auto ci = std::find(cols.begin(), cols.end(), c.dataset) - cols.begin();
      const auto ri = std::find(rows.begin(), rows.end(), c.target + " (" + to_string(c.probe) + ")") - rows.begin();
      const int x = kLeft + static_cast<int>(ci) * kCellW;
      const int y = grid_top + static_cast<int>(ri) * kCellH;
      const std::string fill = c.available ? colour[c.best_external] : "#dddddd";
      body << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCellW - 2 << "\" height=\""
           << kCellH - 2 << "\" fill=\"" << fill << "\" fill-opacity=\"0.6\"/>\n";
      body << "<text x=\"" << x + kCellW / 2 << "\" y=\"" << y + kCellH / 2 + 5
           << "\" text-anchor=\"middle\">" << xml_escape(format_heatmap_cell(c)) << "</text>\n";
    }
    height = grid_top + static_cast<int>(rows.size()) * kCellH + kGap + 20;
  }
  int legend_y = height;
  for (const auto& [name, col] : colour) {
    body << "<rect x=\"10\" y=\"" << legend_y << "\" width=\"12\" height=\"12\" fill=\"" << col
         << "\"/><text x=\"28\" y=\"" << legend_y + 11 << "\">best external: " << xml_escape(name)
         << "</text>\n";
    legend_y += 18;
  }
  std::size_t max_cols = 1;
  for (const auto& h : r.heatmaps) {
    std::set<std::string> d;
    for (const auto& c : h.cells) d.insert(c.dataset);
    max_cols = std::max(max_cols, d.size());
  }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLeft + max_cols * kCellW + 20
     << "\" height=\"" << legend_y + 10 << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<text x=\"10\" y=\"18\" font-size=\"14\">Premium gap: self - best external (gap closed)</text>\n"
     << body.str() << "</svg>\n";
  return os.str();
}

std::string layers_svg(const Report& r) {
  constexpr int kW = 360, kH = 220, kPad = 40;
  const std::size_t n = std::max<std::size_t>(1, r.curves.size());
  const std::size_t per_row = std::min<std::size_t>(3, n);
  const std::size_t rows = (n + per_row - 1) / per_row;

  double lo = -0.05, hi = 0.05;
  for (const auto& c : r.curves) {
    for (const auto& p : c.points) {
      for (double v : {p.gap, p.ci_low, p.ci_high}) {
        if (std::isfinite(v)) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
    }
  }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << per_row * kW << "\" height=\""
     << rows * kH + 30 << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<text x=\"10\" y=\"18\" font-size=\"14\">Per-layer premium gap vs normalized depth</text>\n";
  for (std::size_t i = 0; i < r.curves.size(); ++i) {
    const auto& c = r.curves[i];
    const double ox = static_cast<double>((i % per_row) * kW);
    const double oy = static_cast<double>(30 + (i / per_row) * kH);
    const double pw = kW - 2 * kPad, ph = kH - 2 * kPad;
    auto px = [&](double depth) { return ox + kPad + depth * pw; };
    auto py = [&](double v) { return oy + kPad + (hi - v) / (hi - lo) * ph; };
    os << "<g>\n<rect x=\"" << ox + kPad << "\" y=\"" << oy + kPad << "\" width=\"" << pw
       << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#999\"/>\n";
    os << "<text x=\"" << ox + kPad << "\" y=\"" << oy + kPad - 8 << "\">"
       << xml_escape(c.target + " / " + c.dataset + " / " + to_string(c.probe) + " / " +
                     to_string(c.subset))
       << "</text>\n";
    os << "<line x1=\"" << px(0) << "\" x2=\"" << px(1) << "\" y1=\"" << py(0) << "\" y2=\"" << py(0)
       << "\" stroke=\"#555\" stroke-dasharray=\"4 3\"/>\n";
    std::string band_top, band_bottom, line;
    for (const auto& p : c.points) {
      if (!p.available) continue;
      line += fmt(px(p.depth)) + "," + fmt(py(p.gap)) + " ";
      if (std::isfinite(p.ci_low) && std::isfinite(p.ci_high)) {
        band_top += fmt(px(p.depth)) + "," + fmt(py(p.ci_high)) + " ";
        band_bottom = fmt(px(p.depth)) + "," + fmt(py(p.ci_low)) + " " + band_bottom;
      }
    }
    if (!band_top.empty()) {
      os << "<polygon points=\"" << band_top << band_bottom
         << "\" fill=\"#4e79a7\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    os << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"#4e79a7\" stroke-width=\"2\"/>\n";
    for (const auto& p : c.points) {
      if (!p.available) continue;
      os << "<circle cx=\"" << fmt(px(p.depth)) << "\" cy=\"" << fmt(py(p.gap))
         << "\" r=\"3\" fill=\"#4e79a7\"><title>layer " << p.layer << ": " << fmt(p.gap, 3)
         << "</title></circle>\n";
    }
    os << "<text x=\"" << ox + kPad << "\" y=\"" << oy + kH - 12 << "\">depth 0</text>"
       << "<text x=\"" << ox + kW - kPad << "\" y=\"" << oy + kH - 12
       << "\" text-anchor=\"end\">1</text>\n";
    os << "<text x=\"" << ox + 4 << "\" y=\"" << py(hi) + 4 << "\">" << fmt(hi, 2) << "</text>"
       << "<text x=\"" << ox + 4 << "\" y=\"" << py(lo) << "\">" << fmt(lo, 2) << "</text>\n</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_report(const Report& report, ReportFormat format, const fs::path& path) {
  if (report.cells.empty()) throw Error(ErrorCode::EmptyReport, "report has no cells");
  switch (format) {
    case ReportFormat::Json:
      write_file(path, report_to_json(report).dump(1) + "\n");
      break;
    case ReportFormat::Csv:
      write_file(path, report_to_csv(report));
      break;
    case ReportFormat::Svg: {
      // A path ending in "layers.svg" gets the curves, anything else the heatmap.
      const bool layers = path.filename().string().find("layers") != std::string::npos;
      write_file(path, layers ? layers_svg(report) : heatmap_svg(report));
      break;
    }
  }
}

}  // namespace privgap
