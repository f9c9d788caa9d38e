#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "privgap/cli.hpp"
#include "privgap/crossval.hpp"
#include "privgap/error.hpp"
#include "privgap/metrics.hpp"
#include "privgap/report.hpp"
#include "privgap/repstore.hpp"
#include "privgap/synth.hpp"

namespace py = pybind11;
using namespace privgap;

namespace {

using Bytes = std::vector<std::uint8_t>;

py::dict estimate_dict(const AucEstimate& e) {
  py::dict d;
  d["auc"] = e.auc;
  d["ci_low"] = e.ci_low;
  d["ci_high"] = e.ci_high;
  d["n_pos"] = e.n_pos;
  d["n_neg"] = e.n_neg;
  d["bootstrap_B"] = e.bootstrap_B;
  d["seed"] = e.seed;
  return d;
}

// JSON text is the bridge for structured values; the Python side parses it.
SyntheticWorldSpec spec_from_text(const std::string& text) {
  return spec_from_json(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_privgap, m) {
  m.doc() = "Self vs. external probing of hidden representations.";

  py::register_exception<Error>(m, "PrivgapError");

  m.def("auc", [](const std::vector<double>& s, const Bytes& y) { return auc(s, y); },
        py::arg("scores"), py::arg("labels"));
  m.def("auc_subset",
        [](const std::vector<double>& s, const Bytes& y, const std::vector<std::size_t>& idx) {
          return auc_subset(s, y, idx);
        },
        py::arg("scores"), py::arg("labels"), py::arg("indices"));
  m.def("estimate_auc",
        [](const std::vector<double>& s, const Bytes& y, int B, std::uint64_t seed) {
          return estimate_dict(estimate_auc(s, y, B, seed));
        },
        py::arg("scores"), py::arg("labels"), py::arg("B") = 1000, py::arg("seed") = 0);
  m.def("paired_t_test",
        [](const std::vector<double>& a, const std::vector<double>& b) { return paired_t_test(a, b); },
        py::arg("a"), py::arg("b"));
  m.def("holm",
        [](const std::vector<double>& p, double alpha) {
          const auto r = holm_correct(p, alpha);
          py::dict d;
          d["adjusted_p"] = r.adjusted_p;
          d["reject"] = r.adjusted_reject;
          return d;
        },
        py::arg("pvals"), py::arg("alpha") = 0.05);
  m.def("premium_gap",
        [](double self_auc, const std::vector<double>& ext) { return premium_gap(self_auc, ext); },
        py::arg("self_auc"), py::arg("external_aucs"));
  m.def("gap_closed_pct", &gap_closed_pct, py::arg("self_auc"), py::arg("best_external_auc"));

  m.def("stratified_folds",
        [](const Bytes& y, int k, std::uint64_t seed) { return stratified_folds(y, k, seed).assignments; },
        py::arg("labels"), py::arg("k") = 10, py::arg("seed") = 0);
  m.def("nested_cv",
        [](const Eigen::MatrixXd& X, const Bytes& y, int k, std::uint64_t seed, const std::string& probe,
           const std::vector<double>& C_grid) {
          ProbeSpec spec;
          spec.type = probe_type_from_string(probe);
          spec.C_grid = C_grid;
          OOFResult r;
          {
            py::gil_scoped_release release;
            r = run_nested_cv(X, y, spec, stratified_folds(y, k, seed));
          }
          py::dict d;
          d["scores"] = r.scores;
          d["fold_of"] = r.fold_of;
          d["per_fold_auc"] = r.per_fold_auc;
          return d;
        },
        py::arg("X"), py::arg("labels"), py::arg("k") = 10, py::arg("seed") = 0,
        py::arg("probe") = "linear", py::arg("C_grid") = std::vector<double>{0.01, 0.1});

  m.def("read_rep_file",
        [](const std::string& path) {
          const LayerMatrix lm = read_rep_file(path);
          return py::make_tuple(lm.model_id, lm.dataset_id, lm.layer_index, lm.to_eigen());
        },
        py::arg("path"), "Returns (model_id, dataset_id, layer_index, matrix).");
  m.def("write_rep_file",
        [](const std::string& path, const std::string& model, const std::string& dataset,
           std::uint32_t layer, const Eigen::MatrixXd& X) {
          write_rep_file(LayerMatrix::from_eigen(model, dataset, layer, X), path);
        },
        py::arg("path"), py::arg("model_id"), py::arg("dataset_id"), py::arg("layer_index"),
        py::arg("matrix"));
  m.def("bundle_summary",
        [](const std::string& manifest) {
          const auto reps = load_bundle(manifest);
          py::dict d;
          d["dataset_id"] = reps.dataset_id();
          d["n_questions"] = reps.size();
          py::dict layers;
          for (const auto& model : reps.models()) layers[py::str(model)] = reps.layers_of(model);
          d["layers"] = layers;
          py::dict labels;
          for (const auto& model : reps.labelled_models()) labels[py::str(model)] = reps.labels_for(model).labels;
          d["labels"] = labels;
          return d;
        },
        py::arg("manifest"));

  m.def("run_experiment_json",
        [](const std::string& config_json) {
          const RunConfig c = config_from_json(nlohmann::json::parse(config_json));
          std::vector<RepresentationSet> sets;
          for (const auto& path : c.manifests) sets.push_back(load_bundle(path));
          py::gil_scoped_release release;
          return report_to_json(run_experiment(sets, c)).dump();
        },
        py::arg("config_json"));

  m.def("synth_preset_json",
        [](const std::string& name, std::uint64_t seed) { return spec_to_json(synth_preset(name, seed)).dump(); },
        py::arg("name"), py::arg("seed") = 0);
  m.def("calibrate_agreement_json",
        [](const std::string& spec_json, double target) {
          return spec_to_json(calibrate_agreement(spec_from_text(spec_json), target)).dump();
        },
        py::arg("spec_json"), py::arg("target"));
  m.def("generate_world",
        [](const std::string& spec_json) {
          const SyntheticWorld w = generate_world(spec_from_text(spec_json));
          py::dict labels;
          for (const auto& y : w.labels) labels[py::str(y.model_id)] = y.labels;
          py::dict d;
          d["labels"] = labels;
          d["agreement"] = mean_pairwise_agreement(w.labels);
          d["u_public"] = w.u_public;
          return d;
        },
        py::arg("spec_json"));
  m.def("write_world",
        [](const std::string& spec_json, const std::string& dir) {
          return write_world(generate_world(spec_from_text(spec_json)), dir).string();
        },
        py::arg("spec_json"), py::arg("dir"));

  m.def("main",
        [](const std::vector<std::string>& args) {
          std::vector<const char*> argv{"privgap"};
          for (const auto& a : args) argv.push_back(a.c_str());
          return run_command(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"), "Runs the command-line tool; returns its exit code.");
}
