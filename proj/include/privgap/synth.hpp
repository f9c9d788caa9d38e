#pragma once

// Synthetic multi-model worlds: shared public latents, per-model private
// latents, orthonormal mixing into hidden states, and linear-threshold
// correctness labels. Used to check that the pipeline finds a self
// advantage exactly when private signal exists.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "privgap/report.hpp"
#include "privgap/repstore.hpp"

namespace privgap {

struct SyntheticWorldSpec {
  int n_models = 3;
  int n_examples = 4000;
  int d_public = 8;
  int d_private = 8;
  int d_hidden = 64;
  double w_public = 1.0;
  double w_private = 1.0;
  double noise_sd = 1.0;      // label noise
  double obs_noise_sd = 0.1;  // isotropic noise added to hidden states
  std::vector<double> thresholds;     // per model; empty means 0 for all
  int n_layers = 1;                   // pseudo-layers 1..n_layers
  std::vector<double> layer_profile;  // private exposure per pseudo-layer; empty means 1
  std::string dataset_id = "synth";
  std::uint64_t seed = 0;

  double threshold(int model) const;
  double exposure(int layer) const;  // layer in 1..n_layers
  std::string model_id(int model) const { return "m" + std::to_string(model); }
  bool operator==(const SyntheticWorldSpec&) const = default;
};

/// Throws InvalidSpec when a field is out of range.
void validate_spec(const SyntheticWorldSpec& spec);

struct SyntheticWorld {
  SyntheticWorldSpec spec;
  RepresentationSet reps;
  std::vector<LabelVector> labels;  // one per model

  // Ground truth kept for diagnostics.
  Eigen::MatrixXd z_public;                // n x d_public
  std::vector<Eigen::MatrixXd> z_private;  // per model, n x d_private
  Eigen::VectorXd u_public;
  std::vector<Eigen::VectorXd> u_private;
  std::vector<Eigen::VectorXd> label_noise;
  std::vector<Eigen::MatrixXd> mixing;  // per model, d_hidden x (d_public + d_private)

  /// Noise-free score w_pub*u_pub + w_priv*u_priv of one model.
  Eigen::VectorXd latent_score(int model) const;
};

SyntheticWorld generate_world(const SyntheticWorldSpec& spec);

/// Mean agreement over all model pairs.
double mean_pairwise_agreement(const std::vector<LabelVector>& labels);

/// Scales w_private and noise_sd by one common factor, found by bisection,
/// until mean pairwise agreement on a 20,000-row calibration sample is
/// within 0.01 of `target`. Throws Unreachable otherwise.
SyntheticWorldSpec calibrate_agreement(const SyntheticWorldSpec& spec, double target,
                                       std::size_t sample_size = 20000);

/// Agreement the calibration sample yields for `spec` as is.
double calibration_agreement(const SyntheticWorldSpec& spec, std::size_t sample_size = 20000);

/// Population AUC of the noise-free score against the labels; zero
/// thresholds only.
double analytic_auc_ceiling(const SyntheticWorldSpec& spec);

struct RecoveryThresholds {
  double null_band = 0.03;
  double detection = 0.05;
  double full_limit = 0.02;
};

struct WorldOutcome {
  double agreement = 0.0;
  double full_gap = 0.0;
  double disagree_gap = 0.0;
  std::optional<double> full_p;
  std::optional<double> disagree_p;
  bool full_significant = false;
  bool disagree_significant = false;
  std::string full_best_external;
  std::string disagree_best_external;
  Report report;
};

struct RecoveryReport {
  WorldOutcome no_priv;
  WorldOutcome with_priv;
  RecoveryThresholds thresholds;
  bool null_ok = false;     // |disagreement gap| inside the band, no significant self advantage
  bool masking_ok = false;  // full-set gap below full_limit
  bool detection_ok = false;  // disagreement gap above detection and significant

  bool passed() const { return null_ok && masking_ok && detection_ok; }
};

/// Pulls the gaps for `target` out of a report built on one world.
WorldOutcome summarize_world(const Report& report, const std::string& target, double agreement);

RecoveryReport validate_methodology(const SyntheticWorldSpec& no_priv,
                                    const SyntheticWorldSpec& with_priv, RunConfig config,
                                    const RecoveryThresholds& thresholds = {});

/// "null", "masked-priv" or "layered", before calibration.
SyntheticWorldSpec synth_preset(const std::string& name, std::uint64_t seed = 0);
std::vector<std::string> synth_preset_names();

nlohmann::json spec_to_json(const SyntheticWorldSpec& spec);
SyntheticWorldSpec spec_from_json(const nlohmann::json& j);
nlohmann::json recovery_to_json(const RecoveryReport& r);

/// Writes the bundle plus world.json (the spec) into `dir`; returns the
/// manifest path.
std::filesystem::path write_world(const SyntheticWorld& world, const std::filesystem::path& dir);

}  // namespace privgap
