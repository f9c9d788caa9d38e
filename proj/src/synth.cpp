#include "privgap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <Eigen/QR>

#include "privgap/error.hpp"
#include "privgap/log.hpp"
#include "privgap/random.hpp"

namespace privgap {

namespace fs = std::filesystem;
using nlohmann::json;

double SyntheticWorldSpec::threshold(int model) const {
  return thresholds.empty() ? 0.0 : thresholds.at(static_cast<std::size_t>(model));
}

double SyntheticWorldSpec::exposure(int layer) const {
  return layer_profile.empty() ? 1.0 : layer_profile.at(static_cast<std::size_t>(layer - 1));
}

void validate_spec(const SyntheticWorldSpec& s) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); };
  if (s.n_models < 2) fail("n_models must be at least 2");
  if (s.n_examples < 2) fail("n_examples must be at least 2");
  if (s.d_public < 1 || s.d_private < 1) fail("latent dimensions must be positive");
  if (s.d_hidden < s.d_public + s.d_private) fail("d_hidden must be at least d_public + d_private");
  for (double v : {s.w_public, s.w_private, s.noise_sd, s.obs_noise_sd}) {
    if (!std::isfinite(v) || v < 0.0) fail("weights and noise must be finite and non-negative");
  }
  if (!s.thresholds.empty() && s.thresholds.size() != static_cast<std::size_t>(s.n_models)) {
    fail("thresholds must have one entry per model");
  }
  for (double t : s.thresholds) {
    if (!std::isfinite(t)) fail("thresholds must be finite");
  }
  if (s.n_layers < 1) fail("n_layers must be at least 1");
  if (!s.layer_profile.empty() && s.layer_profile.size() != static_cast<std::size_t>(s.n_layers)) {
    fail("layer_profile must have one entry per pseudo-layer");
  }
  for (double p : s.layer_profile) {
    if (!std::isfinite(p) || p < 0.0) fail("layer_profile entries must be finite and non-negative");
  }
  if (s.dataset_id.empty()) fail("dataset_id must be non-empty");
}

namespace {

Eigen::MatrixXd normals(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Eigen::VectorXd unit_direction(Rng& rng, Eigen::Index dim) {
  Eigen::VectorXd v = normals(rng, dim, 1).col(0);
  return v / v.norm();
}

Eigen::MatrixXd orthonormal_map(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::MatrixXd g = normals(rng, rows, cols);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

std::uint64_t stream(std::uint64_t seed, const std::string& name) {
  return derive_seed(seed, hash_name(name));
}

std::string qid(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "q%05d", i);
  return buf;
}

}  // namespace

Eigen::VectorXd SyntheticWorld::latent_score(int model) const {
  return spec.w_public * u_public + spec.w_private * u_private.at(static_cast<std::size_t>(model));
}

SyntheticWorld generate_world(const SyntheticWorldSpec& spec) {
  validate_spec(spec);
  const Eigen::Index n = spec.n_examples;
  SyntheticWorld w;
  w.spec = spec;

  Rng pub_rng(stream(spec.seed, "public"));
  const Eigen::VectorXd v_pub = unit_direction(pub_rng, spec.d_public);
  w.z_public = normals(pub_rng, n, spec.d_public);
  w.u_public = w.z_public * v_pub;

  QuestionManifest manifest;
  manifest.dataset_id = spec.dataset_id;
  for (int i = 0; i < spec.n_examples; ++i) manifest.qids.push_back(qid(i));
  w.reps = RepresentationSet(manifest);

  std::vector<LabelRecord> records;
  for (int m = 0; m < spec.n_models; ++m) {
    const std::string id = spec.model_id(m);
    Rng priv_rng(stream(spec.seed, "private/" + id));
    const Eigen::VectorXd v_priv = unit_direction(priv_rng, spec.d_private);
    w.z_private.push_back(normals(priv_rng, n, spec.d_private));
    w.u_private.push_back(w.z_private.back() * v_priv);

    Rng noise_rng(stream(spec.seed, "label-noise/" + id));
    w.label_noise.push_back(normals(noise_rng, n, 1).col(0));

    const Eigen::VectorXd latent = w.latent_score(m) + spec.noise_sd * w.label_noise.back();
    LabelVector y{spec.dataset_id, id, std::vector<std::uint8_t>(static_cast<std::size_t>(n))};
    for (Eigen::Index i = 0; i < n; ++i) {
      y.labels[static_cast<std::size_t>(i)] = latent(i) > spec.threshold(m) ? 1 : 0;
      records.push_back({manifest.qids[static_cast<std::size_t>(i)], id,
                         y.labels[static_cast<std::size_t>(i)]});
    }
    w.labels.push_back(std::move(y));

    Rng mix_rng(stream(spec.seed, "mixing/" + id));
    w.mixing.push_back(orthonormal_map(mix_rng, spec.d_hidden, spec.d_public + spec.d_private));
    const Eigen::MatrixXd& A = w.mixing.back();
    const Eigen::MatrixXd pub_part = w.z_public * A.leftCols(spec.d_public).transpose();
    const Eigen::MatrixXd priv_part = w.z_private.back() * A.rightCols(spec.d_private).transpose();

    Rng obs_rng(stream(spec.seed, "observation/" + id));
    for (int layer = 1; layer <= spec.n_layers; ++layer) {
      Eigen::MatrixXd h = pub_part + spec.exposure(layer) * priv_part;
      if (spec.obs_noise_sd > 0.0) h += spec.obs_noise_sd * normals(obs_rng, n, spec.d_hidden);
      w.reps.add_layer(LayerMatrix::from_eigen(id, spec.dataset_id, static_cast<std::uint32_t>(layer), h));
    }
  }
  w.reps.add_labels(records);
  return w;
}

double mean_pairwise_agreement(const std::vector<LabelVector>& labels) {
  double total = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < labels.size(); ++a) {
    for (std::size_t b = a + 1; b < labels.size(); ++b) {
      if (labels[a].size() != labels[b].size()) {
        throw Error(ErrorCode::LengthMismatch, "label vectors differ in length");
      }
      std::size_t same = 0;
      for (std::size_t i = 0; i < labels[a].size(); ++i) same += labels[a].labels[i] == labels[b].labels[i];
      total += static_cast<double>(same) / static_cast<double>(labels[a].size());
      ++pairs;
    }
  }
  if (pairs == 0) throw Error(ErrorCode::InvalidArgument, "agreement needs at least two models");
  return total / pairs;
}

namespace {

// Common random numbers for calibration: the public latent, and per model the
// private latent and label noise, all standard normal.
struct CalibrationSample {
  Eigen::VectorXd u_public;
  Eigen::MatrixXd u_private;  // n x models
  Eigen::MatrixXd noise;      // n x models
};

CalibrationSample draw_calibration(const SyntheticWorldSpec& spec, std::size_t n) {
  Rng rng(stream(spec.seed, "calibration"));
  const auto rows = static_cast<Eigen::Index>(n);
  CalibrationSample s;
  s.u_public = normals(rng, rows, 1).col(0);
  s.u_private = normals(rng, rows, spec.n_models);
  s.noise = normals(rng, rows, spec.n_models);
  return s;
}

double sample_agreement(const SyntheticWorldSpec& spec, const CalibrationSample& s, double scale) {
  const Eigen::Index n = s.u_public.size();
  std::vector<std::vector<std::uint8_t>> y(static_cast<std::size_t>(spec.n_models),
                                           std::vector<std::uint8_t>(static_cast<std::size_t>(n)));
  for (int m = 0; m < spec.n_models; ++m) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double latent = spec.w_public * s.u_public(i) +
                            scale * (spec.w_private * s.u_private(i, m) + spec.noise_sd * s.noise(i, m));
      y[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] = latent > spec.threshold(m);
    }
  }
  double total = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < y.size(); ++a) {
    for (std::size_t b = a + 1; b < y.size(); ++b) {
      std::size_t same = 0;
      for (Eigen::Index i = 0; i < n; ++i) same += y[a][static_cast<std::size_t>(i)] == y[b][static_cast<std::size_t>(i)];
      total += static_cast<double>(same) / static_cast<double>(n);
      ++pairs;
    }
  }
  return total / pairs;
}

}  // namespace

double calibration_agreement(const SyntheticWorldSpec& spec, std::size_t sample_size) {
  validate_spec(spec);
  return sample_agreement(spec, draw_calibration(spec, sample_size), 1.0);
}

SyntheticWorldSpec calibrate_agreement(const SyntheticWorldSpec& spec, double target,
                                       std::size_t sample_size) {
  validate_spec(spec);
  if (!(spec.w_public > 0.0)) throw Error(ErrorCode::InvalidSpec, "calibration needs w_public > 0");
  constexpr double kTolerance = 0.01;
  const bool has_spread = spec.w_private > 0.0 || spec.noise_sd > 0.0;
  if (!(target > 0.0 && target < 1.0) || !has_spread) {
    throw Error(ErrorCode::Unreachable, "agreement " + std::to_string(target) +
                                            " is not reachable by scaling private signal and noise");
  }
  const CalibrationSample sample = draw_calibration(spec, sample_size);

  // Agreement falls as the private-plus-noise part grows; bisect on log scale.
  double lo = std::log(1e-6), hi = std::log(1e6);
  const double a_lo = sample_agreement(spec, sample, std::exp(lo));
  const double a_hi = sample_agreement(spec, sample, std::exp(hi));
  if (target > a_lo + kTolerance || target < a_hi - kTolerance) {
    throw Error(ErrorCode::Unreachable, "agreement " + std::to_string(target) + " outside [" +
                                            std::to_string(a_hi) + ", " + std::to_string(a_lo) + "]");
  }
  for (int it = 0; it < 100 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sample_agreement(spec, sample, std::exp(mid)) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double scale = std::exp(0.5 * (lo + hi));
  SyntheticWorldSpec out = spec;
  out.w_private *= scale;
  out.noise_sd *= scale;
  const double achieved = sample_agreement(out, sample, 1.0);
  if (std::abs(achieved - target) > kTolerance) {
    throw Error(ErrorCode::Unreachable, "calibration stalled at agreement " + std::to_string(achieved));
  }
  log::debug("calibrated agreement " + std::to_string(achieved) + " with scale " + std::to_string(scale));
  return out;
}

double analytic_auc_ceiling(const SyntheticWorldSpec& spec) {
  for (double t : spec.thresholds) {
    if (t != 0.0) throw Error(ErrorCode::InvalidArgument, "analytic ceiling needs zero thresholds");
  }
  const double signal = spec.w_public * spec.w_public + spec.w_private * spec.w_private;
  const double total = signal + spec.noise_sd * spec.noise_sd;
  if (!(total > 0.0)) return 0.5;
  const double rho = std::sqrt(signal / total);
  return 0.5 + 2.0 * std::asin(rho / std::numbers::sqrt2) / std::numbers::pi;
}

// ---------------------------------------------------------------------------

WorldOutcome summarize_world(const Report& report, const std::string& target, double agreement) {
  WorldOutcome out;
  out.agreement = agreement;
  out.report = report;
  bool found_full = false, found_disagree = false;
  for (const auto& h : report.heatmaps) {
    for (const auto& c : h.cells) {
      if (c.target != target || !c.available) continue;
      if (h.subset == SubsetKind::Full && !found_full) {
        found_full = true;
        out.full_gap = c.delta;
        out.full_p = c.p_value;
        out.full_significant = c.significant;
        out.full_best_external = c.best_external;
      } else if (h.subset == SubsetKind::Disagree && !found_disagree) {
        found_disagree = true;
        out.disagree_gap = c.delta;
        out.disagree_p = c.p_value;
        out.disagree_significant = c.significant;
        out.disagree_best_external = c.best_external;
      }
    }
  }
  if (!found_full || !found_disagree) {
    throw Error(ErrorCode::EmptyReport, "report has no usable heatmap cell for target " + target);
  }
  return out;
}

RecoveryReport validate_methodology(const SyntheticWorldSpec& no_priv, const SyntheticWorldSpec& with_priv,
                                    RunConfig config, const RecoveryThresholds& thresholds) {
  const SyntheticWorld null_world = generate_world(no_priv);
  const SyntheticWorld priv_world = generate_world(with_priv);
  const double a_null = mean_pairwise_agreement(null_world.labels);
  const double a_priv = mean_pairwise_agreement(priv_world.labels);
  if (std::abs(a_null - a_priv) > 0.03) {
    throw Error(ErrorCode::InvalidSpec, "worlds are not calibrated to the same agreement (" +
                                            std::to_string(a_null) + " vs " + std::to_string(a_priv) + ")");
  }
  if (config.targets.empty()) config.targets = {no_priv.model_id(0)};
  config.manifests.clear();
  config.datasets.clear();

  RecoveryReport r;
  r.thresholds = thresholds;
  const std::string& target = config.targets.front();
  r.no_priv = summarize_world(run_experiment({null_world.reps}, config), target, a_null);
  r.with_priv = summarize_world(run_experiment({priv_world.reps}, config), target, a_priv);

  r.null_ok = std::abs(r.no_priv.disagree_gap) < thresholds.null_band &&
              !(r.no_priv.disagree_significant && r.no_priv.disagree_gap > 0.0);
  r.masking_ok = r.with_priv.full_gap < thresholds.full_limit;
  r.detection_ok = r.with_priv.disagree_gap > thresholds.detection && r.with_priv.disagree_significant;
  return r;
}

// ---------------------------------------------------------------------------

std::vector<std::string> synth_preset_names() { return {"null", "masked-priv", "layered"}; }

SyntheticWorldSpec synth_preset(const std::string& name, std::uint64_t seed) {
  SyntheticWorldSpec s;
  s.seed = seed;
  if (name == "null") {
    s.w_private = 0.0;
    s.noise_sd = 1.0;
  } else if (name == "masked-priv") {
    // Private and public weights start equal; calibration shrinks the
    // private weight and noise together, landing near w_private = 0.2.
    s.w_private = 1.0;
    s.noise_sd = 2.2;
  } else if (name == "layered") {
    s.w_private = 1.0;
    s.noise_sd = 2.2;
    s.n_examples = 2000;
    s.d_hidden = 32;
    s.n_layers = 8;
    s.layer_profile = {0, 0, 0, 1, 1, 1, 1, 1};
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown synth preset '" + name + "'");
  }
  return s;
}

json spec_to_json(const SyntheticWorldSpec& s) {
  return {{"n_models", s.n_models},         {"n_examples", s.n_examples},
          {"d_public", s.d_public},         {"d_private", s.d_private},
          {"d_hidden", s.d_hidden},         {"w_public", s.w_public},
          {"w_private", s.w_private},       {"noise_sd", s.noise_sd},
          {"obs_noise_sd", s.obs_noise_sd}, {"thresholds", s.thresholds},
          {"n_layers", s.n_layers},         {"layer_profile", s.layer_profile},
          {"dataset_id", s.dataset_id},     {"seed", s.seed}};
}

SyntheticWorldSpec spec_from_json(const json& j) {
  SyntheticWorldSpec s;
  try {
    s.n_models = j.value("n_models", s.n_models);
    s.n_examples = j.value("n_examples", s.n_examples);
    s.d_public = j.value("d_public", s.d_public);
    s.d_private = j.value("d_private", s.d_private);
    s.d_hidden = j.value("d_hidden", s.d_hidden);
    s.w_public = j.value("w_public", s.w_public);
    s.w_private = j.value("w_private", s.w_private);
    s.noise_sd = j.value("noise_sd", s.noise_sd);
    s.obs_noise_sd = j.value("obs_noise_sd", s.obs_noise_sd);
    s.thresholds = j.value("thresholds", s.thresholds);
    s.n_layers = j.value("n_layers", s.n_layers);
    s.layer_profile = j.value("layer_profile", s.layer_profile);
    s.dataset_id = j.value("dataset_id", s.dataset_id);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("world spec: ") + e.what());
  }
  validate_spec(s);
  return s;
}

json recovery_to_json(const RecoveryReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  auto world = [&](const WorldOutcome& w) {
    return json{{"agreement", w.agreement},
                {"full_gap", w.full_gap},
                {"full_p", opt(w.full_p)},
                {"full_significant", w.full_significant},
                {"full_best_external", w.full_best_external},
                {"disagree_gap", w.disagree_gap},
                {"disagree_p", opt(w.disagree_p)},
                {"disagree_significant", w.disagree_significant},
                {"disagree_best_external", w.disagree_best_external}};
  };
  return {{"no_priv", world(r.no_priv)},
          {"with_priv", world(r.with_priv)},
          {"thresholds",
           {{"null_band", r.thresholds.null_band},
            {"detection", r.thresholds.detection},
            {"full_limit", r.thresholds.full_limit}}},
          {"null_ok", r.null_ok},
          {"masking_ok", r.masking_ok},
          {"detection_ok", r.detection_ok},
          {"passed", r.passed()}};
}

fs::path write_world(const SyntheticWorld& world, const fs::path& dir) {
  const fs::path manifest = write_bundle(world.reps, dir);
  std::ofstream out(dir / "world.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + (dir / "world.json").string());
  out << spec_to_json(world.spec).dump(1) << "\n";
  return manifest;
}

}  // namespace privgap
