"""Self vs. external probing of hidden representations."""

import json

from ._privgap import (
    PrivgapError,
    auc,
    auc_subset,
    bundle_summary,
    estimate_auc,
    gap_closed_pct,
    holm,
    main,
    nested_cv,
    paired_t_test,
    premium_gap,
    read_rep_file,
    stratified_folds,
    write_rep_file,
)
from . import _privgap


def run_experiment(config):
    """Runs the probing grid for a config dict and returns the report dict."""
    return json.loads(_privgap.run_experiment_json(json.dumps(config)))


def synth_preset(name, seed=0):
    return json.loads(_privgap.synth_preset_json(name, seed))


def calibrate_agreement(spec, target):
    return json.loads(_privgap.calibrate_agreement_json(json.dumps(spec), target))


def generate_world(spec):
    """Labels, mean pairwise agreement and the public latent of a world."""
    return _privgap.generate_world(json.dumps(spec))


def write_world(spec, directory):
    """Writes a synthetic world bundle; returns the manifest path."""
    return _privgap.write_world(json.dumps(spec), str(directory))


__all__ = [
    "PrivgapError",
    "auc",
    "auc_subset",
    "bundle_summary",
    "calibrate_agreement",
    "estimate_auc",
    "gap_closed_pct",
    "generate_world",
    "holm",
    "main",
    "nested_cv",
    "paired_t_test",
    "premium_gap",
    "read_rep_file",
    "run_experiment",
    "stratified_folds",
    "synth_preset",
    "write_rep_file",
    "write_world",
]
