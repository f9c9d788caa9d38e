import json
import math

import numpy as np
import pytest

import privgap


def test_auc_with_ties():
    assert privgap.auc([0.1, 0.4, 0.4, 0.8], [0, 0, 1, 1]) == pytest.approx(0.875)
    assert privgap.auc_subset([0.9, 0.1, 0.2, 0.7], [1, 0, 1, 0], [1, 2]) == 1.0


def test_single_class_raises():
    with pytest.raises(privgap.PrivgapError):
        privgap.auc([0.1, 0.2], [1, 1])


def test_estimate_and_stats():
    rng = np.random.default_rng(0)
    s = rng.normal(size=200)
    y = (s + rng.normal(size=200) > 0).astype(int).tolist()
    est = privgap.estimate_auc(s.tolist(), y, B=200, seed=1)
    assert est["ci_low"] <= est["auc"] <= est["ci_high"]
    assert est["n_pos"] + est["n_neg"] == 200
    p = privgap.paired_t_test([0.8, 0.82, 0.79, 0.85, 0.81], [0.7, 0.71, 0.72, 0.74, 0.69])
    assert 0.0 <= p < 0.01
    assert privgap.holm([0.01, 0.04, 0.03], 0.05)["reject"] == [True, False, False]
    assert privgap.gap_closed_pct(0.9, 0.8) == pytest.approx(50.0)
    assert privgap.premium_gap(0.75, [0.7, 0.73]) == pytest.approx(0.02)


def test_folds_and_nested_cv():
    y = [1] * 10 + [0] * 10
    folds = privgap.stratified_folds(y, k=10, seed=3)
    assert sorted(set(folds)) == list(range(10))
    rng = np.random.default_rng(1)
    X = rng.normal(size=(120, 4))
    labels = (X[:, 0] > 0).astype(int).tolist()
    r = privgap.nested_cv(X, labels, k=5, seed=2)
    assert len(r["scores"]) == 120
    assert privgap.auc(r["scores"], labels) > 0.95


def test_rep_file_round_trip(tmp_path):
    X = np.arange(12, dtype=float).reshape(3, 4) / 7.0
    path = tmp_path / "m_L1.pkr"
    privgap.write_rep_file(str(path), "m", "d", 1, X)
    model, dataset, layer, back = privgap.read_rep_file(str(path))
    assert (model, dataset, layer) == ("m", "d", 1)
    np.testing.assert_allclose(back, X.astype(np.float32), rtol=0, atol=0)


def test_synth_world_and_experiment(tmp_path):
    spec = privgap.synth_preset("masked-priv", seed=1)
    spec.update({"n_examples": 300, "d_public": 3, "d_private": 3, "d_hidden": 8})
    spec = privgap.calibrate_agreement(spec, 0.8)
    world = privgap.generate_world(spec)
    assert abs(world["agreement"] - 0.8) < 0.08
    assert set(world["labels"]) == {"m0", "m1", "m2"}

    manifest = privgap.write_world(spec, tmp_path / "world")
    summary = privgap.bundle_summary(manifest)
    assert summary["n_questions"] == 300
    assert summary["layers"]["m2"] == [1]

    report = privgap.run_experiment(
        {"manifests": [manifest], "targets": ["m0"], "k": 4, "bootstrap_B": 20, "jobs": 1}
    )
    assert report["schema"] == "privgap.report/v1"
    assert len(report["heatmaps"]) == 2
    cell = report["heatmaps"][0]["cells"][0]
    assert cell["target"] == "m0"
    assert math.isfinite(cell["delta"])
    json.dumps(report)


def test_cli_entry_point(tmp_path):
    assert privgap.main(["--help"]) == 0
    assert privgap.main(["validate", str(tmp_path / "missing.json")]) == 1
    assert privgap.main(["no-such-command"]) == 2
