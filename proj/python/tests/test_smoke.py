import json

import numpy as np
import pytest

import dlglm


def small_config(**over):
    c = {
        "data": {"simulate": {"n": 600, "p": 4}},
        "mechanism": {"kind": "MNAR"},
        "method": "dlglm",
        "hyperparams": {"h": 8, "dz": 2, "bs": 100, "K_train": 3, "K_eval": 20, "epochs_max": 4},
        "seed": 5,
    }
    c.update(over)
    return c


def test_simulate_shapes_and_truth():
    d = dlglm.simulate(n=500, p=6, seed=3)
    assert d["X"].shape == (500, 6)
    assert d["y"].shape == (500,)
    assert set(np.unique(d["y"])) <= {0.0, 1.0}
    np.testing.assert_allclose(d["beta"], 0.25)
    again = dlglm.simulate(n=500, p=6, seed=3)
    np.testing.assert_array_equal(d["X"], again["X"])


def test_mask_rate_is_calibrated():
    d = dlglm.simulate(n=50000, p=8, seed=1)
    m = dlglm.simulate_mask(d["X"], d["y"], mechanism="MCAR", rate=0.3, seed=2)
    R = m["R"]
    assert R.shape == d["X"].shape
    for j in dlglm.mask_spec(m)["missing_features"]:
        assert abs(1.0 - R[:, j].mean() - 0.3) < 0.01
    # Columns that are not missing-prone stay observed.
    observed = dlglm.mask_spec(m)["observed_features"]
    assert R[:, observed].min() == 1.0


def test_run_returns_metrics_and_writes_artifacts(tmp_path):
    report = dlglm.run(small_config(), tmp_path / "run")
    assert report["mechanism"] == "MNAR"
    assert report["imputation_l1"] > 0
    assert (tmp_path / "run" / "model.json").exists()
    again = dlglm.run(small_config(), tmp_path / "run2")
    assert json.dumps(report, sort_keys=True) == json.dumps(again, sort_keys=True)


def test_stage_errors_surface():
    with pytest.raises(dlglm.StageError):
        dlglm.run(small_config(data={"dir": "/nonexistent/dlglm"}), "/tmp/dlglm_py_fail")


def test_metrics():
    assert dlglm.percent_bias([0.30], [0.25]) == pytest.approx(20.0)
    assert dlglm.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    ppv, f1 = dlglm.ppv_f1([1, 1, 1, 1, 1, 0, 0, 0, 0, 0], [1, 1, 1, 1, 0, 0, 0, 1, 1, 0])
    assert ppv == pytest.approx(0.8)
    assert f1 == pytest.approx(8 / 11)
    assert dlglm.cohens_kappa([0, 1, 0, 1], [1, 0, 1, 0]) == pytest.approx(-1.0)
    X = np.array([[1.0, 5.0]])
    assert dlglm.imputation_l1(np.array([[3.0, 100.0]]), X, np.array([[0.0, 1.0]])) == 2.0
    with pytest.raises(dlglm.UndefinedMetric):
        dlglm.percent_bias([0.1], [0.0])
