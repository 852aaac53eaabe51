import json
import math

import numpy as np
import pytest

import iidshell


def test_version_and_presets():
    assert iidshell.__version__
    names = iidshell.preset_names()
    assert "challenger" in names
    assert "normal-d1-desk" in names
    cfg = iidshell.preset_config("normal-d1-desk")
    assert isinstance(cfg, dict)


def test_standard_normal_draws():
    out = iidshell.sample_standard(
        "normal", np.zeros(2), np.eye(2), K=500, seed=7, r=4.0, a=0.5, M=20, n_per_shell=2000
    )
    theta = out["theta"]
    assert theta.shape == (500, 2)
    assert abs(theta.mean()) < 0.2
    assert abs(theta.var() - 1.0) < 0.2
    assert len(out["shell_index"]) == 500
    assert min(out["t_coalesce"]) >= 1


def test_same_seed_same_draws():
    kw = dict(K=50, seed=3, M=10, n_per_shell=500)
    a = iidshell.sample_standard("student_t5", np.zeros(1), np.eye(1), **kw)
    b = iidshell.sample_standard("student_t5", np.zeros(1), np.eye(1), workers=2, **kw)
    np.testing.assert_array_equal(a["theta"], b["theta"])


def test_error_carries_code():
    with pytest.raises(iidshell.IidshellError) as info:
        iidshell.sample_standard("normal", np.zeros(1), np.eye(1), K=0)
    assert info.value.code == "ConfigError"
    assert info.value.exit_status == 2


def test_flattening_round_trip():
    v = np.array([0.3, -1.7, 2.2])
    w = iidshell.h_apply(1.5, v)
    np.testing.assert_allclose(iidshell.h_invert(1.5, w), v, rtol=1e-10, atol=1e-12)
    assert math.isfinite(iidshell.log_abs_det_grad_h(1.5, v))


def test_pipeline_run(tmp_path):
    log = iidshell.run("all", preset="normal-d1-desk", out_dir=str(tmp_path))
    assert log
    report = json.loads((tmp_path / "report.json").read_text())
    assert "pass" in report
    assert (tmp_path / "samples.csv").exists()
