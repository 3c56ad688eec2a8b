# SPDX-License-Identifier: Apache-2.0
"""Smoke tests for the Python bindings and the command-line tool."""

import math
import os
import subprocess
from pathlib import Path

import numpy as np
import pytest

import senscal

CLI = os.environ.get("SENSCAL_CLI")

TINY = {
    "window.M": 8,
    "window.span_length": 2,
    "model.h_dim": 8,
    "model.heads": 2,
    "model.blocks": 1,
    "model.ff_dim": 8,
    "pretrain.epochs": 1,
    "pretrain.max_steps": 5,
    "finetune.epochs": 1,
    "finetune.hidden": 4,
    "finetune.max_steps": 5,
    "rf.n_trees": 3,
    "synth.n_samples": 500,
}


def test_relative_improvement_examples():
    assert senscal.relative_improvement(0.9, 0.8) == pytest.approx(12.5)
    assert senscal.relative_improvement(0.23, 0.44, higher_is_better=False) == pytest.approx(
        47.727, abs=1e-3
    )
    with pytest.raises(senscal.ParameterError):
        senscal.relative_improvement(1.0, 0.0)


def test_metrics_against_numpy():
    rng = np.random.default_rng(0)
    truth = rng.normal(size=50)
    pred = truth + rng.normal(scale=0.3, size=50)
    sse = np.sum((truth - pred) ** 2)
    sst = np.sum((truth - truth.mean()) ** 2)
    assert senscal.r2(truth, pred) == pytest.approx(1 - sse / sst)
    assert senscal.rmse(truth, pred) == pytest.approx(math.sqrt(sse / 50))


def test_mlr_matches_lstsq():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 10))
    beta = rng.normal(size=10)
    y = x @ beta + 0.7
    coef, intercept = senscal.mlr_fit(x, y)
    np.testing.assert_allclose(coef, beta, atol=1e-9)
    assert intercept == pytest.approx(0.7, abs=1e-9)


def test_chunks_partition():
    chunks = senscal.make_chunks(100, 25)
    assert chunks == [(0, 25), (25, 25), (50, 25), (75, 25)]
    assert senscal.make_chunks(10, 100) == [(0, 10)]


def test_synthetic_frame_is_deterministic():
    a = senscal.synth_generate(300, seed=7)
    b = senscal.synth_generate(300, seed=7)
    np.testing.assert_array_equal(a["x"], b["x"])
    assert a["x"].shape == (300, 3)
    assert a["variables"] == ["S", "T", "Rh"]
    assert int(a["timestamp"][0]) == 1467331200
    assert np.all(np.diff(a["timestamp"]) > 0)
    assert len(np.unique(a["y"])) > 1


def test_config_rejects_unknown_keys():
    cfg = senscal.RunConfig()
    assert cfg.get("window.M") == "128"
    with pytest.raises(senscal.ConfigError):
        cfg.set("window.nope", "1")
    keys = [k for k, _, _ in senscal.config_keys()]
    assert "pretrain.loss_scope" in keys


def test_pipeline_through_bindings(tmp_path):
    cfg = dict(TINY)
    cfg["run.output_dir"] = str(tmp_path)
    data = senscal.run("synth", cfg)["outputs"][0]
    cfg["data.sensors"] = f"a={data}"
    pre = senscal.run("pretrain", cfg)
    assert os.path.exists(tmp_path / "pretrain-a.sbckpt")
    assert "config_hash" in open(pre["manifest"]).read()
    senscal.run("evaluate", cfg)
    rows = senscal.load_report(str(tmp_path / "report.csv"))
    assert sorted(r["model"] for r in rows) == ["MLR", "RF", "SensBERT"]
    assert all(r["n_test"] == rows[0]["n_test"] for r in rows)


@pytest.mark.skipif(CLI is None, reason="SENSCAL_CLI not set")
def test_cli_help_lists_every_key():
    out = subprocess.run([CLI, "evaluate", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for key, _, _ in senscal.config_keys():
        assert f"--{key}" in out.stdout


@pytest.mark.skipif(CLI is None, reason="SENSCAL_CLI not set")
def test_cli_exit_codes(tmp_path):
    def run(*args):
        return subprocess.run([CLI, *args, "--run.output_dir", str(tmp_path)],
                              capture_output=True, text=True).returncode

    assert run("synth", "--synth.n_samples", "200") == 0
    assert run("synth", "--set", "bogus.key=1") == 2
    assert run("prepare", "--data.sensors", f"a={tmp_path / 'missing.csv'}") == 3


def test_desk_config_parses():
    root = Path(__file__).resolve().parents[2]
    cfg = senscal.RunConfig()
    cfg.apply_file(str(root / "configs" / "desk.ini"))
    assert cfg.get("window.M") == "8"
    assert cfg.get("model.blocks") == "1"
