import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from spatial_transfer.basis import embed_batch
from spatial_transfer.cli import parse_and_dispatch
from spatial_transfer.config import config_from_dict
from spatial_transfer.net import forward, load_weights
from spatial_transfer.report import read_csv


@pytest.fixture
def cfg_file(tmp_path, tiny_raw):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_raw))
    return path


def run(*argv):
    return parse_and_dispatch([str(a) for a in argv])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_module_help_lists_schema():
    out = subprocess.run([sys.executable, "-m", "spatial_transfer", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for word in ("benchmark", "finetune", "target_sizes", "pretrain"):
        assert word in out


def test_usage_errors_exit_one(tmp_path, capsys):
    assert run("frobnicate") == 1
    assert run() == 1
    assert run("simulate") == 1  # --process is required
    assert run("benchmark", "--config", tmp_path / "missing.yaml") == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"replicates": 3, "bogus": true}')
    assert run("benchmark", "--config", bad) == 1


def test_runtime_errors_exit_two(tmp_path, cfg_file):
    pts = tmp_path / "p.csv"
    pts.write_text("s1,s2\n0.5,0.5\n")
    assert run("predict", "--config", cfg_file, "--weights", tmp_path / "nope.sntl",
               "--points", pts, "--out", tmp_path / "o.csv") == 2
    junk = tmp_path / "junk.sntl"
    junk.write_bytes(b"SNTL\x01\x00")
    assert run("predict", "--config", cfg_file, "--weights", junk,
               "--points", pts, "--out", tmp_path / "o.csv") == 2


def test_benchmark_command(tmp_path, cfg_file, capsys):
    out = tmp_path / "bench"
    assert run("benchmark", "--config", cfg_file, "--seed", 7, "--out-dir", out, "--threads", 1) == 0
    report = read_csv(out / "mse.csv")
    assert len(report) == 2 * 2 * 3 * 2
    assert "transfer" in capsys.readouterr().out
    manifest = [json.loads(l) for l in (out / "manifest.jsonl").read_text().splitlines()]
    assert manifest[-1]["command"] == "benchmark" and manifest[-1]["seed"] == 7
    assert len(manifest[-1]["config_sha256"]) == 64

    assert run("plot", "--csv", out / "mse.csv", "--out", tmp_path / "again.svg") == 0
    assert (tmp_path / "again.svg").read_bytes() == (out / "mse.svg").read_bytes()


def test_output_dir_from_environment(tmp_path, cfg_file, monkeypatch):
    monkeypatch.setenv("SPATIAL_TRANSFER_OUTPUT_DIR", str(tmp_path / "env"))
    assert run("simulate", "--config", cfg_file, "--process", "nonstationary") == 0
    assert (tmp_path / "env" / "simulate_nonstationary_n9_r0.csv").exists()
    # an explicit flag wins over the environment
    assert run("simulate", "--config", cfg_file, "--process", "nonstationary", "--out-dir", tmp_path / "flag") == 0
    assert (tmp_path / "flag" / "simulate_nonstationary_n9_r0.csv").exists()


def test_pipeline_reproduces_benchmark_transfer(tmp_path, cfg_file, tiny_raw):
    """simulate, pretrain, finetune, predict by hand give the benchmark's transfer MSE."""
    cfg = config_from_dict(tiny_raw)
    out = tmp_path / "run"
    process, n, rep = "stationary", 16, 1
    assert run("benchmark", "--config", cfg_file, "--out-dir", out, "--threads", 1) == 0
    expected = [r.mse for r in read_csv(out / "mse.csv").rows
                if (r.process, r.method, r.target_n, r.replicate) == (process, "transfer", n, rep)]

    sim = tmp_path / "sim.csv"
    assert run("simulate", "--config", cfg_file, "--out-dir", tmp_path, "--process", process,
               "--target-n", n, "--replicate", rep, "--out", sim) == 0
    assert run("pretrain", "--config", cfg_file, "--out-dir", tmp_path / "pre", "--process", process) == 0
    weights = tmp_path / "pre" / f"pretrained_{process}.sntl"
    assert weights.read_bytes() == (out / f"pretrained_{process}.sntl").read_bytes()
    tuned = tmp_path / "tuned.sntl"
    assert run("finetune", "--config", cfg_file, "--weights", weights, "--data", sim,
               "--process", process, "--replicate", rep, "--out", tuned) == 0

    rows = read_rows(sim)
    test = [r for r in rows if r["role"] == "test"]
    assert sum(r["role"] == "target" for r in rows) == n
    pts = tmp_path / "pts.csv"
    pts.write_text("s1,s2\n" + "".join(f"{r['s1']},{r['s2']}\n" for r in test))
    pred_path = tmp_path / "pred.csv"
    assert run("predict", "--config", cfg_file, "--weights", tuned, "--points", pts, "--out", pred_path) == 0
    preds = np.array([float(r["prediction"]) for r in read_rows(pred_path)])
    signal = np.array([float(r["signal"]) for r in test])
    assert np.mean((preds - signal) ** 2) == pytest.approx(expected[0], rel=1e-12)

    # spot-check predictions against a direct forward pass
    params = load_weights(tuned)
    locs = np.array([[float(r["s1"]), float(r["s2"])] for r in test[:5]])
    direct = [forward(params, x)[0] for x in embed_batch(locs, cfg.basis())]
    np.testing.assert_allclose(preds[:5], direct, rtol=1e-12, atol=1e-14)


def test_predict_rejects_wrong_basis(tmp_path, cfg_file):
    assert run("pretrain", "--config", cfg_file, "--out-dir", tmp_path, "--process", "nonstationary") == 0
    pts = tmp_path / "p.csv"
    pts.write_text("s1,s2\n0.1,0.2\n")
    # default config has a 139-dimensional basis, the tiny weights expect 25 inputs
    assert run("predict", "--weights", tmp_path / "pretrained_nonstationary.sntl",
               "--points", pts, "--out", tmp_path / "o.csv") == 1
