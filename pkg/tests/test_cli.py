import json

import numpy as np
import pandas as pd
import pytest

from soundbounce.cli import dispatch, parse_grid
from soundbounce.config import ENV_LOG_LEVEL, ENV_WORKERS
from soundbounce.errors import ConfigError
from soundbounce.io import read_bounces_csv


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv(ENV_LOG_LEVEL, raising=False)
    monkeypatch.delenv(ENV_WORKERS, raising=False)


def _simulate(out_dir, *extra):
    return dispatch(
        ["simulate", "--e", "0.8", "--log10-kappa", "12", "--sigma", "0", "--out-dir", str(out_dir), *extra]
    )


def test_simulate_writes_noiseless_bounces(tmp_path):
    assert _simulate(tmp_path) == 0
    (trial,) = read_bounces_csv(tmp_path / "bounces.csv")
    t = np.array([b.time for b in trial])
    assert np.diff(t)[1] / np.diff(t)[0] == pytest.approx(0.8, abs=1e-9)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["argv"][0] == "simulate"
    assert manifest["seed"] == 0
    assert "bounces" in manifest["outputs"]


def test_same_seed_same_bytes(tmp_path):
    args = ("--set", "e=0.7", "--log10-kappa", "2", "--drops", "4", "--seed", "11")
    assert dispatch(["simulate", *args, "--out-dir", str(tmp_path / "a")]) == 0
    assert dispatch(["simulate", *args, "--out-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "bounces.csv").read_bytes() == (tmp_path / "b" / "bounces.csv").read_bytes()
    assert len(pd.read_csv(tmp_path / "a" / "bounces.csv")) == 4 * 3


def test_flags_override_set_pairs(tmp_path):
    assert dispatch(["simulate", "--set", "drops=5", "--drops", "2", "--out-dir", str(tmp_path)]) == 0
    assert len(read_bounces_csv(tmp_path / "bounces.csv")) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["teleport"],
        ["simulate", "--set", "e=2"],
        ["simulate", "--set", "nonsense=1"],
        ["simulate", "--set", "e"],
        ["localize", "--wav", "missing.wav"],
    ],
)
def test_usage_errors_exit_2(argv, tmp_path):
    assert dispatch([*argv, "--out-dir", str(tmp_path)] if argv[0] != "teleport" else argv) == 2


def test_replay_reproduces_outputs(tmp_path):
    assert _simulate(tmp_path, "--drops", "2", "--seed", "5") == 0
    manifest = tmp_path / "manifest.json"
    assert dispatch(["replay", "--manifest", str(manifest), "--out-dir", str(tmp_path / "again")]) == 0


def test_replay_detects_changed_outputs(tmp_path):
    assert _simulate(tmp_path) == 0
    manifest = tmp_path / "manifest.json"
    payload = json.loads(manifest.read_text())
    payload["outputs"]["bounces"]["sha256"] = "0" * 64
    manifest.write_text(json.dumps(payload))
    assert dispatch(["replay", "--manifest", str(manifest), "--out-dir", str(tmp_path / "again")]) == 1


def test_parse_grid():
    assert parse_grid("-0.4:-0.1:4,-0.05:0.05:3") == ((-0.4, -0.1, 4), (-0.05, 0.05, 3))
    with pytest.raises(ConfigError):
        parse_grid("-0.4:-0.1")


def test_synth_then_localize(tmp_path):
    assert dispatch(["synth-audio", "--ball", "ping_pong_table", "--snr-db", "30", "--out-dir", str(tmp_path)]) == 0
    assert dispatch(
        [
            "localize",
            "--wav",
            str(tmp_path / "audio.wav"),
            "--array",
            str(tmp_path / "array.json"),
            "--out-dir",
            str(tmp_path / "loc"),
        ]
    ) == 0
    (truth,) = read_bounces_csv(tmp_path / "truth.csv")
    (found,) = read_bounces_csv(tmp_path / "loc" / "events.csv")
    assert len(found) == len(truth)
    for a, b in zip(truth, found):
        assert np.linalg.norm(a.position - b.position) < 0.02


def test_calibrate_writes_posterior(tmp_path):
    argv = [
        "calibrate",
        "--train", "300",
        "--epochs", "3",
        "--set", "batch_size=64",
        "--set", "mdn_hidden_sizes=[8]",
        "--set", "mdn_components=2",
        "--set", "n_observations=2",
        "--out-dir", str(tmp_path),
    ]
    assert dispatch(argv) == 0
    posterior = json.loads((tmp_path / "posterior.json").read_text())
    assert posterior["kind"] == "gaussian"
    assert posterior["target_names"] == ["e", "log10_kappa"]
    assert list(pd.read_csv(tmp_path / "training_curve.csv").columns) == ["epoch", "train_nll", "cv_nll", "lr"]
    assert (tmp_path / "model.json").is_file()


def test_cupmap_from_preset(tmp_path):
    argv = ["cupmap", "--grid", "-0.3:-0.1:2,0:0:1", "--n", "2", "--out-dir", str(tmp_path)]
    assert dispatch(argv) == 0
    frame = pd.read_csv(tmp_path / "cupmap.csv")
    assert len(frame) == 2
    assert (frame["n"] == 2).all()


@pytest.mark.slow
def test_track_deterministic_controller(tmp_path):
    argv = ["track", "--controller", "det", "--trials", "5", "--out-dir", str(tmp_path)]
    assert dispatch(argv) == 0
    results = pd.read_csv(tmp_path / "tracking.csv")
    assert len(results) == 5
    assert set(results["controller"]) == {"det"}
    assert (tmp_path / "tracking_summary.csv").is_file()
