from pathlib import Path

import pytest
import yaml

from soundbounce.config import (
    ENV_LOG_LEVEL,
    ENV_WORKERS,
    RunConfig,
    available_presets,
    config_sha256,
    load_preset,
    load_run_config,
    parse_overrides,
)
from soundbounce.errors import ConfigError

QUICK = Path(__file__).resolve().parent.parent / "configs" / "quick.yaml"


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv(ENV_LOG_LEVEL, raising=False)
    monkeypatch.delenv(ENV_WORKERS, raising=False)


def test_parse_overrides():
    overrides = parse_overrides(["epochs=5", "mdn-hidden-sizes=[8, 8]", "snr_db=", "features=time"])
    assert overrides == {"epochs": 5, "mdn_hidden_sizes": [8, 8], "snr_db": None, "features": "time"}


@pytest.mark.parametrize("pair", ["epochs", "=3"])
def test_malformed_override(pair):
    with pytest.raises(ConfigError):
        parse_overrides([pair])


def test_defaults_follow_constants():
    cfg = load_run_config()
    assert cfg.prior().e_range == (0.55, 0.95)
    assert cfg.robot_plane().plane_x == 0.85
    assert cfg.mdn_config().n_components == 6


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"seed": 3, "epochs": 10}))
    cfg = load_run_config(path, {"epochs": 12})
    assert cfg.seed == 3
    assert cfg.epochs == 12


def test_quick_config_loads():
    cfg = load_run_config(QUICK)
    assert cfg.seed == 7
    assert cfg.n_train == 600


def test_environment_defaults(monkeypatch):
    monkeypatch.setenv(ENV_WORKERS, "3")
    monkeypatch.setenv(ENV_LOG_LEVEL, "debug")
    cfg = load_run_config()
    assert cfg.workers == 3
    assert cfg.log_level == "DEBUG"
    assert load_run_config(overrides={"workers": 1}).workers == 1
    assert load_run_config(use_environment=False).workers == 1


def test_bad_environment_value(monkeypatch):
    monkeypatch.setenv(ENV_WORKERS, "many")
    with pytest.raises(ConfigError) as info:
        load_run_config()
    assert info.value.field == "workers"


@pytest.mark.parametrize(
    "overrides, field",
    [
        ({"epochs": 0}, "epochs"),
        ({"features": "speed"}, "features"),
        ({"unknown_key": 1}, "unknown_key"),
        ({"controllers": ["det", "pid"]}, "controllers"),
        ({"log10_kappa": 400.0}, "log10_kappa"),
    ],
)
def test_validation_names_the_field(overrides, field):
    with pytest.raises(ConfigError) as info:
        load_run_config(overrides=overrides)
    assert info.value.field == field


def test_sub_config_errors_are_prefixed():
    cfg = RunConfig(prior_e_range=(0.9, 0.5))
    with pytest.raises(ConfigError) as info:
        cfg.prior()
    assert info.value.field.startswith("prior")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.yaml")


def test_presets():
    assert available_presets() == ["moon_table", "ping_pong_asphalt", "ping_pong_table", "tennis_table"]
    preset = load_preset("ping_pong_table")
    assert preset.e == 0.88
    assert not preset.authoritative
    params = preset.sim_params()
    assert params.kappa == pytest.approx(1e4)
    for name in available_presets():
        assert 1 <= load_preset(name).k <= 4


def test_unknown_preset():
    with pytest.raises(ConfigError) as info:
        load_preset("bowling_ball")
    assert info.value.field == "ball"


def test_config_hash_is_stable():
    assert config_sha256(load_run_config(QUICK)) == config_sha256(load_run_config(QUICK))
    assert config_sha256(RunConfig(seed=1)) != config_sha256(RunConfig(seed=2))


def test_preset_toss_and_plane():
    cfg = RunConfig()
    moon = load_preset("moon_table")
    assert cfg.robot_plane(moon).plane_x == 0.9
    assert cfg.toss_config(moon).vx_range == moon.toss_vx
    assert cfg.toss_config(moon).outlier_probability == cfg.outlier_probability
    ping_pong = load_preset("ping_pong_table")
    assert cfg.robot_plane(ping_pong).plane_x == 0.85
    assert RunConfig(plane_x=1.1).robot_plane(moon).plane_x == 1.1
