"""Run configuration: defaults, YAML files, presets and key=value overrides.

Resolution order, later wins: constants, environment, --config YAML, --set pairs,
dedicated command-line flags.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import constants
from .acoustics import AcousticConfig
from .calibration import PriorBox, SimConfig
from .errors import ConfigError
from .features import FEATURE_SUBSETS
from .mdn import MdnTrainConfig
from .physics import CollisionMode, SimParams
from .toss import TossConfig
from .tracking import CupConfig, RobotPlane, get_available_controllers

PRESET_DIR = Path(__file__).resolve().parent.parent / "configs" / "presets"
ENV_LOG_LEVEL = "SOUNDBOUNCE_LOG_LEVEL"
ENV_WORKERS = "SOUNDBOUNCE_WORKERS"

# Load environment variables
load_dotenv()


class BallPreset(BaseModel):
    """Hidden parameters of a demo ball/surface pair"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    surface: str = "table"
    e: float = Field(gt=0.0, le=1.0)
    log10_kappa: float = Field(ge=constants.LOG10_KAPPA_BOUNDS[0], le=constants.LOG10_KAPPA_BOUNDS[1])
    ball_radius: float = Field(default=constants.BALL_RADIUS, ge=0.0)
    ball_mass: float = Field(default=constants.BALL_MASS, gt=0.0)
    k: int = Field(default=constants.ROLLOUT_DEPTH, ge=1, le=4)
    # toss tuned so the ball reaches the robot plane, usually after two or more bounces
    toss_vx: Tuple[float, float] = constants.TOSS_VX
    toss_height: Tuple[float, float] = constants.TOSS_HEIGHT
    plane_x: Optional[float] = Field(default=None, gt=0.0)
    authoritative: bool = False
    note: str = ""

    def toss_overrides(self) -> Dict[str, Any]:
        return {"vx_range": self.toss_vx, "height_range": self.toss_height}

    def sim_params(self, gravity: float = constants.GRAVITY, collision_mode: CollisionMode = "full") -> SimParams:
        return SimParams(
            e=self.e,
            log10_kappa=self.log10_kappa,
            gravity=gravity,
            ball_radius=self.ball_radius,
            ball_mass=self.ball_mass,
            collision_mode=collision_mode,
        )


class RunConfig(BaseModel):
    """Every tunable of every subcommand, as one flat key -> value mapping"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0
    out_dir: str = "results"
    workers: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    progress: bool = False

    # calibration prior and simulated drops
    prior_e_range: Tuple[float, float] = constants.PRIOR_E_RANGE
    prior_log10_kappa_range: Tuple[float, float] = constants.PRIOR_LOG10_KAPPA_RANGE
    drop_height: float = Field(default=constants.DROP_HEIGHT, gt=0.0)
    init_velocity_noise_sigma: float = Field(default=constants.INIT_VELOCITY_NOISE_SIGMA, ge=0.0)
    n_bounces: int = Field(default=constants.N_BOUNCES_FEATURES, ge=3)
    localization_sigma: float = Field(default=0.0, ge=0.0)
    obs_localization_sigma: float = Field(default=constants.OFFLINE_LOCALIZATION_SIGMA, ge=0.0)
    collision_mode: CollisionMode = constants.COLLISION_MODE
    gravity: float = Field(default=constants.GRAVITY, gt=0.0)
    n_train: int = Field(default=constants.N_TRAIN_SIMULATIONS, ge=1)
    n_test: int = Field(default=constants.N_TEST_SIMULATIONS, ge=1)
    features: str = "both"

    # simulate subcommand
    e: float = Field(default=0.8, gt=0.0, le=1.0)
    log10_kappa: float = Field(default=3.0, ge=constants.LOG10_KAPPA_BOUNDS[0], le=constants.LOG10_KAPPA_BOUNDS[1])
    drops: int = Field(default=1, ge=1)

    # mixture density network
    mdn_components: int = Field(default=constants.MDN_COMPONENTS, ge=1)
    mdn_hidden_sizes: Tuple[int, ...] = constants.MDN_HIDDEN_SIZES
    mdn_activation: str = constants.MDN_ACTIVATION
    mdn_optimizer: Literal["sgd", "adam", "adamw"] = "sgd"
    learning_rate: float = Field(default=constants.MDN_LEARNING_RATE, gt=0.0)
    momentum: float = Field(default=constants.MDN_MOMENTUM, ge=0.0, lt=1.0)
    epochs: int = Field(default=constants.MDN_EPOCHS, ge=1)
    batch_size: int = Field(default=constants.MDN_BATCH_SIZE, ge=1)
    grad_clip: Optional[float] = Field(default=constants.MDN_GRAD_CLIP, gt=0.0)
    variance_floor: float = Field(default=constants.MDN_VARIANCE_FLOOR, gt=0.0)

    # fusion
    fusion_counts: Tuple[int, ...] = (1, 10, 100)
    fusion_repeats: int = Field(default=20, ge=1)
    n_observations: int = Field(default=10, ge=1)

    # acoustics
    sample_rate: int = Field(default=constants.SAMPLE_RATE, gt=0)
    v_sound: float = Field(default=constants.SPEED_OF_SOUND, gt=0.0)
    snr_db: Optional[float] = 20.0
    echoes: List[Tuple[float, float]] = Field(default_factory=list)
    source_xy: Tuple[float, float] = (0.2, 0.3)

    # tracking
    ball: str = "ping_pong_table"
    controllers: Tuple[str, ...] = ("det", "stoch")
    trials: int = Field(default=constants.TRIALS_PER_BATCH, ge=1)
    batches: int = Field(default=1, ge=1)
    gain: float = Field(default=constants.CONTROLLER_GAIN, gt=0.0)
    rollout_samples: int = Field(default=constants.ROLLOUT_SAMPLES, ge=1)
    toss_localization_sigma: float = Field(default=constants.ONLINE_LOCALIZATION_SIGMA, ge=0.0)
    outlier_probability: float = Field(default=constants.OUTLIER_PROBABILITY, ge=0.0, le=1.0)
    outlier_from_bounce: int = Field(default=0, ge=0)
    # None: the preset's plane, else the default distance
    plane_x: Optional[float] = Field(default=None, gt=0.0)
    transition_sims: int = Field(default=constants.TRANSITION_SIMULATIONS, ge=1)
    transition_bounces: int = Field(default=constants.TRANSITION_BOUNCES, ge=3)
    # used when no calibrated posterior is supplied: Gaussian around the preset theta
    preset_theta_std: Tuple[float, float] = (0.01, 0.1)

    # ball-in-cup
    incline_degrees: float = Field(default=constants.INCLINE_DEGREES, gt=0.0, lt=90.0)
    cup_distance: float = Field(default=constants.CUP_DISTANCE, gt=0.0)
    cup_radius: float = Field(default=constants.CUP_RADIUS, gt=0.0)
    cup_height: float = Field(default=constants.CUP_HEIGHT, ge=0.0)
    grid_x: Tuple[float, float, int] = constants.CUP_GRID_X
    grid_y: Tuple[float, float, int] = constants.CUP_GRID_Y
    n_per_cell: int = Field(default=constants.CUP_TRIALS_PER_CELL, ge=1)

    @field_validator("features")
    @classmethod
    def _known_subset(cls, value: str) -> str:
        if value not in FEATURE_SUBSETS:
            raise ValueError(f"features must be one of {sorted(FEATURE_SUBSETS)}")
        return value

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return value.upper()

    @field_validator("controllers")
    @classmethod
    def _registered_controllers(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        unknown = [name for name in value if name.lower() not in get_available_controllers()]
        if unknown or not value:
            raise ValueError(f"controllers must be among {get_available_controllers()}, got {list(value)}")
        return value

    def prior(self) -> PriorBox:
        return _build(PriorBox, "prior", e_range=self.prior_e_range, log10_kappa_range=self.prior_log10_kappa_range)

    def sim_config(self) -> SimConfig:
        return _build(
            SimConfig,
            "sim",
            drop_height=self.drop_height,
            init_velocity_noise_sigma=self.init_velocity_noise_sigma,
            n_bounces=self.n_bounces,
            localization_sigma=self.localization_sigma,
            gravity=self.gravity,
            collision_mode=self.collision_mode,
        )

    def mdn_config(self) -> MdnTrainConfig:
        return _build(
            MdnTrainConfig,
            "mdn",
            n_components=self.mdn_components,
            hidden_sizes=self.mdn_hidden_sizes,
            activation=self.mdn_activation,
            optimizer=self.mdn_optimizer,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            epochs=self.epochs,
            batch_size=self.batch_size,
            grad_clip=self.grad_clip,
            variance_floor=self.variance_floor,
            seed=self.seed,
            progress=self.progress,
        )

    def acoustic_config(self) -> AcousticConfig:
        return _build(
            AcousticConfig,
            "acoustics",
            sample_rate=self.sample_rate,
            v_sound=self.v_sound,
            snr_db=self.snr_db,
            echoes=self.echoes,
        )

    def toss_config(self, preset: Optional[BallPreset] = None) -> TossConfig:
        return _build(
            TossConfig,
            "toss",
            localization_sigma=self.toss_localization_sigma,
            outlier_probability=self.outlier_probability,
            outlier_from_bounce=self.outlier_from_bounce,
            **(preset.toss_overrides() if preset is not None else {}),
        )

    def robot_plane(self, preset: Optional[BallPreset] = None) -> RobotPlane:
        plane_x = self.plane_x
        if plane_x is None:
            plane_x = preset.plane_x if preset is not None and preset.plane_x is not None else constants.ROBOT_PLANE_X
        return _build(RobotPlane, "plane", plane_x=plane_x)

    def cup_config(self) -> CupConfig:
        return _build(
            CupConfig,
            "cup",
            incline_degrees=self.incline_degrees,
            cup_distance=self.cup_distance,
            cup_radius=self.cup_radius,
            cup_height=self.cup_height,
            drop_height=self.drop_height,
        )


def _build(model_cls, prefix: str, **values: Any):
    try:
        return model_cls(**values)
    except ValidationError as e:
        raise _config_error(e, prefix) from e


def _config_error(error: ValidationError, prefix: str = "") -> ConfigError:
    first = error.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or "config"
    return ConfigError(f"{prefix}.{field}" if prefix else field, first["msg"])


def parse_overrides(pairs: Sequence[str]) -> Dict[str, Any]:
    """Turn ["key=value", ...] into a dict; values are parsed as YAML scalars/lists."""
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(pair, "override must look like key=value")
        key, raw = pair.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(pair, "override key is empty")
        overrides[key] = yaml.safe_load(raw) if raw.strip() else None
    return overrides


def environment_defaults() -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    if os.getenv(ENV_LOG_LEVEL):
        values["log_level"] = os.environ[ENV_LOG_LEVEL]
    if os.getenv(ENV_WORKERS):
        try:
            values["workers"] = int(os.environ[ENV_WORKERS])
        except ValueError:
            raise ConfigError("workers", f"{ENV_WORKERS} must be an integer, got {os.environ[ENV_WORKERS]!r}")
    return values


def read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file {path} does not exist")
    with open(path, "r") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path} must hold a flat key: value mapping")
    return data


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    use_environment: bool = True,
) -> RunConfig:
    values: Dict[str, Any] = environment_defaults() if use_environment else {}
    if path is not None:
        values.update(read_yaml(path))
    values.update({k: v for k, v in (overrides or {}).items()})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise _config_error(e) from e


def config_sha256(config: RunConfig) -> str:
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def available_presets(directory: Path = PRESET_DIR) -> List[str]:
    return sorted(p.stem for p in directory.glob("*.yaml"))


def load_preset(name_or_path: Union[str, Path], directory: Path = PRESET_DIR) -> BallPreset:
    """Load a ball preset by name (configs/presets/<name>.yaml) or by file path."""
    path = Path(name_or_path)
    if not path.suffix:
        path = directory / f"{name_or_path}.yaml"
    if not path.is_file():
        raise ConfigError("ball", f"unknown preset {name_or_path!r}; available: {available_presets(directory)}")
    data = read_yaml(path)
    data.setdefault("name", path.stem)
    try:
        return BallPreset(**data)
    except ValidationError as e:
        raise _config_error(e, f"ball[{path.stem}]") from e
