"""Likelihood-free calibration of the restitution/noise parameters.

Training pairs come from forward simulation with theta drawn uniformly from a prior
box. A mixture density network then maps observed features to a posterior
approximation. With a uniform prior the network output, truncated to the box, is
the posterior itself.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats
from tqdm import tqdm

from . import constants
from .errors import RejectedInputError, TrajectoryTerminated
from .features import FEATURE_NAMES, FEATURE_SUBSETS, FeatureVector, extract_features
from .mdn import (
    GaussianD,
    MdnModel,
    MdnTrainConfig,
    MixtureOfGaussians,
    mdn_forward,
    mixture_mode,
    multiply_gaussians,
    project_to_gaussian,
    train,
)
from .physics import BounceEvent, CollisionMode, SimParams, SurfacePlane, simulate_drop

THETA_NAMES = ("e", "log10_kappa")
DATASET_COLUMNS = ["theta_e", "theta_log10_kappa", *FEATURE_NAMES]
MAX_TRIAL_RETRIES = 100

SeedLike = Union[int, np.random.SeedSequence]


class PriorBox(BaseModel):
    """Uniform prior over theta = (e, log10 kappa)"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    e_range: Tuple[float, float] = constants.PRIOR_E_RANGE
    log10_kappa_range: Tuple[float, float] = constants.PRIOR_LOG10_KAPPA_RANGE

    @model_validator(mode="after")
    def _ordered(self) -> "PriorBox":
        for name in ("e_range", "log10_kappa_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ValueError(f"{name} must be a finite (lower, upper) pair, got {(lo, hi)}")
        if self.e_range[0] <= 0 or self.e_range[1] > 1:
            raise ValueError(f"e_range must lie inside (0, 1], got {self.e_range}")
        return self

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.e_range[0], self.log10_kappa_range[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.e_range[1], self.log10_kappa_range[1]])

    def bounds_for(self, target_names: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        idx = [_theta_index(name) for name in target_names]
        return self.lower[idx], self.upper[idx]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def contains(self, theta: np.ndarray) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))


class SimConfig(BaseModel):
    """How one calibration drop is simulated and observed"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    drop_height: float = Field(default=constants.DROP_HEIGHT, gt=0.0)
    init_velocity_noise_sigma: float = Field(default=constants.INIT_VELOCITY_NOISE_SIGMA, ge=0.0)
    n_bounces: int = Field(default=constants.N_BOUNCES_FEATURES, ge=3)
    localization_sigma: float = Field(default=0.0, ge=0.0)
    gravity: float = Field(default=constants.GRAVITY, gt=0.0)
    collision_mode: CollisionMode = constants.COLLISION_MODE


@dataclass
class CalibrationDataset:
    theta: np.ndarray  # (N, 2)
    features: np.ndarray  # (N, 4), columns FEATURE_NAMES
    seed: Optional[int] = None
    config: Dict = field(default_factory=dict)
    n_resampled: int = 0

    def __len__(self) -> int:
        return self.theta.shape[0]

    def feature_vectors(self) -> List[FeatureVector]:
        return [FeatureVector.from_array(row) for row in self.features]

    def subset(self, features: str = "both", targets: Sequence[str] = THETA_NAMES) -> Tuple[np.ndarray, np.ndarray]:
        if features not in FEATURE_SUBSETS:
            raise RejectedInputError(f"unknown feature subset '{features}'")
        x = self.features[:, list(FEATURE_SUBSETS[features])]
        y = self.theta[:, [_theta_index(name) for name in targets]]
        return x, y

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(np.column_stack([self.theta, self.features]), columns=DATASET_COLUMNS)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "CalibrationDataset":
        frame = pd.read_csv(path)
        missing = set(DATASET_COLUMNS) - set(frame.columns)
        if missing:
            raise RejectedInputError(f"{path} lacks columns {sorted(missing)}")
        return cls(
            theta=frame[DATASET_COLUMNS[:2]].to_numpy(dtype=float),
            features=frame[list(FEATURE_NAMES)].to_numpy(dtype=float),
        )


def _theta_index(name: str) -> int:
    if name not in THETA_NAMES:
        raise RejectedInputError(f"unknown target '{name}', expected one of {THETA_NAMES}")
    return THETA_NAMES.index(name)


def _seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def add_localization_noise(
    bounces: Sequence[BounceEvent], sigma: float, rng: np.random.Generator
) -> List[BounceEvent]:
    """Perturb every bounce position with isotropic Gaussian noise of std sigma (m)."""
    if sigma <= 0:
        return list(bounces)
    return [BounceEvent(b.time, b.position + rng.normal(0.0, sigma, 2)) for b in bounces]


def simulate_features(params: SimParams, sim: SimConfig, rng: np.random.Generator) -> FeatureVector:
    bounces = simulate_drop(
        params,
        drop_height=sim.drop_height,
        init_velocity_noise_sigma=sim.init_velocity_noise_sigma,
        n_bounces=sim.n_bounces,
        rng=rng,
        plane=SurfacePlane.horizontal(),
    )
    return extract_features(add_localization_noise(bounces, sim.localization_sigma, rng))


def _simulate_pair(args: Tuple[PriorBox, SimConfig, np.random.SeedSequence]) -> Tuple[np.ndarray, np.ndarray, int]:
    prior, sim, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    for failures in range(MAX_TRIAL_RETRIES):
        theta = prior.sample(rng)
        params = SimParams(
            e=theta[0], log10_kappa=theta[1], gravity=sim.gravity, collision_mode=sim.collision_mode
        )
        try:
            return theta, simulate_features(params, sim, rng).as_array(), failures
        except (TrajectoryTerminated, RejectedInputError):
            continue
    raise TrajectoryTerminated(f"{MAX_TRIAL_RETRIES} consecutive simulations failed")


def generate_dataset(
    prior: PriorBox,
    n: int,
    sim: Optional[SimConfig] = None,
    seed: SeedLike = 0,
    workers: int = 1,
    progress: bool = False,
) -> CalibrationDataset:
    """Draw n (theta, features) pairs, one independent stream per trial.

    Trial i always uses the i-th spawned child of the seed, so serial and parallel
    runs return identical datasets. Failed simulations are redrawn on the same
    stream and counted.
    """
    if n < 1:
        raise RejectedInputError(f"n must be >= 1, got {n}")
    sim = sim or SimConfig()
    seed_seq = _seed_sequence(seed)
    jobs = [(prior, sim, child) for child in seed_seq.spawn(n)]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(_simulate_pair, jobs, chunksize=64), total=n, disable=not progress))
    else:
        results = [_simulate_pair(job) for job in tqdm(jobs, desc="simulate", disable=not progress)]

    theta = np.array([r[0] for r in results])
    features = np.array([r[1] for r in results])
    n_resampled = int(sum(r[2] for r in results))
    if n_resampled:
        logger.warning(f"{n_resampled} simulations failed and were resampled")
    logger.info(f"Generated calibration dataset of {n} pairs (entropy {seed_seq.entropy})")
    return CalibrationDataset(
        theta=theta,
        features=features,
        seed=int(seed_seq.entropy) if isinstance(seed_seq.entropy, int) else None,
        config={"prior": prior.model_dump(mode="json"), "sim": sim.model_dump(mode="json")},
        n_resampled=n_resampled,
    )


def train_calibration_model(
    dataset: CalibrationDataset,
    features: str = "both",
    targets: Sequence[str] = THETA_NAMES,
    config: Optional[MdnTrainConfig] = None,
) -> MdnModel:
    x, y = dataset.subset(features, targets)
    names = [FEATURE_NAMES[i] for i in FEATURE_SUBSETS[features]]
    model = train(x, y, config, input_names=names, target_names=list(targets))
    model.provenance["features"] = features
    return model


def _model_input(model: MdnModel, x_obs: Union[FeatureVector, np.ndarray]) -> np.ndarray:
    if isinstance(x_obs, FeatureVector):
        values = x_obs.as_array()
        if model.input_dim == len(FEATURE_NAMES):
            return values
        if all(name in FEATURE_NAMES for name in model.input_names):
            return values[[FEATURE_NAMES.index(name) for name in model.input_names]]
        raise RejectedInputError(f"model inputs {model.input_names} are not calibration features")
    return np.asarray(x_obs, dtype=float)


def posterior_from_observation(
    model: MdnModel, x_obs: Union[FeatureVector, np.ndarray], prior: PriorBox
) -> MixtureOfGaussians:
    """q(theta | x_obs) truncated to the prior box.

    Observations outside the bounding box of the training features are still
    evaluated; the result carries extrapolated=True.
    """
    x = _model_input(model, x_obs)
    posterior = mdn_forward(model, x)
    lower, upper = prior.bounds_for(model.target_names)
    extrapolated = model.outside_training_hull(x)
    if extrapolated:
        logger.warning(f"observation {np.round(x, 4).tolist()} lies outside the training features")
    return MixtureOfGaussians(
        posterior.weights, posterior.means, posterior.variances, lower, upper, extrapolated
    )


def joint_posterior(
    model: MdnModel, observations: Sequence[Union[FeatureVector, np.ndarray]], prior: PriorBox
) -> GaussianD:
    """Fuse independent observations: product of projected per-observation posteriors.

    Factors are multiplied untruncated and only the product is truncated to the
    prior box.
    """
    if not observations:
        raise RejectedInputError("joint_posterior needs at least one observation")
    factors = [
        project_to_gaussian(posterior_from_observation(model, x, prior).truncated(None, None))
        for x in observations
    ]
    lower, upper = prior.bounds_for(model.target_names)
    return multiply_gaussians(factors).truncated(lower, upper)


def posterior_modes(model: MdnModel, x: np.ndarray, prior: PriorBox) -> np.ndarray:
    """Mode of the truncated posterior for every row of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lower, upper = prior.bounds_for(model.target_names)
    modes = []
    for row in x:
        mixture = mdn_forward(model, row)
        modes.append(mixture_mode(mixture, lower, upper))
    return np.array(modes)


def hdr_coverage(model: MdnModel, dataset: CalibrationDataset, prior: PriorBox, level: float = 0.9) -> float:
    """Fraction of points whose true theta falls in the level-HDR of the projected Gaussian."""
    x, y = dataset.subset(model.provenance.get("features", "both"), model.target_names)
    threshold = stats.chi2.ppf(level, model.target_dim)
    inside = 0
    for row, truth in zip(x, y):
        g = project_to_gaussian(posterior_from_observation(model, row, prior).truncated(None, None))
        inside += float(np.sum((truth - g.mean) ** 2 / g.variance)) <= threshold
    return inside / len(x)


def run_ablation(
    train_set: CalibrationDataset,
    test_set: CalibrationDataset,
    prior: Optional[PriorBox] = None,
    config: Optional[MdnTrainConfig] = None,
    subsets: Sequence[str] = ("time", "position", "both"),
) -> pd.DataFrame:
    """Mean absolute posterior-mode error for each (feature subset, target) cell.

    One single-target network is trained per cell. Columns: features, target, mae, n_test.
    """
    prior = prior or PriorBox()
    rows = []
    for features in subsets:
        for target in THETA_NAMES:
            model = train_calibration_model(train_set, features, (target,), config)
            x_test, y_test = test_set.subset(features, (target,))
            modes = posterior_modes(model, x_test, prior)
            mae = float(np.mean(np.abs(modes[:, 0] - y_test[:, 0])))
            logger.info(f"Ablation {features}/{target}: MAE {mae:.4f} over {len(y_test)} test points")
            rows.append({"features": features, "target": target, "mae": mae, "n_test": len(y_test)})
    return pd.DataFrame(rows, columns=["features", "target", "mae", "n_test"])


def observe_hidden_ball(
    params: SimParams,
    n: int,
    seed: SeedLike = 0,
    sim: Optional[SimConfig] = None,
    localization_sigma: float = constants.OFFLINE_LOCALIZATION_SIGMA,
) -> List[FeatureVector]:
    """Stand-in for recorded drops: n noisy observations of a ball with hidden params."""
    sim = (sim or SimConfig()).model_copy(update={"localization_sigma": localization_sigma})
    observations = []
    for child in _seed_sequence(seed).spawn(n):
        rng = np.random.default_rng(child)
        for _ in range(MAX_TRIAL_RETRIES):
            try:
                observations.append(simulate_features(params, sim, rng))
                break
            except TrajectoryTerminated:
                continue
        else:
            raise TrajectoryTerminated(f"{MAX_TRIAL_RETRIES} consecutive simulations failed")
    return observations


def run_fusion(
    model: MdnModel,
    params: SimParams,
    prior: Optional[PriorBox] = None,
    counts: Sequence[int] = (1, 10, 100),
    repeats: int = 20,
    seed: SeedLike = 0,
    sim: Optional[SimConfig] = None,
) -> pd.DataFrame:
    """Joint posterior after increasing observation counts of one hidden ball.

    Each repeat draws max(counts) observations and fuses nested prefixes of them.
    """
    prior = prior or PriorBox()
    truth = params.theta[[_theta_index(name) for name in model.target_names]]
    rows = []
    for repeat, child in enumerate(_seed_sequence(seed).spawn(repeats)):
        observations = observe_hidden_ball(params, max(counts), child, sim)
        for count in counts:
            posterior = joint_posterior(model, observations[:count], prior)
            mode = posterior.mode()
            row = {"count": count, "repeat": repeat}
            for i, name in enumerate(model.target_names):
                row[f"mean_{name}"] = float(posterior.mean[i])
                row[f"var_{name}"] = float(posterior.variance[i])
                row[f"error_{name}"] = float(abs(mode[i] - truth[i]))
            rows.append(row)
    frame = pd.DataFrame(rows)
    logger.info(f"Fusion over counts {list(counts)} with {repeats} repeats done")
    return frame
