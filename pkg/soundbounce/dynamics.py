"""Learned stochastic bounce-to-bounce transitions and lookahead to the robot plane.

A transition network maps the last inter-bounce interval and distance (t_i, d_i) to
a mixture over the next (t_next, d_next, alpha_next). Rollouts push mixture samples
through the bounce geometry until the ballistic arc crosses the robot plane.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy import stats

from . import constants
from .errors import HeadingUndefinedError, RejectedInputError, TrajectoryTerminated
from .features import extract_transition_pairs
from .mdn import GaussianD, MdnModel, MdnTrainConfig, load_checkpoint, sample_batched_mixture, save_checkpoint, train
from .physics import BounceEvent, SimParams, SurfacePlane, simulate_trajectory
from .toss import TossConfig, sample_toss

TRANSITION_INPUTS = ("t_i", "d_i")
TRANSITION_OUTPUTS = ("t_next", "d_next", "alpha_next")
MIN_INTERVAL = 1e-6  # s, shorter sampled flights are discarded
COVARIANCE_JITTER = 1e-12  # m^2


@dataclass
class TransitionModel:
    model: MdnModel
    provenance: Dict = field(default_factory=dict)

    def save(self, path: Union[str, Path]) -> Path:
        self.model.provenance = {**self.model.provenance, "transition": self.provenance}
        return save_checkpoint(self.model, path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TransitionModel":
        model = load_checkpoint(path)
        if model.input_dim != 2 or model.target_dim != 3:
            raise RejectedInputError(f"{path} is not a transition model checkpoint")
        return cls(model, model.provenance.get("transition", {}))


@dataclass(frozen=True)
class BounceBelief:
    """Gaussian summary of the predicted next bounce, plus the samples behind it."""

    mean: np.ndarray  # (2,) m
    covariance: np.ndarray  # (2, 2) m^2
    time_mean: float  # absolute s
    time_var: float  # s^2
    origin_time: float = 0.0
    positions: Optional[np.ndarray] = None
    intervals: Optional[np.ndarray] = None

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        cov = 0.5 * (cov + cov.T) + COVARIANCE_JITTER * np.eye(2)
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "covariance", cov)

    @property
    def interval_mean(self) -> float:
        return self.time_mean - self.origin_time

    def mahalanobis_sq(self, position: np.ndarray) -> float:
        delta = np.asarray(position, dtype=float) - self.mean
        return float(delta @ np.linalg.solve(self.covariance, delta))


@dataclass
class PlaneCrossingSamples:
    y: np.ndarray
    z: np.ndarray
    t: np.ndarray
    depth: np.ndarray
    # every sampled intermediate bounce as rows of (depth, x, y, t)
    bounces: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    plane_x: float = constants.ROBOT_PLANE_X

    def __len__(self) -> int:
        return self.y.size

    @property
    def empty(self) -> bool:
        return self.y.size == 0

    @property
    def mean(self) -> np.ndarray:
        if self.empty:
            raise RejectedInputError("no plane crossings were sampled")
        return np.array([self.y.mean(), self.z.mean(), self.t.mean()])

    @property
    def std(self) -> np.ndarray:
        if self.empty:
            raise RejectedInputError("no plane crossings were sampled")
        return np.array([self.y.std(), self.z.std(), self.t.std()])


def _sample_theta(posterior: GaussianD, rng: np.random.Generator) -> SimParams:
    theta = posterior.sample(1, rng)[0]
    return SimParams(e=float(np.clip(theta[0], 1e-3, 1.0)), log10_kappa=float(theta[1]))


def transition_pairs_from_posterior(
    theta_posterior: GaussianD,
    n_sims: int,
    toss: Optional[TossConfig] = None,
    n_bounces: int = constants.TRANSITION_BOUNCES,
    seed: Union[int, np.random.SeedSequence] = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Pool (t_i, d_i) -> (t_next, d_next, alpha_next) pairs from tossed trajectories."""
    if theta_posterior.dim != 2:
        raise RejectedInputError(f"theta posterior must be 2-D (e, log10 kappa), got {theta_posterior.dim}")
    toss = toss or TossConfig.noiseless()
    seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    plane = SurfacePlane.horizontal()
    inputs, outputs, failures = [], [], 0
    for child in seed_seq.spawn(n_sims):
        rng = np.random.default_rng(child)
        while True:
            params = _sample_theta(theta_posterior, rng)
            try:
                events, _ = simulate_trajectory(params, sample_toss(toss, rng), n_bounces, rng, plane)
                break
            except TrajectoryTerminated:
                failures += 1
        for pair in extract_transition_pairs(events):
            inputs.append(pair.input)
            outputs.append(pair.output)
    if failures:
        logger.warning(f"{failures} transition simulations failed and were resampled")
    return np.array(inputs), np.array(outputs)


def train_transition_model(
    theta_posterior: GaussianD,
    n_sims: int = constants.TRANSITION_SIMULATIONS,
    toss: Optional[TossConfig] = None,
    config: Optional[MdnTrainConfig] = None,
    n_bounces: int = constants.TRANSITION_BOUNCES,
    seed: Union[int, np.random.SeedSequence] = 0,
) -> TransitionModel:
    """Simulate tosses with theta drawn from the (truncated) posterior and fit the transition MDN."""
    x, y = transition_pairs_from_posterior(theta_posterior, n_sims, toss, n_bounces, seed)
    model = train(x, y, config, input_names=TRANSITION_INPUTS, target_names=TRANSITION_OUTPUTS)
    provenance = {
        "theta_mean": theta_posterior.mean.tolist(),
        "theta_variance": theta_posterior.variance.tolist(),
        "n_sims": n_sims,
        "n_pairs": int(x.shape[0]),
    }
    logger.info(f"Trained transition model on {x.shape[0]} pairs from {n_sims} tosses")
    return TransitionModel(model, provenance)


def _rotate(vectors: np.ndarray, angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    return np.stack([c * vectors[..., 0] - s * vectors[..., 1], s * vectors[..., 0] + c * vectors[..., 1]], axis=-1)


def _heading(previous: BounceEvent, current: BounceEvent) -> Tuple[np.ndarray, float, float]:
    delta = current.position - previous.position
    distance = float(np.linalg.norm(delta))
    if distance < constants.DEGENERATE_DISTANCE:
        raise HeadingUndefinedError("consecutive bounces coincide; heading is undefined")
    interval = current.time - previous.time
    if interval <= 0:
        raise RejectedInputError("bounces must be in time order")
    return delta / distance, distance, interval


def predict_next_bounce(
    model: TransitionModel,
    previous: BounceEvent,
    current: BounceEvent,
    n_samples: int = constants.BELIEF_SAMPLES,
    rng: Optional[np.random.Generator] = None,
) -> BounceBelief:
    """Belief over the next bounce from the last two.

    Each (t, d, alpha) sample places the next bounce at current + d * R(alpha) u,
    with u the unit heading from previous to current.
    """
    rng = rng if rng is not None else np.random.default_rng()
    heading, distance, interval = _heading(previous, current)
    weights, means, variances = model.model.mixture_arrays(np.array([interval, distance]))
    samples = sample_batched_mixture(weights, means, variances, n_samples, rng)[0]
    t_next = np.maximum(samples[:, 0], MIN_INTERVAL)
    d_next = np.maximum(samples[:, 1], 0.0)
    positions = current.position + d_next[:, None] * _rotate(heading[None, :], samples[:, 2])
    return BounceBelief(
        mean=positions.mean(axis=0),
        covariance=np.cov(positions.T),
        time_mean=current.time + float(t_next.mean()),
        time_var=float(t_next.var()),
        origin_time=current.time,
        positions=positions,
        intervals=t_next,
    )


def rollout_to_plane(
    model: TransitionModel,
    previous: BounceEvent,
    current: BounceEvent,
    plane_x: float = constants.ROBOT_PLANE_X,
    k: int = constants.ROLLOUT_DEPTH,
    n: int = constants.ROLLOUT_SAMPLES,
    rng: Optional[np.random.Generator] = None,
    gravity: float = constants.GRAVITY,
) -> PlaneCrossingSamples:
    """Recursive ancestral lookahead until sampled arcs cross x = plane_x.

    Every unfinished sample at depth j seeds n samples at depth j+1, so at most n^k
    leaves are produced. A crossing is placed on the straight ground track at the
    fraction f of the flight, with height z = g tau (t - tau) / 2 for tau = f t.
    """
    if k < 1 or n < 1:
        raise RejectedInputError(f"need k >= 1 and n >= 1, got k={k}, n={n}")
    rng = rng if rng is not None else np.random.default_rng()
    heading, distance, interval = _heading(previous, current)

    # frontier rows: position (2), heading (2), time, t_i, d_i
    pos = current.position[None, :]
    head = heading[None, :]
    time = np.array([current.time])
    t_i = np.array([interval])
    d_i = np.array([distance])

    ys, zs, ts, depths, bounces = [], [], [], [], []
    for depth in range(1, k + 1):
        if pos.shape[0] == 0:
            break
        weights, means, variances = model.model.mixture_arrays(np.column_stack([t_i, d_i]))
        draws = sample_batched_mixture(weights, means, variances, n, rng)
        m = pos.shape[0]
        t_next = draws[..., 0].reshape(-1)
        d_next = np.maximum(draws[..., 1].reshape(-1), 0.0)
        alpha = draws[..., 2].reshape(-1)
        parent_pos = np.repeat(pos, n, axis=0)
        parent_time = np.repeat(time, n)
        new_head = _rotate(np.repeat(head, n, axis=0), alpha)
        new_pos = parent_pos + d_next[:, None] * new_head

        valid = t_next > MIN_INTERVAL
        dx = new_pos[:, 0] - parent_pos[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            fraction = (plane_x - parent_pos[:, 0]) / dx
        crosses = valid & (np.abs(dx) > 0) & (fraction >= 0) & (fraction <= 1)
        if crosses.any():
            f = fraction[crosses]
            flight = t_next[crosses]
            tau = f * flight
            ys.append(parent_pos[crosses, 1] + f * (new_pos[crosses, 1] - parent_pos[crosses, 1]))
            zs.append(0.5 * gravity * tau * (flight - tau))
            ts.append(parent_time[crosses] + tau)
            depths.append(np.full(int(crosses.sum()), depth))

        keep = valid & ~crosses & (d_next > constants.DEGENERATE_DISTANCE)
        bounces.append(
            np.column_stack([np.full(int(keep.sum()), depth), new_pos[keep], parent_time[keep] + t_next[keep]])
        )
        pos, head = new_pos[keep], new_head[keep]
        time = parent_time[keep] + t_next[keep]
        t_i, d_i = t_next[keep], d_next[keep]
        logger.trace(f"rollout depth {depth}: {m} parents, {int(crosses.sum())} crossings, {pos.shape[0]} continue")

    def _cat(parts):
        return np.concatenate(parts) if parts else np.zeros(0)

    return PlaneCrossingSamples(
        y=_cat(ys),
        z=_cat(zs),
        t=_cat(ts),
        depth=_cat(depths).astype(int),
        bounces=np.concatenate(bounces) if bounces else np.zeros((0, 4)),
        plane_x=plane_x,
    )


def filter_outlier(
    belief: BounceBelief,
    observed: BounceEvent,
    confidence: float = constants.OUTLIER_CONFIDENCE,
) -> Tuple[bool, BounceEvent]:
    """Elliptic-envelope test of an observed bounce against the predicted belief.

    Inside the chi-square(2) quantile (boundary inclusive) the observation passes
    through. Otherwise its position becomes the belief mean; its time is kept when
    within 3 sigma of the predicted time, else replaced by the predicted mean.
    """
    if not 0.0 < confidence < 1.0:
        raise RejectedInputError(f"confidence must lie in (0, 1), got {confidence}")
    threshold = stats.chi2.ppf(confidence, df=2)
    if belief.mahalanobis_sq(observed.position) <= threshold * (1.0 + 1e-9):
        return False, observed
    time = observed.time
    if abs(observed.time - belief.time_mean) > 3.0 * np.sqrt(belief.time_var):
        time = belief.time_mean
    return True, BounceEvent(time, belief.mean.copy())


def write_rollout_csv(samples: PlaneCrossingSamples, path: Union[str, Path]) -> Path:
    """Dump sampled bounces and plane crossings as one long table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bounce_rows = pd.DataFrame(
        {
            "kind": "bounce",
            "depth": samples.bounces[:, 0].astype(int),
            "x": samples.bounces[:, 1],
            "y": samples.bounces[:, 2],
            "z": 0.0,
            "t": samples.bounces[:, 3],
        }
    )
    crossing_rows = pd.DataFrame(
        {"kind": "crossing", "depth": samples.depth, "x": samples.plane_x, "y": samples.y, "z": samples.z, "t": samples.t}
    )
    frame = pd.concat([bounce_rows, crossing_rows], ignore_index=True)
    frame.to_csv(path, index=False)
    return path
