"""Ball-in-cup: drops onto an incline that runs down to the floor, with a cup beyond it.

The incline occupies x < 0 and meets the floor (z = 0) along x = 0. The cup stands
on the floor with its opening centred at (cup_distance, 0, cup_height).
"""

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from .. import constants
from ..errors import RejectedInputError, TrajectoryTerminated
from ..mdn import GaussianD
from ..physics import BallState, SimParams, SurfacePlane, apply_collision, step_to_next_bounce

MAX_CUP_BOUNCES = 12


class CupConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    incline_degrees: float = Field(default=constants.INCLINE_DEGREES, gt=0.0, lt=90.0)
    incline_length: float = Field(default=constants.TABLE_SIZE, gt=0.0)
    cup_distance: float = Field(default=constants.CUP_DISTANCE, gt=0.0)
    cup_radius: float = Field(default=constants.CUP_RADIUS, gt=0.0)
    cup_height: float = Field(default=constants.CUP_HEIGHT, ge=0.0)
    drop_height: float = Field(default=constants.DROP_HEIGHT, gt=0.0)
    drop_noise_sigma: float = Field(default=constants.CUP_DROP_NOISE_SIGMA, ge=0.0)
    max_bounces: int = Field(default=MAX_CUP_BOUNCES, ge=1)


def grid_axis(axis: Sequence[float]) -> np.ndarray:
    start, stop, count = axis
    return np.linspace(float(start), float(stop), int(count))


def _descending_crossing(state: BallState, height: float, horizon: float, gravity: float) -> Optional[BallState]:
    """State where the arc passes downward through z = height within horizon seconds."""
    a, b, c = -0.5 * gravity, state.velocity[2], state.position[2] - height
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return None
    # the later root is the descending one since a < 0
    dt = (-b - np.sqrt(disc)) / (2.0 * a)
    if dt <= 0 or dt > horizon:
        return None
    return state.at(dt, gravity)


def drop_into_cup(
    params: SimParams,
    drop_xy: Sequence[float],
    rng: np.random.Generator,
    cfg: Optional[CupConfig] = None,
) -> bool:
    """Simulate one drop; True when the ball falls through the cup opening."""
    cfg = cfg or CupConfig()
    incline = SurfacePlane.inclined(cfg.incline_degrees)
    floor = SurfacePlane.horizontal()
    x, y = float(drop_xy[0]), float(drop_xy[1])
    if not -cfg.incline_length <= x < 0:
        raise RejectedInputError(f"drop x={x} is not above the incline")
    position = np.array([x, y, incline.height_at(x, y) + cfg.drop_height])
    velocity = rng.normal(0.0, 1.0, 3) * cfg.drop_noise_sigma
    state = BallState(position, velocity, 0.0)
    cup_center = np.array([cfg.cup_distance, 0.0])

    for _ in range(cfg.max_bounces):
        candidates = []
        for surface, on_surface in ((incline, lambda p: p[0] < 0), (floor, lambda p: p[0] >= 0)):
            try:
                impact, _ = step_to_next_bounce(state, surface, params.gravity)
            except (TrajectoryTerminated, RejectedInputError):
                continue
            if on_surface(impact.position):
                candidates.append((impact.time, impact, surface))
        if not candidates:
            return False
        _, impact, surface = min(candidates, key=lambda item: item[0])

        crossing = _descending_crossing(state, cfg.cup_height, impact.time - state.time, params.gravity)
        if crossing is not None and np.linalg.norm(crossing.position[:2] - cup_center) <= cfg.cup_radius:
            return True
        if impact.position[0] > cfg.cup_distance + cfg.cup_radius:
            return False
        try:
            velocity = apply_collision(impact.velocity, surface, params, rng)
        except TrajectoryTerminated:
            return False
        state = BallState(impact.position, velocity, impact.time)
    return False


def _sample_params(posterior: GaussianD, rng: np.random.Generator, gravity: float) -> SimParams:
    theta = posterior.sample(1, rng)[0]
    return SimParams(e=float(np.clip(theta[0], 1e-3, 1.0)), log10_kappa=float(theta[1]), gravity=gravity)


def run_cup_experiment(
    theta_posterior: GaussianD,
    grid_x: Union[Sequence[float], np.ndarray] = constants.CUP_GRID_X,
    grid_y: Union[Sequence[float], np.ndarray] = constants.CUP_GRID_Y,
    n_per_cell: int = constants.CUP_TRIALS_PER_CELL,
    seed: Union[int, np.random.SeedSequence] = 0,
    cfg: Optional[CupConfig] = None,
    gravity: float = constants.GRAVITY,
    progress: bool = False,
) -> pd.DataFrame:
    """Success counts over a grid of drop positions, theta ~ posterior per drop.

    grid_x/grid_y are either (start, stop, count) triples or explicit coordinates.
    Columns: x, y, successes, n.
    """
    cfg = cfg or CupConfig()
    if theta_posterior.dim != 2:
        raise RejectedInputError(f"theta posterior must be 2-D, got {theta_posterior.dim}")
    if n_per_cell < 1:
        raise RejectedInputError(f"n_per_cell must be >= 1, got {n_per_cell}")
    xs = grid_axis(grid_x) if len(grid_x) == 3 and not isinstance(grid_x, np.ndarray) else np.asarray(grid_x, float)
    ys = grid_axis(grid_y) if len(grid_y) == 3 and not isinstance(grid_y, np.ndarray) else np.asarray(grid_y, float)
    if np.any(xs < -cfg.incline_length) or np.any(xs >= 0):
        raise RejectedInputError("drop grid must lie above the incline")

    seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    cells: List[Tuple[float, float]] = [(x, y) for x in xs for y in ys]
    rows = []
    for (x, y), cell_seed in tqdm(list(zip(cells, seed_seq.spawn(len(cells)))), desc="cup", disable=not progress):
        successes = 0
        for drop_seed in cell_seed.spawn(n_per_cell):
            rng = np.random.default_rng(drop_seed)
            successes += drop_into_cup(_sample_params(theta_posterior, rng, gravity), (x, y), rng, cfg)
        rows.append({"x": float(x), "y": float(y), "successes": int(successes), "n": n_per_cell})
    frame = pd.DataFrame(rows, columns=["x", "y", "successes", "n"])
    logger.info(f"Cup map: {int(frame['successes'].sum())} successes over {len(cells) * n_per_cell} drops")
    return frame
