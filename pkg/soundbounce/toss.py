"""Hand-toss initial conditions and the noisy bounce observer used in tracking runs."""

from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import constants
from .physics import BallState, BounceEvent


class TossConfig(BaseModel):
    """Toss distribution plus the observation model applied to each bounce"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    height_range: Tuple[float, float] = constants.TOSS_HEIGHT
    y_range: Tuple[float, float] = constants.TOSS_Y
    start_x: float = 0.0
    vx_range: Tuple[float, float] = constants.TOSS_VX
    vy_sigma: float = Field(default=constants.TOSS_VY_SIGMA, ge=0.0)
    vz_sigma: float = Field(default=constants.TOSS_VZ_SIGMA, ge=0.0)
    localization_sigma: float = Field(default=constants.ONLINE_LOCALIZATION_SIGMA, ge=0.0)
    outlier_probability: float = Field(default=constants.OUTLIER_PROBABILITY, ge=0.0, le=1.0)
    outlier_magnitude: Tuple[float, float] = constants.OUTLIER_MAGNITUDE
    # bounces before this index (0-based) are never corrupted by outliers
    outlier_from_bounce: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _ranges(self) -> "TossConfig":
        for name in ("height_range", "y_range", "vx_range", "outlier_magnitude"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} lower bound {lo} exceeds upper bound {hi}")
        if self.height_range[0] <= 0:
            raise ValueError("toss height must be positive")
        return self

    @classmethod
    def noiseless(cls, **overrides) -> "TossConfig":
        return cls(**{"localization_sigma": 0.0, "outlier_probability": 0.0, **overrides})


def sample_toss(cfg: TossConfig, rng: np.random.Generator) -> BallState:
    """Release state of one toss toward +x."""
    position = np.array([cfg.start_x, rng.uniform(*cfg.y_range), rng.uniform(*cfg.height_range)])
    velocity = np.array(
        [rng.uniform(*cfg.vx_range), rng.normal(0.0, cfg.vy_sigma), rng.normal(0.0, cfg.vz_sigma)]
    )
    return BallState(position, velocity, 0.0)


def observe_bounces(
    events: Sequence[BounceEvent], cfg: TossConfig, rng: np.random.Generator
) -> Tuple[List[BounceEvent], np.ndarray]:
    """Localization noise on every bounce, plus occasional large outliers.

    Returns the observed events and a boolean mask of injected outliers.
    """
    observed, outliers = [], np.zeros(len(events), dtype=bool)
    for i, event in enumerate(events):
        # fixed draw count per bounce keeps streams aligned across configs
        noise = rng.normal(0.0, 1.0, 2) * cfg.localization_sigma
        corrupt = rng.random() < cfg.outlier_probability
        angle = rng.uniform(0.0, 2.0 * np.pi)
        magnitude = rng.uniform(*cfg.outlier_magnitude)
        if corrupt and i >= cfg.outlier_from_bounce:
            noise = noise + magnitude * np.array([np.cos(angle), np.sin(angle)])
            outliers[i] = True
        observed.append(BounceEvent(event.time, event.position + noise))
    return observed, outliers
