"""Event-driven simulation of a ball bouncing on a plane.

Flight between impacts is pure ballistics, so impacts are found analytically as
roots of the plane-intersection quadratic. Each collision dissipates energy through
the restitution ratio e and perturbs the exit direction with a von Mises-Fisher
draw of concentration kappa.
"""

from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import constants
from .errors import RejectedInputError, TrajectoryTerminated
from .vmf import sample_vmf

CollisionMode = Literal["full", "normal"]


class SimParams(BaseModel):
    """Inferred parameters theta = {e, log10 kappa} plus fixed physical constants"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    e: float = Field(gt=0.0, le=1.0)
    log10_kappa: float = Field(ge=constants.LOG10_KAPPA_BOUNDS[0], le=constants.LOG10_KAPPA_BOUNDS[1])
    gravity: float = Field(default=constants.GRAVITY, gt=0.0)
    ball_radius: float = Field(default=constants.BALL_RADIUS, ge=0.0)
    ball_mass: float = Field(default=constants.BALL_MASS, gt=0.0)
    collision_mode: CollisionMode = constants.COLLISION_MODE

    @field_validator("log10_kappa")
    @classmethod
    def _finite_kappa(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError("log10_kappa must be finite")
        return value

    @property
    def kappa(self) -> float:
        return float(10.0**self.log10_kappa)

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.e, self.log10_kappa])


@dataclass(frozen=True)
class BallState:
    position: np.ndarray
    velocity: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise RejectedInputError("ball state must be finite")

    def at(self, dt: float, gravity: float) -> "BallState":
        """Ballistic state dt seconds later."""
        g = np.array([0.0, 0.0, -gravity])
        return BallState(
            self.position + self.velocity * dt + 0.5 * g * dt * dt,
            self.velocity + g * dt,
            self.time + dt,
        )


@dataclass(frozen=True)
class BounceEvent:
    """One ball-surface collision: time and position in surface coordinates"""

    time: float
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(2))


@dataclass(frozen=True)
class SurfacePlane:
    point: np.ndarray
    unit_normal: np.ndarray
    _basis: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        point = np.asarray(self.point, dtype=float).reshape(3)
        normal = np.asarray(self.unit_normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
            raise RejectedInputError(f"plane normal must be unit length, got {normal}")
        # in-plane axes: e1 follows the downhill direction (x for a level plane)
        e1 = np.array([1.0, 0.0, 0.0]) - normal[0] * normal
        if np.linalg.norm(e1) < 1e-9:
            e1 = np.array([0.0, 1.0, 0.0]) - normal[1] * normal
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(normal, e1)
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "unit_normal", normal)
        object.__setattr__(self, "_basis", np.vstack([e1, e2]))

    @classmethod
    def horizontal(cls, height: float = 0.0) -> "SurfacePlane":
        return cls(np.array([0.0, 0.0, height]), np.array([0.0, 0.0, 1.0]))

    @classmethod
    def inclined(cls, degrees: float, point: Sequence[float] = (0.0, 0.0, 0.0)) -> "SurfacePlane":
        """Plane tilted about the y axis, descending toward +x."""
        a = np.radians(degrees)
        return cls(np.asarray(point, dtype=float), np.array([np.sin(a), 0.0, np.cos(a)]))

    def signed_distance(self, position: np.ndarray) -> float:
        return float(np.dot(self.unit_normal, np.asarray(position) - self.point))

    def project(self, position: np.ndarray) -> np.ndarray:
        return position - self.signed_distance(position) * self.unit_normal

    def to_plane_coords(self, position: np.ndarray) -> np.ndarray:
        return self._basis @ (np.asarray(position) - self.point)

    def height_at(self, x: float, y: float) -> float:
        """z coordinate of the plane above (x, y)."""
        n = self.unit_normal
        if abs(n[2]) < 1e-12:
            raise RejectedInputError("vertical plane has no height function")
        return float(self.point[2] - (n[0] * (x - self.point[0]) + n[1] * (y - self.point[1])) / n[2])

    def reflect(self, vector: np.ndarray) -> np.ndarray:
        return vector - 2.0 * np.dot(vector, self.unit_normal) * self.unit_normal


def _smallest_positive_root(a: float, b: float, c: float) -> Optional[float]:
    if abs(a) < 1e-15:
        if b < 0:
            return -c / b
        return None
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return None
    q = -0.5 * (b + np.copysign(np.sqrt(disc), b))
    roots = [r for r in (q / a, c / q if q != 0 else np.inf) if np.isfinite(r) and r > 0]
    return min(roots) if roots else None


def step_to_next_bounce(
    state: BallState, plane: SurfacePlane, gravity: float = constants.GRAVITY
) -> Tuple[BallState, BounceEvent]:
    """Advance a ballistic state to its next impact with the plane.

    The signed distance along the arc is c + b t + a t^2 with
    c = n.(p - q), b = n.v and a = -g n_z / 2; the impact is its smallest positive
    root. A ball resting on the plane with separating velocity lands again at -b/a.
    """
    n = plane.unit_normal
    c = plane.signed_distance(state.position)
    b = float(np.dot(n, state.velocity))
    a = -0.5 * gravity * n[2]

    if c < -1e-9:
        raise RejectedInputError(f"ball starts {-c:.3e} m below the plane")
    if c <= 1e-12:
        if b <= 0 or a >= 0:
            raise TrajectoryTerminated("ball on the plane without a returning arc")
        dt = -b / a
    else:
        dt = _smallest_positive_root(a, b, c)
        if dt is None:
            raise TrajectoryTerminated("ballistic arc never meets the plane")

    impact = state.at(dt, gravity)
    impact = BallState(plane.project(impact.position), impact.velocity, impact.time)
    return impact, BounceEvent(impact.time, plane.to_plane_coords(impact.position))


def apply_collision(
    v_in: np.ndarray,
    plane: SurfacePlane,
    params: SimParams,
    rng: np.random.Generator,
    max_resamples: int = constants.VMF_MAX_RESAMPLES,
) -> np.ndarray:
    """Exit velocity of a collision: restitution, then a vMF directional perturbation.

    In "full" mode u0 = e * reflect(v_in) so |output| = e |v_in| exactly; "normal"
    mode scales only the normal component of the reflection.
    """
    v_in = np.asarray(v_in, dtype=float)
    n = plane.unit_normal
    v_n = float(np.dot(v_in, n))
    if v_n >= 0:
        raise RejectedInputError("collision requires an incoming velocity")

    reflected = plane.reflect(v_in)
    if params.collision_mode == "full":
        u0 = params.e * reflected
    else:
        u0 = reflected + (params.e - 1.0) * np.dot(reflected, n) * n
    speed = float(np.linalg.norm(u0))
    mu = u0 / speed

    for _ in range(max_resamples):
        direction = sample_vmf(mu, params.kappa, rng)
        if np.dot(direction, n) > 0:
            return speed * direction

    direction = plane.reflect(direction)
    if np.dot(direction, n) <= 0:
        raise TrajectoryTerminated("perturbed exit direction stays tangent to the plane")
    logger.debug(f"exit direction mirrored after {max_resamples} sub-surface draws")
    return speed * direction


def simulate_trajectory(
    params: SimParams,
    initial: BallState,
    n_bounces: int,
    rng: np.random.Generator,
    plane: Optional[SurfacePlane] = None,
) -> Tuple[List[BounceEvent], List[BallState]]:
    """Run n_bounces impacts; returns events and the exit state after each impact."""
    plane = plane or SurfacePlane.horizontal()
    events: List[BounceEvent] = []
    exits: List[BallState] = []
    state = initial
    for _ in range(n_bounces):
        impact, event = step_to_next_bounce(state, plane, params.gravity)
        velocity = apply_collision(impact.velocity, plane, params, rng)
        state = BallState(impact.position, velocity, impact.time)
        events.append(event)
        exits.append(state)
    return events, exits


def simulate_drop(
    params: SimParams,
    drop_height: float = constants.DROP_HEIGHT,
    init_velocity_noise_sigma: float = constants.INIT_VELOCITY_NOISE_SIGMA,
    n_bounces: int = constants.N_BOUNCES_FEATURES,
    rng: Optional[np.random.Generator] = None,
    plane: Optional[SurfacePlane] = None,
    start_xy: Sequence[float] = (0.0, 0.0),
) -> List[BounceEvent]:
    """Drop a ball from drop_height above the plane and return its first bounces.

    The initial velocity is drawn from an isotropic Gaussian N(0, sigma^2 I).
    """
    if n_bounces < 3:
        raise RejectedInputError(f"n_bounces must be at least 3, got {n_bounces}")
    rng = rng if rng is not None else np.random.default_rng()
    plane = plane or SurfacePlane.horizontal()
    x, y = float(start_xy[0]), float(start_xy[1])
    position = np.array([x, y, plane.height_at(x, y) + drop_height])
    velocity = rng.normal(0.0, 1.0, 3) * init_velocity_noise_sigma
    events, _ = simulate_trajectory(params, BallState(position, velocity, 0.0), n_bounces, rng, plane)
    return events
