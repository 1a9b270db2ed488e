"""Observation features extracted from bounce sequences.

Features are emitted in raw physical units; standardization happens inside the
mixture density network.
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import constants
from .errors import InsufficientObservationError, RejectedInputError
from .physics import BounceEvent

FEATURE_NAMES = ("t_ratio", "d1", "d2", "alpha")

# column indices of each feature subset inside FeatureVector.as_array()
FEATURE_SUBSETS: Dict[str, Tuple[int, ...]] = {
    "time": (0,),
    "position": (1, 2, 3),
    "both": (0, 1, 2, 3),
}


@dataclass(frozen=True)
class FeatureVector:
    t_ratio: float
    d1: float
    d2: float
    alpha: float

    def as_array(self) -> np.ndarray:
        return np.array([self.t_ratio, self.d1, self.d2, self.alpha])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        t_ratio, d1, d2, alpha = (float(v) for v in values)
        return cls(t_ratio, d1, d2, alpha)


@dataclass(frozen=True)
class TransitionPair:
    t_i: float
    d_i: float
    t_next: float
    d_next: float
    alpha_next: float

    @property
    def input(self) -> np.ndarray:
        return np.array([self.t_i, self.d_i])

    @property
    def output(self) -> np.ndarray:
        return np.array([self.t_next, self.d_next, self.alpha_next])


def signed_angle(v1: np.ndarray, v2: np.ndarray) -> float:
    """Signed angle from v1 to v2 in (-pi, pi], counter-clockwise positive."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
    if not (np.isfinite(n1) and np.isfinite(n2)) or n1 == 0 or n2 == 0:
        raise RejectedInputError("signed_angle needs two non-zero finite vectors")
    cosine = np.clip(np.dot(v1, v2) / (n1 * n2), -1.0, 1.0)
    magnitude = float(np.arccos(cosine))
    cross = v1[0] * v2[1] - v1[1] * v2[0]
    return magnitude if cross >= 0 else -magnitude


def _turn_angle(p1: np.ndarray, p2: np.ndarray) -> float:
    if np.linalg.norm(p1) < constants.DEGENERATE_DISTANCE or np.linalg.norm(p2) < constants.DEGENERATE_DISTANCE:
        return 0.0
    return signed_angle(p1, p2)


def _check_bounces(bounces: Sequence[BounceEvent]) -> None:
    if len(bounces) < 3:
        raise InsufficientObservationError(f"need at least 3 bounces, got {len(bounces)}")
    times = np.array([b.time for b in bounces])
    if not np.all(np.diff(times) > 0):
        raise RejectedInputError("bounce times must be strictly increasing")


def extract_features(bounces: Sequence[BounceEvent]) -> FeatureVector:
    """Build X = [t2/t1, d1, d2, alpha] from the first three bounces."""
    _check_bounces(bounces)
    b1, b2, b3 = bounces[:3]
    t1 = b2.time - b1.time
    t2 = b3.time - b2.time
    p1 = b2.position - b1.position
    p2 = b3.position - b2.position
    return FeatureVector(
        t_ratio=t2 / t1,
        d1=float(np.linalg.norm(p1)),
        d2=float(np.linalg.norm(p2)),
        alpha=_turn_angle(p1, p2),
    )


def extract_transition_pairs(bounces: Sequence[BounceEvent]) -> List[TransitionPair]:
    """One (t_i, d_i) -> (t_next, d_next, alpha_next) pair per consecutive bounce triple."""
    _check_bounces(bounces)
    pairs = []
    for first, middle, last in zip(bounces, bounces[1:], bounces[2:]):
        p_i = middle.position - first.position
        p_next = last.position - middle.position
        pairs.append(
            TransitionPair(
                t_i=middle.time - first.time,
                d_i=float(np.linalg.norm(p_i)),
                t_next=last.time - middle.time,
                d_next=float(np.linalg.norm(p_next)),
                alpha_next=_turn_angle(p_i, p_next),
            )
        )
    return pairs


def feature_matrix(vectors: Sequence[FeatureVector], subset: str = "both") -> np.ndarray:
    """Stack feature vectors into an (N, len(subset)) array."""
    if subset not in FEATURE_SUBSETS:
        raise RejectedInputError(f"unknown feature subset '{subset}'")
    columns = list(FEATURE_SUBSETS[subset])
    return np.array([v.as_array() for v in vectors]).reshape(-1, 4)[:, columns]
