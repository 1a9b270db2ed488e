"""Sample-based tracking: filter the newest bounce, roll out, move in proportion to confidence."""

from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .. import constants
from ..dynamics import (
    BounceBelief,
    PlaneCrossingSamples,
    TransitionModel,
    filter_outlier,
    predict_next_bounce,
    rollout_to_plane,
)
from ..errors import HeadingUndefinedError
from ..physics import BounceEvent
from .base import register_controller
from .controller import Controller, MotionCommand, RobotPlane


def step_fraction(gain: float, sigma: float) -> float:
    """clamp(c / sigma, 0, 1); a collapsed spread counts as full confidence."""
    if sigma <= 1e-12:
        return 1.0
    return float(np.clip(gain / sigma, 0.0, 1.0))


def stochastic_controller_step(
    history: Sequence[BounceEvent],
    model: TransitionModel,
    plane: RobotPlane,
    position: np.ndarray,
    gain: float = constants.CONTROLLER_GAIN,
    belief: Optional[BounceBelief] = None,
    rng: Optional[np.random.Generator] = None,
    n: int = constants.ROLLOUT_SAMPLES,
    k: int = constants.ROLLOUT_DEPTH,
    confidence: float = constants.OUTLIER_CONFIDENCE,
) -> Tuple[MotionCommand, Optional[BounceBelief], list]:
    """One control step after a new bounce.

    Args:
        history: observed bounces, oldest first; the newest is checked against belief
        belief: prediction for the newest bounce made at the previous step

    Returns:
        (command, belief for the next bounce, effective history)
    """
    rng = rng if rng is not None else np.random.default_rng()
    history = list(history)
    position = np.asarray(position, dtype=float)
    if len(history) < 2:
        return MotionCommand(target_y=float(history[-1].position[1]), lateral_only=True), None, history

    if belief is not None:
        is_outlier, effective = filter_outlier(belief, history[-1], confidence)
        if is_outlier:
            logger.debug(f"bounce at {history[-1].time:.3f}s rejected as outlier")
            history[-1] = effective

    previous, current = history[-2], history[-1]
    try:
        next_belief = predict_next_bounce(model, previous, current, rng=rng)
        crossings: PlaneCrossingSamples = rollout_to_plane(model, previous, current, plane.plane_x, k, n, rng)
    except HeadingUndefinedError:
        return MotionCommand(target_y=float(current.position[1]), lateral_only=True), None, history

    if crossings.empty:
        return (
            MotionCommand(target_y=float(next_belief.mean[1]), deadline=next_belief.time_mean, lateral_only=True),
            next_belief,
            history,
        )

    mean = crossings.mean
    std = crossings.std
    fy = step_fraction(gain, std[0])
    fz = step_fraction(gain, std[1])
    target = position + np.array([fy, fz]) * (mean[:2] - position)
    return MotionCommand(target_y=float(target[0]), target_z=float(target[1]), deadline=float(mean[2])), next_belief, history


@register_controller("stoch")
class StochasticController(Controller):
    def __init__(
        self,
        plane: RobotPlane,
        transition_model: TransitionModel,
        gain: float = constants.CONTROLLER_GAIN,
        n: int = constants.ROLLOUT_SAMPLES,
        k: int = constants.ROLLOUT_DEPTH,
        confidence: float = constants.OUTLIER_CONFIDENCE,
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__(plane)
        self.transition_model = transition_model
        self.gain = gain
        self.n = n
        self.k = k
        self.confidence = confidence
        self.rng = rng if rng is not None else np.random.default_rng()
        self.belief: Optional[BounceBelief] = None
        self.effective: list = []
        self.rejected: List[int] = []

    @classmethod
    def from_context(cls, plane: RobotPlane, **context: Any) -> "StochasticController":
        if context.get("transition_model") is None:
            raise ValueError("the stochastic controller needs a 'transition_model'")
        return cls(
            plane,
            context["transition_model"],
            gain=context.get("gain", constants.CONTROLLER_GAIN),
            n=context.get("n", constants.ROLLOUT_SAMPLES),
            k=context.get("k", constants.ROLLOUT_DEPTH),
            confidence=context.get("confidence", constants.OUTLIER_CONFIDENCE),
            rng=context.get("rng"),
        )

    def reset(self, rng: Optional[np.random.Generator] = None) -> None:
        if rng is not None:
            self.rng = rng
        self.belief = None
        self.effective = []
        self.rejected = []

    def command(self, history: Sequence[BounceEvent], now: float, position: np.ndarray) -> Optional[MotionCommand]:
        # earlier bounces stay as filtered at their own step
        self.effective = self.effective[: len(history) - 1] + [history[-1]]
        command, self.belief, self.effective = stochastic_controller_step(
            self.effective,
            self.transition_model,
            self.plane,
            position,
            self.gain,
            self.belief,
            self.rng,
            self.n,
            self.k,
            self.confidence,
        )
        if self.effective[-1] is not history[-1]:
            # replaced by the belief mean
            self.rejected.append(len(history) - 1)
        return command

    def rejected_bounces(self) -> List[int]:
        return list(self.rejected)

    def describe(self):
        return {"name": self.name, "gain": self.gain, "n": self.n, "k": self.k, "confidence": self.confidence}
