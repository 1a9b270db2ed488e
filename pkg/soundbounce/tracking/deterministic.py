"""Closed-form tracking from the last two bounces and a known restitution."""

from typing import Any, Optional, Sequence

import numpy as np

from .. import constants
from ..errors import RejectedInputError
from ..physics import BounceEvent
from .base import register_controller
from .controller import Controller, MotionCommand, RobotPlane


def deterministic_controller_step(
    previous: BounceEvent,
    current: BounceEvent,
    e: float,
    plane: RobotPlane,
    current_z: Optional[float] = None,
    gravity: float = constants.GRAVITY,
) -> MotionCommand:
    """One step of the geometric-decay controller.

    Each flight keeps the heading and scales as d_next = e^2 d_i, t_next = e t_i.
    If the next flight reaches the plane (e^2 d_i > d_R) the paddle goes to the
    crossing (y_R, z_R) by t_R; otherwise it only tracks y_R until the next bounce.
    """
    if not 0 < e <= 1:
        raise RejectedInputError(f"restitution estimate must lie in (0, 1], got {e}")
    t_i = current.time - previous.time
    if t_i <= 0:
        raise RejectedInputError("bounces must be in time order")
    (x_prev, y_prev), (x_i, y_i) = previous.position, current.position
    dx = x_i - x_prev
    if abs(dx) < constants.DEGENERATE_DISTANCE:
        # heading parallel to the plane: follow the ball sideways
        return MotionCommand(target_y=y_i, target_z=current_z, deadline=current.time + e * t_i, lateral_only=True)

    y_r = (y_i - y_prev) / dx * (plane.plane_x - x_i) + y_i
    d_i = float(np.hypot(dx, y_i - y_prev))
    d_r = (plane.plane_x - x_i) * d_i / dx
    if d_r < 0:
        # moving away from the plane
        return MotionCommand(target_y=y_r, target_z=current_z, deadline=current.time + e * t_i, lateral_only=True)

    if e * e * d_i > d_r:
        t_r = d_r * t_i / (e * d_i)
        z_r = (e * gravity * t_i / 2.0) * t_r - 0.5 * gravity * t_r**2
        return MotionCommand(target_y=y_r, target_z=z_r, deadline=current.time + t_r)
    return MotionCommand(target_y=y_r, target_z=current_z, deadline=current.time + e * t_i, lateral_only=True)


@register_controller("det")
class DeterministicController(Controller):
    def __init__(self, plane: RobotPlane, e_estimate: float, gravity: float = constants.GRAVITY):
        super().__init__(plane)
        self.e_estimate = e_estimate
        self.gravity = gravity

    @classmethod
    def from_context(cls, plane: RobotPlane, **context: Any) -> "DeterministicController":
        if "e_estimate" not in context:
            raise ValueError("the deterministic controller needs 'e_estimate'")
        return cls(plane, float(context["e_estimate"]), context.get("gravity", constants.GRAVITY))

    def command(self, history: Sequence[BounceEvent], now: float, position: np.ndarray) -> Optional[MotionCommand]:
        if len(history) < 2:
            return MotionCommand(target_y=float(history[-1].position[1]), lateral_only=True)
        return deterministic_controller_step(
            history[-2], history[-1], self.e_estimate, self.plane, float(position[1]), self.gravity
        )

    def describe(self):
        return {"name": self.name, "e_estimate": self.e_estimate}
