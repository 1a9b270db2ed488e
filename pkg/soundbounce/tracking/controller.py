from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .. import constants
from ..physics import BounceEvent


class RobotPlane(BaseModel):
    """Vertical plane x = plane_x with a rectangular (y, z) workspace"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    plane_x: float = constants.ROBOT_PLANE_X
    y_bounds: Tuple[float, float] = constants.WORKSPACE_Y
    z_bounds: Tuple[float, float] = constants.WORKSPACE_Z

    @model_validator(mode="after")
    def _nonempty(self) -> "RobotPlane":
        if not (self.y_bounds[0] < self.y_bounds[1] and self.z_bounds[0] < self.z_bounds[1]):
            raise ValueError(f"workspace bounds must be nonempty, got y={self.y_bounds} z={self.z_bounds}")
        return self

    @property
    def center(self) -> np.ndarray:
        return np.array([sum(self.y_bounds) / 2.0, sum(self.z_bounds) / 2.0])

    def contains(self, y: float, z: float) -> bool:
        return self.y_bounds[0] <= y <= self.y_bounds[1] and self.z_bounds[0] <= z <= self.z_bounds[1]

    def clip(self, y: float, z: float) -> np.ndarray:
        return np.array([np.clip(y, *self.y_bounds), np.clip(z, *self.z_bounds)])


@dataclass(frozen=True)
class MotionCommand:
    """Move the paddle center to (target_y, target_z) by the absolute time deadline.

    z_target None keeps the current height; deadline None means as fast as allowed.
    """

    target_y: float
    target_z: Optional[float] = None
    deadline: Optional[float] = None
    lateral_only: bool = False


class Controller(ABC):
    """Base class for ball-tracking controllers"""

    name = "controller"

    def __init__(self, plane: RobotPlane):
        self.plane = plane

    @classmethod
    @abstractmethod
    def from_context(cls, plane: RobotPlane, **context: Any) -> "Controller":
        """Build the controller from whatever the harness knows about the ball."""

    def reset(self, rng: Optional[np.random.Generator] = None) -> None:
        """Forget per-trial state; stochastic controllers also take a fresh stream."""

    def rejected_bounces(self) -> Sequence[int]:
        """Indices of observed bounces discarded as outliers during the current trial."""
        return ()

    @abstractmethod
    def command(self, history: Sequence[BounceEvent], now: float, position: np.ndarray) -> Optional[MotionCommand]:
        """
        Decide the next paddle motion after a new bounce was observed

        Args:
            history: observed bounces so far, oldest first
            now: current time (s), the time of the newest bounce
            position: current paddle center (y, z)

        Returns:
            A motion command, or None to keep the current motion
        """

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name}
