from typing import List, Optional, Sequence, Tuple

import numpy as np

from .. import constants
from ..errors import RejectedInputError
from .controller import MotionCommand, RobotPlane


class EndEffector:
    """Paddle center moving in straight constant-velocity segments on the robot plane.

    Targets are clipped to the workspace and speeds capped at max_speed, so the
    logged path never leaves the workspace nor exceeds the speed limit.
    """

    def __init__(
        self,
        plane: RobotPlane,
        position: Optional[Sequence[float]] = None,
        paddle_radius: float = constants.PADDLE_RADIUS,
        max_speed: float = constants.MAX_EFFECTOR_SPEED,
        time: float = 0.0,
    ):
        if paddle_radius <= 0 or max_speed <= 0:
            raise RejectedInputError("paddle radius and max speed must be positive")
        self.plane = plane
        self.paddle_radius = paddle_radius
        self.max_speed = max_speed
        start = plane.center if position is None else position
        self.position = plane.clip(float(start[0]), float(start[1]))
        self.time = time
        self.target = self.position.copy()
        self.velocity = np.zeros(2)
        self.log: List[Tuple[float, float, float]] = [(time, *self.position)]

    def move_to(self, command: MotionCommand, now: float) -> None:
        self.advance(now)
        z = self.position[1] if command.target_z is None else command.target_z
        self.target = self.plane.clip(command.target_y, z)
        delta = self.target - self.position
        distance = float(np.linalg.norm(delta))
        if distance == 0.0:
            self.velocity = np.zeros(2)
            return
        remaining = (command.deadline - now) if command.deadline is not None else 0.0
        speed = self.max_speed if remaining <= 0 else min(distance / remaining, self.max_speed)
        self.velocity = delta / distance * speed

    def advance(self, t: float) -> None:
        if t <= self.time:
            return
        speed = float(np.linalg.norm(self.velocity))
        if speed > 0:
            arrival = self.time + float(np.linalg.norm(self.target - self.position)) / speed
            if arrival <= t:
                self.position = self.target.copy()
                self.velocity = np.zeros(2)
                if arrival > self.time:
                    self.log.append((arrival, *self.position))
            else:
                self.position = self.position + self.velocity * (t - self.time)
        self.time = t
        self.log.append((t, *self.position))

    def hits(self, y: float, z: float) -> bool:
        return bool(np.hypot(y - self.position[0], z - self.position[1]) <= self.paddle_radius)

    @property
    def energy(self) -> float:
        return trajectory_energy(self.log)


def trajectory_energy(log: Sequence[Tuple[float, float, float]]) -> float:
    """Mass-normalized kinetic energy integral: sum of |v|^2 / 2 * dt over logged segments."""
    points = np.asarray(log, dtype=float).reshape(-1, 3)
    if points.shape[0] < 2:
        return 0.0
    dt = np.diff(points[:, 0])
    step = np.linalg.norm(np.diff(points[:, 1:], axis=0), axis=1)
    moving = dt > 0
    return float(np.sum(0.5 * step[moving] ** 2 / dt[moving]))
