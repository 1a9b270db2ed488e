from typing import Optional

import numpy as np
from loguru import logger
from scipy import optimize

from .. import constants
from ..errors import LocalizationFailedError, RejectedInputError
from .array import MicArray, TimeDelays


def _ranges(s: np.ndarray, array: MicArray):
    diff = np.append(s, 0.0) - array.positions
    dist = np.linalg.norm(diff, axis=1)
    return dist, diff[:, :2] / np.maximum(dist, 1e-12)[:, None]


def localize(
    delays: TimeDelays,
    array: MicArray,
    v_sound: float = constants.SPEED_OF_SOUND,
    initial: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Strike position on the table plane (z = 0) from two range differences.

    Solves r1 = v phi_ab - (|s-a| - |s-b|), r2 = v phi_ac - (|s-a| - |s-c|) with
    Levenberg-Marquardt, starting inside the microphone hull so the solver lands on
    the intersection of the two hyperbolae nearest the table.

    Raises:
        RejectedInputError: delays exceed the largest microphone baseline
        LocalizationFailedError: the final residual exceeds the configured limit, or the
            solver stopped unconverged
    """
    if not delays.within_bounds(array, v_sound, slack=1e-6):
        raise RejectedInputError(f"delays {delays.as_array().tolist()} exceed the array baseline")
    targets = v_sound * delays.as_array()

    def residuals(s):
        dist, _ = _ranges(s, array)
        return targets - np.array([dist[0] - dist[1], dist[0] - dist[2]])

    def jacobian(s):
        _, unit = _ranges(s, array)
        return -np.vstack([unit[0] - unit[1], unit[0] - unit[2]])

    x0 = array.centroid if initial is None else np.asarray(initial, dtype=float)
    result = optimize.least_squares(
        residuals,
        x0,
        jac=jacobian,
        method="lm",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=constants.LOCALIZE_MAX_ITERATIONS,
    )
    residual = float(np.linalg.norm(result.fun))
    if not np.all(np.isfinite(result.x)) or residual > constants.LOCALIZE_RESIDUAL_LIMIT:
        logger.debug(f"localization stopped with status {result.status}: {result.message}")
        raise LocalizationFailedError(residual)
    # status <= 0: evaluation budget exhausted or improper input
    if not result.success and residual > constants.LOCALIZE_TOLERANCE:
        raise LocalizationFailedError(residual, f"solver stopped with status {result.status}: {result.message}")
    if residual > constants.LOCALIZE_TOLERANCE:
        logger.debug(f"localization residual {residual:.2e} m after {result.nfev} evaluations")
    return np.asarray(result.x, dtype=float)
