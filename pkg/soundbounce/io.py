"""CSV/JSON persistence for bounce sequences and posteriors."""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from .errors import RejectedInputError
from .mdn import GaussianD, MixtureOfGaussians, project_to_gaussian
from .physics import BounceEvent

BOUNCE_COLUMNS = ["trial_id", "bounce_idx", "t", "x", "y"]
POSTERIOR_FORMAT = "soundbounce-posterior/1"

PathLike = Union[str, Path]


def bounces_to_frame(trials: Sequence[Sequence[BounceEvent]]) -> pd.DataFrame:
    rows = [
        (trial_id, idx, event.time, event.position[0], event.position[1])
        for trial_id, events in enumerate(trials)
        for idx, event in enumerate(events)
    ]
    return pd.DataFrame(rows, columns=BOUNCE_COLUMNS)


def write_bounces_csv(trials: Sequence[Sequence[BounceEvent]], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bounces_to_frame(trials).to_csv(path, index=False, float_format="%.17g")
    return path


def read_bounces_csv(path: PathLike) -> List[List[BounceEvent]]:
    """Bounce sequences grouped by trial_id and ordered by bounce_idx."""
    frame = pd.read_csv(path)
    missing = set(BOUNCE_COLUMNS) - set(frame.columns)
    if missing:
        raise RejectedInputError(f"{path} lacks columns {sorted(missing)}")
    trials = []
    for _, group in frame.sort_values(["trial_id", "bounce_idx"]).groupby("trial_id", sort=True):
        events = [BounceEvent(float(row.t), np.array([row.x, row.y], dtype=float)) for row in group.itertuples()]
        if any(b.time <= a.time for a, b in zip(events, events[1:])):
            raise RejectedInputError(f"bounce times in {path} are not strictly increasing")
        trials.append(events)
    return trials


def _bounds_to_json(bounds: Optional[np.ndarray]) -> Optional[List[Optional[float]]]:
    if bounds is None:
        return None
    # json has no infinity; unbounded sides are null
    return [float(v) if np.isfinite(v) else None for v in bounds]


def _bounds_from_json(values: Optional[List[Optional[float]]], fill: float) -> Optional[np.ndarray]:
    if values is None:
        return None
    return np.array([fill if v is None else v for v in values], dtype=float)


def posterior_to_dict(
    posterior: Union[GaussianD, MixtureOfGaussians], target_names: Optional[Sequence[str]] = None
) -> Dict[str, Any]:
    if isinstance(posterior, GaussianD):
        body = {"kind": "gaussian", "mean": posterior.mean.tolist(), "variance": posterior.variance.tolist()}
    elif isinstance(posterior, MixtureOfGaussians):
        body = {
            "kind": "mixture",
            "weights": posterior.weights.tolist(),
            "means": posterior.means.tolist(),
            "variances": posterior.variances.tolist(),
            "extrapolated": posterior.extrapolated,
        }
    else:
        raise RejectedInputError(f"cannot serialize {type(posterior).__name__} as a posterior")
    return {
        "format": POSTERIOR_FORMAT,
        **body,
        "lower": _bounds_to_json(posterior.lower),
        "upper": _bounds_to_json(posterior.upper),
        "target_names": list(target_names) if target_names is not None else None,
    }


def posterior_from_dict(data: Dict[str, Any]) -> Union[GaussianD, MixtureOfGaussians]:
    if data.get("format") != POSTERIOR_FORMAT:
        raise RejectedInputError(f"unsupported posterior format {data.get('format')!r}")
    lower = _bounds_from_json(data.get("lower"), -np.inf)
    upper = _bounds_from_json(data.get("upper"), np.inf)
    if data["kind"] == "gaussian":
        return GaussianD(np.asarray(data["mean"]), np.asarray(data["variance"]), lower, upper)
    if data["kind"] == "mixture":
        return MixtureOfGaussians(
            np.asarray(data["weights"]),
            np.asarray(data["means"]),
            np.asarray(data["variances"]),
            lower,
            upper,
            bool(data.get("extrapolated", False)),
        )
    raise RejectedInputError(f"unknown posterior kind {data['kind']!r}")


def write_posterior_json(
    posterior: Union[GaussianD, MixtureOfGaussians],
    path: PathLike,
    target_names: Optional[Sequence[str]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(posterior_to_dict(posterior, target_names), indent=2, sort_keys=True))
    logger.info(f"Posterior written to {path}")
    return path


def read_posterior_json(path: PathLike) -> Union[GaussianD, MixtureOfGaussians]:
    return posterior_from_dict(json.loads(Path(path).read_text()))


def read_gaussian_posterior(path: PathLike) -> GaussianD:
    """Load a posterior file as one Gaussian, moment-matching a stored mixture."""
    posterior = read_posterior_json(path)
    if isinstance(posterior, MixtureOfGaussians):
        return project_to_gaussian(posterior)
    return posterior
