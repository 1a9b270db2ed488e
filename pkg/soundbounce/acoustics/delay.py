"""Time-delay estimators: phase correlation (offline) and threshold onsets (online)."""

from typing import Optional, Sequence, Union

import numpy as np

from .. import constants
from ..errors import NoDetection, NoSignalError, RejectedInputError
from .array import TimeDelays

MIN_PHASE_WINDOW = 0.020  # s


def phase_correlation_delay(
    sig_a: np.ndarray,
    sig_b: np.ndarray,
    sample_rate: float,
    max_tau: Optional[float] = None,
) -> float:
    """Delay of sig_a relative to sig_b in seconds (positive when a arrives later).

    Generalized cross-correlation with phase transform; the integer peak is refined
    by fitting a parabola through it and its two neighbours.
    """
    sig_a = np.asarray(sig_a, dtype=float)
    sig_b = np.asarray(sig_b, dtype=float)
    if sig_a.shape != sig_b.shape or sig_a.ndim != 1:
        raise RejectedInputError(f"windows must be equal-length 1-D arrays, got {sig_a.shape} and {sig_b.shape}")
    if sig_a.size < MIN_PHASE_WINDOW * sample_rate - 1e-9:
        raise RejectedInputError(f"phase correlation needs at least {MIN_PHASE_WINDOW * 1e3:.0f} ms of audio")

    n = 2 * sig_a.size
    cross = np.fft.rfft(sig_a, n=n) * np.conj(np.fft.rfft(sig_b, n=n))
    magnitude = np.abs(cross)
    if magnitude.max(initial=0.0) <= 1e-12:
        raise NoSignalError("flat cross-spectrum: the window is silent")
    cc = np.fft.irfft(cross / np.maximum(magnitude, 1e-12 * magnitude.max()), n=n)

    max_shift = sig_a.size - 1
    if max_tau is not None:
        max_shift = min(int(np.ceil(max_tau * sample_rate)) + 1, max_shift)
    cc = np.concatenate((cc[-max_shift:], cc[: max_shift + 1]))
    if np.ptp(cc) <= 1e-12:
        raise NoSignalError("flat correlation: no dominant delay")

    peak = int(np.argmax(cc))
    offset = 0.0
    if 0 < peak < cc.size - 1:
        left, centre, right = cc[peak - 1], cc[peak], cc[peak + 1]
        denom = left - 2.0 * centre + right
        if denom < 0:
            offset = 0.5 * (left - right) / denom
    return (peak - max_shift + offset) / sample_rate


def adaptive_threshold(
    history: np.ndarray,
    factor: float = constants.THRESHOLD_FACTOR,
    floor: float = constants.MIN_THRESHOLD,
) -> np.ndarray:
    """Per-channel onset threshold: factor x RMS of the preceding samples, never below floor."""
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if history.shape[1] == 0:
        return np.full(history.shape[0], floor)
    rms = np.sqrt(np.mean(history**2, axis=1))
    return np.maximum(factor * rms, floor)


def first_onset(signal: np.ndarray, threshold: float) -> Optional[int]:
    """Index of the first sample whose magnitude exceeds threshold, or None."""
    above = np.flatnonzero(np.abs(signal) > threshold)
    return int(above[0]) if above.size else None


def peak_detection_delay(
    buffers: np.ndarray,
    sample_rate: float,
    thresholds: Union[float, Sequence[float]] = constants.MIN_THRESHOLD,
) -> TimeDelays:
    """Onset-time differences across the channels of one buffer.

    Raises:
        NoDetection: some channel has no threshold crossing in this buffer
    """
    buffers = np.atleast_2d(np.asarray(buffers, dtype=float))
    if buffers.shape[0] != 3:
        raise RejectedInputError(f"expected 3 channels, got {buffers.shape[0]}")
    thresholds = np.broadcast_to(np.asarray(thresholds, dtype=float), (3,))
    onsets = [first_onset(channel, thr) for channel, thr in zip(buffers, thresholds)]
    if any(onset is None for onset in onsets):
        raise NoDetection("onset missing on at least one channel")
    return TimeDelays.from_arrivals(np.array(onsets) / sample_rate)
