"""Synthetic impact recordings for the three-microphone array."""

from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import RejectedInputError
from .array import AcousticConfig, MicArray, MultiChannelAudio

MAX_SOURCE_DISTANCE = 10.0  # m
TAIL = 0.05  # s of audio kept after the last arrival


def impulse_template(t: np.ndarray, cfg: AcousticConfig) -> np.ndarray:
    """Damped sinusoid with unit distance gain, zero outside [0, duration)."""
    t = np.asarray(t, dtype=float)
    inside = (t >= 0.0) & (t < cfg.impulse_duration)
    ts = np.where(inside, t, 0.0)
    wave = cfg.impulse_amplitude * np.exp(-ts / cfg.impulse_tau) * np.cos(2.0 * np.pi * cfg.impulse_frequency * ts)
    return np.where(inside, wave, 0.0)


def _add_arrival(channel: np.ndarray, arrival: float, gain: float, cfg: AcousticConfig) -> None:
    # the template is evaluated analytically at sample times, so fractional delays are exact
    fs = cfg.sample_rate
    first = max(int(np.floor(arrival * fs)), 0)
    last = min(int(np.ceil((arrival + cfg.impulse_duration) * fs)) + 1, channel.size)
    if first >= last:
        return
    t = np.arange(first, last) / fs - arrival
    channel[first:last] += gain * impulse_template(t, cfg)


def synthesize_events(
    impacts: Sequence[Tuple[np.ndarray, float]],
    array: MicArray,
    cfg: AcousticConfig,
    rng: Optional[np.random.Generator] = None,
    duration: Optional[float] = None,
) -> MultiChannelAudio:
    """Render a recording of several impacts given as (source position, strike time).

    Each channel receives the template delayed by distance / v_sound with a 1/r gain,
    plus the configured echoes and white noise.
    """
    rng = rng if rng is not None else np.random.default_rng()
    arrivals = []
    for source, strike_time in impacts:
        distances = array.distances(source)
        if np.any(distances > MAX_SOURCE_DISTANCE):
            raise RejectedInputError(f"source {np.asarray(source).tolist()} is more than {MAX_SOURCE_DISTANCE} m from the array")
        if strike_time < 0:
            raise RejectedInputError(f"strike time must be non-negative, got {strike_time}")
        arrivals.append((strike_time + distances / cfg.v_sound, 1.0 / np.maximum(distances, 1e-3)))

    echo_tail = max((delay for delay, _ in cfg.echoes), default=0.0)
    end = max((float(a.max()) for a, _ in arrivals), default=0.0) + cfg.impulse_duration + echo_tail + TAIL
    n_samples = int(np.ceil((duration if duration is not None else end) * cfg.sample_rate))
    channels = np.zeros((3, n_samples))

    for times, gains in arrivals:
        for mic in range(3):
            _add_arrival(channels[mic], times[mic], gains[mic], cfg)
            for delay, echo_gain in cfg.echoes:
                jitter = rng.uniform(-cfg.echo_jitter, cfg.echo_jitter) if cfg.echo_jitter else 0.0
                _add_arrival(channels[mic], times[mic] + delay + jitter, gains[mic] * echo_gain, cfg)

    if cfg.noise_std > 0:
        channels += rng.normal(0.0, cfg.noise_std, channels.shape)
    return MultiChannelAudio(cfg.sample_rate, np.clip(channels, -1.0, 1.0))


def synthesize_impact(
    source: np.ndarray,
    strike_time: float,
    array: MicArray,
    cfg: AcousticConfig,
    rng: Optional[np.random.Generator] = None,
    duration: Optional[float] = None,
) -> MultiChannelAudio:
    return synthesize_events([(np.asarray(source, dtype=float), strike_time)], array, cfg, rng, duration)
