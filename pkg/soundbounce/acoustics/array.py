"""Microphone geometry, acoustic settings and multi-channel audio containers."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import soundfile as sf
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .. import constants
from ..errors import RejectedInputError


@dataclass(frozen=True)
class MicArray:
    """Three microphones; rows of positions are mics A, B, C in table coordinates (m)."""

    positions: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float)
        if positions.shape != (3, 3) or not np.all(np.isfinite(positions)):
            raise RejectedInputError(f"mic positions must be a finite 3x3 array, got shape {positions.shape}")
        (ax, ay), (bx, by), (cx, cy) = positions[:, :2]
        area = 0.5 * abs((bx - ax) * (cy - ay) - (cx - ax) * (by - ay))
        if area < 1e-6:
            raise RejectedInputError("microphones are collinear in the horizontal plane")
        object.__setattr__(self, "positions", positions)

    @classmethod
    def default(cls, table_size: float = constants.TABLE_SIZE, height: float = constants.MIC_HEIGHT) -> "MicArray":
        """Three corners of a square table, raised to height."""
        return cls(np.array([[0.0, 0.0, height], [table_size, 0.0, height], [0.0, table_size, height]]))

    @property
    def centroid(self) -> np.ndarray:
        return self.positions[:, :2].mean(axis=0)

    @property
    def max_baseline(self) -> float:
        p = self.positions
        return float(max(np.linalg.norm(p[i] - p[j]) for i in range(3) for j in range(i + 1, 3)))

    def distances(self, source: np.ndarray) -> np.ndarray:
        """Distance from a source (2-vector on the table, or 3-vector) to each mic."""
        source = np.asarray(source, dtype=float)
        if source.shape == (2,):
            source = np.append(source, 0.0)
        return np.linalg.norm(self.positions - source, axis=1)

    def to_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(json.dumps({"positions": self.positions.tolist()}, indent=2))
        return path

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "MicArray":
        payload = json.loads(Path(path).read_text())
        if "positions" not in payload:
            raise RejectedInputError(f"{path} has no 'positions' entry")
        return cls(np.asarray(payload["positions"], dtype=float))


class AcousticConfig(BaseModel):
    """Propagation, synthesis and detection settings"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    v_sound: float = Field(default=constants.SPEED_OF_SOUND, gt=0.0)
    sample_rate: int = Field(default=constants.SAMPLE_RATE, gt=0)
    impulse_frequency: float = Field(default=constants.IMPULSE_FREQUENCY, gt=0.0)
    impulse_tau: float = Field(default=constants.IMPULSE_TAU, gt=0.0)
    impulse_amplitude: float = Field(default=constants.IMPULSE_AMPLITUDE, gt=0.0)
    impulse_duration: float = Field(default=constants.IMPULSE_DURATION, gt=0.0)
    # white-noise level in dB below the template amplitude at 1 m; None disables noise
    snr_db: Optional[float] = None
    # discrete reflections as (extra delay s, relative gain)
    echoes: List[Tuple[float, float]] = Field(default_factory=list)
    echo_jitter: float = Field(default=0.0, ge=0.0)
    phase_window: float = Field(default=constants.PHASE_WINDOW, ge=0.020)
    phase_pre_roll: float = Field(default=constants.PHASE_PRE_ROLL, ge=0.0)
    online_buffer: float = Field(default=constants.ONLINE_BUFFER, gt=0.0)
    threshold_factor: float = Field(default=constants.THRESHOLD_FACTOR, gt=0.0)
    noise_window: float = Field(default=constants.NOISE_WINDOW, gt=0.0)
    min_threshold: float = Field(default=constants.MIN_THRESHOLD, gt=0.0)
    refractory: float = Field(default=constants.REFRACTORY, ge=0.0)

    @field_validator("echoes")
    @classmethod
    def _positive_echo_delays(cls, echoes: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        for delay, _ in echoes:
            if delay <= 0:
                raise ValueError(f"echo delays must be positive, got {delay}")
        return echoes

    @property
    def noise_std(self) -> float:
        if self.snr_db is None:
            return 0.0
        return self.impulse_amplitude / 10.0 ** (self.snr_db / 20.0)

    def samples(self, seconds: float) -> int:
        return int(round(seconds * self.sample_rate))


@dataclass(frozen=True)
class TimeDelays:
    """Arrival-time differences phi_ab = t_a - t_b and phi_ac = t_a - t_c (s)."""

    phi_ab: float
    phi_ac: float

    @classmethod
    def from_arrivals(cls, arrivals: Sequence[float]) -> "TimeDelays":
        t_a, t_b, t_c = (float(t) for t in arrivals)
        return cls(t_a - t_b, t_a - t_c)

    @classmethod
    def from_source(cls, source: np.ndarray, array: MicArray, v_sound: float = constants.SPEED_OF_SOUND) -> "TimeDelays":
        """Exact delays for a source position."""
        return cls.from_arrivals(array.distances(source) / v_sound)

    def as_array(self) -> np.ndarray:
        return np.array([self.phi_ab, self.phi_ac])

    def within_bounds(self, array: MicArray, v_sound: float, slack: float = 1e-9) -> bool:
        limit = array.max_baseline / v_sound + slack
        return bool(np.all(np.abs(self.as_array()) <= limit))


@dataclass(frozen=True)
class MultiChannelAudio:
    sample_rate: int
    channels: np.ndarray  # (n_channels, n_samples)

    def __post_init__(self):
        channels = np.atleast_2d(np.asarray(self.channels, dtype=float))
        if self.sample_rate <= 0:
            raise RejectedInputError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "channels", channels)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def buffers(self, seconds: float):
        """Yield (start_sample, block) pairs of consecutive fixed-length blocks."""
        size = max(int(round(seconds * self.sample_rate)), 1)
        for start in range(0, self.n_samples, size):
            yield start, self.channels[:, start : start + size]

    def write_wav(self, path: Union[str, Path]) -> Path:
        """16-bit PCM WAV, one channel per microphone."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if np.max(np.abs(self.channels), initial=0.0) > 1.0:
            logger.warning(f"clipping audio above full scale while writing {path}")
        sf.write(str(path), np.clip(self.channels, -1.0, 1.0).T, self.sample_rate, subtype="PCM_16")
        return path

    @classmethod
    def read_wav(cls, path: Union[str, Path]) -> "MultiChannelAudio":
        data, sample_rate = sf.read(str(path), dtype="float64", always_2d=True)
        if data.shape[1] != 3:
            raise RejectedInputError(f"{path} has {data.shape[1]} channels, expected 3")
        return cls(int(sample_rate), data.T)
