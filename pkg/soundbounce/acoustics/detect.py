"""Turn a three-channel recording into localized bounce events."""

from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Literal, Optional

import numpy as np
from loguru import logger

from ..errors import LocalizationFailedError, NoDetection, RejectedInputError
from ..physics import BounceEvent
from .array import AcousticConfig, MicArray, MultiChannelAudio, TimeDelays
from .delay import adaptive_threshold, first_onset, phase_correlation_delay
from .localize import localize

DetectionMode = Literal["offline", "online"]


@dataclass(frozen=True)
class OnsetDetection:
    """Per-channel onset sample indices (absolute) of one impact."""

    onsets: np.ndarray
    sample_rate: int

    @property
    def times(self) -> np.ndarray:
        return self.onsets / self.sample_rate

    @property
    def delays(self) -> TimeDelays:
        return TimeDelays.from_arrivals(self.times)


class OnlineDetector:
    """Streaming onset detector fed with fixed-length buffers.

    Keeps only the last noise_window seconds per channel as noise-floor history.
    A channel's onset may land one or more buffers after another's; the detection
    completes once every channel has crossed its threshold, and is dropped when the
    spread exceeds what the array geometry allows.
    """

    def __init__(self, array: MicArray, cfg: AcousticConfig):
        self.cfg = cfg
        self.sample_rate = cfg.sample_rate
        self.max_spread = int(np.ceil(array.max_baseline / cfg.v_sound * cfg.sample_rate)) + 1
        self.history: List[Deque[float]] = [deque(maxlen=cfg.samples(cfg.noise_window)) for _ in range(3)]
        self.position = 0
        self.pending: List[Optional[int]] = [None, None, None]
        self.refractory_until = 0

    def _reset_pending(self) -> None:
        self.pending = [None, None, None]

    def process(self, buffer: np.ndarray) -> OnsetDetection:
        """Consume one buffer (3, L).

        Raises:
            NoDetection: no impact completed in this buffer
        """
        buffer = np.atleast_2d(np.asarray(buffer, dtype=float))
        if buffer.shape[0] != 3:
            raise RejectedInputError(f"expected 3 channels, got {buffer.shape[0]}")
        start = self.position
        length = buffer.shape[1]
        warm = all(len(h) == h.maxlen for h in self.history)
        thresholds = adaptive_threshold(
            np.array([list(h) for h in self.history]) if warm else np.zeros((3, 0)),
            self.cfg.threshold_factor,
            self.cfg.min_threshold,
        )

        detection = None
        if warm:
            skip = max(self.refractory_until - start, 0)
            for mic in range(3):
                if self.pending[mic] is None and skip < length:
                    onset = first_onset(buffer[mic, skip:], thresholds[mic])
                    if onset is not None:
                        self.pending[mic] = start + skip + onset
            found = [p for p in self.pending if p is not None]
            if found and start + length - min(found) > self.max_spread and len(found) < 3:
                logger.debug(f"discarding partial onset at sample {min(found)}")
                self._reset_pending()
            elif len(found) == 3:
                onsets = np.array(self.pending, dtype=float)
                if onsets.max() - onsets.min() <= self.max_spread:
                    detection = OnsetDetection(onsets, self.sample_rate)
                    self.refractory_until = int(onsets.max()) + self.cfg.samples(self.cfg.refractory)
                else:
                    logger.debug("discarding onsets spread wider than the array allows")
                self._reset_pending()

        for mic in range(3):
            self.history[mic].extend(buffer[mic])
        self.position += length
        if detection is None:
            raise NoDetection(f"no complete onset in buffer at sample {start}")
        return detection


def detect_onsets(audio: MultiChannelAudio, array: MicArray, cfg: AcousticConfig) -> List[OnsetDetection]:
    detector = OnlineDetector(array, cfg)
    detections = []
    for _, block in audio.buffers(cfg.online_buffer):
        try:
            detections.append(detector.process(block))
        except NoDetection:
            continue
    return detections


def _offline_delays(audio: MultiChannelAudio, detection: OnsetDetection, array: MicArray, cfg: AcousticConfig) -> TimeDelays:
    start = max(int(detection.onsets.min()) - cfg.samples(cfg.phase_pre_roll), 0)
    stop = start + cfg.samples(cfg.phase_window)
    if stop > audio.n_samples:
        start, stop = max(audio.n_samples - cfg.samples(cfg.phase_window), 0), audio.n_samples
    window = audio.channels[:, start:stop]
    max_tau = array.max_baseline / cfg.v_sound
    return TimeDelays(
        phase_correlation_delay(window[0], window[1], audio.sample_rate, max_tau),
        phase_correlation_delay(window[0], window[2], audio.sample_rate, max_tau),
    )


def detect_bounce_events(
    audio: MultiChannelAudio,
    mode: DetectionMode = "offline",
    array: Optional[MicArray] = None,
    cfg: Optional[AcousticConfig] = None,
) -> List[BounceEvent]:
    """Segment at onsets, estimate delays, localize, and back out strike times.

    offline uses phase correlation over a window starting just before the onsets;
    online uses the onset differences directly and drops impacts that fail to
    localize.
    """
    array = array or MicArray.default()
    cfg = cfg or AcousticConfig(sample_rate=audio.sample_rate)
    if audio.n_channels != 3:
        raise RejectedInputError(f"expected 3 channels, got {audio.n_channels}")
    if audio.sample_rate != cfg.sample_rate:
        cfg = cfg.model_copy(update={"sample_rate": audio.sample_rate})

    events: List[BounceEvent] = []
    for detection in detect_onsets(audio, array, cfg):
        if mode == "offline":
            position = localize(_offline_delays(audio, detection, array, cfg), array, cfg.v_sound)
        elif mode == "online":
            try:
                position = localize(detection.delays, array, cfg.v_sound)
            except (LocalizationFailedError, RejectedInputError) as exc:
                logger.warning(f"dropping online event at {detection.times[0]:.4f}s: {exc}")
                continue
        else:
            raise RejectedInputError(f"unknown detection mode '{mode}'")
        strike_time = detection.times[0] - array.distances(position)[0] / cfg.v_sound
        if events and strike_time <= events[-1].time:
            logger.warning(f"dropping event at {strike_time:.4f}s that does not follow the previous one")
            continue
        events.append(BounceEvent(strike_time, position))
    logger.info(f"Detected {len(events)} bounce events ({mode})")
    return events
