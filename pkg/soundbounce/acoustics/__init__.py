from .array import AcousticConfig, MicArray, MultiChannelAudio, TimeDelays
from .delay import adaptive_threshold, peak_detection_delay, phase_correlation_delay
from .detect import OnlineDetector, OnsetDetection, detect_bounce_events, detect_onsets
from .localize import localize
from .synth import impulse_template, synthesize_events, synthesize_impact

__all__ = [
    "AcousticConfig",
    "MicArray",
    "MultiChannelAudio",
    "OnlineDetector",
    "OnsetDetection",
    "TimeDelays",
    "adaptive_threshold",
    "detect_bounce_events",
    "detect_onsets",
    "impulse_template",
    "localize",
    "peak_detection_delay",
    "phase_correlation_delay",
    "synthesize_events",
    "synthesize_impact",
]
