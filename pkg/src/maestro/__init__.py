"""maestro: real-time conducting engine.

Estimates the within-bar phase of conducting gestures from streamed 2D
upper-body keypoints and turns detected beats into playback-speed
commands for a variable-speed recording playback with fermata
semantics. Ships a synthetic motion generator, an LSTM phase estimator
trained with a monotonicity-regularized loss, a linear Kalman baseline,
the beat/speed controller, a playback simulator, evaluation metrics,
and a live TCP session server.
"""

__version__ = "0.1.0"

from .phase import phase_diff, phase_from_sincos, wrap_phase
from .score import Score, PhaseSample, Timebase, demo_score, label_timeline

__all__ = [
    "Score",
    "PhaseSample",
    "Timebase",
    "demo_score",
    "label_timeline",
    "phase_diff",
    "phase_from_sincos",
    "wrap_phase",
]
