"""Beat detection and the finite-state speed controller.

Turns the phase stream into discrete beats and beats into playback
speed commands. An upbeat is a single-step phase jump above a
threshold; a downbeat is the wrap across the bar line (previous phase
above the high threshold, current below the low one). The controller
cycles through three states:

* waiting_for_upbeat: speed 0, watching for the silent upbeat that
  starts (or restarts) the beat history.
* waiting_for_downbeat: active conducting; each downbeat either emits a
  speed command or, when the upcoming bar holds a fermata, puts the
  controller to sleep.
* sleep: speed 0 for a minimum wait after entering a fermata, then the
  beat history is discarded and we listen for the next upbeat.

Speed is the stretch factor s = (beat interval) / (next bar's original
duration): 1.0 reproduces the original tempo, larger is slower;
playback consumes 1/s as its rate.
"""

from __future__ import annotations

import enum
import json
import statistics
from dataclasses import dataclass, field

from .errors import ConfigError
from .score import Score


class FsmState(enum.Enum):
    WAITING_FOR_UPBEAT = "waiting_for_upbeat"
    WAITING_FOR_DOWNBEAT = "waiting_for_downbeat"
    SLEEP = "sleep"


class Strategy(enum.Enum):
    RAW = "raw"
    MEDIAN = "median"
    AVERAGE = "average"


@dataclass(frozen=True)
class ControllerConfig:
    """Detector thresholds and speed strategy; defaults are the shipped
    empirically-selected values."""

    upbeat_threshold: float = 0.5      # rad, single-step forward jump
    downbeat_high: float = 3.8         # rad, previous phase must exceed
    downbeat_low: float = 2.5          # rad, current phase must undercut
    sleep_steps: int = 10              # minimum fermata wait, control steps
    strategy: Strategy = Strategy.MEDIAN
    average_weights: tuple[float, float, float] = (1 / 2, 1 / 3, 1 / 6)
    rate_hz: float = 20.0

    def __post_init__(self):
        if isinstance(self.strategy, str):
            object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.downbeat_high <= self.downbeat_low:
            raise ConfigError("downbeat_high must exceed downbeat_low")
        if self.upbeat_threshold <= 0:
            raise ConfigError("upbeat_threshold must be positive")
        if abs(sum(self.average_weights) - 1.0) > 1e-9:
            raise ConfigError("average weights must sum to 1")
        if self.sleep_steps < 0:
            raise ConfigError("sleep_steps must be non-negative")
        if self.rate_hz <= 0:
            raise ConfigError("rate_hz must be positive")

    def to_dict(self) -> dict:
        return {
            "upbeat_threshold": self.upbeat_threshold,
            "downbeat_high": self.downbeat_high,
            "downbeat_low": self.downbeat_low,
            "sleep_steps": self.sleep_steps,
            "strategy": self.strategy.value,
            "average_weights": list(self.average_weights),
            "rate_hz": self.rate_hz,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerConfig":
        kwargs = dict(data)
        if "average_weights" in kwargs:
            kwargs["average_weights"] = tuple(kwargs["average_weights"])
        return cls(**kwargs)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ControllerConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SpeedCommand:
    """One emitted stretch factor.

    ``target_bar`` is the bar the triggering beat launches; playback
    halted in (or passing through) a hold bar jumps exactly onto its
    start. ``resume`` marks commands that restart playback out of a
    hold.
    """

    speed: float
    step: int
    target_bar: int
    resume: bool = False


@dataclass
class BeatEvent:
    step: int
    kind: str  # "upbeat" | "downbeat"


@dataclass
class ControllerState:
    fsm: FsmState = FsmState.WAITING_FOR_UPBEAT
    beat_history: list[int] = field(default_factory=list)  # newest first
    fermata_start: int | None = None
    last_phase: float | None = None
    speed: float = 0.0
    pending_resume: bool = True  # the next command leaves a hold
    conducted_bar: int = 0       # bar the conductor is currently beating

    def reset(self):
        self.fsm = FsmState.WAITING_FOR_UPBEAT
        self.beat_history = []
        self.fermata_start = None
        self.last_phase = None
        self.speed = 0.0
        self.pending_resume = True
        self.conducted_bar = 0


def detect_upbeat(phi_prev: float, phi_cur: float, cfg: ControllerConfig) -> bool:
    """Raw (unwrapped) forward jump above the threshold."""
    return (phi_cur - phi_prev) > cfg.upbeat_threshold


def detect_downbeat(phi_prev: float, phi_cur: float, cfg: ControllerConfig) -> bool:
    return phi_prev > cfg.downbeat_high and phi_cur < cfg.downbeat_low


def speed_from_history(
    history: list[int], bar_duration: float, cfg: ControllerConfig
) -> float | None:
    """Stretch factor from the newest-first beat history, or None when
    fewer than two beats exist (the caller keeps its prior command)."""
    if len(history) < 2:
        return None
    if bar_duration <= 0:
        raise ConfigError("bar duration must be positive")
    intervals = [
        (history[i] - history[i + 1]) / cfg.rate_hz for i in range(len(history) - 1)
    ]
    if cfg.strategy is Strategy.RAW or len(history) < 4:
        chosen = intervals[0]
    elif cfg.strategy is Strategy.MEDIAN:
        chosen = statistics.median(intervals[:3])
    else:
        chosen = sum(w * iv for w, iv in zip(cfg.average_weights, intervals[:3]))
    return chosen / bar_duration


def entering_bar(state: ControllerState, score: Score) -> int:
    """The bar a downbeat at this moment launches.

    Tracked on the conductor's side by counting beats: every downbeat
    enters the bar after the one currently conducted. Playback position
    would be one bar off whenever its quantized speed has drifted ahead
    of or behind the conductor, which is exactly when the fermata gate
    must not misfire.
    """
    return min(state.conducted_bar + 1, score.bar_count - 1)


def step(
    state: ControllerState,
    phase: float,
    k: int,
    score: Score,
    cfg: ControllerConfig,
) -> tuple[SpeedCommand | None, BeatEvent | None]:
    """Advance the FSM by one control step.

    Mutates ``state``; returns the emitted command (if any) and any
    detected beat.
    """
    prev = state.last_phase
    state.last_phase = phase
    if prev is None:
        return None, None
    command = None
    beat = None
    if state.fsm is FsmState.WAITING_FOR_UPBEAT:
        if detect_upbeat(prev, phase, cfg):
            state.beat_history = [k]
            state.fsm = FsmState.WAITING_FOR_DOWNBEAT
            beat = BeatEvent(step=k, kind="upbeat")
    elif state.fsm is FsmState.WAITING_FOR_DOWNBEAT:
        if detect_downbeat(prev, phase, cfg):
            beat = BeatEvent(step=k, kind="downbeat")
            target = entering_bar(state, score)
            if target in score.fermata_bars:
                state.fsm = FsmState.SLEEP
                state.fermata_start = k
                state.speed = 0.0
                state.conducted_bar = target
            else:
                state.beat_history.insert(0, k)
                state.conducted_bar = target
                speed = speed_from_history(
                    state.beat_history, score.duration_of(target), cfg
                )
                if speed is not None:
                    state.speed = speed
                    command = SpeedCommand(
                        speed=speed, step=k, target_bar=target,
                        resume=state.pending_resume,
                    )
                    state.pending_resume = False
    else:  # SLEEP
        if state.fermata_start is not None and k > state.fermata_start + cfg.sleep_steps:
            state.fsm = FsmState.WAITING_FOR_UPBEAT
            state.beat_history = []
            state.pending_resume = True
    return command, beat
