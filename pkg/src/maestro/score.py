"""Score/timeline model: bars, durations, fermatas, and phase labels.

Conventions
-----------
* Bars are indexed from 0. Bar 0 is always the preparation bar: the
  stretch of recording before the first played bar, conducted as a wait
  followed by a silent upbeat. It is never listed among the fermata
  bars but shares their hold-and-resume playback semantics.
* Within a bar the phase ramps linearly from 0 to 2*pi. Bars with a
  hold (fermatas and the preparation bar) ramp to ``HOLD_PHASE``, stay
  flat for the hold, then complete to 2*pi through the silent upbeat.
* The upbeat segment uses a steep ease-in so that, sampled at control
  rate, its onset produces a single large phase step. That is what the
  beat detector keys on; a linear upbeat ramp would be indistinguishable
  from ordinary in-bar progression.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, InvalidAnnotationError
from .phase import TWO_PI

# Phase value held during fermata waits and the preparation bar.
HOLD_PHASE = 1.5 * math.pi
# Upbeat shape: a snap of UPBEAT_SNAP radians over the first
# UPBEAT_SNAP_FRAC of the segment (the lift - large enough that one
# sampled step at 20 Hz clears the 0.5 rad upbeat threshold even when
# the grid straddles the onset), then a slow glide that stops
# UPBEAT_END_GAP short of 2*pi. The remaining gap is crossed at the
# resume downbeat itself, which recreates the regular-bar strike.
UPBEAT_SNAP = 1.15
UPBEAT_SNAP_FRAC = 0.05
UPBEAT_END_GAP = 0.35

SCORE_FORMAT_VERSION = 1


class PhaseSample(NamedTuple):
    """A (bar, phase) pair; phase in [0, 2*pi)."""

    bar: int
    phase: float


@dataclass(frozen=True)
class Timebase:
    """A clock: 60 Hz recorded frames ('t') or 20 Hz control steps ('k')."""

    rate_hz: float
    symbol: str = "k"

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ConfigError("timebase rate must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz


RECORDED_60HZ = Timebase(60.0, "t")
CONTROL_20HZ = Timebase(20.0, "k")


@dataclass(frozen=True)
class Score:
    """Bar structure of one recorded piece.

    ``bar_durations`` are seconds on the original recording timeline.
    ``fermata_bars`` are the bars that hold until the conductor resumes.
    """

    bar_count: int
    bar_durations: tuple[float, ...]
    fermata_bars: frozenset[int]
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "bar_durations", tuple(float(d) for d in self.bar_durations))
        object.__setattr__(self, "fermata_bars", frozenset(int(b) for b in self.fermata_bars))
        if self.bar_count <= 0:
            raise InvalidAnnotationError("bar_count must be positive")
        if len(self.bar_durations) != self.bar_count:
            raise InvalidAnnotationError(
                f"expected {self.bar_count} bar durations, got {len(self.bar_durations)}"
            )
        if any(d <= 0 or not math.isfinite(d) for d in self.bar_durations):
            raise InvalidAnnotationError("bar durations must be positive and finite")
        if any(b < 0 or b >= self.bar_count for b in self.fermata_bars):
            raise InvalidAnnotationError("fermata bar index out of range")

    @property
    def hold_bars(self) -> frozenset[int]:
        """Bars with hold/resume playback semantics: fermatas plus bar 0."""
        return self.fermata_bars | {0}

    @functools.cached_property
    def bar_starts(self) -> np.ndarray:
        """Cumulative bar boundaries on the original timeline, length bar_count+1."""
        starts = np.zeros(self.bar_count + 1)
        np.cumsum(self.bar_durations, out=starts[1:])
        return starts

    @property
    def total_duration(self) -> float:
        return float(sum(self.bar_durations))

    @property
    def played_duration(self) -> float:
        """Duration of the music proper, excluding the preparation bar."""
        return float(sum(self.bar_durations[1:]))

    def duration_of(self, bar: int) -> float:
        return self.bar_durations[bar]

    def bar_at(self, position: float) -> int:
        """Bar containing ``position`` seconds (right-continuous at boundaries)."""
        starts = self.bar_starts
        b = int(np.searchsorted(starts, position, side="right")) - 1
        return min(max(b, 0), self.bar_count - 1)

    def to_dict(self) -> dict:
        return {
            "format_version": SCORE_FORMAT_VERSION,
            "label": self.label,
            "bar_count": self.bar_count,
            "bar_durations": list(self.bar_durations),
            "fermata_bars": sorted(self.fermata_bars),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Score":
        version = data.get("format_version", SCORE_FORMAT_VERSION)
        if version != SCORE_FORMAT_VERSION:
            raise InvalidAnnotationError(f"unsupported score format version {version}")
        try:
            return cls(
                bar_count=int(data["bar_count"]),
                bar_durations=tuple(data["bar_durations"]),
                fermata_bars=frozenset(data["fermata_bars"]),
                label=str(data.get("label", "")),
            )
        except KeyError as missing:
            raise InvalidAnnotationError(f"score file missing field {missing}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Score":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def demo_score() -> Score:
    """The shipped 122-bar demo score.

    Bar 0 is a 3 s preparation bar. Fermata bars carry the held note and
    the original conductor's wait inside their recorded duration, hence
    they are longer than regular bars.
    """
    durations = [3.0] + [0.7] * 121
    for b in (2, 4, 20, 22):
        # 0.525 s of played content, 1.5 s recorded hold, 0.7 s upbeat room
        durations[b] = 2.725
    return Score(
        bar_count=122,
        bar_durations=tuple(durations),
        fermata_bars=frozenset({2, 4, 20, 22}),
        label="demo-122",
    )


def upbeat_ease(x):
    """Easing of the upbeat phase ramp on [0, 1] (of span 2*pi - HOLD_PHASE):
    snap, glide, stop just short of the wrap."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    span = TWO_PI - HOLD_PHASE
    snap = (UPBEAT_SNAP / span) * np.minimum(x / UPBEAT_SNAP_FRAC, 1.0)
    glide_span = (span - UPBEAT_SNAP - UPBEAT_END_GAP) / span
    glide = glide_span * np.clip((x - UPBEAT_SNAP_FRAC) / (1.0 - UPBEAT_SNAP_FRAC), 0.0, 1.0)
    return snap + glide


class TimelineLabeller:
    """Maps session time to (bar, phase) ground-truth labels.

    Built from the wall-clock times at which each bar started plus,
    for hold bars, the absolute [hold_begin, hold_end) interval of the
    wait. Between holds the phase is linear in time; the segment after
    a hold eases steeply to 2*pi (the silent upbeat).
    """

    def __init__(
        self,
        score: Score,
        bar_start_times: Sequence[float],
        *,
        holds: Mapping[int, tuple[float, float]] | None = None,
        end_time: float | None = None,
    ):
        starts = np.asarray(bar_start_times, dtype=float)
        if starts.ndim != 1 or len(starts) != score.bar_count:
            raise InvalidAnnotationError(
                f"need one start time per bar ({score.bar_count}), got {len(starts)}"
            )
        if not np.all(np.diff(starts) > 0):
            raise InvalidAnnotationError("bar start times must be strictly increasing")
        if end_time is None:
            end_time = float(starts[-1]) + score.bar_durations[-1]
        if end_time <= starts[-1]:
            raise InvalidAnnotationError("end_time must lie beyond the last bar start")
        self.score = score
        self.starts = starts
        self.end_time = float(end_time)
        self.holds = dict(holds or {})
        for bar, (hb, he) in self.holds.items():
            lo = starts[bar]
            hi = starts[bar + 1] if bar + 1 < len(starts) else self.end_time
            if not (lo <= hb <= he < hi):
                raise InvalidAnnotationError(
                    f"hold for bar {bar} must lie inside the bar interval"
                )

    def __call__(self, time: float) -> PhaseSample:
        bar, phase = self.sample(np.asarray([time]))
        return PhaseSample(int(bar[0]), float(phase[0]))

    def sample(self, times) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized labels; times clamped onto [first start, end)."""
        t = np.clip(np.asarray(times, dtype=float), self.starts[0], np.nextafter(self.end_time, -np.inf))
        bars = np.searchsorted(self.starts, t, side="right") - 1
        bars = np.clip(bars, 0, self.score.bar_count - 1)
        phases = np.empty_like(t)
        for b in np.unique(bars):
            mask = bars == b
            lo = self.starts[b]
            hi = self.starts[b + 1] if b + 1 < len(self.starts) else self.end_time
            u = t[mask]
            if b in self.holds:
                hb, he = self.holds[b]
                phi = np.empty_like(u)
                ramp = u < hb
                if hb > lo:
                    phi[ramp] = HOLD_PHASE * (u[ramp] - lo) / (hb - lo)
                else:
                    phi[ramp] = HOLD_PHASE
                flat = (u >= hb) & (u < he)
                phi[flat] = HOLD_PHASE
                lift = u >= he
                phi[lift] = HOLD_PHASE + (TWO_PI - HOLD_PHASE) * upbeat_ease(
                    (u[lift] - he) / (hi - he)
                )
            else:
                phi = TWO_PI * (u - lo) / (hi - lo)
            phases[mask] = phi
        phases = np.clip(phases, 0.0, np.nextafter(TWO_PI, 0.0))
        return bars.astype(np.int64), phases


def label_timeline(
    score: Score,
    bar_start_times: Sequence[float],
    *,
    holds: Mapping[int, tuple[float, float]] | None = None,
    end_time: float | None = None,
) -> TimelineLabeller:
    """Build the time -> (bar, phase) labelling function for one take."""
    return TimelineLabeller(score, bar_start_times, holds=holds, end_time=end_time)
