"""Evaluation metrics for phase estimates and interaction sessions.

Phase error comes in two flavours. The reference definition is the
plain squared difference of phases (``wrapped=False``), which matches
how summary numbers are conventionally reported but lets a single wrap
misalignment count as ~(2*pi)^2. The wrapped variant measures the
shortest angular distance instead and is what the engine's own
regression gates use. All standard deviations here are population
(divide by N) unless noted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetricError
from .phase import phase_diff
from .playback import SessionLog
from .score import Score
from .synth import Take


def mspe(gt_phases, est_phases, wrapped: bool = False) -> float:
    """Mean squared phase error between two phase tracks."""
    gt = np.asarray(gt_phases, dtype=float)
    est = np.asarray(est_phases, dtype=float)
    if gt.shape != est.shape:
        raise UndefinedMetricError(
            f"phase tracks disagree in shape: {gt.shape} vs {est.shape}"
        )
    if gt.size == 0:
        raise UndefinedMetricError("cannot average an empty track")
    err = phase_diff(gt, est) if wrapped else gt - est
    return float(np.mean(np.square(err)))


def mspe_by_region(take: Take, est_phases, score: Score, wrapped: bool = True):
    """(regular, fermata) MSPE of an estimate over one take.

    Regular excludes all hold bars (fermatas and the preparation bar);
    fermata covers exactly the score's fermata set.
    """
    bars = take.label_bars
    regular = ~np.isin(bars, list(score.hold_bars))
    fermata = np.isin(bars, list(score.fermata_bars))
    out = []
    for mask in (regular, fermata):
        if not mask.any():
            out.append(math.nan)
        else:
            out.append(mspe(take.label_phases[mask], np.asarray(est_phases)[mask], wrapped))
    return tuple(out)


def beat_bar_distance(log: SessionLog) -> tuple[float, float]:
    """Mean and population std of each detected beat's distance to the
    nearest playback bar start, in seconds."""
    beats = log.beat_wall_times()
    starts = log.bar_start_times()
    if len(beats) == 0 or len(starts) == 0:
        raise UndefinedMetricError("log contains no beats or no bar starts")
    dists = np.min(np.abs(beats[:, None] - starts[None, :]), axis=1)
    return float(np.mean(dists)), float(np.std(dists))


def speed_stability(log: SessionLog, score: Score, after_bar: int | None = None) -> float:
    """Population std of the controller speed signal over steps after
    the given bar (default: after the last fermata)."""
    if after_bar is None:
        if not score.fermata_bars:
            raise UndefinedMetricError("score has no fermatas; pass after_bar explicitly")
        after_bar = max(score.fermata_bars)
    values = [r.s for r in log.rows if r.bar > after_bar and r.s > 0]
    if not values:
        raise UndefinedMetricError(f"log has no speed samples after bar {after_bar}")
    return float(np.std(values))


def pct_of_bar(log: SessionLog) -> float:
    """Mean beat-to-bar-start distance as a percentage of the mean
    conducted bar length."""
    mean_dist, _ = beat_bar_distance(log)
    starts = log.bar_start_times()
    if len(starts) < 2:
        raise UndefinedMetricError("need at least two bar starts for a bar length")
    mean_bar = float(np.mean(np.diff(starts)))
    return 100.0 * mean_dist / mean_bar


def acceleration_peaks(rho: np.ndarray, tol: float = 0.02) -> np.ndarray:
    """Indices of local acceleration bursts, tolerant of near-flat tops:
    a sample counts as a peak when it is no lower than its predecessor
    and within ``tol`` of its successor."""
    rho = np.asarray(rho, dtype=float)
    if len(rho) < 3:
        return np.array([], dtype=int)
    inner = rho[1:-1]
    return np.flatnonzero((inner >= rho[:-2]) & (inner >= rho[2:] * (1.0 - tol))) + 1


def arm_accel(take: Take) -> np.ndarray:
    """Per-step arm acceleration: wrist acceleration norms, both wrists
    summed. Visualization aid, not an estimator input."""
    wrists = [take.keypoints.index("r_wrist"), take.keypoints.index("l_wrist")]
    return sum(np.linalg.norm(take.acc[:, w, :], axis=1) for w in wrists)


@dataclass
class TakeResult:
    subject: str
    take_index: int
    tempo_factor: float
    mspe_raw: float
    mspe_wrapped: float
    mspe_regular: float
    mspe_fermata: float


@dataclass
class EvalReport:
    """Per-take rows plus aggregates recomputable from them.

    ``session_metrics`` carries interaction-loop statistics (beat-bar
    distance, speed stability, percent-of-bar) when the evaluation also
    ran simulated sessions.
    """

    rows: list[TakeResult] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    session_metrics: dict = field(default_factory=dict)

    def per_subject(self) -> dict[str, tuple[float, float]]:
        """subject -> (mean, population std) of raw MSPE."""
        groups: dict[str, list[float]] = {}
        for r in self.rows:
            groups.setdefault(r.subject, []).append(r.mspe_raw)
        return {s: (float(np.mean(v)), float(np.std(v))) for s, v in sorted(groups.items())}

    def overall(self) -> tuple[float, float]:
        vals = [r.mspe_raw for r in self.rows]
        return float(np.mean(vals)), float(np.std(vals))

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "rows": [r.__dict__ for r in self.rows],
            "per_subject": {k: list(v) for k, v in self.per_subject().items()},
            "overall": list(self.overall()) if self.rows else None,
            "session_metrics": self.session_metrics,
        }

    def format_table(self) -> str:
        lines = [
            f"{'subject':10s} {'take':>4s} {'tempo':>6s} {'MSPE':>8s} "
            f"{'wrapped':>8s} {'regular':>8s} {'fermata':>8s}"
        ]
        for r in self.rows:
            lines.append(
                f"{r.subject:10s} {r.take_index:4d} {r.tempo_factor:6.2f} "
                f"{r.mspe_raw:8.3f} {r.mspe_wrapped:8.3f} "
                f"{r.mspe_regular:8.3f} {r.mspe_fermata:8.3f}"
            )
        for subject, (mean, std) in self.per_subject().items():
            lines.append(f"{subject:10s} mean {mean:.3f} +- {std:.3f}")
        if self.rows:
            mean, std = self.overall()
            lines.append(f"{'ALL':10s} mean {mean:.3f} +- {std:.3f}")
        return "\n".join(lines)
