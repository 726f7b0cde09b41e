"""Variable-speed playback over the original recording timeline.

The playhead moves at rate 1/s (s is the stretch factor) through the
score's cumulative bar boundaries. Hold bars (fermatas and the
preparation bar) have the two special behaviours the live system needs:
the playhead stops exactly at their end when no resume has arrived, and
any new speed command while inside or halted jumps exactly onto the
next bar line. Boundary positions are computed from one shared
cumulative-sum array, so "exactly" means float equality, not tolerance.

Session logs record one row per control step plus beat and bar-start
events. Export is a CSV table preceded by '#'-prefixed summary lines;
the column order below is stable for external plot tooling:

    k, t, phase, fsm, beat, s_cmd, resume, s, ps, playhead, bar, halted, fermata
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import controller as ctl
from .errors import ProtocolError
from .score import Score

LOG_COLUMNS = [
    "k", "t", "phase", "fsm", "beat", "s_cmd", "resume", "s", "ps",
    "playhead", "bar", "halted", "fermata",
]


@dataclass
class PlaybackState:
    """Playhead position on the original timeline plus motion status."""

    playhead: float = 0.0
    bar: int = 0
    halted: bool = False
    speed: float = 0.0          # active stretch factor; 0 before the first command
    step: int = 0
    finished: bool = False


@dataclass
class LogRow:
    k: int
    t: float
    phase: float
    fsm: str
    beat: str
    s_cmd: float | None
    resume: bool
    s: float
    ps: float
    playhead: float
    bar: int
    halted: bool
    fermata: bool


@dataclass
class SessionLog:
    """Append-only record of one interaction session."""

    score_label: str = ""
    rate_hz: float = 20.0
    strategy: str = ""
    rows: list[LogRow] = field(default_factory=list)
    beats: list[ctl.BeatEvent] = field(default_factory=list)
    bar_start_walls: list[tuple[int, float]] = field(default_factory=list)
    clamped_commands: int = 0
    protocol_errors: list[str] = field(default_factory=list)
    first_command_step: int | None = None
    finished_step: int | None = None

    def beat_wall_times(self) -> np.ndarray:
        return np.array([b.step / self.rate_hz for b in self.beats])

    def bar_start_times(self) -> np.ndarray:
        return np.array([t for _, t in self.bar_start_walls])

    @property
    def conducted_duration(self) -> float | None:
        if self.first_command_step is None or self.finished_step is None:
            return None
        return (self.finished_step - self.first_command_step) / self.rate_hz

    def summary(self, score: Score) -> dict:
        original = score.played_duration
        conducted = self.conducted_duration
        pct = None
        if conducted is not None and original > 0:
            pct = 100.0 * (conducted - original) / original
        return {
            "original_duration": original,
            "conducted_duration": conducted,
            "pct_difference": pct,
            "finished": self.finished_step is not None,
            "beats": len(self.beats),
            "clamped_commands": self.clamped_commands,
        }

    # -- persistence ---------------------------------------------------

    def to_csv(self, path, score: Score | None = None) -> None:
        buf = io.StringIO()
        buf.write(f"# score_label={self.score_label}\n")
        buf.write(f"# rate_hz={self.rate_hz!r}\n")
        buf.write(f"# strategy={self.strategy}\n")
        if score is not None:
            for key, value in self.summary(score).items():
                buf.write(f"# {key}={value!r}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r in self.rows:
            writer.writerow([
                r.k, repr(float(r.t)), repr(float(r.phase)), r.fsm, r.beat,
                "" if r.s_cmd is None else repr(float(r.s_cmd)),
                int(r.resume), repr(float(r.s)), repr(float(r.ps)),
                repr(float(r.playhead)), r.bar, int(r.halted), int(r.fermata),
            ])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "SessionLog":
        log = cls()
        with open(path, encoding="utf-8") as fh:
            header_meta = {}
            rows = []
            reader = None
            for line in fh:
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    header_meta[key.strip()] = value
                    continue
                rows.append(line)
            parsed = list(csv.reader(rows))
        log.score_label = header_meta.get("score_label", "")
        log.rate_hz = float(header_meta.get("rate_hz", "20.0"))
        log.strategy = header_meta.get("strategy", "")
        body = parsed[1:]
        for rec in body:
            (k, t, phase, fsm, beat, s_cmd, resume, s, ps, playhead, bar,
             halted, fermata) = rec
            row = LogRow(
                k=int(k), t=float(t), phase=float(phase), fsm=fsm, beat=beat,
                s_cmd=float(s_cmd) if s_cmd else None, resume=bool(int(resume)),
                s=float(s), ps=float(ps), playhead=float(playhead), bar=int(bar),
                halted=bool(int(halted)), fermata=bool(int(fermata)),
            )
            log.rows.append(row)
            if row.beat:
                log.beats.append(ctl.BeatEvent(step=row.k, kind=row.beat))
            if row.s_cmd is not None and log.first_command_step is None:
                log.first_command_step = row.k
        # bar starts recomputed from bar-column transitions at step times
        prev_bar = None
        for row in log.rows:
            if prev_bar is not None and row.bar > prev_bar:
                log.bar_start_walls.append((row.bar, row.t))
            prev_bar = row.bar
        return log


def apply_command(
    state: PlaybackState,
    score: Score,
    command: ctl.SpeedCommand,
    log: SessionLog | None = None,
    wall_time: float = 0.0,
) -> None:
    """Apply a speed command, with hold-bar jump semantics.

    Inside a hold bar (or halted at its end) the playhead jumps exactly
    onto the next bar line and motion resumes at the commanded stretch.
    In regular bars the stretch simply changes. A resume-flagged command
    arriving in a regular, un-halted bar is a protocol violation: it is
    logged and ignored.
    """
    starts = score.bar_starts
    in_hold = state.halted or state.bar in score.hold_bars
    if command.resume and not in_hold:
        message = f"resume command outside a hold bar (bar {state.bar})"
        if log is not None:
            log.protocol_errors.append(message)
        return
    if in_hold:
        target_bar = min(command.target_bar, score.bar_count - 1)
        if state.halted and state.bar + 1 >= score.bar_count:
            state.finished = True
            state.halted = False
            state.speed = command.speed
            return
        state.playhead = float(starts[target_bar])
        state.bar = target_bar
        state.halted = False
        if log is not None:
            log.bar_start_walls.append((target_bar, wall_time))
    state.speed = command.speed


def advance(state: PlaybackState, score: Score, dt_wall: float, log: SessionLog | None = None,
            wall_time: float = 0.0) -> None:
    """Move the playhead by one wall-clock step at the active stretch.

    Crossing into new bars records their start times (interpolated
    within the step); reaching the end of a hold bar halts exactly on
    the boundary; reaching the end of the score finishes the session.
    """
    if dt_wall <= 0:
        raise ProtocolError("dt_wall must be positive")
    if state.halted or state.finished or state.speed <= 0:
        return
    starts = score.bar_starts
    remaining = dt_wall
    while remaining > 0:
        bar_end = float(starts[state.bar + 1])
        distance = bar_end - state.playhead          # original-timeline seconds
        wall_needed = distance * state.speed
        if wall_needed > remaining:
            state.playhead += remaining / state.speed
            return
        state.playhead = bar_end
        remaining -= wall_needed
        if state.bar in score.hold_bars:
            state.halted = True
            state.finished = state.bar + 1 >= score.bar_count
            return
        if state.bar + 1 >= score.bar_count:
            state.finished = True
            return
        state.bar += 1
        if log is not None:
            log.bar_start_walls.append((state.bar, wall_time - remaining))


def fermata_step(
    state: PlaybackState,
    score: Score,
    command: ctl.SpeedCommand | None = None,
    dt_wall: float | None = None,
    log: SessionLog | None = None,
    wall_time: float = 0.0,
) -> None:
    """One step inside a hold bar.

    With a command: jump to the next bar start (exactly), clear the
    halt, adopt the new stretch; the step is consumed by the jump.
    Without: advance at the present speed, halting exactly at the bar
    end.
    """
    if command is not None:
        apply_command(state, score, command, log, wall_time)
        return
    if dt_wall is not None:
        advance(state, score, dt_wall, log, wall_time)


def run_session(
    phase_source: Iterable[float],
    score: Score,
    cfg: ctl.ControllerConfig,
    *,
    speed_limits: tuple[float, float] | None = None,
    log_label: str = "",
) -> SessionLog:
    """Drive the full loop: phase -> controller -> playback, one row per step.

    ``phase_source`` yields one phase estimate per control step.
    Deterministic for deterministic inputs.
    """
    state = ctl.ControllerState()
    playback = PlaybackState()
    log = SessionLog(score_label=score.label or log_label, rate_hz=cfg.rate_hz,
                     strategy=cfg.strategy.value)
    dt = 1.0 / cfg.rate_hz
    for k, phase in enumerate(phase_source):
        wall = k / cfg.rate_hz
        command, beat = ctl.step(state, float(phase), k, score, cfg)
        if command is not None and speed_limits is not None:
            lo, hi = speed_limits
            clamped = min(max(command.speed, lo), hi)
            if clamped != command.speed:
                log.clamped_commands += 1
                command = ctl.SpeedCommand(speed=clamped, step=command.step,
                                           target_bar=command.target_bar,
                                           resume=command.resume)
        if beat is not None:
            log.beats.append(beat)
        consumed = False
        if command is not None:
            if log.first_command_step is None:
                log.first_command_step = k
            in_hold = playback.halted or playback.bar in score.hold_bars
            apply_command(playback, score, command, log, wall)
            consumed = in_hold  # the jump consumes the step
        if not consumed:
            advance(playback, score, dt, log, wall)
        if playback.finished and log.finished_step is None:
            log.finished_step = k
        log.rows.append(LogRow(
            k=k, t=wall, phase=float(phase), fsm=state.fsm.value,
            beat=beat.kind if beat else "",
            s_cmd=command.speed if command else None,
            resume=bool(command.resume) if command else False,
            s=state.speed, ps=playback.speed,
            playhead=playback.playhead, bar=playback.bar,
            halted=playback.halted, fermata=playback.bar in score.fermata_bars,
        ))
        last_k = k
        last_phase = float(phase)
        if playback.finished:
            break
    # the source ends with the conductor's last bar; let the quantized
    # playhead drain the remaining fraction of a bar
    runout = int(2 * cfg.rate_hz)
    while (not playback.finished and playback.speed > 0 and not playback.halted
           and log.rows and runout > 0):
        last_k += 1
        runout -= 1
        wall = last_k / cfg.rate_hz
        advance(playback, score, dt, log, wall)
        if playback.finished and log.finished_step is None:
            log.finished_step = last_k
        log.rows.append(LogRow(
            k=last_k, t=wall, phase=last_phase, fsm=state.fsm.value, beat="",
            s_cmd=None, resume=False, s=state.speed, ps=playback.speed,
            playhead=playback.playhead, bar=playback.bar,
            halted=playback.halted, fermata=playback.bar in score.fermata_bars,
        ))
    return log
