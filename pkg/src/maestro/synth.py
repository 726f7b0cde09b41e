"""Deterministic synthetic conducting-motion generator and take files.

A take is one synthetic conductor performing one score once: a stream
of 9-keypoint upper-body frames with exact (bar, phase) labels and beat
times. The gesture model is not biomechanically faithful; it is built
so that the structural cues the engine relies on are present:

* one sharp acceleration peak (ictus) at every bar start,
* stillness during fermata holds,
* a fast lift at the onset of each silent upbeat, one nominal bar
  before the resume downbeat.

``tempo_factor`` is the duration stretch of the take relative to the
original recording: a bar of original length ``d`` is conducted in
``tempo_factor * d`` seconds (before per-bar jitter). It is therefore
the value an ideal tempo controller should recover as its speed factor.

All randomness comes from ``numpy.random.default_rng`` (PCG64) seeded
from the style, so a (score, style, tempo_factor, rate) tuple always
produces a bit-identical take, on any platform.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from .containers import read_container, write_container
from .errors import ConfigError, ContainerFormatError, InvalidAnnotationError
from .kinematics import UPPER_BODY_9, KeypointSet, KinematicFrame, backward_differences
from .phase import TWO_PI
from .score import HOLD_PHASE, PhaseSample, Score, Timebase, upbeat_ease

TAKE_FORMAT_VERSION = 1
CORPUS_FORMAT_VERSION = 1

# Fraction of a nominal bar over which a fermata bar ramps to the hold.
FERMATA_RAMP_FRAC = 0.75


@dataclass(frozen=True)
class ConductorStyle:
    """Subject-level gesture parameters.

    ``smoothness`` in [0, 1] trades harmonic content and noise colour;
    ``upbeat_sharpness`` > 0 narrows and deepens the ictus dip;
    ``noise_std`` is tracker-like positional noise in normalized units.
    """

    amplitude: float = 1.0
    hand_bias: str = "right"
    smoothness: float = 0.5
    noise_std: float = 0.0
    upbeat_sharpness: float = 1.0
    seed: int = 0
    tempo_jitter: float = 0.03
    outlier_prob: float = 0.08   # chance a bar is noticeably off-tempo
    outlier_scale: float = 5.0   # jitter-sigma multiplier for such bars
    hold_scale: float = 1.0
    start_hold: float = 1.5

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ConfigError("amplitude must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if self.upbeat_sharpness <= 0:
            raise ConfigError("upbeat_sharpness must be positive")
        if self.hand_bias not in ("left", "right"):
            raise ConfigError("hand_bias must be 'left' or 'right'")
        if not 0.0 <= self.smoothness <= 1.0:
            raise ConfigError("smoothness must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "hand_bias": self.hand_bias,
            "smoothness": self.smoothness,
            "noise_std": self.noise_std,
            "upbeat_sharpness": self.upbeat_sharpness,
            "seed": self.seed,
            "tempo_jitter": self.tempo_jitter,
            "outlier_prob": self.outlier_prob,
            "outlier_scale": self.outlier_scale,
            "hold_scale": self.hold_scale,
            "start_hold": self.start_hold,
        }


@dataclass
class Take:
    """One recorded-or-synthesized conducting sequence with labels."""

    subject_id: str
    tempo_factor: float
    rate: Timebase
    keypoints: KeypointSet
    pos: np.ndarray          # (L, n, dims)
    vel: np.ndarray          # (L, n, dims)
    acc: np.ndarray          # (L, n, dims)
    label_bars: np.ndarray   # (L,) int64
    label_phases: np.ndarray  # (L,) float64
    beat_times: np.ndarray   # downbeat wall times, seconds
    upbeat_times: np.ndarray  # silent-upbeat onset wall times, seconds
    hold_bars: np.ndarray    # bars that contain a hold, in take order
    hold_begins: np.ndarray  # wall time each hold starts; it ends at upbeat_times
    bar_start_times: np.ndarray  # (bar_count,) conducted bar starts
    end_wall_time: float = 0.0   # wall time the performance ends
    score_label: str = ""
    seed: int = 0

    def __len__(self) -> int:
        return len(self.pos)

    @property
    def duration(self) -> float:
        return len(self.pos) / self.rate.rate_hz

    @property
    def holds(self) -> dict[int, tuple[float, float]]:
        """Exact hold intervals keyed by bar: (begin, end) wall times."""
        return {
            int(b): (float(hb), float(he))
            for b, hb, he in zip(self.hold_bars, self.hold_begins, self.upbeat_times)
        }

    @property
    def end_time(self) -> float:
        """Wall time at which the conducted performance ends."""
        return float(self.end_wall_time)

    @property
    def frames(self) -> list[KinematicFrame]:
        return [
            KinematicFrame(pos=self.pos[i], vel=self.vel[i], acc=self.acc[i])
            for i in range(len(self.pos))
        ]

    @property
    def labels(self) -> list[PhaseSample]:
        return [
            PhaseSample(int(b), float(p))
            for b, p in zip(self.label_bars, self.label_phases)
        ]

    def validate(self) -> None:
        L = len(self.pos)
        if not (len(self.vel) == len(self.acc) == len(self.label_bars) == len(self.label_phases) == L):
            raise InvalidAnnotationError("frame and label arrays disagree in length")
        if L and (self.label_phases.min() < 0.0 or self.label_phases.max() >= TWO_PI):
            raise InvalidAnnotationError("label phases outside [0, 2*pi)")
        if L and np.any(np.diff(self.label_bars) < 0):
            raise InvalidAnnotationError("label bars must be non-decreasing")
        for name, arr in (("pos", self.pos), ("vel", self.vel), ("acc", self.acc)):
            if not np.all(np.isfinite(arr)):
                raise InvalidAnnotationError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class _Segment:
    """One conducted span with an analytic phase shape."""

    t0: float
    t1: float
    bar: int
    kind: str          # "linear" | "flat" | "ease"
    phi0: float = 0.0
    phi1: float = TWO_PI

    def phase_at(self, t: np.ndarray) -> np.ndarray:
        x = (t - self.t0) / (self.t1 - self.t0)
        if self.kind == "flat":
            return np.full_like(t, self.phi0)
        if self.kind == "ease":
            return self.phi0 + (self.phi1 - self.phi0) * upbeat_ease(x)
        return self.phi0 + (self.phi1 - self.phi0) * x


def _plan_timeline(score: Score, style: ConductorStyle, tempo_factor: float, rng):
    """Lay out conducted segments, bar starts, holds, and beat times."""
    g = tempo_factor
    durations = score.bar_durations
    segments: list[_Segment] = []
    bar_starts = np.zeros(score.bar_count)
    holds: dict[int, tuple[float, float]] = {}
    upbeat_onsets: list[float] = []
    t = 0.0
    for b in range(score.bar_count):
        bar_starts[b] = t
        # occasional strongly off-tempo bars; an ensemble's speed strategies
        # are judged on how they absorb these
        outlier = rng.random() < style.outlier_prob
        sigma = style.tempo_jitter * (style.outlier_scale if outlier else 1.0)
        jitter = math.exp(sigma * rng.standard_normal())
        if b in score.hold_bars:
            nxt = durations[b + 1] if b + 1 < score.bar_count else durations[b]
            upbeat = g * nxt
            if b == 0:
                ramp = 0.0
                hold = style.start_hold * jitter
            else:
                ramp = FERMATA_RAMP_FRAC * g * nxt * jitter
                base_hold = max(durations[b] - (1.0 + FERMATA_RAMP_FRAC) * nxt, 0.35 * nxt)
                hold = style.hold_scale * g * base_hold * math.exp(
                    style.tempo_jitter * rng.standard_normal()
                )
            if ramp > 0:
                segments.append(_Segment(t, t + ramp, b, "linear", 0.0, HOLD_PHASE))
            holds[b] = (t + ramp, t + ramp + hold)
            segments.append(_Segment(t + ramp, t + ramp + hold, b, "flat", HOLD_PHASE))
            onset = t + ramp + hold
            upbeat_onsets.append(onset)
            segments.append(_Segment(onset, onset + upbeat, b, "ease", HOLD_PHASE, TWO_PI))
            t = onset + upbeat
        else:
            dur = g * durations[b] * jitter
            segments.append(_Segment(t, t + dur, b, "linear", 0.0, TWO_PI))
            t += dur
    end_time = t
    beat_times = bar_starts[1:].copy()
    return segments, bar_starts, holds, np.asarray(upbeat_onsets), beat_times, end_time


def _labels_from_segments(segments: Sequence[_Segment], times: np.ndarray):
    bars = np.zeros(len(times), dtype=np.int64)
    phases = np.zeros(len(times))
    bounds = np.array([seg.t0 for seg in segments] + [segments[-1].t1])
    idx = np.clip(np.searchsorted(bounds, times, side="right") - 1, 0, len(segments) - 1)
    for i in np.unique(idx):
        seg = segments[i]
        mask = idx == i
        bars[mask] = seg.bar
        phases[mask] = seg.phase_at(times[mask])
    return bars, np.clip(phases, 0.0, np.nextafter(TWO_PI, 0.0))


# Rest positions in normalized units (hip at origin, y up, +x to the
# conductor's right). The beating arm oscillates around its rest.
_RESTS = {
    "r_shoulder": (0.19, 0.46),
    "l_shoulder": (-0.19, 0.46),
    "r_elbow": (0.30, 0.27),
    "l_elbow": (-0.30, 0.27),
    "r_wrist": (0.28, 0.24),
    "l_wrist": (-0.28, 0.24),
    "r_hand": (0.33, 0.21),
    "l_hand": (-0.33, 0.21),
    "hip_center": (0.0, 0.0),
}


def _wrist_offset(phi: np.ndarray, style: ConductorStyle) -> np.ndarray:
    """Beating-wrist displacement from rest as a function of phase."""
    a = style.amplitude
    warp = 0.08 * (1.0 - 0.5 * style.smoothness)
    u = phi + warp * np.sin(phi)
    c2 = 0.10 * (1.0 - 0.5 * style.smoothness)
    width = max(0.33 / style.upbeat_sharpness, 0.12)
    depth = 0.22 * a * (0.7 + 0.3 * style.upbeat_sharpness)
    dist = np.minimum(np.mod(u, TWO_PI), TWO_PI - np.mod(u, TWO_PI))
    dip = -depth * np.exp(-0.5 * (dist / width) ** 2)
    x = 0.16 * a * np.sin(u + 0.35) + 0.04 * a * np.sin(2.0 * u)
    y = 0.30 * a * (0.45 * np.cos(u) + c2 * np.cos(2.0 * u - 0.4)) + dip
    return np.stack([x, y], axis=-1)


def _gesture_aux(segments: Sequence[_Segment], times: np.ndarray,
                 style: ConductorStyle, rng) -> np.ndarray:
    """Displacements of the beating arm beyond the phase-locked path.

    Upbeats get a vertical raise-and-strike (an asymmetric half sine
    whose steep descent lands exactly on the next bar line). Holds get
    slow sway and settling: the arm relaxes and wanders a little,
    differently at every fermata, instead of freezing at one canonical
    pose. Consumes rng draws per hold, in segment order.
    """
    aux = np.zeros((len(times), 2))
    a = style.amplitude
    carry = np.zeros(2)  # offset inherited across segment boundaries
    for seg in segments:
        mask = (times >= seg.t0) & (times < seg.t1)
        span = seg.t1 - seg.t0
        if seg.kind == "ease":
            p = (times[mask] - seg.t0) / span
            blend = np.outer(1.0 - p, carry)
            aux[mask, 0] = blend[:, 0]
            aux[mask, 1] = blend[:, 1] + 0.24 * a * np.sin(np.pi * np.power(p, 1.4))
            carry = np.zeros(2)
        elif seg.kind == "flat":
            freq = rng.uniform(0.2, 0.5, size=2)
            phase0 = rng.uniform(0.0, TWO_PI, size=2)
            amp = 0.09 * a * rng.uniform(0.5, 1.5, size=2)
            settle = 0.12 * a * rng.uniform(0.5, 1.5)
            u = times[mask] - seg.t0
            aux[mask, 0] = carry[0] + amp[0] * np.sin(TWO_PI * freq[0] * u + phase0[0]) \
                - amp[0] * np.sin(phase0[0])
            aux[mask, 1] = carry[1] + amp[1] * np.sin(TWO_PI * freq[1] * u + phase0[1]) \
                - amp[1] * np.sin(phase0[1]) - settle * (1.0 - np.exp(-u / 1.0))
            end = np.array([
                amp[0] * np.sin(TWO_PI * freq[0] * span + phase0[0]) - amp[0] * np.sin(phase0[0]),
                amp[1] * np.sin(TWO_PI * freq[1] * span + phase0[1]) - amp[1] * np.sin(phase0[1])
                - settle * (1.0 - np.exp(-span / 1.0)),
            ])
            carry = carry + end
        else:
            carry = np.zeros(2)
    return aux


def _pose_track(phi: np.ndarray, aux: np.ndarray, style: ConductorStyle,
                keypoints: KeypointSet) -> np.ndarray:
    """Positions for every keypoint at every phase sample, shape (L, n, 2)."""
    beat_side, off_side = ("r", "l") if style.hand_bias == "right" else ("l", "r")
    sign = 1.0 if style.hand_bias == "right" else -1.0
    offset = _wrist_offset(phi, style) + aux
    offset = offset * np.array([sign, 1.0])
    rests = {name: np.array(_RESTS[name]) for name in keypoints.names}
    pos = np.zeros((len(phi), keypoints.count, 2))
    mirror = np.array([-1.0, 1.0])

    def put(name, value):
        pos[:, keypoints.index(name)] = value

    put(f"{beat_side}_wrist", rests[f"{beat_side}_wrist"] + offset)
    put(f"{beat_side}_elbow", rests[f"{beat_side}_elbow"] + 0.55 * offset)
    put(f"{beat_side}_shoulder", rests[f"{beat_side}_shoulder"] + 0.10 * offset)
    put(f"{beat_side}_hand", rests[f"{beat_side}_hand"] + 1.15 * offset)
    off = 0.30 * offset * mirror
    put(f"{off_side}_wrist", rests[f"{off_side}_wrist"] + off)
    put(f"{off_side}_elbow", rests[f"{off_side}_elbow"] + 0.55 * off)
    put(f"{off_side}_shoulder", rests[f"{off_side}_shoulder"] + 0.10 * off)
    put(f"{off_side}_hand", rests[f"{off_side}_hand"] + 1.15 * off)
    put("hip_center", np.zeros((len(phi), 2)))
    return pos


def generate_take(
    score: Score,
    style: ConductorStyle,
    tempo_factor: float,
    rate: Timebase,
    *,
    subject_id: str = "synthetic",
) -> Take:
    """Synthesize one labelled take. Deterministic in all arguments."""
    if tempo_factor <= 0:
        raise ConfigError("tempo_factor must be positive")
    rng = np.random.default_rng(style.seed)
    segments, bar_starts, holds, upbeats, beat_times, end_time = _plan_timeline(
        score, style, tempo_factor, rng
    )
    n_frames = int(math.floor(end_time * rate.rate_hz - 1e-9)) + 1
    times = np.arange(n_frames) / rate.rate_hz
    bars, phases = _labels_from_segments(segments, times)
    aux = _gesture_aux(segments, times, style, rng)
    pos = _pose_track(phases, aux, style, UPPER_BODY_9)
    if style.noise_std > 0:
        alpha = 0.5 + 0.4 * style.smoothness
        white = rng.standard_normal(pos.shape) * style.noise_std * math.sqrt(1 - alpha**2)
        noise = np.zeros_like(white)
        for i in range(1, len(noise)):
            noise[i] = alpha * noise[i - 1] + white[i]
        noise[:, UPPER_BODY_9.index("hip_center"), :] = 0.0
        pos = pos + noise
    vel, acc = backward_differences(pos)
    hold_bar_idx = np.array(sorted(holds), dtype=np.int64)
    hold_begin_times = np.array([holds[int(b)][0] for b in hold_bar_idx])
    take = Take(
        subject_id=subject_id,
        tempo_factor=tempo_factor,
        rate=rate,
        keypoints=UPPER_BODY_9,
        pos=pos,
        vel=vel,
        acc=acc,
        label_bars=bars,
        label_phases=phases,
        beat_times=beat_times,
        upbeat_times=upbeats,
        hold_bars=hold_bar_idx,
        hold_begins=hold_begin_times,
        bar_start_times=bar_starts,
        end_wall_time=end_time,
        score_label=score.label,
        seed=style.seed,
    )
    take.validate()
    return take


def write_take(take: Take, path) -> None:
    take.validate()
    meta = {
        "format_version": TAKE_FORMAT_VERSION,
        "subject_id": take.subject_id,
        "tempo_factor": take.tempo_factor,
        "rate_hz": take.rate.rate_hz,
        "rate_symbol": take.rate.symbol,
        "keypoint_names": list(take.keypoints.names),
        "dims": take.keypoints.dims,
        "score_label": take.score_label,
        "seed": take.seed,
        "end_wall_time": take.end_wall_time,
    }
    arrays = {
        "pos": take.pos,
        "vel": take.vel,
        "acc": take.acc,
        "label_bars": take.label_bars,
        "label_phases": take.label_phases,
        "beat_times": take.beat_times,
        "upbeat_times": take.upbeat_times,
        "hold_bars": take.hold_bars,
        "hold_begins": take.hold_begins,
        "bar_start_times": take.bar_start_times,
    }
    write_container(path, "take", meta, arrays)


def read_take(path) -> Take:
    _, meta, arrays = read_container(path, expected_kind="take")
    version = meta.get("format_version")
    if version != TAKE_FORMAT_VERSION:
        raise ContainerFormatError(f"unsupported take format version {version}")
    required = {"pos", "vel", "acc", "label_bars", "label_phases",
                "beat_times", "upbeat_times", "hold_bars", "hold_begins",
                "bar_start_times"}
    missing = required - arrays.keys()
    if missing:
        raise ContainerFormatError(f"take file missing arrays: {sorted(missing)}")
    take = Take(
        subject_id=meta["subject_id"],
        tempo_factor=float(meta["tempo_factor"]),
        rate=Timebase(float(meta["rate_hz"]), meta.get("rate_symbol", "k")),
        keypoints=KeypointSet(tuple(meta["keypoint_names"]), int(meta["dims"])),
        pos=arrays["pos"],
        vel=arrays["vel"],
        acc=arrays["acc"],
        label_bars=arrays["label_bars"],
        label_phases=arrays["label_phases"],
        beat_times=arrays["beat_times"],
        upbeat_times=arrays["upbeat_times"],
        hold_bars=arrays["hold_bars"],
        hold_begins=arrays["hold_begins"],
        bar_start_times=arrays["bar_start_times"],
        end_wall_time=float(meta.get("end_wall_time", 0.0)),
        score_label=meta.get("score_label", ""),
        seed=int(meta.get("seed", 0)),
    )
    take.validate()
    return take


def _take_seed(corpus_seed: int, subject_idx: int, take_idx: int) -> int:
    ss = np.random.SeedSequence((corpus_seed, subject_idx, take_idx))
    return int(ss.generate_state(1)[0])


def subject_style(corpus_seed: int, subject_idx: int, *, hand_bias: str = "right",
                  noise_std: float = 0.004, tempo_jitter: float = 0.03) -> ConductorStyle:
    """Deterministic per-subject style draw for corpus generation."""
    rng = np.random.default_rng(np.random.SeedSequence((corpus_seed, subject_idx)))
    return ConductorStyle(
        amplitude=float(rng.uniform(0.8, 1.3)),
        hand_bias=hand_bias,
        smoothness=float(rng.uniform(0.3, 0.9)),
        noise_std=noise_std,
        upbeat_sharpness=float(rng.uniform(0.8, 1.6)),
        seed=0,
        tempo_jitter=tempo_jitter,
        hold_scale=float(rng.uniform(0.8, 1.3)),
        start_hold=float(rng.uniform(1.2, 2.0)),
    )


def table5_plan() -> list[dict]:
    """Per-subject take plan shaped like the reference corpus: 130 takes
    over 12 subjects, four of them left-handed, three truncated takes."""
    counts = {
        1: (8, 2, 2), 2: (7, 2, 2), 3: (9, 2, 2), 4: (6, 2, 2),
        5: (7, 0, 0), 6: (6, 2, 2), 7: (8, 2, 2), 8: (6, 2, 2),
        9: (7, 2, 3), 10: (7, 0, 0), 11: (6, 2, 2), 12: (7, 2, 2),
    }
    left_handed = {3, 6, 9, 12}
    plan = []
    for s, (n10, n08, n12) in counts.items():
        tempos = [1.0] * n10 + [0.8] * n08 + [1.2] * n12
        truncated = [False] * len(tempos)
        if s == 1:
            tempos += [0.6, 1.3, 1.0, 1.0, 1.0]
            truncated += [False, False, True, True, True]
        plan.append({
            "subject": f"s{s:02d}",
            "hand_bias": "left" if s in left_handed else "right",
            "tempos": tempos,
            "truncated": truncated,
        })
    return plan


def truncate_score(score: Score, bars: int) -> Score:
    """First ``bars`` music bars (plus the preparation bar) of a score."""
    keep = min(bars + 1, score.bar_count)
    if keep == score.bar_count:
        return score
    return Score(
        bar_count=keep,
        bar_durations=score.bar_durations[:keep],
        fermata_bars=frozenset(b for b in score.fermata_bars if b < keep),
        label=f"{score.label}-first{bars}",
    )


def generate_corpus(
    score: Score,
    out_dir,
    plan: list[dict],
    *,
    seed: int = 0,
    rate: Timebase | None = None,
    noise_std: float = 0.004,
    tempo_jitter: float = 0.03,
) -> dict:
    """Generate takes per plan, write them plus a manifest, return the manifest."""
    from .score import CONTROL_20HZ

    rate = rate or CONTROL_20HZ
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "format_version": CORPUS_FORMAT_VERSION,
        "seed": seed,
        "rate_hz": rate.rate_hz,
        "score": score.to_dict(),
        "takes": [],
    }
    for si, subject in enumerate(plan):
        style = subject_style(
            seed, si, hand_bias=subject["hand_bias"],
            noise_std=noise_std, tempo_jitter=tempo_jitter,
        )
        truncated = subject.get("truncated") or [False] * len(subject["tempos"])
        for ti, (tempo, trunc) in enumerate(zip(subject["tempos"], truncated)):
            take_style = replace(style, seed=_take_seed(seed, si, ti))
            use_score = truncate_score(score, 25) if trunc else score
            take = generate_take(
                use_score, take_style, tempo, rate, subject_id=subject["subject"]
            )
            fname = f"{subject['subject']}_t{ti:02d}_{tempo:.2f}.take"
            write_take(take, os.path.join(out_dir, fname))
            manifest["takes"].append({
                "file": fname,
                "subject": subject["subject"],
                "tempo_factor": tempo,
                "truncated": bool(trunc),
            })
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_corpus(corpus_dir) -> tuple[dict, list[Take]]:
    with open(os.path.join(corpus_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    takes = [read_take(os.path.join(corpus_dir, entry["file"])) for entry in manifest["takes"]]
    return manifest, takes


def iter_subject_takes(manifest: dict, takes: list[Take]) -> Iterator[tuple[str, list[Take]]]:
    subjects: dict[str, list[Take]] = {}
    for take in takes:
        subjects.setdefault(take.subject_id, []).append(take)
    for subject in sorted(subjects):
        yield subject, subjects[subject]
