"""Keypoint frames, normalization, and derivative features.

All estimators consume the same representation: per frame the
normalized keypoint positions together with their first and second
backward differences,

    vel[t] = pos[t] - pos[t-1]
    acc[t] = pos[t] - 2*pos[t-1] + pos[t-2]

with missing history filled by repeating the first frame, so the first
velocity is exactly zero and no startup transient leaks into streaming
inference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InvalidFrameError, UnsupportedRateError


@dataclass(frozen=True)
class KeypointSet:
    """An ordered, named set of tracked keypoints."""

    names: tuple[str, ...]
    dims: int = 2

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ConfigError("keypoint names must be unique")
        if self.dims not in (2, 3):
            raise ConfigError("keypoint sets are 2- or 3-dimensional")
        if not self.names:
            raise ConfigError("keypoint set cannot be empty")

    @property
    def count(self) -> int:
        return len(self.names)

    @property
    def feature_dim(self) -> int:
        """Flattened per-frame feature width: pos+vel+acc."""
        return 3 * self.count * self.dims

    def index(self, name: str) -> int:
        return self.names.index(name)

    def mirror_pairs(self) -> list[tuple[int, int]]:
        """Left/right index pairs derived from r_/l_ name prefixes.

        Raises ConfigError when a sided keypoint has no counterpart.
        """
        pairs = []
        for i, name in enumerate(self.names):
            if name.startswith("r_"):
                partner = "l_" + name[2:]
                if partner not in self.names:
                    raise ConfigError(f"no left counterpart for {name!r}")
                pairs.append((i, self.index(partner)))
            elif name.startswith("l_") and ("r_" + name[2:]) not in self.names:
                raise ConfigError(f"no right counterpart for {name!r}")
        return pairs


UPPER_BODY_9 = KeypointSet(
    names=(
        "r_shoulder",
        "l_shoulder",
        "r_elbow",
        "l_elbow",
        "r_wrist",
        "l_wrist",
        "r_hand",
        "l_hand",
        "hip_center",
    ),
    dims=2,
)


@dataclass(frozen=True)
class PoseFrame:
    """One timestep of keypoint positions, shape (count, dims)."""

    t: int
    pos: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float))


@dataclass(frozen=True)
class KinematicFrame:
    """Positions plus backward-difference velocity and acceleration."""

    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray

    def features(self) -> np.ndarray:
        """Flattened (pos, vel, acc) feature vector."""
        return np.concatenate([self.pos.ravel(), self.vel.ravel(), self.acc.ravel()])


def hip_position(pos: np.ndarray, keypoints: KeypointSet) -> np.ndarray:
    """Hip reference: mean of r_hip/l_hip when present, else hip_center."""
    names = keypoints.names
    if "r_hip" in names and "l_hip" in names:
        return 0.5 * (pos[keypoints.index("r_hip")] + pos[keypoints.index("l_hip")])
    if "hip_center" in names:
        return pos[keypoints.index("hip_center")]
    raise ConfigError("keypoint set has no hip reference")


def normalize_pose(frame: PoseFrame, keypoints: KeypointSet, height_scale: float) -> PoseFrame:
    """Hip-center and height-normalize one frame.

    Output positions are (raw - hip) / height_scale, so the hip
    reference maps exactly to the origin.
    """
    if height_scale <= 0 or not np.isfinite(height_scale):
        raise ConfigError("height_scale must be a positive finite number")
    pos = np.asarray(frame.pos, dtype=float)
    if pos.shape != (keypoints.count, keypoints.dims):
        raise InvalidFrameError(
            f"expected pose shape {(keypoints.count, keypoints.dims)}, got {pos.shape}"
        )
    if not np.all(np.isfinite(pos)):
        raise InvalidFrameError("pose frame contains non-finite coordinates")
    hip = hip_position(pos, keypoints)
    return PoseFrame(t=frame.t, pos=(pos - hip) / height_scale)


def calibration_height(frame: PoseFrame, keypoints: KeypointSet) -> float:
    """Height proxy for upper-body sets: shoulder midpoint to hip distance."""
    pos = np.asarray(frame.pos, dtype=float)
    mid = 0.5 * (pos[keypoints.index("r_shoulder")] + pos[keypoints.index("l_shoulder")])
    height = float(np.linalg.norm(mid - hip_position(pos, keypoints)))
    if height <= 0 or not np.isfinite(height):
        raise InvalidFrameError("degenerate calibration frame: zero shoulder-hip distance")
    return height


def backward_differences(pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Velocity and acceleration arrays for a stacked position track.

    ``pos`` has shape (T, ...); history before the first frame is the
    first frame repeated.
    """
    pos = np.asarray(pos, dtype=float)
    if len(pos) == 0:
        return pos.copy(), pos.copy()
    prev1 = np.concatenate([pos[:1], pos[:-1]], axis=0)
    prev2 = np.concatenate([pos[:1], prev1[:-1]], axis=0)
    vel = pos - prev1
    acc = pos - 2.0 * prev1 + prev2
    return vel, acc


def derive_kinematics(frames: Sequence[PoseFrame] | np.ndarray) -> list[KinematicFrame]:
    """Attach backward-difference velocity/acceleration to a pose track."""
    if isinstance(frames, np.ndarray):
        pos = frames
    else:
        pos = np.stack([np.asarray(f.pos, dtype=float) for f in frames]) if frames else np.zeros((0,))
    if len(pos) == 0:
        return []
    if not np.all(np.isfinite(pos)):
        raise InvalidFrameError("pose track contains non-finite coordinates")
    vel, acc = backward_differences(pos)
    return [KinematicFrame(pos=pos[i], vel=vel[i], acc=acc[i]) for i in range(len(pos))]


class KinematicStream:
    """Streaming counterpart of :func:`derive_kinematics`.

    Feeding positions one at a time reproduces the batch arrays
    bit-for-bit (same subtraction order on the same floats).
    """

    def __init__(self):
        self._prev1 = None
        self._prev2 = None

    def reset(self):
        self._prev1 = None
        self._prev2 = None

    def push(self, pos: np.ndarray) -> KinematicFrame:
        pos = np.asarray(pos, dtype=float)
        if not np.all(np.isfinite(pos)):
            raise InvalidFrameError("pose frame contains non-finite coordinates")
        prev1 = pos if self._prev1 is None else self._prev1
        prev2 = prev1 if self._prev2 is None else self._prev2
        frame = KinematicFrame(pos=pos, vel=pos - prev1, acc=pos - 2.0 * prev1 + prev2)
        self._prev2 = prev1
        self._prev1 = pos
        return frame


def mirror_lr(frame: PoseFrame, keypoints: KeypointSet, axis: int = 0) -> PoseFrame:
    """Reflect a hip-centered frame left-to-right.

    Negates the horizontal coordinate and swaps r_/l_ keypoint rows, so
    applying it twice is the identity.
    """
    pairs = keypoints.mirror_pairs()
    pos = np.array(frame.pos, dtype=float, copy=True)
    pos[:, axis] = -pos[:, axis]
    for r, l in pairs:
        pos[[r, l]] = pos[[l, r]]
    return PoseFrame(t=frame.t, pos=pos)


def resample(
    frames: Sequence[KinematicFrame], from_hz: float, to_hz: float
) -> list[KinematicFrame]:
    """Decimate a kinematic track to a lower rate.

    Positions are taken every ``from_hz/to_hz`` frames; velocity and
    acceleration are recomputed at the new rate rather than decimated,
    since backward differences scale with the step size.
    """
    if from_hz <= 0 or to_hz <= 0:
        raise UnsupportedRateError("rates must be positive")
    stride = from_hz / to_hz
    if abs(stride - round(stride)) > 1e-9:
        raise UnsupportedRateError(f"{from_hz} -> {to_hz} Hz is not an integer decimation")
    stride = int(round(stride))
    if stride == 1:
        pos = np.stack([f.pos for f in frames]) if frames else np.zeros((0,))
    else:
        pos = np.stack([f.pos for f in frames])[::stride] if frames else np.zeros((0,))
    return derive_kinematics(pos)


def decimate_positions(pos: np.ndarray, from_hz: float, to_hz: float) -> np.ndarray:
    """Position-only decimation with the same stride rules as resample."""
    if from_hz <= 0 or to_hz <= 0:
        raise UnsupportedRateError("rates must be positive")
    stride = from_hz / to_hz
    if abs(stride - round(stride)) > 1e-9:
        raise UnsupportedRateError(f"{from_hz} -> {to_hz} Hz is not an integer decimation")
    return np.asarray(pos)[:: int(round(stride))]
