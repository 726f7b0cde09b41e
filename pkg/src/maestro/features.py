"""Canonical feature preparation shared by every estimator path.

Training, batch evaluation, file replay, and the live server must see
bit-identical features for the same motion, so they all funnel through
this module: calibrate a height scale from the first frame, scale the
hip-centered positions, then derive velocity/acceleration from the
scaled positions (scaling after differencing rounds differently).
"""

from __future__ import annotations

import numpy as np

from .kinematics import (
    KeypointSet,
    KinematicStream,
    PoseFrame,
    backward_differences,
    calibration_height,
    hip_position,
)
from .synth import Take


def feature_matrix(pos: np.ndarray, keypoints: KeypointSet) -> np.ndarray:
    """Flattened (pos, vel, acc) features from a raw position track.

    Each frame is hip-centered, then the whole track is scaled by the
    first frame's height proxy. Output is (T, 3*n*dims). For tracks
    whose hip already sits at the origin the centering is a bitwise
    no-op, so stored takes and live streams agree exactly.
    """
    pos = np.asarray(pos, dtype=float)
    T = len(pos)
    if T == 0:
        return np.zeros((0, keypoints.feature_dim))
    hip_idx = keypoints.index("hip_center") if "hip_center" in keypoints.names else None
    if hip_idx is not None:
        centered = pos - pos[:, hip_idx: hip_idx + 1, :]
    else:
        centered = pos - np.stack([hip_position(p, keypoints) for p in pos])[:, None, :]
    height = calibration_height(PoseFrame(t=0, pos=centered[0]), keypoints)
    scaled = centered / height
    vel, acc = backward_differences(scaled)
    return np.concatenate(
        [scaled.reshape(T, -1), vel.reshape(T, -1), acc.reshape(T, -1)], axis=1
    )


def take_features(take: Take) -> np.ndarray:
    """Feature matrix of a take (recomputed, not the stored vel/acc)."""
    return feature_matrix(take.pos, take.keypoints)


class FeatureStream:
    """Streaming twin of :func:`feature_matrix`.

    Pushing raw hip-centered positions one frame at a time reproduces
    the batch matrix bit-for-bit.
    """

    def __init__(self, keypoints: KeypointSet):
        self.keypoints = keypoints
        self._height: float | None = None
        self._hip_idx = (
            keypoints.index("hip_center") if "hip_center" in keypoints.names else None
        )
        self._kin = KinematicStream()

    def reset(self):
        self._height = None
        self._kin.reset()

    def push(self, pos: np.ndarray) -> np.ndarray:
        pos = np.asarray(pos, dtype=float)
        if self._hip_idx is not None:
            centered = pos - pos[self._hip_idx: self._hip_idx + 1, :]
        else:
            centered = pos - hip_position(pos, self.keypoints)
        if self._height is None:
            self._height = calibration_height(
                PoseFrame(t=0, pos=centered), self.keypoints
            )
        frame = self._kin.push(centered / self._height)
        return frame.features()
