"""Angle arithmetic on the unit circle.

Within-bar position is a phase in [0, 2*pi). Everything downstream
(losses, beat detection, metrics) goes through these three helpers so
that wrapping behaviour is defined in exactly one place.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import UndefinedPhaseError

TWO_PI = 2.0 * math.pi


def wrap_phase(angle):
    """Map an angle in radians onto [0, 2*pi).

    Accepts scalars or arrays; scalars come back as ``float``.
    """
    arr = np.asarray(angle, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot wrap a non-finite angle")
    wrapped = np.mod(arr, TWO_PI)
    # np.mod maps tiny negative inputs to 2*pi itself; fold that back.
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    if np.ndim(angle) == 0:
        return float(wrapped)
    return wrapped


def phase_diff(phi_cur, phi_prev):
    """Signed shortest angular step from ``phi_prev`` to ``phi_cur``.

    Result lies in (-pi, pi]; a forward step across the 2*pi -> 0 seam
    comes out positive.
    """
    cur = np.asarray(phi_cur, dtype=float)
    prev = np.asarray(phi_prev, dtype=float)
    d = np.mod(cur - prev + math.pi, TWO_PI) - math.pi
    d = np.where(d <= -math.pi, math.pi, d)
    if np.ndim(phi_cur) == 0 and np.ndim(phi_prev) == 0:
        return float(d)
    return d


def phase_from_sincos(sin_val, cos_val):
    """Recover a phase in [0, 2*pi) from an (possibly unnormalized)
    sin/cos pair.

    The pair does not need unit norm; only its direction matters.
    Raises :class:`UndefinedPhaseError` on an exactly-zero vector, where
    no direction exists.
    """
    s = np.asarray(sin_val, dtype=float)
    c = np.asarray(cos_val, dtype=float)
    if np.any((s == 0.0) & (c == 0.0)):
        raise UndefinedPhaseError("phase of the zero vector is undefined")
    return wrap_phase(np.arctan2(s, c))
