"""Training losses for the phase estimator.

The network predicts per-step (sin, cos) pairs. Two terms:

* ``loss_mse``: mean squared error against the unit-circle targets,
  normalized as sum of squared component errors over 2T.
* ``loss_mono``: penalty on negative wrapped phase change of the
  *predicted* phase, pushing the estimate to only ever move forward.
  Steps more negative than ``MONO_EPSILON`` (a hair below zero) are
  penalized by their magnitude; the divisor is the full sequence
  length T even though only T-1 steps exist.

Both come with closed-form gradients with respect to the predictions,
feeding the hand-built backpropagation. The monotonicity gradient flows
through the two-argument arctangent; it is undefined only at an exactly
zero (sin, cos) vector, which raises rather than being perturbed.
"""

from __future__ import annotations

import numpy as np

from .errors import UndefinedPhaseError
from .phase import TWO_PI

MONO_EPSILON = -1e-7


def targets_from_phases(phases: np.ndarray) -> np.ndarray:
    """Unit-circle regression targets (sin, cos) for ground-truth phases."""
    phases = np.asarray(phases, dtype=float)
    return np.stack([np.sin(phases), np.cos(phases)], axis=-1)


def _check_pred(pred: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    if pred.ndim != 2 or pred.shape[-1] != 2 or len(pred) == 0:
        raise ValueError(f"predictions must have shape (T, 2), got {pred.shape}")
    return pred


def loss_mse(pred: np.ndarray, phases: np.ndarray) -> float:
    """(1/2T) * sum_t ||pred_t - (sin, cos)(phase_t)||^2."""
    value, _ = loss_mse_grad(pred, phases)
    return value


def loss_mse_grad(pred: np.ndarray, phases: np.ndarray) -> tuple[float, np.ndarray]:
    pred = _check_pred(pred)
    phases = np.asarray(phases, dtype=float)
    if len(phases) != len(pred):
        raise ValueError(f"got {len(pred)} predictions for {len(phases)} labels")
    diff = pred - targets_from_phases(phases)
    T = len(pred)
    return float(np.sum(diff * diff) / (2 * T)), diff / T


def predicted_phases(pred: np.ndarray) -> np.ndarray:
    pred = _check_pred(pred)
    s, c = pred[:, 0], pred[:, 1]
    if np.any((s == 0.0) & (c == 0.0)):
        raise UndefinedPhaseError("prediction collapsed to the zero vector")
    return np.mod(np.arctan2(s, c), TWO_PI)


def loss_mono(pred: np.ndarray, epsilon: float = MONO_EPSILON) -> float:
    """Mean penalized backward phase motion of the predicted phase."""
    value, _ = loss_mono_grad(pred, epsilon)
    return value


def loss_mono_grad(
    pred: np.ndarray, epsilon: float = MONO_EPSILON
) -> tuple[float, np.ndarray]:
    pred = _check_pred(pred)
    T = len(pred)
    phases = predicted_phases(pred)
    if T < 2:
        return 0.0, np.zeros_like(pred)
    delta = np.mod(np.diff(phases) + np.pi, TWO_PI) - np.pi
    active = delta < epsilon
    value = float(np.sum(-delta[active]) / T)
    # dL/dphi: each active step t contributes -delta_t/T with
    # d(delta)/d(phi_t) = 1 and d(delta)/d(phi_{t-1}) = -1 a.e.
    dphi = np.zeros(T)
    np.add.at(dphi, np.flatnonzero(active) + 1, -1.0 / T)
    np.add.at(dphi, np.flatnonzero(active), 1.0 / T)
    s, c = pred[:, 0], pred[:, 1]
    norm2 = s * s + c * c
    grad = np.stack([dphi * c / norm2, dphi * (-s) / norm2], axis=-1)
    return value, grad


def total_loss(
    pred: np.ndarray,
    phases: np.ndarray,
    beta_effective: float,
    epsilon: float = MONO_EPSILON,
) -> float:
    value, _ = total_loss_grad(pred, phases, beta_effective, epsilon)
    return value


def total_loss_grad(
    pred: np.ndarray,
    phases: np.ndarray,
    beta_effective: float,
    epsilon: float = MONO_EPSILON,
) -> tuple[float, np.ndarray]:
    mse, dmse = loss_mse_grad(pred, phases)
    if beta_effective == 0.0:
        return mse, dmse
    mono, dmono = loss_mono_grad(pred, epsilon)
    return mse + beta_effective * mono, dmse + beta_effective * dmono


def beta_schedule(epoch: int, beta: float, ramp_epochs: int) -> float:
    """Monotonicity-weight ramp: off for the first fifth of the ramp,
    then linear up to ``beta`` at ``ramp_epochs``."""
    if ramp_epochs < 1:
        raise ValueError("ramp_epochs must be >= 1")
    if epoch <= ramp_epochs / 5:
        return 0.0
    return beta * min(epoch / ramp_epochs, 1.0)
