"""Linear Kalman-filter phase estimator.

The baseline alternative to the LSTM. Phase lives on the unit circle as
the 2-vector [sin(phi), cos(phi)]; progression is then a plain rotation
by a constant mean increment, and pose features relate to the state
through a learned affine map, so the whole filter stays linear. The
state is never renormalized onto the circle; phase extraction tolerates
non-unit norm.

This works well while the tempo is steady and fails in fermata bars by
design: the rotation prior keeps advancing while the true phase holds.
That documented failure mode is part of the contract and is asserted in
the tests, not patched here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, UndefinedPhaseError
from .features import take_features
from .phase import phase_diff, phase_from_sincos
from .synth import Take


@dataclass
class KalmanState:
    """Gaussian belief over the unit-circle phase state."""

    mean: np.ndarray       # shape (2,)
    cov: np.ndarray        # shape (2, 2)

    def copy(self) -> "KalmanState":
        return KalmanState(self.mean.copy(), self.cov.copy())


@dataclass
class KalmanPhaseModel:
    """Fitted filter parameters.

    obs_matrix maps [sin, cos] to expected pose features; obs_offset is
    the feature mean folded out so the map can stay linear.
    """

    omega: float                 # mean phase increment per step, radians
    obs_matrix: np.ndarray       # (D, 2)
    obs_offset: np.ndarray       # (D,)
    obs_cov: np.ndarray          # R, (D, D)
    process_cov: np.ndarray      # Q, (2, 2)
    init_cov: np.ndarray         # P0, (2, 2)

    @property
    def rotation(self) -> np.ndarray:
        c, s = np.cos(self.omega), np.sin(self.omega)
        # rotate [sin phi, cos phi] -> [sin(phi+w), cos(phi+w)]
        return np.array([[c, s], [-s, c]])

    def begin_stream(self) -> KalmanState:
        return KalmanState(mean=np.array([0.0, 1.0]), cov=self.init_cov.copy())

    def stream_phase(self, state: KalmanState, features: np.ndarray) -> float:
        """Predict-update on one frame; returns the phase estimate."""
        predict(self, state)
        return update(self, state, features)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def fit(
    takes: Sequence[Take],
    *,
    ridge: float = 1e-9,
    init_var: float = 1.0,
) -> KalmanPhaseModel:
    """Estimate rotation increment, observation map, and noise covariances
    from labelled takes."""
    if not takes:
        raise ConfigError("need at least one take to fit the filter")
    states = []
    increments = []
    observations = []
    for take in takes:
        phases = take.label_phases
        states.append(np.stack([np.sin(phases), np.cos(phases)], axis=1))
        increments.append(phase_diff(phases[1:], phases[:-1]))
        observations.append(take_features(take))
    U = np.concatenate(states)
    Z = np.concatenate(observations)
    omega = float(np.mean(np.concatenate(increments)))

    # affine least squares Z ~ U @ H.T + d
    X = np.concatenate([U, np.ones((len(U), 1))], axis=1)
    gram = X.T @ X
    rank = np.linalg.matrix_rank(gram)
    if rank < 3:
        warnings.warn("rank-deficient observation fit; adding ridge regularization")
        gram = gram + ridge * len(U) * np.eye(3)
    coef = np.linalg.solve(gram, X.T @ Z)  # (3, D)
    H = coef[:2].T
    d = coef[2]

    resid = Z - (U @ H.T + d)
    R = _symmetrize(resid.T @ resid / len(Z))
    # tiny diagonal floor: residuals of low-rank synthetic motion can be
    # exactly coplanar, which would make every innovation solve singular
    R += max(float(np.trace(R)) / len(R), 1e-12) * 1e-6 * np.eye(len(R))

    c, s = np.cos(omega), np.sin(omega)
    G = np.array([[c, s], [-s, c]])
    q_resid = np.concatenate([u[1:] - u[:-1] @ G.T for u in states])
    Q = _symmetrize(q_resid.T @ q_resid / len(q_resid))

    return KalmanPhaseModel(
        omega=omega,
        obs_matrix=H,
        obs_offset=d,
        obs_cov=R,
        process_cov=Q,
        init_cov=init_var * np.eye(2),
    )


def predict(model: KalmanPhaseModel, state: KalmanState) -> KalmanState:
    """Rotate the mean by the fitted increment and inflate the covariance."""
    G = model.rotation
    state.mean = G @ state.mean
    state.cov = _symmetrize(G @ state.cov @ G.T + model.process_cov)
    return state


def update(model: KalmanPhaseModel, state: KalmanState, observation: np.ndarray) -> float:
    """Standard linear-Gaussian correction; returns the phase estimate."""
    z = np.asarray(observation, dtype=float)
    H = model.obs_matrix
    if z.shape != (H.shape[0],):
        raise ConfigError(f"expected observation of dimension {H.shape[0]}, got {z.shape}")
    innovation = z - (H @ state.mean + model.obs_offset)
    S = H @ state.cov @ H.T + model.obs_cov
    try:
        K = np.linalg.solve(S, H @ state.cov).T
    except np.linalg.LinAlgError:
        warnings.warn("singular innovation covariance; using regularized inverse")
        S = S + 1e-9 * np.eye(len(S))
        K = np.linalg.solve(S, H @ state.cov).T
    state.mean = state.mean + K @ innovation
    # Joseph form keeps the covariance symmetric PSD
    A = np.eye(2) - K @ H
    state.cov = _symmetrize(A @ state.cov @ A.T + K @ model.obs_cov @ K.T)
    if state.mean[0] == 0.0 and state.mean[1] == 0.0:
        raise UndefinedPhaseError("filter state collapsed to the zero vector")
    return phase_from_sincos(state.mean[0], state.mean[1])


def filter_take(model: KalmanPhaseModel, take: Take) -> np.ndarray:
    """Offline convenience: filtered phase estimates for a whole take."""
    feats = take_features(take)
    state = model.begin_stream()
    return np.array([model.stream_phase(state, f) for f in feats])
