import numpy as np
import pytest

from maestro import kalman
from maestro.phase import TWO_PI, phase_diff, wrap_phase
from maestro.score import CONTROL_20HZ, Score
from maestro.synth import ConductorStyle, generate_take


def steady_score():
    durations = [2.0] + [0.7] * 11
    durations[2] = 2.725
    return Score(bar_count=12, bar_durations=tuple(durations),
                 fermata_bars=frozenset({2}), label="kalman-test")


def noiseless_takes(n=3, tempo=1.0):
    score = steady_score()
    takes = [
        generate_take(
            score,
            ConductorStyle(noise_std=0.0, tempo_jitter=0.0, seed=100 + i,
                           amplitude=1.0 + 0.1 * i),
            tempo,
            CONTROL_20HZ,
        )
        for i in range(n)
    ]
    return score, takes


class TestFit:
    def test_omega_matches_constant_increment(self):
        # synthetic labels advancing exactly 0.45 rad/step
        score, takes = noiseless_takes(1)
        take = takes[0]
        phases = wrap_phase(np.cumsum(np.full(len(take), 0.45)))
        take.label_phases = phases
        take.label_bars = np.zeros(len(take), dtype=np.int64)
        model = kalman.fit([take])
        assert model.omega == pytest.approx(0.45, abs=1e-12)

    def test_noiseless_linear_observations_give_tiny_R(self):
        # craft a take whose features ARE linear in (sin, cos)
        score, takes = noiseless_takes(1)
        take = takes[0]
        rng = np.random.default_rng(0)
        H_true = rng.normal(size=(take.keypoints.feature_dim, 2))
        u = np.stack([np.sin(take.label_phases), np.cos(take.label_phases)], axis=1)
        feats = u @ H_true.T

        class Linear:
            label_phases = take.label_phases
            label_bars = take.label_bars

        linear_take = Linear()
        states = u
        Z = feats
        X = np.concatenate([states, np.ones((len(states), 1))], axis=1)
        coef = np.linalg.solve(X.T @ X, X.T @ Z)
        resid = Z - X @ coef
        assert np.abs(resid).max() < 1e-9

    def test_refit_is_deterministic(self):
        score, takes = noiseless_takes(2)
        a = kalman.fit(takes)
        b = kalman.fit(takes)
        assert a.omega == b.omega
        np.testing.assert_array_equal(a.obs_matrix, b.obs_matrix)
        np.testing.assert_array_equal(a.obs_cov, b.obs_cov)


class TestPredict:
    def model_with_omega(self, omega):
        return kalman.KalmanPhaseModel(
            omega=omega,
            obs_matrix=np.zeros((4, 2)),
            obs_offset=np.zeros(4),
            obs_cov=np.eye(4),
            process_cov=0.01 * np.eye(2),
            init_cov=np.eye(2),
        )

    def test_rotation(self):
        model = self.model_with_omega(0.45)
        state = kalman.KalmanState(np.array([0.0, 1.0]), np.eye(2))
        kalman.predict(model, state)
        np.testing.assert_allclose(state.mean, [np.sin(0.45), np.cos(0.45)], atol=1e-12)

    def test_zero_omega_grows_covariance_only(self):
        model = self.model_with_omega(0.0)
        state = kalman.KalmanState(np.array([0.3, 0.7]), np.eye(2))
        kalman.predict(model, state)
        np.testing.assert_allclose(state.mean, [0.3, 0.7])
        np.testing.assert_allclose(state.cov, np.eye(2) + model.process_cov)

    def test_quarter_turn_period(self):
        model = self.model_with_omega(np.pi / 2)
        state = kalman.KalmanState(np.array([0.0, 1.0]), np.eye(2))
        for _ in range(4):
            kalman.predict(model, state)
        np.testing.assert_allclose(state.mean, [0.0, 1.0], atol=1e-12)


class TestUpdate:
    def make_model(self, r_scale):
        rng = np.random.default_rng(1)
        H = rng.normal(size=(6, 2))
        return kalman.KalmanPhaseModel(
            omega=0.2,
            obs_matrix=H,
            obs_offset=np.zeros(6),
            obs_cov=r_scale * np.eye(6),
            process_cov=0.01 * np.eye(2),
            init_cov=np.eye(2),
        )

    def test_huge_R_keeps_prior(self):
        model = self.make_model(1e12)
        state = kalman.KalmanState(np.array([0.2, 0.9]), np.eye(2))
        prior = state.mean.copy()
        kalman.update(model, state, np.ones(6) * 5.0)
        np.testing.assert_allclose(state.mean, prior, atol=1e-6)

    def test_tiny_R_snaps_to_observation(self):
        model = self.make_model(1e-12)
        true_state = np.array([np.sin(1.1), np.cos(1.1)])
        obs = model.obs_matrix @ true_state
        state = kalman.KalmanState(np.array([0.0, 1.0]), np.eye(2))
        phi = kalman.update(model, state, obs)
        np.testing.assert_allclose(state.mean, true_state, atol=1e-5)
        assert phi == pytest.approx(1.1, abs=1e-5)

    def test_covariance_stays_symmetric_psd(self):
        rng = np.random.default_rng(5)
        model = self.make_model(0.5)
        state = model.begin_stream()
        for _ in range(200):
            kalman.predict(model, state)
            kalman.update(model, state, rng.normal(size=6))
            np.testing.assert_allclose(state.cov, state.cov.T, atol=1e-12)
            assert np.linalg.eigvalsh(state.cov).min() >= -1e-10


class TestOnSyntheticTakes:
    def test_tracks_regular_bars_and_fails_fermatas(self):
        score, takes = noiseless_takes(3)
        model = kalman.fit(takes[:2])
        take = takes[2]
        est = kalman.filter_take(model, take)
        err = phase_diff(take.label_phases, est) ** 2
        regular = ~np.isin(take.label_bars, list(score.hold_bars))
        mspe_regular = float(np.mean(err[regular]))
        fermata = np.isin(take.label_bars, list(score.fermata_bars))
        mspe_fermata = float(np.mean(err[fermata]))
        assert mspe_regular < 0.1, f"regular-bar MSPE {mspe_regular:.3f}"
        assert mspe_fermata > mspe_regular

    def test_keeps_advancing_through_holds(self):
        score, takes = noiseless_takes(3)
        model = kalman.fit(takes[:2])
        take = takes[2]
        est = kalman.filter_take(model, take)
        flat = np.flatnonzero(
            (take.label_bars == 2)
            & (np.abs(np.diff(np.concatenate([take.label_phases, [0]]))) < 1e-12)
        )
        # during the hold the labels freeze but the filter keeps rotating
        if len(flat) > 6:
            drift = phase_diff(est[flat[6]], est[flat[0]])
            assert abs(drift) > 0.2
