import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maestro.errors import ConfigError, InvalidFrameError, UnsupportedRateError
from maestro.kinematics import (
    UPPER_BODY_9,
    KeypointSet,
    KinematicStream,
    PoseFrame,
    backward_differences,
    calibration_height,
    decimate_positions,
    derive_kinematics,
    mirror_lr,
    normalize_pose,
    resample,
)


def frame_from(coords):
    return PoseFrame(t=0, pos=np.asarray(coords, dtype=float))


def upper_body_frame(rng=None):
    rng = rng or np.random.default_rng(0)
    pos = rng.normal(size=(9, 2)) * 0.2
    pos[UPPER_BODY_9.index("hip_center")] = 0.0
    return PoseFrame(t=0, pos=pos)


class TestKeypointSet:
    def test_default_set(self):
        assert UPPER_BODY_9.count == 9
        assert UPPER_BODY_9.dims == 2
        assert UPPER_BODY_9.feature_dim == 54

    def test_duplicate_names_rejected(self):
        with pytest.raises(ConfigError):
            KeypointSet(("a", "a"), 2)

    def test_mirror_pairs_derived(self):
        pairs = UPPER_BODY_9.mirror_pairs()
        assert (UPPER_BODY_9.index("r_wrist"), UPPER_BODY_9.index("l_wrist")) in pairs

    def test_unpaired_set_rejected(self):
        with pytest.raises(ConfigError):
            KeypointSet(("r_wrist", "hip_center"), 2).mirror_pairs()


class TestNormalizePose:
    def test_affine_map(self):
        kp = KeypointSet(("r_wrist", "hip_center"), 2)
        frame = frame_from([[3.0, 4.0], [2.0, 3.0]])
        out = normalize_pose(frame, kp, height_scale=2.0)
        np.testing.assert_allclose(out.pos[0], [0.5, 0.5])
        np.testing.assert_allclose(out.pos[1], [0.0, 0.0])

    def test_identity(self):
        frame = upper_body_frame()
        out = normalize_pose(frame, UPPER_BODY_9, height_scale=1.0)
        np.testing.assert_array_equal(out.pos, frame.pos)

    def test_degenerate_frame(self):
        frame = frame_from(np.ones((9, 2)) * 5.0)
        out = normalize_pose(frame, UPPER_BODY_9, height_scale=3.0)
        np.testing.assert_array_equal(out.pos, np.zeros((9, 2)))

    def test_hip_mean_used_when_sides_present(self):
        kp = KeypointSet(("r_hip", "l_hip", "r_wrist", "l_wrist"), 2)
        frame = frame_from([[1.0, 0.0], [3.0, 0.0], [4.0, 1.0], [0.0, 1.0]])
        out = normalize_pose(frame, kp, height_scale=1.0)
        np.testing.assert_allclose(out.pos[2], [2.0, 1.0])

    def test_nonfinite_rejected(self):
        pos = np.zeros((9, 2))
        pos[0, 0] = np.nan
        with pytest.raises(InvalidFrameError):
            normalize_pose(frame_from(pos), UPPER_BODY_9, height_scale=1.0)

    def test_bad_scale_rejected(self):
        with pytest.raises(ConfigError):
            normalize_pose(upper_body_frame(), UPPER_BODY_9, height_scale=0.0)

    def test_calibration_height(self):
        pos = np.zeros((9, 2))
        pos[UPPER_BODY_9.index("r_shoulder")] = [0.2, 0.5]
        pos[UPPER_BODY_9.index("l_shoulder")] = [-0.2, 0.5]
        assert calibration_height(frame_from(pos), UPPER_BODY_9) == pytest.approx(0.5)


class TestDeriveKinematics:
    def test_scalar_track(self):
        pos = np.array([0.0, 1.0, 3.0]).reshape(3, 1, 1)
        frames = derive_kinematics(pos)
        np.testing.assert_allclose([f.vel[0, 0] for f in frames], [0.0, 1.0, 2.0])
        np.testing.assert_allclose([f.acc[0, 0] for f in frames], [0.0, 1.0, 1.0])

    def test_constant_sequence(self):
        pos = np.ones((5, 2, 2))
        frames = derive_kinematics(pos)
        for f in frames:
            np.testing.assert_array_equal(f.vel, 0.0)
            np.testing.assert_array_equal(f.acc, 0.0)

    def test_linear_sequence(self):
        c = 0.3
        pos = (c * np.arange(6)).reshape(6, 1, 1)
        frames = derive_kinematics(pos)
        for f in frames[2:]:
            assert f.vel[0, 0] == pytest.approx(c)
            assert f.acc[0, 0] == pytest.approx(0.0)

    def test_empty_sequence(self):
        assert derive_kinematics([]) == []

    @given(st.integers(1, 40), st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_cumsum_reconstruction_exact(self, length, seed):
        # position recovered from pos[0] plus cumulative velocity
        rng = np.random.default_rng(seed)
        pos = rng.normal(size=(length, 3, 2))
        vel, _ = backward_differences(pos)
        rebuilt = pos[0] + np.cumsum(vel, axis=0)
        rel = np.abs(rebuilt - pos) / np.maximum(np.abs(pos), 1.0)
        assert rel.max() < 1e-12

    def test_stream_matches_batch_bitwise(self):
        rng = np.random.default_rng(7)
        pos = rng.normal(size=(50, 9, 2))
        vel, acc = backward_differences(pos)
        stream = KinematicStream()
        for i in range(len(pos)):
            f = stream.push(pos[i])
            assert np.array_equal(f.vel, vel[i])
            assert np.array_equal(f.acc, acc[i])


class TestMirror:
    def test_reflection_and_swap(self):
        pos = np.zeros((9, 2))
        pos[UPPER_BODY_9.index("r_wrist")] = [0.3, 0.5]
        pos[UPPER_BODY_9.index("l_wrist")] = [-0.2, 0.4]
        out = mirror_lr(frame_from(pos), UPPER_BODY_9)
        np.testing.assert_allclose(out.pos[UPPER_BODY_9.index("r_wrist")], [0.2, 0.4])
        np.testing.assert_allclose(out.pos[UPPER_BODY_9.index("l_wrist")], [-0.3, 0.5])

    def test_involution(self):
        frame = upper_body_frame()
        twice = mirror_lr(mirror_lr(frame, UPPER_BODY_9), UPPER_BODY_9)
        np.testing.assert_array_equal(twice.pos, frame.pos)

    def test_hip_fixed_point(self):
        frame = upper_body_frame()
        out = mirror_lr(frame, UPPER_BODY_9)
        np.testing.assert_array_equal(out.pos[UPPER_BODY_9.index("hip_center")], [0.0, 0.0])

    def test_commutes_with_normalize(self):
        rng = np.random.default_rng(3)
        pos = rng.normal(size=(9, 2))
        hip = UPPER_BODY_9.index("hip_center")
        frame = frame_from(pos)
        a = mirror_lr(normalize_pose(frame, UPPER_BODY_9, 2.0), UPPER_BODY_9)
        # mirroring first only commutes about the hip origin, so mirror the
        # hip-centered frame on both routes
        centered = PoseFrame(t=0, pos=pos - pos[hip])
        b = normalize_pose(mirror_lr(centered, UPPER_BODY_9), UPPER_BODY_9, 2.0)
        np.testing.assert_allclose(a.pos, b.pos, atol=1e-12)


class TestResample:
    def test_length_arithmetic(self):
        pos = np.zeros((300, 9, 2))
        frames = derive_kinematics(pos)
        out = resample(frames, 60, 20)
        assert len(out) == 100

    def test_velocity_rescaling(self):
        c = 0.1
        pos = (c * np.arange(60)).reshape(60, 1, 1)
        frames = derive_kinematics(pos)
        out = resample(frames, 60, 20)
        assert out[5].vel[0, 0] == pytest.approx(3 * c)

    def test_identity_rate(self):
        rng = np.random.default_rng(11)
        frames = derive_kinematics(rng.normal(size=(30, 9, 2)))
        out = resample(frames, 20, 20)
        for a, b in zip(frames, out):
            np.testing.assert_array_equal(a.pos, b.pos)
            np.testing.assert_array_equal(a.vel, b.vel)
            np.testing.assert_array_equal(a.acc, b.acc)

    def test_non_integer_stride_rejected(self):
        frames = derive_kinematics(np.zeros((10, 9, 2)))
        with pytest.raises(UnsupportedRateError):
            resample(frames, 50, 20)

    def test_decimate_positions(self):
        pos = np.arange(12).reshape(12, 1, 1)
        out = decimate_positions(pos, 60, 20)
        np.testing.assert_array_equal(out.ravel(), [0, 3, 6, 9])
