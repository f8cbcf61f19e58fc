import numpy as np
import pytest
from numpy.testing import assert_allclose

from features import motion
from features.motion import HorizonGaussian, ReferencePlan, TeamDynamics
from tests.conftest import spd


class TestStepTruth:
    def test_zero_control_identity(self):
        dyn = TeamDynamics(2)
        x = np.arange(6.0)
        assert_allclose(motion.step_truth(dyn, x, np.zeros(6), noiseless=True), x)

    def test_ones_control(self):
        dyn = TeamDynamics(2)
        assert_allclose(motion.step_truth(dyn, np.zeros(6), np.ones(6), noiseless=True), np.ones(6))

    def test_replay(self):
        dyn = TeamDynamics(3)
        a = motion.step_truth(dyn, np.zeros(9), np.zeros(9), rng=42)
        b = motion.step_truth(dyn, np.zeros(9), np.zeros(9), rng=42)
        assert np.array_equal(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            motion.step_truth(TeamDynamics(2), np.zeros(6), np.zeros(3))

    def test_process_noise_must_be_pd(self):
        with pytest.raises(ValueError):
            TeamDynamics(1, np.zeros((3, 3)))


class TestTrackingControl:
    def test_on_reference(self):
        r = np.arange(6.0)
        assert_allclose(motion.tracking_control(r, r), 0.0)

    def test_from_origin(self):
        r = np.arange(6.0)
        assert_allclose(motion.tracking_control(r, np.zeros(6)), r)

    def test_noiseless_closed_loop_tracks(self):
        plan = ReferencePlan(3, 4, 12, 4.0)
        dyn = TeamDynamics(3)
        x = plan.team_reference(0)
        for tau in range(12):
            u = motion.tracking_control(plan.team_reference(tau + 1), x)
            x = motion.step_truth(dyn, x, u, noiseless=True)
            assert_allclose(x, plan.team_reference(tau + 1), atol=1e-12)


class TestReferencePlan:
    def test_default_example(self):
        plan = ReferencePlan()
        pos, ang = plan.reference_trajectory(5, 0)
        assert_allclose(pos, [55000.0, -2.2, 0.0], atol=1e-12)
        assert ang[0] == 0.0
        assert ang[1] == pytest.approx(np.pi / 2)

    def test_middle_robot_stays_level(self):
        plan = ReferencePlan()
        for tau in (0, 7, 33, 150):
            assert plan.position(5, tau)[2] == pytest.approx(0.0, abs=1e-12)

    def test_camera_rotation_is_proper(self):
        r = ReferencePlan().camera_rotation(3, 17)
        assert_allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0)

    @pytest.mark.parametrize("n", [2, 3, 10])
    def test_lanes_stay_apart(self, n):
        plan = ReferencePlan(n, 20, 200)
        for tau in range(221):
            p = np.array([plan.position(i, tau)[0] for i in range(1, n + 1)])
            assert np.min(np.abs(p[:, None] - p[None, :]) + np.eye(n) * 1e9) >= 0.8e4


class TestPredictHorizon:
    def test_zero_horizon(self, rng):
        plan = ReferencePlan(1, 3, 10, 1.0)
        cov = spd(rng, 3)
        hg = motion.predict_horizon(TeamDynamics(1), plan, np.ones(3), cov, horizon=0)
        assert_allclose(hg.mean, np.ones(3))
        assert_allclose(hg.cov, cov)

    def test_one_step_by_hand(self):
        plan = ReferencePlan(1, 1, 10, 1.0)
        hg = motion.predict_horizon(TeamDynamics(1, np.eye(3)), plan, np.zeros(3), np.eye(3))
        assert_allclose(hg.cov[:3, :3], np.eye(3))
        assert_allclose(hg.cov[3:, 3:], 2 * np.eye(3))
        assert_allclose(hg.cov[3:, :3], np.eye(3))

    def test_means_follow_plan(self):
        plan = ReferencePlan(2, 3, 10, 4.0)
        hg = motion.predict_horizon(TeamDynamics(2), plan, plan.team_reference(2), 0.1 * np.eye(6), t=2)
        for k in range(4):
            assert_allclose(hg.step_block(k)[0], plan.team_reference(2 + k), atol=1e-12)

    def test_linear_map_oracle(self, rng):
        # x_k = A^k x_0 + sum_j A^(k-j) delta_j, so cov = T blkdiag(S0, Q, Q, Q) T^T
        a = np.eye(3) + 0.1 * rng.standard_normal((3, 3))
        lam = spd(rng, 3, 0.01, 0.1)
        s0 = spd(rng, 3)
        dyn = TeamDynamics(1, lam, a)
        plan = ReferencePlan(1, 3, 10, 1.0)
        hg = motion.predict_horizon(dyn, plan, np.zeros(3), s0)

        t = np.zeros((12, 12))
        for k in range(4):
            for j in range(k + 1):
                t[3 * k:3 * k + 3, 3 * j:3 * j + 3] = np.linalg.matrix_power(a, k - j)
        noise = np.zeros((12, 12))
        noise[:3, :3] = s0
        for j in range(1, 4):
            noise[3 * j:3 * j + 3, 3 * j:3 * j + 3] = lam
        assert_allclose(hg.cov, t @ noise @ t.T, rtol=1e-10, atol=1e-12)

    def test_covariance_stays_spd(self):
        plan = ReferencePlan(2, 30, 100, 4.0)
        dyn = TeamDynamics(2)
        for m in range(1, 31):
            hg = motion.predict_horizon(dyn, plan, plan.team_reference(0), 0.1 * np.eye(6), horizon=m)
            assert_allclose(hg.cov, hg.cov.T, atol=1e-15)
            assert np.linalg.eigvalsh(hg.cov)[0] > 0
            np.linalg.cholesky(hg.cov)

    def test_rollout_covariance_within_five_percent(self):
        plan = ReferencePlan(2, 3, 10, 4.0)
        dyn = TeamDynamics(2, 0.05 * np.eye(3))
        hg = motion.predict_horizon(dyn, plan, plan.team_reference(0), 0.1 * np.eye(6))
        x = motion.sample_rollouts(dyn, hg, 100_000, rng=11)
        err = np.linalg.norm(np.cov(x.T) - hg.cov) / np.linalg.norm(hg.cov)
        assert err <= 0.05

    def test_rollouts_match_moments(self):
        plan = ReferencePlan(1, 2, 10, 1.0)
        dyn = TeamDynamics(1, 0.05 * np.eye(3))
        hg = motion.predict_horizon(dyn, plan, plan.team_reference(0), 0.1 * np.eye(3))
        x = motion.sample_rollouts(dyn, hg, 20000, rng=7)
        assert_allclose(x.mean(axis=0), hg.mean, atol=0.02)
        assert_allclose(np.cov(x.T), hg.cov, atol=0.01)


class TestPriorInfo:
    def test_identity(self):
        assert_allclose(motion.prior_info(HorizonGaussian(np.zeros(6), np.eye(6), 1, 1)), np.eye(6))

    def test_scaled(self):
        assert_allclose(motion.prior_info(HorizonGaussian(np.zeros(6), 2 * np.eye(6), 1, 1)), 0.5 * np.eye(6))

    def test_residual(self, rng):
        cov = spd(rng, 6)
        h = motion.prior_info(HorizonGaussian(np.zeros(6), cov, 1, 1))
        assert np.linalg.norm(h @ cov - np.eye(6)) <= 1e-8 * 6

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            HorizonGaussian(np.zeros(5), np.eye(5), 1, 1)
