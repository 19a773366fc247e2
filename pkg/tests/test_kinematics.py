import numpy as np
import pytest

from teleoparm.geometry import RigidTransform, pose_error, rot_y
from teleoparm.kinematics import (
    NotConverged,
    forward_kinematics,
    jacobian,
    solve_ik,
)


class TestForwardKinematics:
    def test_two_link_stretched(self, two_link):
        ee, frames = forward_kinematics(two_link, [0.0, 0.0])
        np.testing.assert_allclose(ee.translation, [2.0, 0.0, 0.0], atol=1e-15)
        assert len(frames) == 2

    def test_two_link_elbow_bend(self, two_link):
        # first link up, elbow folds back level: analytic (1, 0, 1)
        ee, _ = forward_kinematics(two_link, [np.pi / 2, -np.pi / 2])
        np.testing.assert_allclose(ee.translation, [1.0, 0.0, 1.0], atol=1e-12)

    def test_identity_config_is_offsets_only(self, demo_chain):
        ee, _ = forward_kinematics(demo_chain, np.zeros(demo_chain.n))
        acc = RigidTransform.identity()
        for joint in demo_chain.joints:
            acc = acc @ joint.offset
        acc = acc @ demo_chain.ee_offset
        np.testing.assert_allclose(ee.translation, acc.translation, atol=1e-12)
        np.testing.assert_allclose(ee.rotation, acc.rotation, atol=1e-12)

    def test_dimension_mismatch(self, two_link):
        with pytest.raises(ValueError):
            forward_kinematics(two_link, [0.0, 0.0, 0.0])


class TestJacobian:
    def test_two_link_analytic_row(self, two_link):
        J = jacobian(two_link, [0.0, 0.0])
        # stretched along x: moving either joint produces pure z motion
        np.testing.assert_allclose(J[0, :], [0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(J[2, :], [2.0, 1.0], atol=1e-12)

    def test_angular_row_is_axis(self, two_link):
        J = jacobian(two_link, [0.3, -0.4])
        np.testing.assert_allclose(J[3:, 0], [0.0, -1.0, 0.0], atol=1e-12)

    def test_finite_difference(self, demo_chain, rng):
        h = 1e-6
        for _ in range(100):
            q = rng.uniform(demo_chain.q_min, demo_chain.q_max)
            J = jacobian(demo_chain, q)
            for j in range(demo_chain.n):
                dq = np.zeros(demo_chain.n)
                dq[j] = h
                p0, _ = forward_kinematics(demo_chain, q - dq)
                p1, _ = forward_kinematics(demo_chain, q + dq)
                dp = (p1.translation - p0.translation) / (2.0 * h)
                np.testing.assert_allclose(J[:3, j], dp, atol=1e-6)


class TestSolveIk:
    def test_fixed_point(self, demo_chain):
        q = np.array([0.1, 0.4, 0.8, -0.2, 0.5, 0.3])
        target, _ = forward_kinematics(demo_chain, q)
        out = solve_ik(demo_chain, target, q)
        np.testing.assert_allclose(out, q, atol=1e-9)

    def test_round_trip_random_targets(self, demo_chain, rng):
        for _ in range(20):
            q_true = rng.uniform(demo_chain.q_min * 0.5, demo_chain.q_max * 0.5)
            target, _ = forward_kinematics(demo_chain, q_true)
            seed = q_true + rng.normal(0.0, 0.05, demo_chain.n)
            q = solve_ik(demo_chain, target, demo_chain.clamp(seed))
            got, _ = forward_kinematics(demo_chain, q)
            ep, er = pose_error(target, got)
            assert ep <= 1e-4
            assert er <= 1e-4

    def test_two_link_reach(self, two_link):
        target, _ = forward_kinematics(two_link, [np.pi / 2, -np.pi / 2])
        q = solve_ik(two_link, target, np.array([1.2, -1.0]))
        got, _ = forward_kinematics(two_link, q)
        ep, er = pose_error(target, got)
        assert ep < 1e-4 and er < 1e-4

    def test_unreachable_target(self, two_link):
        target = RigidTransform(rot_y(0.0), np.array([3.0, 0.0, 0.0]))
        with pytest.raises(NotConverged):
            solve_ik(two_link, target, np.zeros(2))

    def test_limits_respected(self, demo_chain, rng):
        for _ in range(10):
            q_true = rng.uniform(demo_chain.q_min * 0.5, demo_chain.q_max * 0.5)
            target, _ = forward_kinematics(demo_chain, q_true)
            seed = demo_chain.clamp(q_true + rng.normal(0.0, 0.2, demo_chain.n))
            q = solve_ik(demo_chain, target, seed)
            assert np.all(q >= demo_chain.q_min) and np.all(q <= demo_chain.q_max)
