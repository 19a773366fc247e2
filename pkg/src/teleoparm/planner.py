"""Joint trajectory generation: synchronized trapezoidal profiles and Cartesian approaches."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, interpolate, pose_error
from .kinematics import KinematicChain, NotConverged, forward_kinematics, solve_ik


class GoalOutOfLimits(Exception):
    pass


class IkFailure(Exception):
    """Cartesian approach could not resolve a waypoint; Stage II must abort."""


@dataclass(frozen=True)
class TrapezoidProfile:
    """Scalar trapezoid/triangle profile for a normalized move of given distance."""

    distance: float   # |q_goal - q_start|, rad
    v_cruise: float
    accel: float
    t_accel: float
    t_cruise: float

    @property
    def duration(self) -> float:
        return 2.0 * self.t_accel + self.t_cruise

    def position(self, t: float) -> float:
        """Distance covered at time t (0 <= result <= distance)."""
        t = min(max(t, 0.0), self.duration)
        if t < self.t_accel:
            return 0.5 * self.accel * t * t
        d_acc = 0.5 * self.accel * self.t_accel ** 2
        if t < self.t_accel + self.t_cruise:
            return d_acc + self.v_cruise * (t - self.t_accel)
        dt = self.duration - t
        return self.distance - 0.5 * self.accel * dt * dt

    def velocity(self, t: float) -> float:
        if t < 0.0 or t > self.duration:
            return 0.0
        if t < self.t_accel:
            return self.accel * t
        if t < self.t_accel + self.t_cruise:
            return self.v_cruise
        return self.accel * (self.duration - t)


def trapezoid(distance: float, v_max: float, a_max: float) -> TrapezoidProfile:
    """Closed-form profile: triangular when the move is too short to reach v_max."""
    if distance <= 0.0:
        return TrapezoidProfile(0.0, 0.0, a_max, 0.0, 0.0)
    t_acc = v_max / a_max
    d_acc = 0.5 * a_max * t_acc ** 2
    if 2.0 * d_acc >= distance:
        t_acc = np.sqrt(distance / a_max)
        return TrapezoidProfile(distance, a_max * t_acc, a_max, t_acc, 0.0)
    t_cruise = (distance - 2.0 * d_acc) / v_max
    return TrapezoidProfile(distance, v_max, a_max, t_acc, t_cruise)


@dataclass(frozen=True)
class JointTrajectory:
    """Time-parameterized joint path; times strictly increasing from 0."""

    times: np.ndarray        # (m,)
    positions: np.ndarray    # (m, n)
    velocities: np.ndarray   # (m, n)

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "positions", np.atleast_2d(np.asarray(self.positions, dtype=float)))
        object.__setattr__(self, "velocities", np.atleast_2d(np.asarray(self.velocities, dtype=float)))
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("waypoint times must be strictly increasing")

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def goal(self) -> np.ndarray:
        return self.positions[-1]

    def sample(self, t: float) -> np.ndarray:
        """Joint positions at time t (clamped to the trajectory span)."""
        if t <= self.times[0]:
            return self.positions[0].copy()
        if t >= self.times[-1]:
            return self.positions[-1].copy()
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        t0, t1 = self.times[i], self.times[i + 1]
        s = (t - t0) / (t1 - t0)
        return (1.0 - s) * self.positions[i] + s * self.positions[i + 1]


def hold_trajectory(q) -> JointTrajectory:
    q = np.asarray(q, dtype=float)
    return JointTrajectory(np.array([0.0]), q[None, :], np.zeros((1, q.shape[0])))


@dataclass(frozen=True)
class TrapezoidalTrajectory:
    """Analytic synchronized trapezoidal move; cheap to build, sampled on demand."""

    q_start: np.ndarray
    q_goal: np.ndarray
    profiles: tuple[TrapezoidProfile, ...]

    @property
    def duration(self) -> float:
        return max((p.duration for p in self.profiles), default=0.0)

    @property
    def goal(self) -> np.ndarray:
        return self.q_goal

    def sample(self, t: float) -> np.ndarray:
        if t >= self.duration:
            return self.q_goal.copy()
        sign = np.sign(self.q_goal - self.q_start)
        return self.q_start + sign * np.array([p.position(t) for p in self.profiles])

    def sample_velocity(self, t: float) -> np.ndarray:
        sign = np.sign(self.q_goal - self.q_start)
        return sign * np.array([p.velocity(t) for p in self.profiles])

    def to_waypoints(self, dt: float = 0.01) -> JointTrajectory:
        T = self.duration
        if T == 0.0:
            return hold_trajectory(self.q_start)
        m = max(2, int(np.ceil(T / dt)) + 1)
        times = np.linspace(0.0, T, m)
        pos = np.array([self.sample(t) for t in times])
        vel = np.array([self.sample_velocity(t) for t in times])
        pos[-1] = self.q_goal
        vel[-1] = 0.0
        return JointTrajectory(times, pos, vel)


def synchronized_trapezoid(
    chain: KinematicChain, q_start, q_goal, v_scale: float = 1.0
) -> TrapezoidalTrajectory:
    """Per-joint trapezoids stretched so every joint finishes with the slowest one."""
    q_start = chain.check_q(q_start)
    q_goal = chain.check_q(q_goal)
    if np.any(q_goal < chain.q_min - 1e-12) or np.any(q_goal > chain.q_max + 1e-12):
        raise GoalOutOfLimits(f"goal {q_goal} violates joint limits")

    delta = q_goal - q_start
    v_max = chain.v_max * v_scale
    a_max = chain.a_max
    profiles = [trapezoid(abs(d), v, a) for d, v, a in zip(delta, v_max, a_max)]
    T = max(p.duration for p in profiles)
    if T == 0.0:
        return TrapezoidalTrajectory(q_start, q_goal, tuple(profiles))

    # stretch each joint to the common duration by lowering its cruise velocity:
    #   T = v/a + d/v  ->  v = (a T - sqrt((a T)^2 - 4 a d)) / 2
    synced = []
    for d, a in zip(np.abs(delta), a_max):
        if d == 0.0:
            synced.append(trapezoid(0.0, 1.0, a))
            continue
        disc = (a * T) ** 2 - 4.0 * a * d
        if disc < 0.0:  # numerical edge: keep the joint's own (shorter) profile
            synced.append(trapezoid(d, np.sqrt(a * d), a))
            continue
        v = (a * T - np.sqrt(disc)) / 2.0
        t_acc = v / a
        synced.append(TrapezoidProfile(d, v, a, t_acc, T - 2.0 * t_acc))
    return TrapezoidalTrajectory(q_start, q_goal, tuple(synced))


def plan_joint_trajectory(
    chain: KinematicChain,
    q_start,
    q_goal,
    dt: float = 0.01,
    v_scale: float = 1.0,
) -> JointTrajectory:
    """Synchronized trapezoidal move as an explicit waypoint trajectory."""
    return synchronized_trapezoid(chain, q_start, q_goal, v_scale).to_waypoints(dt)


def plan_cartesian_approach(
    chain: KinematicChain,
    q_start,
    target: RigidTransform,
    step_p: float = 0.005,
    step_r: float = 0.02,
    dt: float = 0.01,
) -> JointTrajectory:
    """Straight-line + slerp pose waypoints resolved by IK, re-timed under joint limits."""
    q_start = chain.check_q(q_start)
    start_pose, _ = forward_kinematics(chain, q_start)
    dp, dr = pose_error(start_pose, target)
    if dp < 1e-12 and dr < 1e-12:
        return hold_trajectory(q_start)

    steps = max(int(np.ceil(dp / step_p)), int(np.ceil(dr / step_r)), 1)
    q_path = [q_start]
    for k in range(1, steps + 1):
        pose = interpolate(start_pose, target, k / steps)
        try:
            q_path.append(solve_ik(chain, pose, q_path[-1]))
        except NotConverged as e:
            raise IkFailure(f"waypoint {k}/{steps}: {e}") from e

    # verify the final waypoint actually hits the target (limits can block it)
    final_pose, _ = forward_kinematics(chain, q_path[-1])
    ep, er = pose_error(final_pose, target)
    if ep > 1e-4 or er > 1e-4:
        raise IkFailure(f"final waypoint misses target by {ep:.2e} m / {er:.2e} rad")

    return retime_joint_path(chain, q_path, dt)


def retime_joint_path(chain: KinematicChain, q_path, dt: float = 0.01) -> JointTrajectory:
    """Chain per-segment trapezoids so the whole path respects v_max/a_max."""
    segments = []
    t_offset = 0.0
    times = [0.0]
    positions = [np.asarray(q_path[0], dtype=float)]
    velocities = [np.zeros(chain.n)]
    for a, b in zip(q_path[:-1], q_path[1:]):
        seg = plan_joint_trajectory(chain, a, b, dt=dt)
        if seg.duration == 0.0:
            continue
        for t, p, v in zip(seg.times[1:], seg.positions[1:], seg.velocities[1:]):
            times.append(t_offset + t)
            positions.append(p)
            velocities.append(v)
        t_offset += seg.duration
        segments.append(seg)
    if len(times) == 1:
        return hold_trajectory(q_path[0])
    return JointTrajectory(np.array(times), np.array(positions), np.array(velocities))


@dataclass(frozen=True)
class RetargetPlan:
    """Velocity-continuous tracking plan toward the latest leader target.

    Integrates the time-optimal per-joint law (accelerate toward the braking
    velocity sqrt(2 a |err|), saturated at v_max) at the control period, so
    preemption by the next plan never jumps velocity by more than a_max * dt.
    """

    q0: np.ndarray
    v0: np.ndarray
    q_des: np.ndarray
    v_max: np.ndarray
    a_max: np.ndarray
    dt: float

    @property
    def goal(self) -> np.ndarray:
        return self.q_des

    @property
    def duration(self) -> float:
        return np.inf

    def step(self, q: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        err = self.q_des - q
        v_brake = np.sqrt(2.0 * self.a_max * np.abs(err))
        v_des = np.sign(err) * np.minimum(self.v_max, v_brake)
        v_new = np.clip(v_des, v - self.a_max * self.dt, v + self.a_max * self.dt)
        q_new = q + v_new * self.dt
        # snap when one tick away; kills limit-cycle chatter around the target
        settle = (np.abs(err) <= np.abs(v_new) * self.dt + 0.5 * self.a_max * self.dt ** 2) & (
            np.abs(v_new) <= 1.5 * self.a_max * self.dt
        )
        q_new = np.where(settle, self.q_des, q_new)
        v_new = np.where(settle, 0.0, v_new)
        return q_new, v_new

    def sample(self, t: float) -> np.ndarray:
        if t <= 0.0:
            return self.q0.copy()
        q, v = self.q0.copy(), self.v0.copy()
        # round, not ceil: accumulated float error in t must not add a step
        for _ in range(max(1, int(np.floor(t / self.dt + 0.5)))):
            q, v = self.step(q, v)
        return q


def rate_limited_retarget(
    chain: KinematicChain,
    q_now,
    q_des,
    qd_now=None,
    dt: float = 0.01,
) -> RetargetPlan:
    """Fresh plan from the current state to the latest (limit-clamped) leader target."""
    q_now = chain.clamp(chain.check_q(q_now))
    q_des = chain.clamp(chain.check_q(q_des))
    qd_now = np.zeros(chain.n) if qd_now is None else np.asarray(qd_now, dtype=float)
    return RetargetPlan(q_now, qd_now, q_des, chain.v_max, chain.a_max, dt)
