"""Inverse dynamics (recursive Newton-Euler) and the leader-arm compensation torque stack."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import axis_angle
from .kinematics import KinematicChain


@dataclass(frozen=True)
class FrictionParams:
    """Per-joint static/viscous friction model parameters."""

    k_static: np.ndarray     # N m
    k_viscous: np.ndarray    # N m s / rad
    qd_threshold: np.ndarray  # rad/s, boundary between the two regimes

    def __post_init__(self):
        for name in ("k_static", "k_viscous", "qd_threshold"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if np.any(self.k_static < 0) or np.any(self.k_viscous < 0):
            raise ValueError("friction coefficients must be >= 0")
        if np.any(self.qd_threshold <= 0):
            raise ValueError("velocity threshold must be > 0")


@dataclass(frozen=True)
class CompensationGains:
    """Gains and gating thresholds for the joint-difference restoring torque."""

    k_p: np.ndarray
    k_d: np.ndarray
    k_i: np.ndarray
    error_threshold: float = 0.05    # rad, |q_L - q_B| must exceed this
    limit_margin: float = 0.15       # rad, leader joint must be this close to a soft limit
    integral_clamp: float = 1.0      # N m, anti-windup bound on the integral term

    def __post_init__(self):
        for name in ("k_p", "k_d", "k_i"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if self.limit_margin <= 0 or self.error_threshold < 0:
            raise ValueError("limit_margin must be > 0 and error_threshold >= 0")


@dataclass(frozen=True)
class TriggerParams:
    stiffness: float = 0.2   # N m / rad spring opposing the pull
    feedback: float = 0.1    # N m constant offset rendered while grasping


@dataclass(frozen=True)
class FeedbackState:
    """Integral accumulator for the restoring-torque controller; caller owns mutation."""

    integral: np.ndarray

    @staticmethod
    def zero(n: int) -> "FeedbackState":
        return FeedbackState(integral=np.zeros(n))


@dataclass(frozen=True)
class TorqueStack:
    """The four leader torque components and their (exact elementwise) sum."""

    tau_grav: np.ndarray
    tau_fric: np.ndarray
    tau_joint: np.ndarray
    tau_trig: np.ndarray

    @property
    def tau_total(self) -> np.ndarray:
        return self.tau_grav + self.tau_fric + self.tau_joint + self.tau_trig


def rnea(chain: KinematicChain, q, qdot, qddot, gravity=None) -> np.ndarray:
    """Joint torques M(q) qdd + C(q, qd) qd + g(q) for the rigid serial chain.

    Gravity enters through the standard fictitious base acceleration -g.
    All link quantities are propagated in local link frames.
    """
    q = chain.check_q(q)
    qd = chain.check_q(qdot)
    qdd = chain.check_q(qddot)
    g = chain.gravity if gravity is None else np.asarray(gravity, dtype=float)
    n = chain.n

    # parent->link rotations and joint-origin offsets at this configuration
    rots = []
    offs = []
    for joint, qi in zip(chain.joints, q):
        rots.append(joint.offset.rotation @ axis_angle(joint.axis, qi))
        offs.append(joint.offset.translation)

    F = [np.zeros(3)] * n
    N = [np.zeros(3)] * n
    omegas = [np.zeros(3)]
    alphas = [np.zeros(3)]
    accs = [-g]  # fictitious base acceleration carries gravity through the recursion
    for i, joint in enumerate(chain.joints):
        Rt = rots[i].T
        w_p, al_p, a_p = omegas[-1], alphas[-1], accs[-1]
        w_i = Rt @ w_p + qd[i] * joint.axis
        al_i = Rt @ al_p + np.cross(Rt @ w_p, qd[i] * joint.axis) + qdd[i] * joint.axis
        a_i = Rt @ (a_p + np.cross(al_p, offs[i]) + np.cross(w_p, np.cross(w_p, offs[i])))
        omegas.append(w_i)
        alphas.append(al_i)
        accs.append(a_i)
        c = joint.inertial.com
        a_com = a_i + np.cross(al_i, c) + np.cross(w_i, np.cross(w_i, c))
        F[i] = joint.inertial.mass * a_com
        I = joint.inertial.inertia
        N[i] = I @ al_i + np.cross(w_i, I @ w_i)

    tau = np.zeros(n)
    f_child = np.zeros(3)
    n_child = np.zeros(3)
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            R_child = rots[i + 1]
            p_child = offs[i + 1]
            f_from_child = R_child @ f_child
            n_from_child = R_child @ n_child + np.cross(p_child, f_from_child)
        else:
            f_from_child = np.zeros(3)
            n_from_child = np.zeros(3)
        f_i = F[i] + f_from_child
        n_i = N[i] + np.cross(chain.joints[i].inertial.com, F[i]) + n_from_child
        tau[i] = n_i @ chain.joints[i].axis
        f_child, n_child = f_i, n_i
    return tau


def gravity_torque(chain: KinematicChain, q, gravity=None) -> np.ndarray:
    """Static gravity load g(q); equals dU/dq of the total potential energy."""
    z = np.zeros(chain.n)
    return rnea(chain, q, z, z, gravity)


def mass_matrix(chain: KinematicChain, q) -> np.ndarray:
    """Joint-space inertia matrix, column by column via unit-acceleration RNEA."""
    n = chain.n
    z = np.zeros(n)
    M = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        M[:, j] = rnea(chain, q, z, e, gravity=np.zeros(3))
    return M


def coriolis_torque(chain: KinematicChain, q, qdot) -> np.ndarray:
    """Velocity-product term C(q, qd) qd."""
    return rnea(chain, q, qdot, np.zeros(chain.n), gravity=np.zeros(3))


def potential_energy(chain: KinematicChain, q, gravity=None) -> float:
    """Total gravitational potential energy; finite-difference oracle for gravity_torque."""
    from .kinematics import forward_kinematics

    g = chain.gravity if gravity is None else np.asarray(gravity, dtype=float)
    _, frames = forward_kinematics(chain, q)
    U = 0.0
    for joint, frame in zip(chain.joints, frames):
        com_world = frame.transform_point(joint.inertial.com)
        U -= joint.inertial.mass * (g @ com_world)
    return float(U)


def kinetic_energy(chain: KinematicChain, q, qdot) -> float:
    qdot = np.asarray(qdot, dtype=float)
    return float(0.5 * qdot @ mass_matrix(chain, q) @ qdot)


def friction_torque(params: FrictionParams, qdot) -> np.ndarray:
    """Static-or-viscous friction per joint; sgn(0) = 0 so no torque at rest."""
    qd = np.asarray(qdot, dtype=float)
    static = params.k_static * np.sign(qd)
    viscous = params.k_viscous * qd
    return np.where(np.abs(qd) < params.qd_threshold, static, viscous)


def joint_feedback_torque(
    gains: CompensationGains,
    q_L,
    q_B,
    qdot_L,
    q_min,
    q_max,
    dt: float,
    state: FeedbackState | None = None,
) -> tuple[np.ndarray, FeedbackState]:
    """Restoring torque pulling the leader back toward the follower near soft limits.

    Active per joint only when |q_L - q_B| exceeds the error threshold AND the
    leader joint sits within the margin of one of its limits. PID on the error
    with a clamped integral; sign is toward q_B.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    q_L = np.asarray(q_L, dtype=float)
    q_B = np.asarray(q_B, dtype=float)
    qd_L = np.asarray(qdot_L, dtype=float)
    if state is None:
        state = FeedbackState.zero(q_L.shape[0])

    e = q_L - q_B
    near_limit = (q_L - np.asarray(q_min) < gains.limit_margin) | (
        np.asarray(q_max) - q_L < gains.limit_margin
    )
    active = (np.abs(e) > gains.error_threshold) & near_limit

    integral = np.where(active, state.integral + e * dt, 0.0)
    integral = np.clip(
        integral,
        -gains.integral_clamp / np.maximum(gains.k_i, 1e-12),
        gains.integral_clamp / np.maximum(gains.k_i, 1e-12),
    )
    tau = -(gains.k_p * e + gains.k_d * qd_L + gains.k_i * integral)
    tau = np.where(active, tau, 0.0)
    return tau, FeedbackState(integral=integral)


def trigger_torque(
    n: int,
    trigger_joint: int,
    trigger_angle: float,
    grasp_contact: bool,
    params: TriggerParams = TriggerParams(),
) -> np.ndarray:
    """Spring resistance on the trigger joint plus a constant offset while grasping."""
    tau = np.zeros(n)
    value = params.stiffness * trigger_angle
    if grasp_contact:
        value += params.feedback
    tau[trigger_joint] = value
    return tau


def total_leader_torque(
    chain: KinematicChain,
    q_L,
    qdot_L,
    q_B,
    friction: FrictionParams,
    gains: CompensationGains,
    dt: float,
    trigger_angle: float = 0.0,
    grasp_contact: bool = False,
    trigger: TriggerParams = TriggerParams(),
    feedback_state: FeedbackState | None = None,
) -> tuple[TorqueStack, FeedbackState]:
    """Full leader servo command: gravity + friction + joint feedback + trigger."""
    tau_grav = gravity_torque(chain, q_L)
    tau_fric = friction_torque(friction, qdot_L)
    tau_joint, new_state = joint_feedback_torque(
        gains, q_L, q_B, qdot_L, chain.q_min, chain.q_max, dt, feedback_state
    )
    trig_idx = chain.trigger_joint if chain.trigger_joint is not None else chain.n - 1
    tau_trig = trigger_torque(chain.n, trig_idx, trigger_angle, grasp_contact, trigger)
    return TorqueStack(tau_grav, tau_fric, tau_joint, tau_trig), new_state


def forward_dynamics(chain: KinematicChain, q, qdot, tau=None) -> np.ndarray:
    """Joint accelerations under applied torque (default zero: passive motion)."""
    n = chain.n
    tau = np.zeros(n) if tau is None else np.asarray(tau, dtype=float)
    bias = rnea(chain, q, qdot, np.zeros(n))
    return np.linalg.solve(mass_matrix(chain, q), tau - bias)
