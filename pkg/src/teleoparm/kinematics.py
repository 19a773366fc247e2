"""Serial revolute chain: model, forward kinematics, Jacobian, DLS inverse kinematics."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .geometry import RigidTransform, axis_angle, rotation_log


class NotConverged(Exception):
    """IK failed to reach the target within the iteration budget."""


@dataclass(frozen=True)
class LinkInertia:
    mass: float
    com: np.ndarray          # center of mass in the link frame, m
    inertia: np.ndarray      # 3x3 tensor about the COM, link frame, kg m^2

    def __post_init__(self):
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float).reshape(3))
        I = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if self.mass < 0.0:
            raise ValueError("mass must be >= 0")
        if np.max(np.abs(I - I.T)) > 1e-12:
            raise ValueError("inertia tensor must be symmetric")
        object.__setattr__(self, "inertia", I)


@dataclass(frozen=True)
class Joint:
    name: str
    offset: RigidTransform   # parent link frame -> joint frame, at q = 0
    axis: np.ndarray         # unit rotation axis in the joint frame
    q_min: float
    q_max: float
    v_max: float
    a_max: float
    inertial: LinkInertia    # inertia of the link that follows this joint

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(a)
        if n == 0.0:
            raise ValueError(f"joint {self.name}: zero axis")
        object.__setattr__(self, "axis", a / n)
        if not self.q_min < self.q_max:
            raise ValueError(f"joint {self.name}: q_min must be < q_max")
        if self.v_max <= 0.0 or self.a_max <= 0.0:
            raise ValueError(f"joint {self.name}: v_max and a_max must be > 0")


@dataclass(frozen=True)
class KinematicChain:
    name: str
    joints: tuple[Joint, ...]
    ee_offset: RigidTransform = field(default_factory=RigidTransform.identity)
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    trigger_joint: int | None = None
    link_radius: float = 0.05

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("chain needs at least one joint")
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float).reshape(3))
        if self.trigger_joint is not None and not 0 <= self.trigger_joint < len(self.joints):
            raise ValueError("trigger_joint out of range")

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def q_min(self) -> np.ndarray:
        return np.array([j.q_min for j in self.joints])

    @property
    def q_max(self) -> np.ndarray:
        return np.array([j.q_max for j in self.joints])

    @property
    def v_max(self) -> np.ndarray:
        return np.array([j.v_max for j in self.joints])

    @property
    def a_max(self) -> np.ndarray:
        return np.array([j.a_max for j in self.joints])

    def clamp(self, q) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self.q_min, self.q_max)

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != self.n:
            raise ValueError(f"expected {self.n} joint values, got {q.shape[0]}")
        return q


def forward_kinematics(chain: KinematicChain, q) -> tuple[RigidTransform, list[RigidTransform]]:
    """Base-to-end-effector pose plus the base-to-link frame of every link."""
    q = chain.check_q(q)
    frames = []
    T = RigidTransform.identity()
    for joint, qi in zip(chain.joints, q):
        T = T @ joint.offset @ RigidTransform.from_rotation(axis_angle(joint.axis, qi))
        frames.append(T)
    return T @ chain.ee_offset, frames


def jacobian(chain: KinematicChain, q) -> np.ndarray:
    """Geometric Jacobian (6 x n) at the end-effector, expressed in the base frame."""
    q = chain.check_q(q)
    ee, frames = forward_kinematics(chain, q)
    J = np.zeros((6, chain.n))
    for i, (joint, frame) in enumerate(zip(chain.joints, frames)):
        axis_w = frame.rotation @ joint.axis
        J[:3, i] = np.cross(axis_w, ee.translation - frame.translation)
        J[3:, i] = axis_w
    return J


def pose_twist_error(current: RigidTransform, target: RigidTransform) -> np.ndarray:
    """6-vector (linear, angular) taking current toward target, base frame."""
    dp = target.translation - current.translation
    dw = rotation_log(target.rotation @ current.rotation.T)
    return np.concatenate([dp, dw])


def solve_ik(
    chain: KinematicChain,
    target: RigidTransform,
    seed,
    tol_p: float = 1e-6,
    tol_r: float = 1e-6,
    damping: float = 1e-2,
    step_clamp: float = 0.2,
    max_iters: int = 200,
) -> np.ndarray:
    """Damped-least-squares IK from seed, with joint limits enforced by projection."""
    q = chain.clamp(chain.check_q(seed))
    for _ in range(max_iters):
        current, _ = forward_kinematics(chain, q)
        err = pose_twist_error(current, target)
        if np.linalg.norm(err[:3]) <= tol_p and np.linalg.norm(err[3:]) <= tol_r:
            return q
        J = jacobian(chain, q)
        H = J @ J.T + (damping ** 2) * np.eye(6)
        dq = J.T @ np.linalg.solve(H, err)
        step = np.max(np.abs(dq))
        if step > step_clamp:
            dq *= step_clamp / step
        q = chain.clamp(q + dq)
    raise NotConverged(
        f"IK did not converge in {max_iters} iterations "
        f"(residual {np.linalg.norm(err[:3]):.2e} m / {np.linalg.norm(err[3:]):.2e} rad)"
    )


def _pose_from_config(d: dict | None) -> RigidTransform:
    if not d:
        return RigidTransform.identity()
    return RigidTransform.from_xyz_rpy(d.get("xyz", [0, 0, 0]), d.get("rpy", [0, 0, 0]))


def _inertia_from_config(d: dict) -> LinkInertia:
    i = d.get("inertia", {})
    ixx, iyy, izz = i.get("ixx", 0.0), i.get("iyy", 0.0), i.get("izz", 0.0)
    ixy, ixz, iyz = i.get("ixy", 0.0), i.get("ixz", 0.0), i.get("iyz", 0.0)
    tensor = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    return LinkInertia(mass=float(d.get("mass", 0.0)), com=d.get("com", [0, 0, 0]), inertia=tensor)


def load_chain(path: str | Path) -> KinematicChain:
    """Load a chain description file (YAML: ordered joints, ee offset, gravity)."""
    path = Path(path)
    with open(path) as f:
        cfg = yaml.safe_load(f)
    try:
        joints = tuple(
            Joint(
                name=j.get("name", f"joint{k}"),
                offset=_pose_from_config(j.get("offset")),
                axis=np.asarray(j["axis"], dtype=float),
                q_min=float(j["limits"][0]),
                q_max=float(j["limits"][1]),
                v_max=float(j.get("v_max", 1.0)),
                a_max=float(j.get("a_max", 2.0)),
                inertial=_inertia_from_config(j),
            )
            for k, j in enumerate(cfg["joints"])
        )
        return KinematicChain(
            name=cfg.get("name", path.stem),
            joints=joints,
            ee_offset=_pose_from_config(cfg.get("ee_offset")),
            gravity=np.asarray(cfg.get("gravity", [0.0, 0.0, -9.81]), dtype=float),
            trigger_joint=cfg.get("trigger_joint"),
            link_radius=float(cfg.get("link_radius", 0.05)),
        )
    except (KeyError, TypeError, IndexError) as e:
        raise ValueError(f"{path}: malformed chain description ({e})") from e
