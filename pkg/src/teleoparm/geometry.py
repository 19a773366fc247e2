"""SE(3) pose math: rotations, rigid transforms, interpolation, alignment errors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9


def rot_x(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def axis_angle(axis, theta: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    a = a / n
    K = skew(a)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Project a drifted rotation matrix back onto SO(3) (polar via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def is_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R)
    if R.shape != (3, 3):
        return False
    return (
        np.max(np.abs(R.T @ R - np.eye(3))) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of R."""
    c = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(c)
    if theta < 1e-10:
        return np.zeros(3)
    if np.pi - theta < 1e-7:
        # near pi the antisymmetric part vanishes; recover axis from R + I
        A = (R + np.eye(3)) * 0.5
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        # fix signs from off-diagonals relative to the largest component
        k = int(np.argmax(axis))
        axis = A[:, k] / axis[k]
        axis = axis / np.linalg.norm(axis)
        return axis * theta
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w * (theta / (2.0 * np.sin(theta)))


def matrix_to_quaternion(R: np.ndarray) -> np.ndarray:
    """(w, x, y, z), unit norm, w >= 0 (wire canonical form)."""
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
        ])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(R[i, i] - R[j, j] - R[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    q = q / np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def quaternion_to_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) pose: 3x3 rotation plus translation in meters."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        p = np.array(self.translation, dtype=float).reshape(3)
        if R.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
            R = orthonormalize(R)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", p)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    @staticmethod
    def from_translation(p) -> "RigidTransform":
        return RigidTransform(np.eye(3), np.asarray(p, dtype=float))

    @staticmethod
    def from_rotation(R) -> "RigidTransform":
        return RigidTransform(np.asarray(R, dtype=float), np.zeros(3))

    @staticmethod
    def from_xyz_rpy(xyz, rpy) -> "RigidTransform":
        return RigidTransform(rpy_to_matrix(*rpy), np.asarray(xyz, dtype=float))

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def transform_point(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def to_wire(self) -> dict:
        """Wire encoding: translation + unit quaternion (w,x,y,z), w >= 0."""
        q = matrix_to_quaternion(self.rotation)
        return {"t": list(map(float, self.translation)), "q": list(map(float, q))}

    @staticmethod
    def from_wire(d: dict) -> "RigidTransform":
        return RigidTransform(quaternion_to_matrix(d["q"]), np.asarray(d["t"], dtype=float))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    R = a.rotation @ b.rotation
    if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
        R = orthonormalize(R)
    return RigidTransform(R, a.rotation @ b.translation + a.translation)


def inverse(t: RigidTransform) -> RigidTransform:
    Rt = t.rotation.T
    return RigidTransform(Rt, -Rt @ t.translation)


def position_error(p_d, p_ee) -> float:
    """Euclidean distance between desired and executed end-effector positions."""
    return float(np.linalg.norm(np.asarray(p_ee, dtype=float) - np.asarray(p_d, dtype=float)))


def orientation_error(R_d: np.ndarray, R_ee: np.ndarray) -> float:
    """Geodesic angle acos((trace(R_d^T R_ee) - 1) / 2), clamped into [0, pi]."""
    c = (np.trace(np.asarray(R_d).T @ np.asarray(R_ee)) - 1.0) * 0.5
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def pose_error(a: RigidTransform, b: RigidTransform) -> tuple[float, float]:
    return position_error(a.translation, b.translation), orientation_error(a.rotation, b.rotation)


def slerp(R0: np.ndarray, R1: np.ndarray, s: float) -> np.ndarray:
    """Shortest-path rotation interpolation, s in [0, 1]."""
    dR = R0.T @ R1
    return R0 @ axis_angle_exp(rotation_log(dR) * s)


def axis_angle_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return np.eye(3) + skew(w)
    return axis_angle(w / theta, theta)


def interpolate(t0: RigidTransform, t1: RigidTransform, s: float) -> RigidTransform:
    """Linear in translation, slerp in rotation; s=0 gives t0, s=1 gives t1."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation parameter {s} outside [0, 1]")
    p = (1.0 - s) * t0.translation + s * t1.translation
    return RigidTransform(slerp(t0.rotation, t1.rotation, s), p)
