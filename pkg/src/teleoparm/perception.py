"""Simulated fiducial detection and the camera/end-effector/base pose chain."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, axis_angle, compose, inverse


@dataclass(frozen=True)
class CameraModel:
    """Gripper-mounted camera: fixed extrinsics plus a cone-of-view noise model."""

    extrinsic: RigidTransform          # end-effector frame -> camera frame
    max_range: float = 1.0             # m
    half_fov: float = 0.6              # rad, cone half-angle about the optical (+z) axis
    sigma_p: float = 0.0               # m, translation noise std per axis
    sigma_r: float = 0.0               # rad, random-axis rotation noise std

    def __post_init__(self):
        if self.max_range <= 0.0:
            raise ValueError("max_range must be > 0")
        if not 0.0 < self.half_fov <= np.pi / 2:
            raise ValueError("half_fov must be in (0, pi/2]")
        if self.sigma_p < 0.0 or self.sigma_r < 0.0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class TagDetection:
    tag_id: str
    pose: RigidTransform               # tag in the camera frame
    timestamp: float


def camera_pose(ee_pose: RigidTransform, camera: CameraModel) -> RigidTransform:
    return compose(ee_pose, camera.extrinsic)


def simulate_detection(
    tag_world_pose: RigidTransform,
    camera: CameraModel,
    ee_pose: RigidTransform,
    tag_id: str = "tag0",
    timestamp: float = 0.0,
    rng: np.random.Generator | None = None,
) -> TagDetection | None:
    """Ground-truth tag pose in the camera frame, gated by range/FOV, plus noise.

    Returns None when the tag center is behind the camera, beyond range, or
    outside the FOV cone. Noise is zero-mean Gaussian applied in the camera
    frame: per-axis on translation, random-axis angle on rotation.
    """
    cam = camera_pose(ee_pose, camera)
    tag_in_cam = compose(inverse(cam), tag_world_pose)
    p = tag_in_cam.translation
    dist = np.linalg.norm(p)
    if p[2] <= 0.0 or dist > camera.max_range:
        return None
    if np.arccos(np.clip(p[2] / max(dist, 1e-12), -1.0, 1.0)) > camera.half_fov:
        return None

    if (camera.sigma_p > 0.0 or camera.sigma_r > 0.0) and rng is not None:
        dp = rng.normal(0.0, camera.sigma_p, 3) if camera.sigma_p > 0.0 else np.zeros(3)
        R = tag_in_cam.rotation
        if camera.sigma_r > 0.0:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            R = axis_angle(axis, rng.normal(0.0, camera.sigma_r)) @ R
        tag_in_cam = RigidTransform(R, p + dp)
    return TagDetection(tag_id=tag_id, pose=tag_in_cam, timestamp=timestamp)


def object_pose_from_detection(
    ee_pose: RigidTransform, camera: CameraModel, detection: TagDetection
) -> RigidTransform:
    """Object pose in the base frame: the triple composition through the camera."""
    return compose(compose(ee_pose, camera.extrinsic), detection.pose)


def grasp_pose_from_object(
    obj_pose: RigidTransform, grasp_offset: RigidTransform
) -> RigidTransform:
    """Desired end-effector grasp pose: object pose times the predefined offset."""
    return compose(obj_pose, grasp_offset)


@dataclass(frozen=True)
class ReliabilityConfig:
    """What counts as a reliable detection before the autonomous stage may start."""

    k_consecutive: int = 1
    pos_consistency: float = 0.005    # m, max spread between consecutive poses
    rot_consistency: float = 0.02     # rad

    def __post_init__(self):
        if self.k_consecutive < 1:
            raise ValueError("k_consecutive must be >= 1")


class DetectionFilter:
    """Sliding window enforcing k consecutive mutually consistent object poses.

    When the window is full and consistent, `reliable_pose` is the average of
    the window (translation mean, chordal rotation mean) in the base frame.
    """

    def __init__(self, config: ReliabilityConfig):
        self.config = config
        self._window: list[RigidTransform] = []

    def reset(self):
        self._window.clear()

    def push(self, obj_pose: RigidTransform) -> RigidTransform | None:
        from .geometry import orthonormalize, pose_error

        if self._window:
            ep, er = pose_error(self._window[-1], obj_pose)
            if ep > self.config.pos_consistency or er > self.config.rot_consistency:
                self._window.clear()
        self._window.append(obj_pose)
        if len(self._window) < self.config.k_consecutive:
            return None
        self._window = self._window[-self.config.k_consecutive:]
        p = np.mean([t.translation for t in self._window], axis=0)
        R = orthonormalize(np.mean([t.rotation for t in self._window], axis=0))
        return RigidTransform(R, p)
