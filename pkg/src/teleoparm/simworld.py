"""Kinematic simulation world: follower arm, gripper, tagged objects, obstacles."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .geometry import RigidTransform, compose, inverse, pose_error
from .kinematics import KinematicChain, forward_kinematics
from .planner import JointTrajectory


class GripperMode(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass(frozen=True)
class CollisionShape:
    kind: str                      # "sphere" | "box" | "capsule"
    center: np.ndarray             # sphere/box center, or capsule endpoint a
    radius: float = 0.0            # sphere/capsule
    half_extents: np.ndarray | None = None   # box, axis-aligned
    endpoint: np.ndarray | None = None       # capsule endpoint b
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if self.kind == "sphere":
            if self.radius <= 0.0:
                raise ValueError("sphere needs radius > 0")
        elif self.kind == "box":
            he = np.asarray(self.half_extents, dtype=float).reshape(3)
            if np.any(he <= 0.0):
                raise ValueError("box needs positive half extents")
            object.__setattr__(self, "half_extents", he)
        elif self.kind == "capsule":
            if self.radius <= 0.0:
                raise ValueError("capsule needs radius > 0")
            object.__setattr__(self, "endpoint", np.asarray(self.endpoint, dtype=float).reshape(3))
        else:
            raise ValueError(f"unknown collision shape kind {self.kind!r}")


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    pose: RigidTransform                 # world pose
    tag_offset: RigidTransform = field(default_factory=RigidTransform.identity)
    grasp_offset: RigidTransform = field(default_factory=RigidTransform.identity)
    graspable: bool = True

    @property
    def tag_pose(self) -> RigidTransform:
        return compose(self.pose, self.tag_offset)


@dataclass(frozen=True)
class ContactReport:
    link: int
    obstacle: str
    distance: float


@dataclass(frozen=True)
class WorldState:
    q: np.ndarray
    qdot: np.ndarray
    gripper: GripperMode = GripperMode.OPEN
    attached_object: str | None = None
    attach_offset: RigidTransform | None = None   # object pose in the ee frame, fixed while held
    objects: tuple[SceneObject, ...] = ()
    obstacles: tuple[CollisionShape, ...] = ()
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "qdot", np.asarray(self.qdot, dtype=float))

    def object_by_id(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise KeyError(object_id)


def segment_point_distance(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(a + t * ab - p))


def segment_segment_distance(a0, a1, b0, b1) -> float:
    """Minimum distance between two 3D segments (standard clamped closed form)."""
    d1 = a1 - a0
    d2 = b1 - b0
    r = a0 - b0
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    if a <= 1e-15 and e <= 1e-15:
        return float(np.linalg.norm(r))
    if a <= 1e-15:
        s, t = 0.0, np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e <= 1e-15:
            t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-15 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm((a0 + s * d1) - (b0 + t * d2)))


def segment_box_distance(a, b, center, half_extents, samples: int = 32) -> float:
    """Segment to axis-aligned box, via dense sampling of the segment (deterministic)."""
    ts = np.linspace(0.0, 1.0, samples)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    d = np.abs(pts - center) - half_extents
    outside = np.maximum(d, 0.0)
    dist = np.sqrt((outside ** 2).sum(axis=1))
    inside = np.max(d, axis=1)
    dist = np.where(inside < 0.0, inside, dist)
    return float(np.min(dist))


def _link_segments(chain: KinematicChain, q) -> list[tuple[np.ndarray, np.ndarray]]:
    ee, frames = forward_kinematics(chain, q)
    points = [np.zeros(3)] + [f.translation for f in frames] + [ee.translation]
    return [(points[i], points[i + 1]) for i in range(len(points) - 1)]


def check_collision(
    chain: KinematicChain, q, obstacles: tuple[CollisionShape, ...]
) -> list[ContactReport]:
    """Capsule-per-link collision test; reports every penetrating (link, obstacle) pair."""
    if not obstacles:
        return []
    reports = []
    radius = chain.link_radius
    for li, (a, b) in enumerate(_link_segments(chain, q)):
        for obs in obstacles:
            if obs.kind == "sphere":
                d = segment_point_distance(a, b, obs.center) - radius - obs.radius
            elif obs.kind == "capsule":
                d = segment_segment_distance(a, b, obs.center, obs.endpoint) - radius - obs.radius
            else:
                d = segment_box_distance(a, b, obs.center, obs.half_extents) - radius
            if d <= 0.0:
                reports.append(ContactReport(link=li, obstacle=obs.name or obs.kind, distance=float(d)))
    return reports


def ee_pose(chain: KinematicChain, world: WorldState) -> RigidTransform:
    pose, _ = forward_kinematics(chain, world.q)
    return pose


def _carry_attached(chain: KinematicChain, world: WorldState, q_new) -> tuple[SceneObject, ...]:
    if world.attached_object is None:
        return world.objects
    pose, _ = forward_kinematics(chain, q_new)
    new_obj_pose = compose(pose, world.attach_offset)
    return tuple(
        replace(o, pose=new_obj_pose) if o.object_id == world.attached_object else o
        for o in world.objects
    )


def step_world(
    chain: KinematicChain,
    world: WorldState,
    dt: float,
    trajectory: JointTrajectory | None,
    traj_start_time: float = 0.0,
) -> WorldState:
    """Advance one tick: kinematic tracking of the active trajectory, rigid attachment."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    t_new = world.time + dt
    if trajectory is None:
        q_new = world.q
        qd_new = np.zeros_like(world.q)
    else:
        q_new = trajectory.sample(t_new - traj_start_time)
        qd_new = (q_new - world.q) / dt
    return replace(
        world,
        q=q_new,
        qdot=qd_new,
        time=t_new,
        objects=_carry_attached(chain, world, q_new),
    )


def actuate_gripper(
    chain: KinematicChain,
    world: WorldState,
    command: str,
    pos_tolerance: float = 0.01,
    rot_tolerance: float = 0.1,
) -> WorldState:
    """Close attaches the nearest graspable object inside the jaw tolerance; open releases."""
    if command not in ("open", "close"):
        raise ValueError(f"unknown gripper command {command!r}")
    if command == "open":
        return replace(world, gripper=GripperMode.OPEN, attached_object=None, attach_offset=None)

    pose = ee_pose(chain, world)
    best = None
    best_d = np.inf
    for obj in world.objects:
        if not obj.graspable:
            continue
        # candidate grasp frame for this object: its pose times its grasp offset
        target = compose(obj.pose, obj.grasp_offset)
        ep, er = pose_error(target, pose)
        if ep <= pos_tolerance and er <= rot_tolerance and ep < best_d:
            best, best_d = obj, ep
    if best is None:
        return replace(world, gripper=GripperMode.CLOSED, attached_object=None, attach_offset=None)
    return replace(
        world,
        gripper=GripperMode.CLOSED,
        attached_object=best.object_id,
        attach_offset=compose(inverse(pose), best.pose),
    )
