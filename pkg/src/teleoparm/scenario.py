"""Scenario configuration: scene, camera, noise, tolerances, controller parameters."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import CompensationGains, FrictionParams, TriggerParams
from .geometry import RigidTransform
from .kinematics import KinematicChain, load_chain
from .perception import CameraModel, ReliabilityConfig
from .simworld import CollisionShape, SceneObject

DATA_DIR = Path(__file__).parent / "data"


class ScenarioError(Exception):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    chain: KinematicChain
    start_q: np.ndarray
    camera: CameraModel
    reliability: ReliabilityConfig
    objects: tuple[SceneObject, ...]
    obstacles: tuple[CollisionShape, ...]
    target_object: str
    friction: FrictionParams
    gains: CompensationGains
    trigger: TriggerParams
    dt: float = 0.01
    grasp_pos_tol: float = 0.01
    grasp_rot_tol: float = 0.1
    lift_height: float = 0.05
    reconnect_tol: float = 0.05
    max_time: float = 60.0
    seed: int = 0
    content_hash: str = ""

    def __post_init__(self):
        object.__setattr__(self, "start_q", np.asarray(self.start_q, dtype=float))

    @property
    def target(self) -> SceneObject:
        for obj in self.objects:
            if obj.object_id == self.target_object:
                return obj
        raise ScenarioError(f"target object {self.target_object!r} not in scene")


def _pose(d) -> RigidTransform:
    if d is None:
        return RigidTransform.identity()
    return RigidTransform.from_xyz_rpy(d.get("xyz", [0, 0, 0]), d.get("rpy", [0, 0, 0]))


def _obstacle(d: dict, idx: int) -> CollisionShape:
    kind = d["kind"]
    name = d.get("name", f"{kind}{idx}")
    if kind == "sphere":
        return CollisionShape(kind, d["center"], radius=float(d["radius"]), name=name)
    if kind == "box":
        return CollisionShape(kind, d["center"], half_extents=d["half_extents"], name=name)
    if kind == "capsule":
        return CollisionShape(
            kind, d["a"], radius=float(d["radius"]), endpoint=d["b"], name=name
        )
    raise ScenarioError(f"obstacle {idx}: unknown kind {kind!r}")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    raw = path.read_bytes()
    try:
        cfg = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ScenarioError(f"{path}: {e}") from e

    try:
        chain_path = path.parent / cfg["chain"]
        chain = load_chain(chain_path)
        digest = hashlib.sha256(raw + chain_path.read_bytes()).hexdigest()[:16]

        cam = cfg.get("camera", {})
        camera = CameraModel(
            extrinsic=_pose(cam.get("extrinsic")),
            max_range=float(cam.get("range", 1.0)),
            half_fov=float(cam.get("half_fov", 0.6)),
            sigma_p=float(cam.get("sigma_p", 0.0)),
            sigma_r=float(cam.get("sigma_r", 0.0)),
        )
        rel = cfg.get("detection", {})
        reliability = ReliabilityConfig(
            k_consecutive=int(rel.get("k", 1)),
            pos_consistency=float(rel.get("pos_tol", 0.005)),
            rot_consistency=float(rel.get("rot_tol", 0.02)),
        )
        objects = tuple(
            SceneObject(
                object_id=o["id"],
                pose=_pose(o.get("pose")),
                tag_offset=_pose(o.get("tag_offset")),
                grasp_offset=_pose(o.get("grasp_offset")),
                graspable=bool(o.get("graspable", True)),
            )
            for o in cfg.get("objects", [])
        )
        obstacles = tuple(_obstacle(o, i) for i, o in enumerate(cfg.get("obstacles", [])))

        n = chain.n
        fr = cfg.get("friction", {})
        friction = FrictionParams(
            k_static=np.full(n, float(fr.get("k_static", 0.02))),
            k_viscous=np.full(n, float(fr.get("k_viscous", 2.0))),
            qd_threshold=np.full(n, float(fr.get("qd_threshold", 0.01))),
        )
        gn = cfg.get("gains", {})
        gains = CompensationGains(
            k_p=np.full(n, float(gn.get("k_p", 10.0))),
            k_d=np.full(n, float(gn.get("k_d", 1.0))),
            k_i=np.full(n, float(gn.get("k_i", 0.5))),
            error_threshold=float(gn.get("error_threshold", 0.05)),
            limit_margin=float(gn.get("limit_margin", 0.15)),
            integral_clamp=float(gn.get("integral_clamp", 1.0)),
        )
        tr = cfg.get("trigger", {})
        trigger = TriggerParams(
            stiffness=float(tr.get("stiffness", 0.2)),
            feedback=float(tr.get("feedback", 0.1)),
        )
        tol = cfg.get("grasp_tolerance", {})
        return Scenario(
            name=cfg.get("name", path.stem),
            chain=chain,
            start_q=np.asarray(cfg.get("start_q", [0.0] * n), dtype=float),
            camera=camera,
            reliability=reliability,
            objects=objects,
            obstacles=obstacles,
            target_object=cfg.get("target", objects[0].object_id if objects else ""),
            friction=friction,
            gains=gains,
            trigger=trigger,
            dt=float(cfg.get("dt", 0.01)),
            grasp_pos_tol=float(tol.get("pos", 0.01)),
            grasp_rot_tol=float(tol.get("rot", 0.1)),
            lift_height=float(cfg.get("lift_height", 0.05)),
            reconnect_tol=float(cfg.get("reconnect_tol", 0.05)),
            max_time=float(cfg.get("max_time", 60.0)),
            seed=int(cfg.get("seed", 0)),
            content_hash=digest,
        )
    except (KeyError, TypeError, IndexError, ValueError) as e:
        raise ScenarioError(f"{path}: invalid scenario config ({e})") from e
