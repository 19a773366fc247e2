"""Deterministic trial execution: scripted/recorded leader input through the full pipeline."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import FeedbackState, total_leader_torque
from .geometry import pose_error
from .kinematics import forward_kinematics
from .metrics import DemoLog, TrialResult, evaluate_trial
from .perception import DetectionFilter, object_pose_from_detection, simulate_detection
from .planner import rate_limited_retarget
from .scenario import Scenario
from .shared_control import (
    Event,
    Mode,
    StageState,
    reconnect_ready,
    run_stage2,
    step_stage_machine,
    teleop_tick,
)
from .simworld import WorldState, actuate_gripper, check_collision, step_world

TRIGGER_CLOSE = 0.8
TRIGGER_OPEN = 0.2
TRIGGER_FULL_ANGLE = 0.5  # rad of trigger-joint travel at trigger input 1.0


class ReplayDivergence(Exception):
    pass


@dataclass(frozen=True)
class LeaderSample:
    t: float
    q: np.ndarray
    trigger: float = 0.0
    confirm: bool = False

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))


class ScriptedDriver:
    """Zero-order-hold playback of time-stamped leader samples."""

    def __init__(self, samples: list[LeaderSample]):
        if not samples:
            raise ValueError("driver script is empty")
        self.samples = sorted(samples, key=lambda s: s.t)

    @staticmethod
    def from_file(path: str | Path) -> "ScriptedDriver":
        samples = []
        with open(path) as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                samples.append(
                    LeaderSample(
                        t=float(rec["t"]),
                        q=np.asarray(rec["q"], dtype=float),
                        trigger=float(rec.get("trigger", 0.0)),
                        confirm=bool(rec.get("confirm", False)),
                    )
                )
        return ScriptedDriver(samples)

    @staticmethod
    def from_log(log: DemoLog) -> "ScriptedDriver":
        samples = [
            LeaderSample(
                t=r["t"],
                q=np.asarray(r["q_L"], dtype=float),
                trigger=r.get("trigger", 0.0),
                confirm=bool(r.get("confirm", False)),
            )
            for r in log.ticks()
        ]
        return ScriptedDriver(samples)

    @property
    def duration(self) -> float:
        return self.samples[-1].t

    def sample(self, t: float) -> LeaderSample:
        lo, hi = 0, len(self.samples) - 1
        if t <= self.samples[0].t:
            return self.samples[0]
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.samples[mid].t <= t:
                lo = mid
            else:
                hi = mid - 1
        return self.samples[lo]


def write_script(samples: list[LeaderSample], path: str | Path):
    with open(path, "w") as f:
        for s in samples:
            rec = {"t": s.t, "q": list(map(float, s.q))}
            if s.trigger:
                rec["trigger"] = s.trigger
            if s.confirm:
                rec["confirm"] = True
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")


class CollisionCounter:
    """Rising-edge contact counting: a contact spanning consecutive ticks counts once."""

    def __init__(self):
        self.active: set[tuple[int, str]] = set()
        self.events: list[tuple[float, int, str]] = []

    def update(self, t: float, reports):
        current = {(r.link, r.obstacle) for r in reports}
        for pair in sorted(current - self.active):
            self.events.append((t, *pair))
        self.active = current


def run_trial(scenario: Scenario, driver: ScriptedDriver, seed: int | None = None) -> DemoLog:
    """Execute one full trial (Stage I teleop + Stage II autonomy), logging every tick."""
    chain = scenario.chain
    dt = scenario.dt
    seed = scenario.seed if seed is None else seed
    rng = np.random.default_rng(seed)

    log = DemoLog(scenario_hash=scenario.content_hash, seed=seed)
    world = WorldState(
        q=scenario.start_q.copy(),
        qdot=np.zeros(chain.n),
        objects=scenario.objects,
        obstacles=scenario.obstacles,
    )
    stage = StageState()
    det_filter = DetectionFilter(scenario.reliability)
    collisions = CollisionCounter()
    fb_state = FeedbackState.zero(chain.n)
    pending_detection = None  # one control tick of detection latency
    reliable_obj_pose = None
    trigger_closed = False
    prev_leader_q = driver.sample(0.0).q
    target = scenario.target
    initial_obj_z = float(target.pose.translation[2])

    def log_collisions(w: WorldState, _stage=None):
        reports = check_collision(chain, w.q, w.obstacles)
        before = len(collisions.events)
        collisions.update(w.time, reports)
        for t_ev, link, obstacle in collisions.events[before:]:
            log.append({"t": t_ev, "event": "collision", "link": link, "obstacle": obstacle})

    def log_tick(t_cmd: float, w: WorldState, leader: LeaderSample, stack=None):
        # stamped with the command time so a replayed driver reproduces the
        # exact leader stream the original run sampled
        ee, _ = forward_kinematics(chain, w.q)
        rec = {
            "t": t_cmd,
            "q_L": list(map(float, leader.q)),
            "trigger": float(leader.trigger),
            "confirm": bool(leader.confirm),
            "q_B": list(map(float, w.q)),
            "mode": stage.mode.value,
            "gripper": w.gripper.value,
            "attached": w.attached_object,
            "ee": ee.to_wire(),
        }
        if stack is not None:
            rec["tau"] = {
                "grav": list(map(float, stack.tau_grav)),
                "fric": list(map(float, stack.tau_fric)),
                "joint": list(map(float, stack.tau_joint)),
                "trig": list(map(float, stack.tau_trig)),
                "total": list(map(float, stack.tau_total)),
            }
        log.append(rec)

    while world.time < scenario.max_time:
        t = world.time
        leader = driver.sample(t)
        qd_L = (leader.q - prev_leader_q) / dt
        prev_leader_q = leader.q

        # leader-side compensation stack (logged for the torque-feedback channel)
        stack, fb_state = total_leader_torque(
            chain,
            leader.q,
            qd_L,
            world.q,
            scenario.friction,
            scenario.gains,
            dt,
            trigger_angle=leader.trigger * TRIGGER_FULL_ANGLE,
            grasp_contact=world.attached_object is not None,
            trigger=scenario.trigger,
            feedback_state=fb_state,
        )

        # Stage I: follower tracks the (clamped) leader target
        q_des = teleop_tick(leader.q, stage.mapping_enabled, chain.n)
        traj = (
            None
            if q_des is None
            else rate_limited_retarget(chain, world.q, q_des, world.qdot, dt=dt)
        )
        world = step_world(chain, world, dt, traj, traj_start_time=t)
        log_tick(t, world, leader, stack)
        log_collisions(world)

        # manual gripper control with hysteresis on the trigger input
        if stage.mapping_enabled:
            if leader.trigger >= TRIGGER_CLOSE and not trigger_closed:
                trigger_closed = True
                world = actuate_gripper(
                    chain, world, "close", scenario.grasp_pos_tol, scenario.grasp_rot_tol
                )
                log.append({"t": world.time, "event": "gripper", "command": "close"})
            elif leader.trigger <= TRIGGER_OPEN and trigger_closed:
                trigger_closed = False
                world = actuate_gripper(chain, world, "open")
                log.append({"t": world.time, "event": "gripper", "command": "open"})

        # perception: this tick's detection becomes available next tick
        ee, _ = forward_kinematics(chain, world.q)
        detection = simulate_detection(
            target.tag_pose, scenario.camera, ee, timestamp=world.time, rng=rng
        )
        if pending_detection is not None:
            obj_pose = object_pose_from_detection(ee, scenario.camera, pending_detection)
            filtered = det_filter.push(obj_pose)
            if filtered is not None:
                reliable_obj_pose = filtered
                if stage.mode == Mode.TELEOP_COARSE:
                    stage = step_stage_machine(stage, Event.RELIABLE_DETECTION)
                    log.append({"t": world.time, "event": "stage", "mode": stage.mode.value})
        pending_detection = detection

        # Stage II: reliable pose + operator confirmation hands control to autonomy
        if stage.mode == Mode.TAG_ACQUIRED and leader.confirm and reliable_obj_pose is not None:
            seen_modes = len(stage.history)

            def stage2_tick(w, s):
                nonlocal seen_modes
                for mode in s.history[seen_modes:]:
                    log.append({"t": w.time, "event": "stage", "mode": mode.value})
                seen_modes = len(s.history)
                log_collisions(w)

            outcome = run_stage2(
                chain,
                world,
                reliable_obj_pose,
                target.grasp_offset,
                stage,
                dt=dt,
                grasp_pos_tol=scenario.grasp_pos_tol,
                grasp_rot_tol=scenario.grasp_rot_tol,
                on_tick=stage2_tick,
            )
            stage, world = outcome.state, outcome.world
            for mode in stage.history[seen_modes:]:
                log.append({"t": world.time, "event": "stage", "mode": mode.value})
            if outcome.grasp_ep is not None:
                log.append(
                    {
                        "t": world.time,
                        "event": "grasp",
                        "attached": outcome.attached,
                        "e_p": outcome.grasp_ep,
                        "e_r": outcome.grasp_er,
                        "grasp_pose": outcome.grasp_pose.to_wire(),
                    }
                )
            if stage.abort_reason is not None:
                log.append({"t": world.time, "event": "abort", "reason": stage.abort_reason})

            if outcome.attached:
                obj = world.object_by_id(world.attached_object)
                height = float(obj.pose.translation[2]) - initial_obj_z
                log.append({"t": world.time, "event": "lift", "height": height})

            if stage.mode == Mode.RECONNECTED and reconnect_ready(
                leader.q, world.q, scenario.reconnect_tol
            ):
                log.append({"t": world.time, "event": "reconnect"})
            break  # episode finished (reconnected or aborted): trial ends here

        if world.time >= driver.duration + 0.5 and stage.mode in (
            Mode.TELEOP_COARSE,
            Mode.TAG_ACQUIRED,
        ):
            break  # script exhausted without entering Stage II

    result = evaluate_trial(
        log, scenario.grasp_pos_tol, scenario.grasp_rot_tol, scenario.lift_height
    )
    log.append({"t": world.time, "event": "result", **result.to_dict()})
    return log


def result_of(log: DemoLog) -> TrialResult:
    results = log.events("result")
    if not results:
        raise ValueError("log carries no result record")
    return TrialResult.from_dict(results[-1])


def replay_trial(scenario: Scenario, log: DemoLog) -> TrialResult:
    """Re-feed the logged leader stream through the pipeline; must reproduce the result."""
    driver = ScriptedDriver.from_log(log)
    fresh = run_trial(scenario, driver, seed=log.seed)
    recorded = result_of(log)
    recomputed = result_of(fresh)
    if recorded != recomputed:
        raise ReplayDivergence(
            f"recorded {recorded} but replay produced {recomputed}"
        )
    return recomputed
