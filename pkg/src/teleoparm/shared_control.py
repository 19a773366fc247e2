"""Stage I/II shared-control orchestration: teleop mapping and the autonomous episode."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from .geometry import RigidTransform, pose_error
from .kinematics import KinematicChain, forward_kinematics
from .perception import grasp_pose_from_object
from .planner import IkFailure, plan_cartesian_approach, plan_joint_trajectory
from .simworld import GripperMode, WorldState, actuate_gripper, step_world


class Mode(str, Enum):
    TELEOP_COARSE = "teleop_coarse"
    TAG_ACQUIRED = "tag_acquired"
    DISCONNECTED = "disconnected"
    ALIGNING = "aligning"
    GRASPING = "grasping"
    RETURNING = "returning"
    RECONNECTED = "reconnected"


class Event(str, Enum):
    RELIABLE_DETECTION = "reliable_detection"
    OPERATOR_CONFIRM = "operator_confirm"
    ALIGNMENT_DONE = "alignment_done"
    GRASP_CLOSED = "grasp_closed"
    RETURN_DONE = "return_done"
    ABORT = "abort"


class InvalidTransition(Exception):
    pass


class Stage2Aborted(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# modes in which the leader-follower mapping is suppressed
AUTONOMOUS_MODES = frozenset(
    {Mode.DISCONNECTED, Mode.ALIGNING, Mode.GRASPING, Mode.RETURNING}
)


@dataclass(frozen=True)
class StageState:
    mode: Mode = Mode.TELEOP_COARSE
    disconnect_pose: RigidTransform | None = None
    disconnect_q: np.ndarray | None = None
    grasp_pose: RigidTransform | None = None
    clock: float = 0.0
    abort_reason: str | None = None
    history: tuple[Mode, ...] = (Mode.TELEOP_COARSE,)

    @property
    def mapping_enabled(self) -> bool:
        return self.mode not in AUTONOMOUS_MODES

    def _enter(self, mode: Mode, **changes) -> "StageState":
        return replace(self, mode=mode, history=self.history + (mode,), **changes)


def step_stage_machine(
    state: StageState,
    event: Event,
    ee_pose: RigidTransform | None = None,
    q: np.ndarray | None = None,
    abort_reason: str = "abort",
) -> StageState:
    """Advance the Stage I/II machine by one event in the fixed step order.

    Entering DISCONNECTED stores the current end-effector pose (the mapping
    disengagement pose) and immediately proceeds to ALIGNING, so both modes
    appear in the history. Abort from any autonomous mode routes through
    RETURNING and hands back to TELEOP_COARSE.
    """
    if event == Event.ABORT:
        if state.mode in (Mode.DISCONNECTED, Mode.ALIGNING, Mode.GRASPING):
            return state._enter(Mode.RETURNING, abort_reason=abort_reason)
        raise InvalidTransition(f"{event.value} in {state.mode.value}")

    if event == Event.RELIABLE_DETECTION and state.mode == Mode.TELEOP_COARSE:
        return state._enter(Mode.TAG_ACQUIRED)

    if event == Event.OPERATOR_CONFIRM and state.mode == Mode.TAG_ACQUIRED:
        if ee_pose is None:
            raise ValueError("entering DISCONNECTED requires the current end-effector pose")
        mid = state._enter(
            Mode.DISCONNECTED,
            disconnect_pose=ee_pose,
            disconnect_q=None if q is None else np.asarray(q, dtype=float).copy(),
        )
        return mid._enter(Mode.ALIGNING)

    if event == Event.ALIGNMENT_DONE and state.mode == Mode.ALIGNING:
        return state._enter(Mode.GRASPING)

    if event == Event.GRASP_CLOSED and state.mode == Mode.GRASPING:
        return state._enter(Mode.RETURNING)

    if event == Event.RETURN_DONE and state.mode == Mode.RETURNING:
        if state.abort_reason is not None:
            return state._enter(
                Mode.TELEOP_COARSE, disconnect_pose=None, disconnect_q=None, grasp_pose=None
            )
        # the stored episode poses are meaningful only while the episode runs
        return state._enter(
            Mode.RECONNECTED, disconnect_pose=None, disconnect_q=None, grasp_pose=None
        )

    raise InvalidTransition(f"{event.value} in {state.mode.value}")


def teleop_tick(q_L, mapping_enabled: bool, n: int) -> np.ndarray | None:
    """Identity joint mapping leader -> follower; None while the mapping is disengaged."""
    if not mapping_enabled:
        return None
    q_L = np.asarray(q_L, dtype=float).reshape(-1)
    if q_L.shape[0] != n:
        raise ValueError(f"leader state has {q_L.shape[0]} joints, follower has {n}")
    return q_L


def reconnect_ready(q_L, q_B, tol: float = 0.05) -> bool:
    """Mapping resumes only once the leader has converged back onto the follower."""
    return bool(np.max(np.abs(np.asarray(q_L) - np.asarray(q_B))) < tol)


@dataclass
class Stage2Outcome:
    state: StageState
    world: WorldState
    grasp_ep: float | None = None    # position error vs commanded grasp pose at grasp instant
    grasp_er: float | None = None
    attached: bool = False
    grasp_pose: RigidTransform | None = None
    disconnect_pose: RigidTransform | None = None


class Stage2Executor:
    """Incremental driver of the autonomous episode: one world tick per call.

    Confirms into DISCONNECTED/ALIGNING on construction, then tracks the
    approach trajectory, attempts the grasp, and executes the return to the
    stored disconnection configuration. IK failures or a missed grasp route
    through the abort/return path; either way the follower hands back at the
    disconnection pose.
    """

    def __init__(
        self,
        chain: KinematicChain,
        world: WorldState,
        obj_pose: RigidTransform,
        grasp_offset: RigidTransform,
        state: StageState,
        dt: float = 0.01,
        grasp_pos_tol: float = 0.01,
        grasp_rot_tol: float = 0.1,
        step_p: float = 0.005,
        step_r: float = 0.02,
    ):
        if state.mode != Mode.TAG_ACQUIRED:
            raise InvalidTransition(f"Stage II requires TAG_ACQUIRED, got {state.mode.value}")
        self.chain = chain
        self.dt = dt
        self.grasp_pos_tol = grasp_pos_tol
        self.grasp_rot_tol = grasp_rot_tol
        self.grasp_ep: float | None = None
        self.grasp_er: float | None = None
        self.attached = False
        self.done = False

        ee, _ = forward_kinematics(chain, world.q)
        state = step_stage_machine(state, Event.OPERATOR_CONFIRM, ee_pose=ee, q=world.q)
        grasp_pose = grasp_pose_from_object(obj_pose, grasp_offset)
        self.state = replace(state, grasp_pose=grasp_pose)
        self.grasp_pose = grasp_pose
        self.disconnect_pose = self.state.disconnect_pose
        self.disconnect_q = self.state.disconnect_q
        try:
            self._traj = plan_cartesian_approach(
                chain, world.q, grasp_pose, step_p=step_p, step_r=step_r, dt=dt
            )
            self._phase = "approach"
        except IkFailure as e:
            self._start_abort(world, f"ik_failure: {e}")
        self._traj_start = world.time

    def _start_abort(self, world: WorldState, reason: str):
        self.state = step_stage_machine(self.state, Event.ABORT, abort_reason=reason)
        self._traj = plan_joint_trajectory(
            self.chain, world.q, self.state.disconnect_q, dt=self.dt
        )
        self._traj_start = world.time
        self._phase = "abort_return"

    def _start_return(self, world: WorldState):
        self.state = step_stage_machine(self.state, Event.GRASP_CLOSED)
        self._traj = plan_joint_trajectory(
            self.chain, world.q, self.state.disconnect_q, dt=self.dt
        )
        self._traj_start = world.time
        self._phase = "return"

    def tick(self, world: WorldState) -> WorldState:
        """Advance the episode by one control tick."""
        if self.done:
            return world
        world = step_world(self.chain, world, self.dt, self._traj, traj_start_time=self._traj_start)
        if world.time - self._traj_start < self._traj.duration:
            return world

        if self._phase == "approach":
            self.state = step_stage_machine(self.state, Event.ALIGNMENT_DONE)
            actual, _ = forward_kinematics(self.chain, world.q)
            self.grasp_ep, self.grasp_er = pose_error(self.state.grasp_pose, actual)
            world = actuate_gripper(
                self.chain, world, "close", self.grasp_pos_tol, self.grasp_rot_tol
            )
            if world.attached_object is None:
                self._start_abort(world, "grasp_failure: no object in tolerance")
            else:
                self.attached = True
                self._start_return(world)
        elif self._phase == "return":
            self.state = step_stage_machine(self.state, Event.RETURN_DONE)
            self.done = True
        else:  # abort_return
            if world.gripper == GripperMode.CLOSED:
                world = actuate_gripper(self.chain, world, "open")
            self.state = step_stage_machine(self.state, Event.RETURN_DONE)
            self.done = True
        return world


def run_stage2(
    chain: KinematicChain,
    world: WorldState,
    obj_pose: RigidTransform,
    grasp_offset: RigidTransform,
    state: StageState,
    dt: float = 0.01,
    grasp_pos_tol: float = 0.01,
    grasp_rot_tol: float = 0.1,
    step_p: float = 0.005,
    step_r: float = 0.02,
    on_tick: Callable[[WorldState, StageState], None] | None = None,
) -> Stage2Outcome:
    """Batch form of the autonomous episode: runs the executor to completion."""
    executor = Stage2Executor(
        chain,
        world,
        obj_pose,
        grasp_offset,
        state,
        dt=dt,
        grasp_pos_tol=grasp_pos_tol,
        grasp_rot_tol=grasp_rot_tol,
        step_p=step_p,
        step_r=step_r,
    )
    while not executor.done:
        world = executor.tick(world)
        if on_tick is not None:
            on_tick(world, executor.state)
    return Stage2Outcome(
        state=executor.state,
        world=world,
        grasp_ep=executor.grasp_ep,
        grasp_er=executor.grasp_er,
        attached=executor.attached,
        grasp_pose=executor.grasp_pose,
        disconnect_pose=executor.disconnect_pose,
    )
