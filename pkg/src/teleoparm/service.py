"""Live control service: one simulation loop fanned out to TCP and websocket clients.

Exactly one client may hold the operator role (the leader-state sender); every
other client observes. All inbound messages funnel into the control loop's
queue; snapshots are broadcast from the loop. A slow observer is disconnected
rather than allowed to back-pressure the loop.
"""
from __future__ import annotations

import asyncio
import contextlib
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import protocol
from .dynamics import FeedbackState, total_leader_torque
from .geometry import pose_error
from .kinematics import forward_kinematics
from .metrics import DemoLog, write_log
from .perception import DetectionFilter, object_pose_from_detection, simulate_detection
from .planner import rate_limited_retarget
from .protocol import (
    ErrorMessage,
    FollowerJointState,
    GripperCommand,
    Heartbeat,
    Hello,
    LeaderJointState,
    MalformedFrame,
    StageEvent,
    TorqueFeedback,
    UnknownType,
    Welcome,
    WorldSnapshot,
)
from .runner import (
    TRIGGER_CLOSE,
    TRIGGER_FULL_ANGLE,
    TRIGGER_OPEN,
    CollisionCounter,
    LeaderSample,
)
from .scenario import Scenario
from .shared_control import (
    Event,
    Mode,
    Stage2Executor,
    StageState,
    reconnect_ready,
    step_stage_machine,
    teleop_tick,
)
from .simworld import WorldState, actuate_gripper, check_collision, step_world

HEARTBEAT_INTERVAL = 1.0
HEARTBEAT_TIMEOUT = 3.0
SEND_QUEUE_LIMIT = 256


@dataclass
class Session:
    """One connected client; outbound messages go through a bounded queue."""

    session_id: int
    role: str = "observer"
    queue: asyncio.Queue = field(default_factory=lambda: asyncio.Queue(SEND_QUEUE_LIMIT))
    last_seen: float = 0.0
    closed: bool = False

    def send(self, msg) -> bool:
        """Queue a message; False (and closed) when the client cannot keep up."""
        if self.closed:
            return False
        try:
            self.queue.put_nowait(msg)
            return True
        except asyncio.QueueFull:
            self.closed = True
            return False


class ControlService:
    """Owns the simulated world and the single control loop.

    The loop advances one fixed timestep per tick, applying the newest leader
    state (zero-order hold). Losing the operator (disconnect or heartbeat
    timeout) freezes the teleop target so the follower holds position.
    """

    def __init__(
        self,
        scenario: Scenario,
        heartbeat_interval: float = HEARTBEAT_INTERVAL,
        heartbeat_timeout: float = HEARTBEAT_TIMEOUT,
        log_dir: str | Path | None = None,
    ):
        self.scenario = scenario
        self.chain = scenario.chain
        self.dt = scenario.dt
        self.heartbeat_interval = heartbeat_interval
        self.heartbeat_timeout = heartbeat_timeout
        self.log_dir = None if log_dir is None else Path(log_dir)

        self.world = WorldState(
            q=scenario.start_q.copy(),
            qdot=np.zeros(self.chain.n),
            objects=scenario.objects,
            obstacles=scenario.obstacles,
        )
        self.stage = StageState()
        self.rng = np.random.default_rng(scenario.seed)
        self.det_filter = DetectionFilter(scenario.reliability)
        self.collisions = CollisionCounter()
        self.fb_state = FeedbackState.zero(self.chain.n)
        self.log = DemoLog(scenario_hash=scenario.content_hash, seed=scenario.seed)
        self._log_t = 0.0

        self._ids = itertools.count(1)
        self.sessions: dict[int, Session] = {}
        self.operator: Session | None = None
        self._leader: LeaderSample | None = None
        self._prev_leader_q: np.ndarray | None = None
        self._trigger_closed = False
        self._pending_detection = None
        self._reliable_obj_pose = None
        self._stage2: Stage2Executor | None = None
        self._await_reconnect = False
        self._last_heartbeat = 0.0
        self._stopped = asyncio.Event()

    # ---- session registry ----------------------------------------------

    def register(self, requested_role: str) -> tuple[Session, list]:
        """Admit a client; returns the session and the messages to send first.

        A second operator claim is answered with a RoleConflict error and the
        client stays connected as an observer. Every new client receives the
        current snapshot immediately so mid-run joins see live state.
        """
        session = Session(session_id=next(self._ids), last_seen=self.world.time)
        greeting: list = []
        if requested_role == "operator":
            if self.operator is None or self.operator.closed:
                session.role = "operator"
                self.operator = session
            else:
                greeting.append(
                    ErrorMessage(
                        code="RoleConflict",
                        text="operator role already held; joined as observer",
                    )
                )
        self.sessions[session.session_id] = session
        greeting.append(
            Welcome(
                t=self.world.time,
                role=session.role,
                n=self.chain.n,
                q_min=[float(v) for v in self.chain.q_min],
                q_max=[float(v) for v in self.chain.q_max],
                v_max=[float(v) for v in self.chain.v_max],
            )
        )
        greeting.append(self.snapshot())
        return session, greeting

    def unregister(self, session: Session):
        session.closed = True
        self.sessions.pop(session.session_id, None)
        if self.operator is session:
            self._drop_operator()

    def _drop_operator(self):
        self.operator = None
        self._leader = None
        self._prev_leader_q = None
        self.broadcast(StageEvent(t=self.world.time, mode="abort_safe"))
        self.log.append({"t": self._next_log_t(), "event": "stage", "mode": "abort_safe"})

    # ---- inbound --------------------------------------------------------

    def handle_message(self, session: Session, msg):
        session.last_seen = self.world.time
        if isinstance(msg, Hello):
            return  # role claims are handled at connect time
        if isinstance(msg, Heartbeat):
            return
        if isinstance(msg, LeaderJointState):
            if session is not self.operator:
                session.send(ErrorMessage(code="NotOperator", text="observer cannot drive"))
                return
            if len(msg.q) != self.chain.n:
                session.send(
                    ErrorMessage(code="BadArity", text=f"expected {self.chain.n} joints")
                )
                return
            self._leader = LeaderSample(
                t=msg.t, q=np.asarray(msg.q, dtype=float),
                trigger=msg.trigger, confirm=msg.confirm,
            )
            return
        if isinstance(msg, GripperCommand):
            if session is not self.operator:
                session.send(ErrorMessage(code="NotOperator", text="observer cannot drive"))
                return
            if self.stage.mapping_enabled:
                self.world = self._gripper(msg.command)
            return
        session.send(ErrorMessage(code="Unexpected", text=f"cannot accept {msg.type}"))

    # ---- outbound -------------------------------------------------------

    def broadcast(self, msg):
        for session in list(self.sessions.values()):
            if not session.send(msg):
                self.sessions.pop(session.session_id, None)

    def snapshot(self) -> WorldSnapshot:
        ee, _ = forward_kinematics(self.chain, self.world.q)
        e_p = e_r = None
        if self.stage.grasp_pose is not None:
            e_p, e_r = pose_error(self.stage.grasp_pose, ee)
            e_p, e_r = float(e_p), float(e_r)
        return WorldSnapshot(
            t=self.world.time,
            q=[float(v) for v in self.world.q],
            qd=[float(v) for v in self.world.qdot],
            ee=ee.to_wire(),
            mode=self.stage.mode.value,
            gripper=self.world.gripper.value,
            attached=self.world.attached_object,
            e_p=e_p,
            e_r=e_r,
            collisions=len(self.collisions.events),
        )

    # ---- control loop ---------------------------------------------------

    def _next_log_t(self) -> float:
        # the log requires non-decreasing stamps even for same-tick events
        self._log_t = max(self._log_t, self.world.time)
        return self._log_t

    def _gripper(self, command: str) -> WorldState:
        if command == "close":
            world = actuate_gripper(
                self.chain, self.world, "close",
                self.scenario.grasp_pos_tol, self.scenario.grasp_rot_tol,
            )
        else:
            world = actuate_gripper(self.chain, self.world, "open")
        self.log.append({"t": self._next_log_t(), "event": "gripper", "command": command})
        return world

    def _check_operator_timeout(self):
        if self.operator is None:
            return
        if self.operator.closed:
            self.sessions.pop(self.operator.session_id, None)
            self._drop_operator()
            return
        if self.world.time - self.operator.last_seen > self.heartbeat_timeout:
            stale = self.operator
            stale.send(ErrorMessage(code="HeartbeatTimeout", text="operator link stale"))
            stale.closed = True
            self.sessions.pop(stale.session_id, None)
            self._drop_operator()

    def tick(self):
        """Advance the world by one control period and fan out telemetry."""
        self._check_operator_timeout()
        prev_mode = self.stage.mode
        leader = self._leader

        if self._stage2 is not None:
            self.world = self._stage2.tick(self.world)
            self.stage = self._stage2.state
            if self._stage2.done:
                self._stage2 = None
                # mapping stays suspended until the leader converges back onto
                # the follower's handback configuration
                self._await_reconnect = True
        elif leader is not None and self.stage.mapping_enabled and not self._await_reconnect:
            q_des = teleop_tick(leader.q, True, self.chain.n)
            traj = rate_limited_retarget(
                self.chain, self.world.q, q_des, self.world.qdot, dt=self.dt
            )
            self.world = step_world(
                self.chain, self.world, self.dt, traj, traj_start_time=self.world.time
            )
        else:
            # no operator (or mapping disengaged with no episode): hold position
            self.world = step_world(self.chain, self.world, self.dt, None)

        reports = check_collision(self.chain, self.world.q, self.world.obstacles)
        self.collisions.update(self.world.time, reports)

        if self._await_reconnect and leader is not None and reconnect_ready(
            leader.q, self.world.q, self.scenario.reconnect_tol
        ):
            self._await_reconnect = False
            self.log.append({"t": self._next_log_t(), "event": "reconnect"})

        if leader is not None and self.operator is not None:
            self._leader_side(leader)

        self._perceive()
        self._maybe_start_stage2(leader)

        if self.stage.mode != prev_mode:
            self.broadcast(StageEvent(t=self.world.time, mode=self.stage.mode.value))
            self.log.append(
                {"t": self._next_log_t(), "event": "stage", "mode": self.stage.mode.value}
            )
        self._log_tick(leader)
        self.broadcast(
            FollowerJointState(
                t=self.world.time,
                q=[float(v) for v in self.world.q],
                qd=[float(v) for v in self.world.qdot],
            )
        )
        self.broadcast(self.snapshot())

        if self.world.time - self._last_heartbeat >= self.heartbeat_interval:
            self._last_heartbeat = self.world.time
            self.broadcast(Heartbeat(t=self.world.time))

    def _leader_side(self, leader: LeaderSample):
        if self._prev_leader_q is None:
            self._prev_leader_q = leader.q
        qd_L = (leader.q - self._prev_leader_q) / self.dt
        self._prev_leader_q = leader.q
        stack, self.fb_state = total_leader_torque(
            self.chain,
            leader.q,
            qd_L,
            self.world.q,
            self.scenario.friction,
            self.scenario.gains,
            self.dt,
            trigger_angle=leader.trigger * TRIGGER_FULL_ANGLE,
            grasp_contact=self.world.attached_object is not None,
            trigger=self.scenario.trigger,
            feedback_state=self.fb_state,
        )
        if self.operator is not None:
            self.operator.send(
                TorqueFeedback(
                    t=self.world.time,
                    tau_grav=[float(v) for v in stack.tau_grav],
                    tau_fric=[float(v) for v in stack.tau_fric],
                    tau_joint=[float(v) for v in stack.tau_joint],
                    tau_trig=[float(v) for v in stack.tau_trig],
                    tau_total=[float(v) for v in stack.tau_total],
                )
            )
        # trigger hysteresis drives the gripper only while teleoperating
        if self.stage.mapping_enabled:
            if leader.trigger >= TRIGGER_CLOSE and not self._trigger_closed:
                self._trigger_closed = True
                self.world = self._gripper("close")
            elif leader.trigger <= TRIGGER_OPEN and self._trigger_closed:
                self._trigger_closed = False
                self.world = self._gripper("open")

    def _perceive(self):
        ee, _ = forward_kinematics(self.chain, self.world.q)
        detection = simulate_detection(
            self.scenario.target.tag_pose,
            self.scenario.camera,
            ee,
            timestamp=self.world.time,
            rng=self.rng,
        )
        if self._pending_detection is not None:
            obj_pose = object_pose_from_detection(
                ee, self.scenario.camera, self._pending_detection
            )
            filtered = self.det_filter.push(obj_pose)
            if filtered is not None:
                self._reliable_obj_pose = filtered
                if self.stage.mode == Mode.TELEOP_COARSE:
                    self.stage = step_stage_machine(self.stage, Event.RELIABLE_DETECTION)
        self._pending_detection = detection

    def _maybe_start_stage2(self, leader: LeaderSample | None):
        if (
            self._stage2 is None
            and leader is not None
            and leader.confirm
            and self.stage.mode == Mode.TAG_ACQUIRED
            and self._reliable_obj_pose is not None
        ):
            self._stage2 = Stage2Executor(
                self.chain,
                self.world,
                self._reliable_obj_pose,
                self.scenario.target.grasp_offset,
                self.stage,
                dt=self.dt,
                grasp_pos_tol=self.scenario.grasp_pos_tol,
                grasp_rot_tol=self.scenario.grasp_rot_tol,
            )
            self.stage = self._stage2.state

    def _log_tick(self, leader: LeaderSample | None):
        rec = {
            "t": self._next_log_t(),
            "q_B": [float(v) for v in self.world.q],
            "mode": self.stage.mode.value,
            "gripper": self.world.gripper.value,
            "attached": self.world.attached_object,
        }
        if leader is not None:
            rec["q_L"] = [float(v) for v in leader.q]
            rec["trigger"] = float(leader.trigger)
            rec["confirm"] = bool(leader.confirm)
        self.log.append(rec)

    def flush_logs(self) -> Path | None:
        """Write the session log; on interrupt mid-run an abort record is added."""
        if self.log_dir is None:
            return None
        self.log_dir.mkdir(parents=True, exist_ok=True)
        if self.stage.mode != Mode.TELEOP_COARSE or self._stage2 is not None:
            self.log.append(
                {"t": self._next_log_t(), "event": "abort", "reason": "service_shutdown"}
            )
        path = self.log_dir / "session.ndjson"
        write_log(self.log, path)
        return path

    async def run(self):
        """Real-time loop at the scenario control rate until stop() is called."""
        loop = asyncio.get_running_loop()
        next_deadline = loop.time()
        while not self._stopped.is_set():
            self.tick()
            next_deadline += self.dt
            delay = next_deadline - loop.time()
            if delay > 0:
                with contextlib.suppress(asyncio.TimeoutError):
                    await asyncio.wait_for(self._stopped.wait(), timeout=delay)
            else:
                next_deadline = loop.time()  # fell behind: don't burst to catch up
                await asyncio.sleep(0)

    def stop(self):
        self._stopped.set()


# ---- transports ---------------------------------------------------------


async def _tcp_session(service: ControlService, reader, writer):
    first = await protocol.read_frame(reader)
    role = first.role if isinstance(first, Hello) else "observer"
    session, greeting = service.register(role)
    for msg in greeting:
        writer.write(protocol.encode(msg))
    await writer.drain()
    if first is not None and not isinstance(first, Hello):
        service.handle_message(session, first)

    async def pump_out():
        while not session.closed:
            msg = await session.queue.get()
            writer.write(protocol.encode(msg))
            await writer.drain()

    out_task = asyncio.create_task(pump_out())
    try:
        while True:
            try:
                msg = await protocol.read_frame(reader)
            except UnknownType as e:
                writer.write(
                    protocol.encode(
                        ErrorMessage(code="UnknownType", text=f"unknown message type {e}")
                    )
                )
                await writer.drain()
                continue
            except MalformedFrame as e:
                writer.write(protocol.encode(ErrorMessage(code="MalformedFrame", text=str(e))))
                await writer.drain()
                break
            if msg is None:
                break
            service.handle_message(session, msg)
    finally:
        service.unregister(session)
        out_task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await out_task
        writer.close()
        with contextlib.suppress(Exception):
            await writer.wait_closed()


async def start_tcp_server(service: ControlService, host: str = "127.0.0.1", port: int = 7450):
    return await asyncio.start_server(
        lambda r, w: _tcp_session(service, r, w), host, port
    )


def create_app(service: ControlService) -> FastAPI:
    """HTTP app exposing the websocket endpoint with identical JSON bodies."""
    app = FastAPI(title="teleoparm control service")
    app.state.service = service

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "t": service.world.time, "mode": service.stage.mode.value}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        try:
            raw = await ws.receive_text()
            first = protocol.decode_body(raw)
        except (MalformedFrame, UnknownType, WebSocketDisconnect):
            await ws.close()
            return
        role = first.role if isinstance(first, Hello) else "observer"
        session, greeting = service.register(role)
        for msg in greeting:
            await ws.send_text(protocol.encode_body(msg).decode("utf-8"))
        if not isinstance(first, Hello):
            service.handle_message(session, first)

        async def pump_out():
            while not session.closed:
                msg = await session.queue.get()
                await ws.send_text(protocol.encode_body(msg).decode("utf-8"))

        out_task = asyncio.create_task(pump_out())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = protocol.decode_body(raw)
                except UnknownType as e:
                    session.send(
                        ErrorMessage(code="UnknownType", text=f"unknown message type {e}")
                    )
                    continue
                except MalformedFrame as e:
                    session.send(ErrorMessage(code="MalformedFrame", text=str(e)))
                    continue
                service.handle_message(session, msg)
        except WebSocketDisconnect:
            pass
        finally:
            service.unregister(session)
            out_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await out_task

    return app
