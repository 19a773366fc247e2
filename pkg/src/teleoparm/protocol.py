"""Wire protocol: JSON message schema and length-prefixed framing.

Frame format (TCP): 4-byte big-endian length prefix + UTF-8 JSON body with a
"type" field. Websocket sessions carry identical JSON bodies without the
prefix. Floats are serialized via repr (shortest exact decimal), so
decode(encode(m)) round-trips bitwise.
"""
from __future__ import annotations

import json
import struct
from typing import Annotated, Literal, Union

from pydantic import BaseModel, Field, TypeAdapter, ValidationError

MAX_FRAME_BYTES = 1 << 20


class MalformedFrame(Exception):
    pass


class UnknownType(Exception):
    """Valid frame, unrecognized message type; connection must be preserved."""


class Hello(BaseModel):
    """Client handshake: claim the operator role or join as observer."""

    type: Literal["hello"] = "hello"
    t: float
    role: Literal["operator", "observer"] = "observer"


class Welcome(BaseModel):
    """Server handshake reply: granted role plus chain metadata."""

    type: Literal["welcome"] = "welcome"
    t: float
    role: Literal["operator", "observer"]
    n: int
    q_min: list[float]
    q_max: list[float]
    v_max: list[float]


class LeaderJointState(BaseModel):
    type: Literal["leader_joint_state"] = "leader_joint_state"
    t: float
    q: list[float]
    trigger: float = Field(0.0, ge=0.0, le=1.0)
    confirm: bool = False   # operator confirmation to start the autonomous stage


class FollowerJointState(BaseModel):
    type: Literal["follower_joint_state"] = "follower_joint_state"
    t: float
    q: list[float]
    qd: list[float]


class TorqueFeedback(BaseModel):
    type: Literal["torque_feedback"] = "torque_feedback"
    t: float
    tau_grav: list[float]
    tau_fric: list[float]
    tau_joint: list[float]
    tau_trig: list[float]
    tau_total: list[float]


class GripperCommand(BaseModel):
    type: Literal["gripper_command"] = "gripper_command"
    t: float
    command: Literal["open", "close"]


class StageEvent(BaseModel):
    type: Literal["stage_event"] = "stage_event"
    t: float
    mode: str


class WorldSnapshot(BaseModel):
    type: Literal["world_snapshot"] = "world_snapshot"
    t: float
    q: list[float]
    qd: list[float]
    ee: dict          # wire pose: {"t": [x,y,z], "q": [w,x,y,z]}
    mode: str
    gripper: str
    attached: str | None = None
    e_p: float | None = None    # vs the current grasp target, when one exists
    e_r: float | None = None
    collisions: int = 0


class Heartbeat(BaseModel):
    type: Literal["heartbeat"] = "heartbeat"
    t: float


class ErrorMessage(BaseModel):
    type: Literal["error"] = "error"
    code: str
    text: str


Message = Annotated[
    Union[
        Hello,
        Welcome,
        LeaderJointState,
        FollowerJointState,
        TorqueFeedback,
        GripperCommand,
        StageEvent,
        WorldSnapshot,
        Heartbeat,
        ErrorMessage,
    ],
    Field(discriminator="type"),
]

_adapter: TypeAdapter = TypeAdapter(Message)

MESSAGE_TYPES = (
    Hello,
    Welcome,
    LeaderJointState,
    FollowerJointState,
    TorqueFeedback,
    GripperCommand,
    StageEvent,
    WorldSnapshot,
    Heartbeat,
    ErrorMessage,
)


def encode_body(msg: BaseModel) -> bytes:
    # json.dumps uses repr() for floats: shortest exact decimal form
    return json.dumps(msg.model_dump(), separators=(",", ":")).encode("utf-8")


def decode_body(body: bytes | str):
    try:
        obj = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise MalformedFrame(f"invalid JSON: {e}") from e
    if not isinstance(obj, dict) or "type" not in obj:
        raise MalformedFrame("message body must be an object with a 'type' field")
    if obj["type"] not in {m.model_fields["type"].default for m in MESSAGE_TYPES}:
        raise UnknownType(str(obj["type"]))
    try:
        return _adapter.validate_python(obj)
    except ValidationError as e:
        raise MalformedFrame(f"schema violation: {e}") from e


def encode(msg: BaseModel) -> bytes:
    """Full TCP frame: length prefix + JSON body."""
    body = encode_body(msg)
    if len(body) > MAX_FRAME_BYTES:
        raise MalformedFrame(f"frame too large ({len(body)} bytes)")
    return struct.pack(">I", len(body)) + body


def decode(frame: bytes):
    """Inverse of encode; raises MalformedFrame on truncation or overrun."""
    if len(frame) < 4:
        raise MalformedFrame("truncated length prefix")
    (length,) = struct.unpack(">I", frame[:4])
    if length > MAX_FRAME_BYTES:
        raise MalformedFrame(f"declared length {length} exceeds limit")
    body = frame[4:]
    if len(body) != length:
        raise MalformedFrame(f"declared {length} bytes, got {len(body)}")
    return decode_body(body)


async def read_frame(reader) -> "BaseModel | None":
    """Read one framed message from an asyncio stream; None on clean EOF."""
    import asyncio

    try:
        header = await reader.readexactly(4)
    except (asyncio.IncompleteReadError, ConnectionResetError):
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise MalformedFrame(f"declared length {length} exceeds limit")
    try:
        body = await reader.readexactly(length)
    except asyncio.IncompleteReadError as e:
        raise MalformedFrame("connection closed mid-frame") from e
    return decode_body(body)
