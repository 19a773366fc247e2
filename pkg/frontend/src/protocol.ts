// Wire message schema shared with the control service. Websocket sessions
// carry plain JSON bodies (no length prefix); every body has a "type" field.

export interface Hello {
  type: "hello";
  t: number;
  role: "operator" | "observer";
}

export interface Welcome {
  type: "welcome";
  t: number;
  role: "operator" | "observer";
  n: number;
  q_min: number[];
  q_max: number[];
  v_max: number[];
}

export interface LeaderJointState {
  type: "leader_joint_state";
  t: number;
  q: number[];
  trigger: number;
  confirm: boolean;
}

export interface FollowerJointState {
  type: "follower_joint_state";
  t: number;
  q: number[];
  qd: number[];
}

export interface TorqueFeedback {
  type: "torque_feedback";
  t: number;
  tau_grav: number[];
  tau_fric: number[];
  tau_joint: number[];
  tau_trig: number[];
  tau_total: number[];
}

export interface GripperCommand {
  type: "gripper_command";
  t: number;
  command: "open" | "close";
}

export interface StageEvent {
  type: "stage_event";
  t: number;
  mode: string;
}

export interface WirePose {
  t: number[];
  q: number[]; // unit quaternion, w first
}

export interface WorldSnapshot {
  type: "world_snapshot";
  t: number;
  q: number[];
  qd: number[];
  ee: WirePose;
  mode: string;
  gripper: string;
  attached: string | null;
  e_p: number | null;
  e_r: number | null;
  collisions: number;
}

export interface Heartbeat {
  type: "heartbeat";
  t: number;
}

export interface ErrorMessage {
  type: "error";
  code: string;
  text: string;
}

export type ServerMessage =
  | Welcome
  | FollowerJointState
  | TorqueFeedback
  | StageEvent
  | WorldSnapshot
  | Heartbeat
  | ErrorMessage;

export type ClientMessage = Hello | LeaderJointState | GripperCommand | Heartbeat;

const SERVER_TYPES = new Set([
  "welcome",
  "follower_joint_state",
  "torque_feedback",
  "stage_event",
  "world_snapshot",
  "heartbeat",
  "error",
]);

export class DecodeError extends Error {}

function expectNumbers(value: unknown, field: string): number[] {
  if (!Array.isArray(value) || value.some((v) => typeof v !== "number")) {
    throw new DecodeError(`field ${field} must be a number array`);
  }
  return value as number[];
}

function expectNumber(value: unknown, field: string): number {
  if (typeof value !== "number") {
    throw new DecodeError(`field ${field} must be a number`);
  }
  return value;
}

// Decode one inbound JSON body. Unknown types raise DecodeError so the
// caller can surface them without dropping the session.
export function decodeServerMessage(raw: string): ServerMessage {
  let obj: any;
  try {
    obj = JSON.parse(raw);
  } catch (e) {
    throw new DecodeError(`invalid JSON: ${e}`);
  }
  if (typeof obj !== "object" || obj === null || typeof obj.type !== "string") {
    throw new DecodeError("message must be an object with a 'type' field");
  }
  if (!SERVER_TYPES.has(obj.type)) {
    throw new DecodeError(`unknown message type ${obj.type}`);
  }
  switch (obj.type as ServerMessage["type"]) {
    case "welcome":
      expectNumber(obj.t, "t");
      expectNumbers(obj.q_min, "q_min");
      expectNumbers(obj.q_max, "q_max");
      expectNumbers(obj.v_max, "v_max");
      if (obj.role !== "operator" && obj.role !== "observer") {
        throw new DecodeError(`bad role ${obj.role}`);
      }
      break;
    case "follower_joint_state":
      expectNumbers(obj.q, "q");
      expectNumbers(obj.qd, "qd");
      break;
    case "world_snapshot":
      expectNumbers(obj.q, "q");
      expectNumber(obj.t, "t");
      break;
    case "stage_event":
      if (typeof obj.mode !== "string") {
        throw new DecodeError("stage_event.mode must be a string");
      }
      break;
    case "torque_feedback":
      expectNumbers(obj.tau_total, "tau_total");
      break;
    case "heartbeat":
      expectNumber(obj.t, "t");
      break;
    case "error":
      if (typeof obj.code !== "string" || typeof obj.text !== "string") {
        throw new DecodeError("error message needs code and text");
      }
      break;
  }
  return obj as ServerMessage;
}

export function encodeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}
