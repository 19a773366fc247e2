// Console state lives in a single pure reducer: every UI change is a
// function of (previous state, action), so sessions replay in tests.

import {
  ClientMessage,
  ServerMessage,
  WorldSnapshot,
} from "./protocol.js";

export const TRIGGER_CLOSE = 0.8;
export const TRIGGER_OPEN = 0.2;
export const STALE_AFTER_MS = 1000;
export const EVENT_FEED_LIMIT = 50;

// modes in which the leader mapping is disengaged and the console must not
// send leader messages
export const LOCKED_MODES = new Set([
  "disconnected",
  "aligning",
  "grasping",
  "returning",
]);

export const STAGE_BREADCRUMB = [
  "teleop_coarse",
  "tag_acquired",
  "disconnected",
  "aligning",
  "grasping",
  "returning",
  "reconnected",
];

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface FeedEntry {
  at: number; // local ms timestamp
  text: string;
}

export interface ConsoleState {
  status: ConnectionStatus;
  role: "operator" | "observer" | null;
  n: number;
  qMin: number[];
  qMax: number[];
  vMax: number[];
  jog: number[]; // local leader joint targets, clamped to limits
  trigger: number;
  triggerClosed: boolean; // hysteresis latch
  confirmArmed: boolean; // one-shot confirmation flag for the next send
  mode: string;
  snapshot: WorldSnapshot | null;
  snapshotAt: number; // local ms when the snapshot arrived
  collisionsSeen: number;
  collisionFlashAt: number;
  feed: FeedEntry[];
  lastError: string | null;
}

export type Action =
  | { kind: "socket"; status: ConnectionStatus; at: number }
  | { kind: "server"; msg: ServerMessage; at: number }
  | { kind: "jog"; joint: number; delta: number; at: number }
  | { kind: "setJoint"; joint: number; value: number; at: number }
  | { kind: "trigger"; value: number; at: number }
  | { kind: "confirm"; at: number }
  | { kind: "gripper"; command: "open" | "close"; at: number };

export interface Step {
  state: ConsoleState;
  outbound: ClientMessage[];
}

export function initialState(): ConsoleState {
  return {
    status: "connecting",
    role: null,
    n: 0,
    qMin: [],
    qMax: [],
    vMax: [],
    jog: [],
    trigger: 0,
    triggerClosed: false,
    confirmArmed: false,
    mode: "teleop_coarse",
    snapshot: null,
    snapshotAt: 0,
    collisionsSeen: 0,
    collisionFlashAt: -Infinity,
    feed: [],
    lastError: null,
  };
}

export function locked(state: ConsoleState): boolean {
  return (
    state.status !== "open" ||
    state.role !== "operator" ||
    LOCKED_MODES.has(state.mode)
  );
}

export function stale(state: ConsoleState, now: number): boolean {
  return state.snapshot !== null && now - state.snapshotAt > STALE_AFTER_MS;
}

function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

function pushFeed(feed: FeedEntry[], at: number, text: string): FeedEntry[] {
  return [...feed, { at, text }].slice(-EVENT_FEED_LIMIT);
}

function leaderMessage(
  state: ConsoleState,
  at: number,
  consume: boolean
): ClientMessage {
  // stamped from the action clock so replays are byte-identical
  return {
    type: "leader_joint_state",
    t: at / 1000,
    q: [...state.jog],
    trigger: state.trigger,
    confirm: consume,
  };
}

function applyServer(
  state: ConsoleState,
  msg: ServerMessage,
  at: number
): ConsoleState {
  switch (msg.type) {
    case "welcome": {
      return {
        ...state,
        role: msg.role,
        n: msg.n,
        qMin: msg.q_min,
        qMax: msg.q_max,
        vMax: msg.v_max,
        feed: pushFeed(state.feed, at, `joined as ${msg.role}`),
      };
    }
    case "world_snapshot": {
      const flash = msg.collisions > state.collisionsSeen;
      // seed the jog targets from the follower on first contact so the
      // sliders start where the arm actually is
      const jog = state.jog.length === msg.q.length ? state.jog : [...msg.q];
      return {
        ...state,
        snapshot: msg,
        snapshotAt: at,
        mode: msg.mode,
        jog,
        collisionsSeen: Math.max(state.collisionsSeen, msg.collisions),
        collisionFlashAt: flash ? at : state.collisionFlashAt,
        feed: flash
          ? pushFeed(state.feed, at, `collision #${msg.collisions}`)
          : state.feed,
      };
    }
    case "stage_event": {
      return {
        ...state,
        mode: msg.mode,
        feed: pushFeed(state.feed, at, `stage: ${msg.mode}`),
      };
    }
    case "error": {
      return {
        ...state,
        lastError: `${msg.code}: ${msg.text}`,
        role: msg.code === "RoleConflict" ? "observer" : state.role,
        feed: pushFeed(state.feed, at, `error ${msg.code}`),
      };
    }
    case "follower_joint_state":
    case "torque_feedback":
    case "heartbeat":
      return state;
  }
}

export function reduce(state: ConsoleState, action: Action): Step {
  switch (action.kind) {
    case "socket": {
      const next = { ...state, status: action.status };
      if (action.status !== "open") {
        next.role = action.status === "closed" ? null : next.role;
      }
      return {
        state: {
          ...next,
          feed: pushFeed(next.feed, action.at, `link ${action.status}`),
        },
        outbound: [],
      };
    }
    case "server":
      return { state: applyServer(state, action.msg, action.at), outbound: [] };
    case "jog":
    case "setJoint": {
      if (locked(state) || action.joint < 0 || action.joint >= state.n) {
        return { state, outbound: [] };
      }
      const jog = [...state.jog];
      const raw =
        action.kind === "jog" ? jog[action.joint] + action.delta : action.value;
      jog[action.joint] = clamp(
        raw,
        state.qMin[action.joint],
        state.qMax[action.joint]
      );
      const next = { ...state, jog };
      return { state: next, outbound: [leaderMessage(next, action.at, false)] };
    }
    case "trigger": {
      if (locked(state)) {
        return { state, outbound: [] };
      }
      const value = clamp(action.value, 0, 1);
      let { triggerClosed, feed } = state;
      // hysteresis latch: one close per upward crossing, one open per
      // downward crossing, no chatter in between
      if (!triggerClosed && value >= TRIGGER_CLOSE) {
        triggerClosed = true;
        feed = pushFeed(feed, action.at, "gripper: close");
      } else if (triggerClosed && value <= TRIGGER_OPEN) {
        triggerClosed = false;
        feed = pushFeed(feed, action.at, "gripper: open");
      }
      const next = { ...state, trigger: value, triggerClosed, feed };
      return { state: next, outbound: [leaderMessage(next, action.at, false)] };
    }
    case "confirm": {
      if (locked(state)) {
        return { state, outbound: [] };
      }
      const next = {
        ...state,
        feed: pushFeed(state.feed, action.at, "confirm sent"),
      };
      return { state: next, outbound: [leaderMessage(next, action.at, true)] };
    }
    case "gripper": {
      if (locked(state)) {
        return { state, outbound: [] };
      }
      return {
        state: {
          ...state,
          feed: pushFeed(state.feed, action.at, `gripper: ${action.command}`),
        },
        outbound: [
          { type: "gripper_command", t: action.at / 1000, command: action.command },
        ],
      };
    }
  }
}

// replay a whole action history from scratch; used by tests to check that
// state really is a pure function of the inputs
export function replay(actions: Action[]): Step {
  let step: Step = { state: initialState(), outbound: [] };
  const outbound: ClientMessage[] = [];
  for (const action of actions) {
    step = reduce(step.state, action);
    outbound.push(...step.outbound);
  }
  return { state: step.state, outbound };
}
