import { describe, expect, it } from "vitest";

import {
  Action,
  initialState,
  locked,
  reduce,
  replay,
  stale,
} from "../src/state.js";
import { ServerMessage, WorldSnapshot } from "../src/protocol.js";

const WELCOME: ServerMessage = {
  type: "welcome",
  t: 0,
  role: "operator",
  n: 2,
  q_min: [-1, -1],
  q_max: [1, 1],
  v_max: [2, 2],
};

function snapshot(over: Partial<WorldSnapshot> = {}): ServerMessage {
  return {
    type: "world_snapshot",
    t: 0.5,
    q: [0.1, 0.2],
    qd: [0, 0],
    ee: { t: [0, 0, 0], q: [1, 0, 0, 0] },
    mode: "teleop_coarse",
    gripper: "open",
    attached: null,
    e_p: null,
    e_r: null,
    collisions: 0,
    ...over,
  };
}

function connect(extra: Action[] = []) {
  const actions: Action[] = [
    { kind: "socket", status: "open", at: 0 },
    { kind: "server", msg: WELCOME, at: 1 },
    { kind: "server", msg: snapshot(), at: 2 },
    ...extra,
  ];
  return replay(actions);
}

describe("handshake", () => {
  it("adopts role and limits from the welcome", () => {
    const { state } = connect();
    expect(state.role).toBe("operator");
    expect(state.n).toBe(2);
    expect(state.qMin).toEqual([-1, -1]);
  });

  it("seeds jog targets from the first snapshot", () => {
    const { state } = connect();
    expect(state.jog).toEqual([0.1, 0.2]);
  });

  it("demotes to observer on a role conflict", () => {
    const { state } = connect([
      {
        kind: "server",
        msg: { type: "error", code: "RoleConflict", text: "taken" },
        at: 3,
      },
    ]);
    expect(state.role).toBe("observer");
    expect(locked(state)).toBe(true);
  });
});

describe("jogging", () => {
  it("clamps jog targets to the advertised limits", () => {
    const { state } = connect([
      { kind: "jog", joint: 0, delta: 5.0, at: 3 },
      { kind: "jog", joint: 1, delta: -9.0, at: 4 },
    ]);
    expect(state.jog[0]).toBe(1);
    expect(state.jog[1]).toBe(-1);
  });

  it("emits one leader message per jog input", () => {
    const { outbound } = connect([
      { kind: "jog", joint: 0, delta: 0.1, at: 3 },
      { kind: "jog", joint: 0, delta: 0.1, at: 4 },
    ]);
    const leader = outbound.filter((m) => m.type === "leader_joint_state");
    expect(leader).toHaveLength(2);
    expect((leader[1] as any).q[0]).toBeCloseTo(0.3, 12);
  });

  it("ignores out-of-range joint indices", () => {
    const { state, outbound } = connect([
      { kind: "jog", joint: 7, delta: 0.1, at: 3 },
    ]);
    expect(state.jog).toEqual([0.1, 0.2]);
    expect(outbound.filter((m) => m.type === "leader_joint_state")).toHaveLength(0);
  });

  it("observers produce no outbound messages", () => {
    const { outbound } = replay([
      { kind: "socket", status: "open", at: 0 },
      { kind: "server", msg: { ...WELCOME, role: "observer" }, at: 1 },
      { kind: "server", msg: snapshot(), at: 2 },
      { kind: "jog", joint: 0, delta: 0.1, at: 3 },
      { kind: "trigger", value: 1, at: 4 },
      { kind: "gripper", command: "close", at: 5 },
    ]);
    expect(outbound).toHaveLength(0);
  });
});

describe("trigger hysteresis", () => {
  it("a full sweep produces exactly one close and one open", () => {
    const sweep: Action[] = [];
    let at = 3;
    for (let v = 0; v <= 1.0001; v += 0.05) {
      sweep.push({ kind: "trigger", value: v, at: at++ });
    }
    for (let v = 1; v >= -0.0001; v -= 0.05) {
      sweep.push({ kind: "trigger", value: v, at: at++ });
    }
    const { state } = connect(sweep);
    const closes = state.feed.filter((e) => e.text === "gripper: close");
    const opens = state.feed.filter((e) => e.text === "gripper: open");
    expect(closes).toHaveLength(1);
    expect(opens).toHaveLength(1);
    expect(state.triggerClosed).toBe(false);
  });

  it("dithering between the thresholds does not chatter", () => {
    const dither: Action[] = [{ kind: "trigger", value: 0.9, at: 3 }];
    for (let i = 0; i < 20; i++) {
      dither.push({ kind: "trigger", value: 0.5 + 0.25 * (i % 2), at: 4 + i });
    }
    const { state } = connect(dither);
    expect(state.feed.filter((e) => e.text === "gripper: close")).toHaveLength(1);
    expect(state.feed.filter((e) => e.text === "gripper: open")).toHaveLength(0);
  });

  it("streams the raw trigger value to the service", () => {
    const { outbound } = connect([{ kind: "trigger", value: 0.37, at: 3 }]);
    const leader = outbound.filter((m) => m.type === "leader_joint_state");
    expect((leader[0] as any).trigger).toBeCloseTo(0.37, 12);
  });
});

describe("stage lockout", () => {
  const enterStage2: Action[] = [
    { kind: "server", msg: { type: "stage_event", t: 1, mode: "aligning" }, at: 3 },
  ];

  it("locks controls in autonomous modes", () => {
    const { state } = connect(enterStage2);
    expect(locked(state)).toBe(true);
  });

  it("suppresses every leader message while locked", () => {
    const { outbound } = connect([
      ...enterStage2,
      { kind: "jog", joint: 0, delta: 0.1, at: 4 },
      { kind: "trigger", value: 1, at: 5 },
      { kind: "confirm", at: 6 },
      { kind: "gripper", command: "close", at: 7 },
    ]);
    expect(outbound.filter((m) => m.type !== "hello")).toHaveLength(0);
  });

  it("unlocks after the reconnected stage event", () => {
    const { state, outbound } = connect([
      ...enterStage2,
      {
        kind: "server",
        msg: { type: "stage_event", t: 2, mode: "reconnected" },
        at: 4,
      },
      { kind: "jog", joint: 0, delta: 0.1, at: 5 },
    ]);
    expect(locked(state)).toBe(false);
    expect(outbound.filter((m) => m.type === "leader_joint_state")).toHaveLength(1);
  });

  it("advances the breadcrumb mode on stage events", () => {
    const { state } = connect(enterStage2);
    expect(state.mode).toBe("aligning");
  });
});

describe("telemetry", () => {
  it("flags a collision increment once and feeds it", () => {
    const { state } = connect([
      { kind: "server", msg: snapshot({ collisions: 1 }), at: 10 },
      { kind: "server", msg: snapshot({ collisions: 1 }), at: 11 },
    ]);
    expect(state.collisionFlashAt).toBe(10);
    expect(state.feed.filter((e) => e.text.startsWith("collision"))).toHaveLength(1);
  });

  it("passes grasp errors through unchanged", () => {
    const { state } = connect([
      { kind: "server", msg: snapshot({ e_p: 0.0042, e_r: 0.01 }), at: 10 },
    ]);
    expect(state.snapshot?.e_p).toBe(0.0042);
  });

  it("marks the view stale after one second without snapshots", () => {
    const { state } = connect();
    expect(stale(state, 900)).toBe(false);
    expect(stale(state, 1100)).toBe(true);
  });
});

describe("purity", () => {
  it("replaying the same history reproduces the same state", () => {
    const history: Action[] = [
      { kind: "socket", status: "open", at: 0 },
      { kind: "server", msg: WELCOME, at: 1 },
      { kind: "server", msg: snapshot(), at: 2 },
      { kind: "jog", joint: 1, delta: -0.3, at: 3 },
      { kind: "trigger", value: 0.9, at: 4 },
      { kind: "server", msg: snapshot({ collisions: 1 }), at: 5 },
    ];
    expect(replay(history)).toEqual(replay(history));
  });

  it("reduce never mutates its input state", () => {
    const before = connect().state;
    const frozen = structuredClone(before);
    reduce(before, { kind: "jog", joint: 0, delta: 0.5, at: 9 });
    reduce(before, { kind: "trigger", value: 1, at: 10 });
    expect(before).toEqual(frozen);
  });

  it("starts from a fully disconnected state", () => {
    const state = initialState();
    expect(state.status).toBe("connecting");
    expect(locked(state)).toBe(true);
  });
});
