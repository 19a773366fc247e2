"""Trial evaluation, aggregation, and demonstration logging (.ndjson)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

LOG_VERSION = 1


class IncompleteLog(Exception):
    pass


class SchemaMismatch(Exception):
    pass


class EmptyInput(Exception):
    pass


@dataclass(frozen=True)
class TrialResult:
    success: bool
    completion_time: float | None   # s, first command to lift confirmation
    e_p: float | None               # m, vs commanded grasp pose at the grasp instant
    e_r: float | None               # rad
    collisions: int
    abort_reason: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "TrialResult":
        return TrialResult(
            success=bool(d["success"]),
            completion_time=d.get("completion_time"),
            e_p=d.get("e_p"),
            e_r=d.get("e_r"),
            collisions=int(d.get("collisions", 0)),
            abort_reason=d.get("abort_reason"),
        )


@dataclass
class DemoLog:
    """Append-only per-trial record stream with a scenario/seed header."""

    scenario_hash: str
    seed: int
    records: list[dict] = field(default_factory=list)
    version: int = LOG_VERSION

    def append(self, record: dict):
        if self.records and record["t"] < self.records[-1]["t"]:
            raise ValueError("log timestamps must be non-decreasing")
        self.records.append(record)

    def events(self, kind: str) -> list[dict]:
        return [r for r in self.records if r.get("event") == kind]

    def ticks(self) -> list[dict]:
        return [r for r in self.records if "event" not in r]


def write_log(log: DemoLog, path: str | Path):
    path = Path(path)
    with open(path, "w") as f:
        header = {"version": log.version, "scenario_hash": log.scenario_hash, "seed": log.seed}
        f.write(json.dumps(header, separators=(",", ":")) + "\n")
        for rec in log.records:
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_log(path: str | Path) -> DemoLog:
    path = Path(path)
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise SchemaMismatch(f"{path}: empty file, missing header")
    header = json.loads(lines[0])
    if header.get("version") != LOG_VERSION:
        raise SchemaMismatch(f"{path}: log version {header.get('version')}, expected {LOG_VERSION}")
    return DemoLog(
        scenario_hash=header["scenario_hash"],
        seed=int(header["seed"]),
        records=[json.loads(ln) for ln in lines[1:]],
    )


def evaluate_trial(
    log: DemoLog,
    grasp_pos_tol: float = 0.01,
    grasp_rot_tol: float = 0.1,
    lift_height: float = 0.05,
) -> TrialResult:
    """Success = no collisions, in-tolerance alignment at the grasp instant, and a lift.

    Pure function of the log: collision events are rising-edge counted by the
    runner, the grasp event carries alignment errors against the commanded
    grasp pose, and the lift event confirms the attached object's rise.
    """
    if not log.records:
        raise IncompleteLog("log has no records")

    collisions = len(log.events("collision"))
    aborts = log.events("abort")
    abort_reason = aborts[0]["reason"] if aborts else None

    grasps = log.events("grasp")
    e_p = e_r = None
    grasp_ok = False
    if grasps:
        g = grasps[-1]
        e_p, e_r = g.get("e_p"), g.get("e_r")
        grasp_ok = bool(g.get("attached")) and e_p is not None and (
            e_p <= grasp_pos_tol and e_r <= grasp_rot_tol
        )

    lifts = [ev for ev in log.events("lift") if ev.get("height", 0.0) >= lift_height]
    lifted = bool(lifts)

    success = collisions == 0 and grasp_ok and lifted and abort_reason is None
    completion = None
    if lifted:
        completion = float(lifts[0]["t"] - log.records[0]["t"])
    return TrialResult(
        success=success,
        completion_time=completion,
        e_p=e_p,
        e_r=e_r,
        collisions=collisions,
        abort_reason=abort_reason,
    )


@dataclass(frozen=True)
class Summary:
    trials: int
    success_rate: float           # percent
    mean_time: float | None       # s, over successful trials only
    mean_e_p: float | None        # over trials that reached the grasp instant
    mean_e_r: float | None
    collision_rate: float         # percent of trials with >= 1 collision


def aggregate(results: list[TrialResult]) -> Summary:
    if not results:
        raise EmptyInput("no trial results to aggregate")
    n = len(results)
    successes = [r for r in results if r.success]
    times = [r.completion_time for r in successes if r.completion_time is not None]
    eps = [r.e_p for r in results if r.e_p is not None]
    ers = [r.e_r for r in results if r.e_r is not None]
    return Summary(
        trials=n,
        success_rate=100.0 * len(successes) / n,
        mean_time=float(np.mean(times)) if times else None,
        mean_e_p=float(np.mean(eps)) if eps else None,
        mean_e_r=float(np.mean(ers)) if ers else None,
        collision_rate=100.0 * sum(1 for r in results if r.collisions > 0) / n,
    )


def format_summary(s: Summary) -> str:
    def fmt(v, unit="", prec=3):
        return "-" if v is None else f"{v:.{prec}f}{unit}"

    rows = [
        ("Trials", str(s.trials)),
        ("Success rate", f"{s.success_rate:.1f}%"),
        ("Mean time (success)", fmt(s.mean_time, " s", 2)),
        ("Mean position error", fmt(s.mean_e_p, " m", 4)),
        ("Mean orientation error", fmt(s.mean_e_r, " rad", 4)),
        ("Collision rate", f"{s.collision_rate:.1f}%"),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def summary_csv(s: Summary) -> str:
    header = "trials,success_rate,mean_time,mean_e_p,mean_e_r,collision_rate"
    vals = [
        str(s.trials),
        f"{s.success_rate:.6g}",
        "" if s.mean_time is None else f"{s.mean_time:.6g}",
        "" if s.mean_e_p is None else f"{s.mean_e_p:.6g}",
        "" if s.mean_e_r is None else f"{s.mean_e_r:.6g}",
        f"{s.collision_rate:.6g}",
    ]
    return header + "\n" + ",".join(vals)
