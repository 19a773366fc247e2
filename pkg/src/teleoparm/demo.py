"""Builds the bundled scripted approach for the pickup scenes."""
from __future__ import annotations

import numpy as np

from .geometry import RigidTransform, rot_y
from .kinematics import solve_ik
from .runner import LeaderSample
from .scenario import Scenario


def pickup_script(
    scenario: Scenario,
    hover: float = 0.20,
    ramp_time: float = 2.5,
    hold_time: float = 0.6,
    rate: float = 100.0,
) -> list[LeaderSample]:
    """Leader stream: ramp from the start pose to a pre-grasp hover, hold, confirm.

    The pre-grasp keeps the gripper pointing straight down, hovering above the
    target so the tag sits inside the camera cone before the confirmation.
    """
    target_p = scenario.target.pose.translation + np.array([0.0, 0.0, hover])
    pregrasp = RigidTransform(rot_y(np.pi), target_p)
    q_goal = solve_ik(scenario.chain, pregrasp, scenario.start_q)

    dt = 1.0 / rate
    samples = []
    steps = int(ramp_time * rate)
    for k in range(steps + 1):
        s = k / steps
        # smoothstep ramp keeps leader velocity gentle at both ends
        s = s * s * (3.0 - 2.0 * s)
        samples.append(LeaderSample(t=k * dt, q=(1.0 - s) * scenario.start_q + s * q_goal))
    hold_steps = int(hold_time * rate)
    for k in range(1, hold_steps + 1):
        t = ramp_time + k * dt
        samples.append(LeaderSample(t=t, q=q_goal, confirm=(k == hold_steps)))
    return samples
