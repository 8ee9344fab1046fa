"""Highway passing game on three lanes.

The ego car speeds up the road at a fixed rate (0.2 units of y per step) and
steers laterally; a slower car sits in one of three lanes at x in {-1, 0, 1}
across the y band [0.75, 1.25]. Reward penalizes steering effort and charges a
flat 10 whenever the ego's post-step position overlaps the slow car (same y
band and within half a lane width laterally). The slow car may change lanes
between interactions depending on where the ego drove.
"""

from __future__ import annotations

import numpy as np

from coadapt.core import Experience
from coadapt.envs.base import (
    DynamicsDistribution,
    Environment,
    OpponentState,
    UnknownDynamicsError,
)

LANES = (-1.0, 0.0, 1.0)
ADVANCE = 0.2  # forward progress per step
STEER_MAX = np.pi / 4.0
COLLISION_PENALTY = 10.0
BAND_LOW = 0.75
BAND_HIGH = 1.25
HALF_LANE = 0.5


def lane_of(x: float) -> int:
    """Index of the lane center nearest to x (0, 1, 2 from left to right)."""
    return int(np.clip(np.rint(x), -1.0, 1.0)) + 1


def final_position(exp: Experience) -> np.ndarray:
    state = exp.states[-1]
    steer = float(exp.actions[-1][0])
    return np.array([state[0] + np.tan(steer) * ADVANCE, state[1] + ADVANCE])


def driving_dynamics_update(dynamics_id: str, lane: int, exp: Experience) -> int:
    """Lane-change rules: follow the ego's path at some point, or cycle."""
    if dynamics_id == "d1":
        return lane_of(float(final_position(exp)[0]))
    if dynamics_id == "d2":
        return lane_of(float(exp.states[len(exp.states) // 2][0]))
    if dynamics_id == "d3":
        return lane_of(float(exp.states[len(exp.states) // 4][0]))
    if dynamics_id == "d4":
        return (lane + 1) % 3
    if dynamics_id == "d5":
        return (lane - 1) % 3
    raise UnknownDynamicsError(f"driving has no dynamics {dynamics_id!r}")


PAPER_SET = DynamicsDistribution(
    env_name="driving", kind="discrete", ids=("d1", "d2", "d3", "d4", "d5")
)


class DrivingEnv(Environment):
    name = "driving"
    horizon = 10
    state_dim = 2
    action_dim = 1
    oracle_dim = 3
    action_scale = STEER_MAX
    # at most 3 of the 10 post-step positions can fall inside the slow car's
    # y band, so the worst sum is 10 full-steer penalties plus 3 collisions
    reward_bounds = (-(10 * STEER_MAX + 3 * COLLISION_PENALTY), 0.0)

    def __init__(
        self,
        distribution: DynamicsDistribution = PAPER_SET,
        switch_probability: float = 0.01,
    ):
        super().__init__(distribution, switch_probability)

    def _start_position(self) -> np.ndarray:
        return np.array([LANES[1], 0.0])

    def _initial_strategy(self, rng: np.random.Generator) -> int:
        return int(rng.integers(0, 3))

    def clamp_action(self, action: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(action, dtype=np.float64), -STEER_MAX, STEER_MAX)

    def _transition(self, position, action, timestep):
        steer = float(action[0])
        new_position = np.array(
            [position[0] + np.tan(steer) * ADVANCE, position[1] + ADVANCE]
        )
        reward = -abs(steer)
        other_x = LANES[int(self.opponent.strategy)]
        overlapping = BAND_LOW <= new_position[1] <= BAND_HIGH
        if overlapping and abs(new_position[0] - other_x) < HALF_LANE:
            reward -= COLLISION_PENALTY
        return new_position, reward

    def _apply_dynamics(self, opponent: OpponentState, exp, rng):
        return driving_dynamics_update(opponent.dynamics_id, int(opponent.strategy), exp)

    def oracle_encoding(self) -> np.ndarray:
        encoding = np.zeros(3)
        encoding[int(self.opponent.strategy)] = 1.0
        return encoding
