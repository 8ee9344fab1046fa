"""Planar reaching task with three candidate goals.

The ego agent is an end-effector point starting at the home position
(0.5, 0); the opponent picks which of three goals the ego should reach, and
the ego is rewarded the negative distance to that hidden goal after every
step. Goal 2 (rightmost) sits directly above home, so interactions where the
opponent wants goal 2 pay better; some dynamics let the ego pin the opponent
there.
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

HOME = np.array([0.5, 0.0])
GOALS = np.array([[-0.5, 0.5], [0.0, 0.5], [0.5, 0.5]])


def final_position(exp: Experience) -> np.ndarray:
    return exp.states[-1][:2] + exp.actions[-1]


def robot_dynamics_update(dynamics_id: str, goal_index: int, exp: Experience) -> int:
    """Goal-selection rules: flee the end-effector, conditionally stay, or cycle."""
    position = final_position(exp)
    if dynamics_id == "d1":
        distances = np.linalg.norm(GOALS - position, axis=1)
        return int(np.argmax(distances))  # argmax takes the lowest index on ties
    if dynamics_id == "d2":
        if position[0] < GOALS[goal_index][0]:
            return goal_index
        return robot_dynamics_update("d1", goal_index, exp)
    if dynamics_id == "d3":
        return (goal_index + 1) % 3
    if dynamics_id == "d4":
        return (goal_index - 1) % 3
    raise UnknownDynamicsError(f"robot has no dynamics {dynamics_id!r}")


PAPER_SET = DynamicsDistribution(
    env_name="robot", kind="discrete", ids=("d1", "d2", "d3", "d4")
)


class RobotEnv(Environment):
    name = "robot"
    horizon = 10
    state_dim = 2
    action_dim = 2
    oracle_dim = 3
    action_scale = 0.3
    reward_bounds = (-20.0, 0.0)

    def __init__(
        self,
        distribution: DynamicsDistribution = PAPER_SET,
        switch_probability: float = 0.01,
    ):
        super().__init__(distribution, switch_probability)

    def _start_position(self) -> np.ndarray:
        return HOME.copy()

    def _initial_strategy(self, rng: np.random.Generator) -> int:
        return int(rng.integers(0, 3))

    def _transition(self, position, action, timestep):
        new_position = position + action
        goal = GOALS[int(self.opponent.strategy)]
        return new_position, -float(np.linalg.norm(new_position - goal))

    def _apply_dynamics(self, opponent: OpponentState, exp, rng):
        return robot_dynamics_update(opponent.dynamics_id, int(opponent.strategy), exp)

    def oracle_encoding(self) -> np.ndarray:
        encoding = np.zeros(3)
        encoding[int(self.opponent.strategy)] = 1.0
        return encoding
