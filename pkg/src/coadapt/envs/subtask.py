"""Three-part reaching task over eight goals.

Eight goals sit on the unit circle at angles pi*k/4. Each interaction runs 30
timesteps split into three sub-tasks of 10 steps; the opponent secretly picks
an ordered triple of same-parity ("alternate") goals, one per sub-task, and
the ego is rewarded the negative distance to the active sub-task's goal. The
triple shifts between interactions by the opponent's dynamics rule.

The ego observation carries normalized time so a memoryless policy can tell
which sub-task is active.
"""

from __future__ import annotations

import numpy as np

from coadapt.core import Experience
from coadapt.envs.base import (
    DynamicsDistribution,
    Environment,
    InvalidStrategyError,
    OpponentState,
    UnknownDynamicsError,
)

NUM_GOALS = 8
GOALS = np.array(
    [[np.cos(np.pi * k / 4.0), np.sin(np.pi * k / 4.0)] for k in range(NUM_GOALS)]
)
HOME = np.array([0.0, 0.0])
SUBTASK_STEPS = 10
NUM_SUBTASKS = 3

Sequence3 = tuple[int, int, int]


def validate_sequence(sequence) -> Sequence3:
    seq = tuple(int(g) for g in sequence)
    if len(seq) != NUM_SUBTASKS:
        raise InvalidStrategyError(f"goal sequence must have 3 entries, got {seq}")
    if len(set(seq)) != NUM_SUBTASKS:
        raise InvalidStrategyError(f"goal sequence entries must be distinct: {seq}")
    if any(not 0 <= g < NUM_GOALS for g in seq):
        raise InvalidStrategyError(f"goal indices must lie in [0, 8): {seq}")
    if len({g % 2 for g in seq}) != 1:
        raise InvalidStrategyError(
            f"goal sequence must use alternate goals (all even or all odd): {seq}"
        )
    return seq


def shift_sequence(sequence: Sequence3, delta: int) -> Sequence3:
    return tuple((g + delta) % NUM_GOALS for g in sequence)


def final_position(exp: Experience) -> np.ndarray:
    return exp.states[-1][:2] + exp.actions[-1]


def subtask_dynamics_update(dynamics_id: str, sequence, exp: Experience) -> Sequence3:
    """Triple-update rules: shift away from the ego, conditionally keep, or cycle."""
    seq = validate_sequence(sequence)
    position = final_position(exp)
    if dynamics_id == "d1":
        plus = shift_sequence(seq, 2)
        minus = shift_sequence(seq, -2)
        dist_plus = float(np.linalg.norm(GOALS[list(plus)].mean(axis=0) - position))
        dist_minus = float(np.linalg.norm(GOALS[list(minus)].mean(axis=0) - position))
        return plus if dist_plus >= dist_minus else minus
    if dynamics_id == "d2":
        third_goal = GOALS[seq[2]]
        if position[0] < third_goal[0]:
            return seq
        return subtask_dynamics_update("d1", seq, exp)
    if dynamics_id == "d3":
        return shift_sequence(seq, 2)
    if dynamics_id == "d4":
        return shift_sequence(seq, -2)
    raise UnknownDynamicsError(f"subtask env has no dynamics {dynamics_id!r}")


PAPER_SET = DynamicsDistribution(
    env_name="robot_subtask", kind="discrete", ids=("d1", "d2", "d3", "d4")
)


class SubtaskEnv(Environment):
    name = "robot_subtask"
    horizon = SUBTASK_STEPS * NUM_SUBTASKS
    state_dim = 3  # (x, y, t / horizon)
    action_dim = 2
    oracle_dim = NUM_SUBTASKS * NUM_GOALS
    action_scale = 0.3
    reward_bounds = (-60.0, 0.0)

    def __init__(
        self,
        distribution: DynamicsDistribution = PAPER_SET,
        switch_probability: float = 0.01,
    ):
        super().__init__(distribution, switch_probability)

    def _start_position(self) -> np.ndarray:
        return HOME.copy()

    def _initial_strategy(self, rng: np.random.Generator) -> Sequence3:
        parity = int(rng.integers(0, 2))
        pool = np.array([parity, parity + 2, parity + 4, parity + 6])
        picks = rng.permutation(pool)[:NUM_SUBTASKS]
        return tuple(int(g) for g in picks)

    def _transition(self, position, action, timestep):
        new_position = position + action
        goal = GOALS[self.opponent.strategy[timestep // SUBTASK_STEPS]]
        return new_position, -float(np.linalg.norm(new_position - goal))

    def observation(self) -> np.ndarray:
        state = super().observation()
        phase = self._state.timestep / self.horizon
        return np.concatenate([state, [phase]])

    def _apply_dynamics(self, opponent: OpponentState, exp, rng):
        return subtask_dynamics_update(opponent.dynamics_id, opponent.strategy, exp)

    def oracle_encoding(self) -> np.ndarray:
        encoding = np.zeros(self.oracle_dim)
        for slot, goal in enumerate(validate_sequence(self.opponent.strategy)):
            encoding[slot * NUM_GOALS + goal] = 1.0
        return encoding
