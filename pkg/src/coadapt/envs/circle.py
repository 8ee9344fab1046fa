"""Pursuit-evasion on the unit circle.

The ego agent (pursuer) starts each interaction at (0, 0.5) and moves in the
plane; the evader hides at angle theta on the unit circle. Per-step reward is
the negative distance between the ego's new position and the evader. Between
interactions the evader relocates according to its current dynamics rule.

Three rule families share this arena:

- ``d1``..``d4``: the published discrete rules (small counter/clockwise steps
  reacting to whether the ego ended inside or outside the circle, plus two
  non-reactive large-step rules)
- ``n1``..``n4``: crowd-sourced evasion rules (moving away when the pursuer
  gains, jumping to the far quadrant or the antipode, bang-bang left/right)
- ``step``: a constant angular step drawn from Uniform[-pi, pi], giving a
  continuum of opponents
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

TWO_PI = 2.0 * np.pi
STEP_SMALL = np.pi / 8.0
STEP_LARGE = np.pi / 2.0
STEP_CROWD = np.pi / 3.0

RADIUS = 1.0
START = np.array([0.0, 0.5])


def evader_position(theta: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta)])


def final_position(exp: Experience) -> np.ndarray:
    """Ego position after the last step (actions are stored post-clamp)."""
    return exp.states[-1][:2] + exp.actions[-1]


def circle_dynamics_update(dynamics_id: str, theta: float, exp: Experience) -> float:
    """The four published evasion rules. Counter-clockwise is +theta."""
    outside = float(np.linalg.norm(final_position(exp))) > RADIUS
    if dynamics_id == "d1":
        return (theta + STEP_SMALL) % TWO_PI if outside else (theta - STEP_SMALL) % TWO_PI
    if dynamics_id == "d2":
        return (theta - STEP_SMALL) % TWO_PI if outside else theta % TWO_PI
    if dynamics_id == "d3":
        return (theta + STEP_LARGE) % TWO_PI
    if dynamics_id == "d4":
        return (theta - STEP_LARGE) % TWO_PI
    raise UnknownDynamicsError(f"circle has no dynamics {dynamics_id!r}")


def circle_new_dynamics_update(
    dynamics_id: str,
    theta: float,
    exp: Experience,
    rng: np.random.Generator | None = None,
    prev_final_distance: float | None = None,
) -> float:
    """Crowd-sourced evasion rules n1..n4.

    ``n1`` compares the pursuer's final distance against the previous
    interaction's final distance (``prev_final_distance``); with no previous
    interaction the pursuer counts as not closer. ``n2`` draws uniformly from
    the quadrant opposite the pursuer's final angle and consumes ``rng``.
    """
    pos = final_position(exp)
    if dynamics_id == "n1":
        current = float(np.linalg.norm(pos - evader_position(theta)))
        closer = prev_final_distance is not None and current < prev_final_distance
        return (theta + STEP_CROWD) % TWO_PI if closer else theta % TWO_PI
    if dynamics_id == "n2":
        if rng is None:
            raise ValueError("n2 needs an rng to pick a point on the far quadrant")
        alpha = float(np.arctan2(pos[1], pos[0]))
        return (alpha + np.pi + rng.uniform(-np.pi / 4.0, np.pi / 4.0)) % TWO_PI
    if dynamics_id == "n3":
        alpha = float(np.arctan2(pos[1], pos[0]))
        return (alpha + np.pi) % TWO_PI
    if dynamics_id == "n4":
        return np.pi if pos[0] > 0.0 else 0.0
    raise UnknownDynamicsError(f"circle has no crowd-sourced dynamics {dynamics_id!r}")


def sample_step_size(rng: np.random.Generator) -> float:
    """One continuous-family opponent: a fixed per-interaction angular step."""
    return float(rng.uniform(-np.pi, np.pi))


PAPER_SET = DynamicsDistribution(env_name="circle", kind="discrete", ids=("d1", "d2", "d3", "d4"))
CROWD_SET = DynamicsDistribution(env_name="circle", kind="discrete", ids=("n1", "n2", "n3", "n4"))
CONTINUOUS_SET = DynamicsDistribution(
    env_name="circle", kind="continuous", param_name="step_size", low=-np.pi, high=np.pi
)


class CircleEnv(Environment):
    name = "circle"
    horizon = 10
    state_dim = 2
    action_dim = 2
    oracle_dim = 2
    action_scale = 0.3
    # worst case: H steps at the arena diameter from the evader
    reward_bounds = (-20.0, 0.0)

    def __init__(
        self,
        distribution: DynamicsDistribution = PAPER_SET,
        switch_probability: float = 0.01,
        name: str = "circle",
    ):
        super().__init__(distribution, switch_probability)
        self.name = name
        self._prev_final_distance: float | None = None

    def _start_position(self) -> np.ndarray:
        return START.copy()

    def _initial_strategy(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(0.0, TWO_PI))

    def _transition(self, position, action, timestep):
        new_position = position + action
        reward = -float(np.linalg.norm(new_position - evader_position(self.opponent.strategy)))
        return new_position, reward

    def _apply_dynamics(self, opponent: OpponentState, exp, rng):
        theta = float(opponent.strategy)
        current_distance = float(
            np.linalg.norm(final_position(exp) - evader_position(theta))
        )
        if opponent.dynamics_id.startswith("d"):
            new_theta = circle_dynamics_update(opponent.dynamics_id, theta, exp)
        elif opponent.dynamics_id.startswith("n"):
            new_theta = circle_new_dynamics_update(
                opponent.dynamics_id, theta, exp, rng, self._prev_final_distance
            )
        elif opponent.dynamics_id == "step":
            new_theta = (theta + opponent.dynamics_params["step_size"]) % TWO_PI
        else:
            raise UnknownDynamicsError(
                f"circle has no dynamics {opponent.dynamics_id!r}"
            )
        # rolling comparison point for n1; kept across rule switches
        self._prev_final_distance = current_distance
        return new_theta

    def oracle_encoding(self) -> np.ndarray:
        return evader_position(float(self.opponent.strategy))
