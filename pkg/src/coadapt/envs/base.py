"""Environment scaffolding shared by the interaction suites.

Each environment is a repeated game: the ego agent rolls out a fixed-horizon
episode ("interaction") against an opponent whose hidden strategy is constant
within the interaction. Between interactions the opponent updates its strategy
with its current dynamics rule, and with some probability switches to a fresh
dynamics rule drawn from the environment's distribution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from coadapt.core import CoadaptError

logger = logging.getLogger(__name__)


class EpisodeFinishedError(CoadaptError):
    """step() was called without an active interaction or past the horizon."""


class UnknownDynamicsError(CoadaptError):
    """A dynamics id that the environment does not define."""


class InvalidStrategyError(CoadaptError):
    """An opponent strategy outside the environment's strategy domain."""


@dataclass
class EnvState:
    ego_position: np.ndarray
    timestep: int


@dataclass
class OpponentState:
    """Hidden opponent: strategy, its update rule, and rule parameters."""

    strategy: Any
    dynamics_id: str
    dynamics_params: dict[str, float] = field(default_factory=dict)

    def describe(self) -> str:
        if self.dynamics_params:
            inner = ",".join(
                f"{k}={v:.4f}" for k, v in sorted(self.dynamics_params.items())
            )
            return f"{self.dynamics_id}({inner})"
        return self.dynamics_id


@dataclass(frozen=True)
class DynamicsDistribution:
    """Distribution over opponent dynamics: a discrete table or a scalar range."""

    env_name: str
    kind: str  # "discrete" or "continuous"
    ids: tuple[str, ...] = ()
    param_name: str = ""
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "discrete" and not self.ids:
            raise ValueError("discrete distribution needs a non-empty id table")
        if self.kind == "continuous" and not self.low < self.high:
            raise ValueError("continuous distribution needs low < high")
        if self.kind not in ("discrete", "continuous"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    def sample(self, rng: np.random.Generator) -> tuple[str, dict[str, float]]:
        if self.kind == "discrete":
            return self.ids[int(rng.integers(len(self.ids)))], {}
        value = float(rng.uniform(self.low, self.high))
        return "step", {self.param_name: value}


class Environment:
    """Base class: owns the opponent state and the interaction lifecycle.

    Subclasses set the class attributes below and implement the hooks
    ``_start_position``, ``_initial_strategy``, ``_transition``, and
    ``_apply_dynamics``. An instance is single-owner mutable; run parallel
    seeds with separate instances and rng streams.
    """

    name: str = ""
    horizon: int = 10
    state_dim: int = 2
    action_dim: int = 2
    oracle_dim: int = 2
    # per-component box bound the policy squashes into
    action_scale: float = 0.3
    # (min, max) achievable per-interaction reward sums, for cost scaling
    reward_bounds: tuple[float, float] = (-20.0, 0.0)

    def __init__(self, distribution: DynamicsDistribution, switch_probability: float):
        if not 0.0 <= switch_probability <= 1.0:
            raise ValueError("switch_probability must lie in [0, 1]")
        self.distribution = distribution
        self.switch_probability = switch_probability
        self.opponent: OpponentState | None = None
        self.switch_count = 0
        self.clamp_count = 0
        self.dynamics_history: list[tuple[str, dict[str, float]]] = []
        self._state: EnvState | None = None

    # ------------------------------------------------------------------
    # opponent lifecycle

    def reset_opponent(self, rng: np.random.Generator) -> OpponentState:
        dynamics_id, params = self.distribution.sample(rng)
        self.opponent = OpponentState(
            strategy=self._initial_strategy(rng),
            dynamics_id=dynamics_id,
            dynamics_params=params,
        )
        self.dynamics_history.append((dynamics_id, dict(params)))
        return self.opponent

    def set_dynamics(self, dynamics_id: str, params: dict[str, float] | None = None) -> None:
        """Force a specific dynamics rule (evaluation / replay of past opponents)."""
        if self.opponent is None:
            raise CoadaptError("no opponent yet; call reset_opponent first")
        self.opponent.dynamics_id = dynamics_id
        self.opponent.dynamics_params = dict(params or {})

    def end_interaction(self, exp, rng: np.random.Generator) -> OpponentState:
        """Advance the opponent after a finished interaction.

        With probability ``switch_probability`` the dynamics rule is resampled
        first; the strategy update then uses whichever rule is current. Pure
        given the rng stream.
        """
        if self.opponent is None:
            raise CoadaptError("no opponent yet; call reset_opponent first")
        if self._state is None or self._state.timestep != self.horizon:
            raise CoadaptError("end_interaction requires a completed interaction")
        if rng.random() < self.switch_probability:
            dynamics_id, params = self.distribution.sample(rng)
            self.opponent.dynamics_id = dynamics_id
            self.opponent.dynamics_params = params
            self.switch_count += 1
            self.dynamics_history.append((dynamics_id, dict(params)))
        self.opponent.strategy = self._apply_dynamics(self.opponent, exp, rng)
        self._state = None
        return self.opponent

    # ------------------------------------------------------------------
    # ego lifecycle

    def reset_interaction(self) -> EnvState:
        if self.opponent is None:
            raise CoadaptError("no opponent yet; call reset_opponent first")
        self._state = EnvState(ego_position=self._start_position(), timestep=0)
        return self._state

    def clamp_action(self, action: np.ndarray) -> np.ndarray:
        """Project an action into the environment's bound (norm ball by default)."""
        action = np.asarray(action, dtype=np.float64)
        norm = float(np.linalg.norm(action))
        if norm > self.action_scale:
            return action * (self.action_scale / norm)
        return action

    def step(self, action: np.ndarray) -> tuple[EnvState, float]:
        if self._state is None:
            raise EpisodeFinishedError("no active interaction; call reset_interaction")
        if self._state.timestep >= self.horizon:
            raise EpisodeFinishedError(
                f"interaction already ran its {self.horizon} timesteps"
            )
        raw = np.asarray(action, dtype=np.float64)
        executed = self.clamp_action(raw)
        if not np.array_equal(raw, executed):
            self.clamp_count += 1
            logger.debug("%s: clamped out-of-bounds action %s", self.name, raw)
        position, reward = self._transition(
            self._state.ego_position, executed, self._state.timestep
        )
        self._state = EnvState(ego_position=position, timestep=self._state.timestep + 1)
        return self._state, float(reward)

    def observation(self) -> np.ndarray:
        """The ego-visible state vector fed to policies."""
        if self._state is None:
            raise EpisodeFinishedError("no active interaction; call reset_interaction")
        return np.array(self._state.ego_position, dtype=np.float64)

    # ------------------------------------------------------------------
    # subclass hooks

    def _start_position(self) -> np.ndarray:
        raise NotImplementedError

    def _initial_strategy(self, rng: np.random.Generator):
        raise NotImplementedError

    def _transition(
        self, position: np.ndarray, action: np.ndarray, timestep: int
    ) -> tuple[np.ndarray, float]:
        raise NotImplementedError

    def _apply_dynamics(self, opponent: OpponentState, exp, rng: np.random.Generator):
        raise NotImplementedError

    def oracle_encoding(self) -> np.ndarray:
        """Numeric encoding of the true strategy (oracle agents only)."""
        raise NotImplementedError
