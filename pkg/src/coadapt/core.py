"""Shared data model: interactions, replay storage, config, cost scaling, run logs.

Everything downstream (environments, agents, bound evaluation, the tag
service) speaks in terms of the types defined here.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from typing import IO, Any, Iterator, Sequence

import numpy as np
import tomli


class CoadaptError(Exception):
    """Base class for errors raised by this package."""


class NonConsecutiveIndexError(CoadaptError):
    """An experience arrived with an index that does not extend the buffer."""


class InsufficientDataError(CoadaptError):
    """The buffer does not yet hold enough experiences for the request."""


class InvalidBoundsError(CoadaptError):
    """Reward bounds for cost normalization are degenerate or inverted."""


class IntegrityError(CoadaptError):
    """Stored records that must line up (experiences vs. latents) do not."""


ENV_NAMES = ("circle", "circle_n", "driving", "robot", "robot_subtask")
AGENT_NAMES = ("rili", "oracle", "sac", "lili", "sili")
DYNAMICS_SETS = ("paper", "table3", "continuous")


@dataclass
class Experience:
    """One interaction's record: per-timestep states, actions, and rewards.

    ``states[t]`` is the state in which ``actions[t]`` was taken and
    ``rewards[t]`` is the reward observed after that step. Actions are the
    executed (bound-clamped) ones, so deterministic environments can
    recompute any intermediate or final position from this record alone.
    """

    states: np.ndarray  # (H, state_dim)
    actions: np.ndarray  # (H, action_dim)
    rewards: np.ndarray  # (H,)
    interaction_index: int

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if self.states.ndim != 2 or self.actions.ndim != 2 or self.rewards.ndim != 1:
            raise ValueError("states/actions must be 2-D and rewards 1-D")
        if not (len(self.states) == len(self.actions) == len(self.rewards)):
            raise ValueError(
                f"timestep counts disagree: states={len(self.states)} "
                f"actions={len(self.actions)} rewards={len(self.rewards)}"
            )

    @property
    def horizon(self) -> int:
        return len(self.rewards)

    @property
    def reward_sum(self) -> float:
        return float(np.sum(self.rewards))

    def to_dict(self) -> dict[str, Any]:
        return {
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "rewards": self.rewards.tolist(),
            "interaction_index": self.interaction_index,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Experience":
        return cls(
            states=np.asarray(data["states"], dtype=np.float64),
            actions=np.asarray(data["actions"], dtype=np.float64),
            rewards=np.asarray(data["rewards"], dtype=np.float64),
            interaction_index=int(data["interaction_index"]),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Experience):
            return NotImplemented
        return (
            self.interaction_index == other.interaction_index
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
        )


@dataclass
class InteractionSequence:
    """A run of consecutive experiences; training windows are m+1 long."""

    experiences: list[Experience]

    def __post_init__(self) -> None:
        if not self.experiences:
            raise ValueError("sequence must hold at least one experience")
        indices = [e.interaction_index for e in self.experiences]
        for prev, nxt in zip(indices, indices[1:]):
            if nxt != prev + 1:
                raise NonConsecutiveIndexError(
                    f"sequence indices are not consecutive: {indices}"
                )

    def __len__(self) -> int:
        return len(self.experiences)

    def __iter__(self) -> Iterator[Experience]:
        return iter(self.experiences)

    @property
    def start_index(self) -> int:
        return self.experiences[0].interaction_index


class ReplayBuffer:
    """Ordered store of experiences with consecutive indices.

    Capacity is enforced by dropping the oldest experience; published runs
    default to a capacity equal to the full run length so nothing is evicted.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._experiences: list[Experience] = []

    def __len__(self) -> int:
        return len(self._experiences)

    def __iter__(self) -> Iterator[Experience]:
        return iter(self._experiences)

    def __getitem__(self, i: int) -> Experience:
        return self._experiences[i]

    @property
    def experiences(self) -> list[Experience]:
        return list(self._experiences)

    @property
    def last_index(self) -> int | None:
        return self._experiences[-1].interaction_index if self._experiences else None

    def append(self, exp: Experience) -> None:
        """Add the next experience; indices must be gap-free."""
        last = self.last_index
        if last is not None and exp.interaction_index != last + 1:
            raise NonConsecutiveIndexError(
                f"expected interaction_index {last + 1}, got {exp.interaction_index}"
            )
        self._experiences.append(exp)
        if len(self._experiences) > self.capacity:
            self._experiences.pop(0)

    def recent(self, count: int) -> list[Experience]:
        if len(self._experiences) < count:
            raise InsufficientDataError(
                f"buffer holds {len(self._experiences)} experiences, need {count}"
            )
        return self._experiences[-count:]

    def sample_consecutive(
        self, window: int, rng: np.random.Generator
    ) -> InteractionSequence:
        """Uniformly sample a window of `window` consecutive experiences.

        Windows may span opponent dynamics switches; the agent never
        observes switch times, so no boundary is respected here.
        """
        n = len(self._experiences)
        if n < window:
            raise InsufficientDataError(
                f"buffer holds {n} experiences, need at least {window}"
            )
        start = int(rng.integers(0, n - window + 1))
        return InteractionSequence(self._experiences[start : start + window])

    def to_dict(self) -> dict[str, Any]:
        return {
            "capacity": self.capacity,
            "experiences": [e.to_dict() for e in self._experiences],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ReplayBuffer":
        buf = cls(capacity=int(data["capacity"]))
        for item in data["experiences"]:
            buf._experiences.append(Experience.from_dict(item))
        return buf


def normalize_cost(reward_sum: float, reward_min: float, reward_max: float) -> float:
    """Map an interaction's summed reward to a cost in [0, 1].

    ``reward_max`` maps to cost 0 and ``reward_min`` to cost 1; anything
    outside the bounds is clamped so the output is always a valid cost.
    """
    if not reward_min < reward_max:
        raise InvalidBoundsError(
            f"reward_min ({reward_min}) must be below reward_max ({reward_max})"
        )
    cost = (reward_max - reward_sum) / (reward_max - reward_min)
    return float(min(1.0, max(0.0, cost)))


@dataclass
class RunConfig:
    """Hyperparameters and run identity for one training/evaluation run."""

    horizon: int = 10
    history_length: int = 4
    latent_dim: int = 10
    gamma: float = 0.99
    switch_probability: float = 0.01
    seed: int = 0
    env_name: str = "circle"
    agent_name: str = "rili"
    total_interactions: int = 15000
    repr_learning_rate: float = 1e-3
    rl_learning_rate: float = 3e-4
    dynamics_set: str = "paper"
    capacity: int | None = None  # None: full run length, no eviction
    sac_batch_size: int = 256
    repr_batch_size: int = 16
    # extra interactions of uniform exploration before the policy acts
    # and trains; the floor is always history_length + 1 so the first
    # update has a full window to sample
    start_interactions: int = 0
    checkpoint_interval: int = 1000

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 <= self.switch_probability <= 1.0:
            raise ValueError(
                f"switch_probability must lie in [0, 1], got {self.switch_probability}"
            )
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.history_length < 1:
            raise ValueError("history_length must be >= 1")
        if self.env_name not in ENV_NAMES:
            raise ValueError(f"unknown env_name {self.env_name!r}")
        if self.agent_name not in AGENT_NAMES:
            raise ValueError(f"unknown agent_name {self.agent_name!r}")
        if self.dynamics_set not in DYNAMICS_SETS:
            raise ValueError(f"unknown dynamics_set {self.dynamics_set!r}")
        if self.start_interactions < 0:
            raise ValueError("start_interactions must be >= 0")

    @property
    def replay_capacity(self) -> int:
        return self.capacity if self.capacity is not None else self.total_interactions

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "RunConfig":
        """Load from a flat TOML file of strings/ints/floats/booleans."""
        with open(path, "rb") as fh:
            data = tomli.load(fh)
        for key, value in data.items():
            if isinstance(value, (dict, list)):
                raise ValueError(f"config key {key!r} must be a flat scalar value")
        return cls.from_dict(data)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Return a copy with the given fields replaced (None values skipped)."""
        updates = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **updates)


@dataclass
class InteractionLogRecord:
    """One JSONL line per interaction in a run's metrics stream."""

    interaction_index: int
    reward_sum: float
    predicted_z: list[float] = field(default_factory=list)
    predicted_p: list[float] = field(default_factory=list)
    sigma: list[float] = field(default_factory=list)
    true_dynamics_id: str | None = None  # debug-only, never visible to agents
    wall_time: float = 0.0

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "InteractionLogRecord":
        return cls(**json.loads(line))


class RunLogger:
    """Append-only JSONL writer; every record is flushed before returning."""

    def __init__(self, path: str | os.PathLike, durable: bool = False):
        self.path = str(path)
        self.durable = durable
        parent = os.path.dirname(self.path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        self._fh: IO[str] = open(self.path, "a", encoding="utf-8")

    def append(self, record: InteractionLogRecord) -> None:
        self._fh.write(record.to_json() + "\n")
        self._fh.flush()
        if self.durable:
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "RunLogger":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def read_log(path: str | os.PathLike) -> list[InteractionLogRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(InteractionLogRecord.from_json(line))
    return records


def make_log_record(
    exp: Experience,
    predicted_z: Sequence[float] | np.ndarray = (),
    predicted_p: Sequence[float] | np.ndarray = (),
    sigma: Sequence[float] | np.ndarray = (),
    true_dynamics_id: str | None = None,
) -> InteractionLogRecord:
    return InteractionLogRecord(
        interaction_index=exp.interaction_index,
        reward_sum=exp.reward_sum,
        predicted_z=[float(v) for v in predicted_z],
        predicted_p=[float(v) for v in predicted_p],
        sigma=[float(v) for v in sigma],
        true_dynamics_id=true_dynamics_id,
        wall_time=time.time(),
    )
