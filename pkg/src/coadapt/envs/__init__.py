"""Environment suite and the config-driven factory."""

from __future__ import annotations

from coadapt.core import RunConfig
from coadapt.envs import circle, driving, robot, subtask
from coadapt.envs.base import (
    DynamicsDistribution,
    Environment,
    EnvState,
    EpisodeFinishedError,
    InvalidStrategyError,
    OpponentState,
    UnknownDynamicsError,
)
from coadapt.envs.circle import CircleEnv
from coadapt.envs.driving import DrivingEnv
from coadapt.envs.robot import RobotEnv
from coadapt.envs.subtask import SubtaskEnv

__all__ = [
    "CircleEnv",
    "DrivingEnv",
    "DynamicsDistribution",
    "Environment",
    "EnvState",
    "EpisodeFinishedError",
    "InvalidStrategyError",
    "OpponentState",
    "RobotEnv",
    "SubtaskEnv",
    "UnknownDynamicsError",
    "distribution_for",
    "make_env",
]


def distribution_for(env_name: str, dynamics_set: str) -> DynamicsDistribution:
    """Resolve a config (env_name, dynamics_set) pair to a distribution.

    ``dynamics_set = "paper"`` means each environment's published opponent
    family; for ``circle_n`` that family is the continuous step distribution.
    The ``table3`` crowd-sourced rules and the continuous family only exist
    in the circle arena.
    """
    if env_name in ("circle", "circle_n"):
        if dynamics_set == "table3":
            return circle.CROWD_SET
        if dynamics_set == "continuous":
            return circle.CONTINUOUS_SET
        if dynamics_set == "paper":
            return circle.CONTINUOUS_SET if env_name == "circle_n" else circle.PAPER_SET
    elif dynamics_set == "paper":
        table = {
            "driving": driving.PAPER_SET,
            "robot": robot.PAPER_SET,
            "robot_subtask": subtask.PAPER_SET,
        }
        if env_name in table:
            return table[env_name]
    raise ValueError(f"no dynamics set {dynamics_set!r} for environment {env_name!r}")


def make_env(config: RunConfig) -> Environment:
    """Build the environment named by the config, with its switch schedule."""
    distribution = distribution_for(config.env_name, config.dynamics_set)
    if config.env_name in ("circle", "circle_n"):
        return CircleEnv(
            distribution=distribution,
            switch_probability=config.switch_probability,
            name=config.env_name,
        )
    if config.env_name == "driving":
        return DrivingEnv(distribution, config.switch_probability)
    if config.env_name == "robot":
        return RobotEnv(distribution, config.switch_probability)
    if config.env_name == "robot_subtask":
        return SubtaskEnv(distribution, config.switch_probability)
    raise ValueError(f"unknown environment {config.env_name!r}")
