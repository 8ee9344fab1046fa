"""Soft actor-critic over latent-augmented observations.

The policy and critics never see the other agent directly. Whatever context
an agent variant wants the policy to condition on (latent strategy, latent
dynamics, posterior scales, a privileged encoding, or nothing) is appended
to the environment state before it reaches these networks, and the same
augmentation is used for every timestep of one interaction.

Episodes have a fixed horizon. The final transition of an interaction is
terminal and its target is the raw reward with no bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import torch
from torch import nn

from coadapt.core import IntegrityError, ReplayBuffer
from coadapt.representation import reinitialize_linear_layers

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


@dataclass(frozen=True)
class SacConfig:
    """Shapes and optimization constants for one soft actor-critic."""

    observation_dim: int
    action_dim: int
    action_scale: float = 1.0
    hidden_size: int = 256
    gamma: float = 0.99
    soft_update_rate: float = 0.005
    learning_rate: float = 3e-4
    # None auto-tunes the entropy temperature toward -action_dim
    fixed_temperature: float | None = None

    def __post_init__(self):
        if self.observation_dim <= 0 or self.action_dim <= 0:
            raise ValueError("observation and action dimensions must be positive")
        if self.action_scale <= 0:
            raise ValueError("action_scale must be positive")
        if not 0 < self.soft_update_rate <= 1:
            raise ValueError("soft_update_rate must lie in (0, 1]")
        if self.fixed_temperature is not None and self.fixed_temperature < 0:
            raise ValueError("fixed_temperature must be nonnegative")


def _mlp(in_dim: int, hidden: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, hidden),
        nn.Tanh(),
        nn.Linear(hidden, hidden),
        nn.Tanh(),
        nn.Linear(hidden, out_dim),
    )


class Actor(nn.Module):
    """Squashed-Gaussian policy head.

    The network emits a mean and log standard deviation per action
    component; samples are squashed through tanh and scaled to the
    environment's per-component action magnitude.
    """

    def __init__(self, config: SacConfig):
        super().__init__()
        self.net = _mlp(config.observation_dim, config.hidden_size, 2 * config.action_dim)
        self.action_scale = config.action_scale

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mean, log_std = torch.chunk(self.net(obs), 2, dim=-1)
        return mean, torch.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX)

    def sample(
        self, obs: torch.Tensor, noise: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Reparameterized action and its log-probability."""
        mean, log_std = self(obs)
        std = torch.exp(log_std)
        pre_squash = mean + std * noise
        action = self.action_scale * torch.tanh(pre_squash)
        gaussian = -0.5 * (noise**2 + 2.0 * log_std + math.log(2.0 * math.pi))
        # stable log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
        squash = 2.0 * (math.log(2.0) - pre_squash - nn.functional.softplus(-2.0 * pre_squash))
        log_prob = (gaussian - squash - math.log(self.action_scale)).sum(dim=-1)
        return action, log_prob

    def deterministic(self, obs: torch.Tensor) -> torch.Tensor:
        mean, _ = self(obs)
        return self.action_scale * torch.tanh(mean)


class TwinCritic(nn.Module):
    """Two independent Q estimates over (observation, action)."""

    def __init__(self, config: SacConfig):
        super().__init__()
        in_dim = config.observation_dim + config.action_dim
        self.q1 = _mlp(in_dim, config.hidden_size, 1)
        self.q2 = _mlp(in_dim, config.hidden_size, 1)

    def forward(
        self, obs: torch.Tensor, action: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        joined = torch.cat([obs, action], dim=-1)
        return self.q1(joined).squeeze(-1), self.q2(joined).squeeze(-1)


def soft_update(target: nn.Module, online: nn.Module, rate: float) -> None:
    """Polyak blend: target <- rate * online + (1 - rate) * target."""
    with torch.no_grad():
        for t, o in zip(target.parameters(), online.parameters()):
            t.mul_(1.0 - rate).add_(o, alpha=rate)


@dataclass
class TransitionBatch:
    """Fixed-size batch of single-step transitions, as float32 tensors."""

    observations: torch.Tensor
    actions: torch.Tensor
    rewards: torch.Tensor
    next_observations: torch.Tensor
    dones: torch.Tensor

    def __len__(self) -> int:
        return self.observations.shape[0]


def build_transition_batch(
    buffer: ReplayBuffer,
    augmentations: Mapping[int, np.ndarray] | Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
    batch_size: int,
    terminal_bonus: Mapping[int, float] | None = None,
) -> TransitionBatch:
    """Sample (interaction, timestep) pairs uniformly and assemble tensors.

    ``augmentations`` supplies the context vector appended to every state
    of a sampled interaction: either a mapping from interaction index to
    the vector recorded when that interaction ran, or a callable taking
    the sampled buffer positions and returning one row per position
    (re-inferring contexts under the current networks). ``terminal_bonus``
    optionally adds a shaping term to the final reward of selected
    interactions. The terminal next observation re-uses the final state as
    a placeholder; the done flag removes it from the target.
    """
    if len(buffer) == 0:
        raise IntegrityError("cannot sample transitions from an empty buffer")
    picks = rng.integers(0, len(buffer), size=batch_size)
    experiences = [buffer[int(i)] for i in picks]
    horizon = experiences[0].horizon
    timesteps = rng.integers(0, horizon, size=batch_size)
    if callable(augmentations):
        context_rows = np.asarray(augmentations(picks))
        if context_rows.shape[0] != batch_size:
            raise IntegrityError(
                f"context provider returned {context_rows.shape[0]} rows "
                f"for {batch_size} sampled interactions"
            )
    else:
        context_rows = None

    observations, actions, rewards, next_observations, dones = [], [], [], [], []
    for row, (exp, t) in enumerate(zip(experiences, timesteps)):
        index = exp.interaction_index
        if context_rows is not None:
            context = context_rows[row]
        elif index in augmentations:
            context = augmentations[index]
        else:
            raise IntegrityError(f"no augmentation recorded for interaction {index}")
        observations.append(np.concatenate([exp.states[t], context]))
        actions.append(exp.actions[t])
        reward = float(exp.rewards[t])
        if t == horizon - 1:
            if terminal_bonus is not None:
                reward += terminal_bonus.get(index, 0.0)
            next_state = exp.states[t]
            done = 1.0
        else:
            next_state = exp.states[t + 1]
            done = 0.0
        rewards.append(reward)
        next_observations.append(np.concatenate([next_state, context]))
        dones.append(done)

    as_tensor = lambda rows: torch.tensor(np.asarray(rows), dtype=torch.float32)
    return TransitionBatch(
        observations=as_tensor(observations),
        actions=as_tensor(actions),
        rewards=as_tensor(rewards),
        next_observations=as_tensor(next_observations),
        dones=as_tensor(dones),
    )


class SacAgent:
    """Twin-critic soft actor-critic with auto-tuned entropy temperature.

    Three separate Adam optimizers cover the actor, the critics, and the
    log-temperature. Target critics trail the online critics by Polyak
    averaging after every update.
    """

    def __init__(self, config: SacConfig, seed: int = 0):
        self.config = config
        generator = torch.Generator()
        generator.manual_seed(seed)
        self.actor = Actor(config)
        self.critic = TwinCritic(config)
        reinitialize_linear_layers(self.actor, generator)
        reinitialize_linear_layers(self.critic, generator)
        self.target_critic = TwinCritic(config)
        self.target_critic.load_state_dict(self.critic.state_dict())
        for param in self.target_critic.parameters():
            param.requires_grad_(False)

        self.target_entropy = -float(config.action_dim)
        if config.fixed_temperature is None:
            self.log_temperature = torch.zeros(1, requires_grad=True)
            self.temperature_optimizer = torch.optim.Adam(
                [self.log_temperature], lr=config.learning_rate
            )
        else:
            log_value = (
                math.log(config.fixed_temperature)
                if config.fixed_temperature > 0
                else float("-inf")
            )
            self.log_temperature = torch.tensor([log_value])
            self.temperature_optimizer = None
        self.actor_optimizer = torch.optim.Adam(
            self.actor.parameters(), lr=config.learning_rate
        )
        self.critic_optimizer = torch.optim.Adam(
            self.critic.parameters(), lr=config.learning_rate
        )
        # private noise source so behavior is reproducible per seed
        self.noise_generator = torch.Generator()
        self.noise_generator.manual_seed(seed + 1)

    @property
    def temperature(self) -> float:
        return float(self.log_temperature.exp().detach())

    def _noise(self, shape: tuple[int, ...]) -> torch.Tensor:
        return torch.randn(shape, generator=self.noise_generator)

    def act(self, observation: np.ndarray, deterministic: bool = False) -> np.ndarray:
        obs = torch.as_tensor(observation, dtype=torch.float32)
        if obs.shape != (self.config.observation_dim,):
            raise ValueError(
                f"expected observation of shape ({self.config.observation_dim},), "
                f"got {tuple(obs.shape)}"
            )
        with torch.no_grad():
            if deterministic:
                action = self.actor.deterministic(obs)
            else:
                action, _ = self.actor.sample(obs, self._noise((self.config.action_dim,)))
        return action.numpy()

    def update(self, batch: TransitionBatch) -> dict[str, float]:
        """One gradient step on critics, actor, and temperature."""
        config = self.config
        alpha = float(self.log_temperature.exp().detach())

        with torch.no_grad():
            noise = self._noise((len(batch), config.action_dim))
            next_action, next_log_prob = self.actor.sample(batch.next_observations, noise)
            target_q1, target_q2 = self.target_critic(batch.next_observations, next_action)
            next_value = torch.min(target_q1, target_q2) - alpha * next_log_prob
            target = batch.rewards + config.gamma * (1.0 - batch.dones) * next_value

        q1, q2 = self.critic(batch.observations, batch.actions)
        critic_loss = nn.functional.mse_loss(q1, target) + nn.functional.mse_loss(q2, target)
        self.critic_optimizer.zero_grad()
        critic_loss.backward()
        self.critic_optimizer.step()

        noise = self._noise((len(batch), config.action_dim))
        action, log_prob = self.actor.sample(batch.observations, noise)
        q1_pi, q2_pi = self.critic(batch.observations, action)
        actor_loss = (alpha * log_prob - torch.min(q1_pi, q2_pi)).mean()
        self.actor_optimizer.zero_grad()
        actor_loss.backward()
        self.actor_optimizer.step()

        if self.temperature_optimizer is not None:
            temperature_loss = -(
                self.log_temperature * (log_prob.detach() + self.target_entropy)
            ).mean()
            self.temperature_optimizer.zero_grad()
            temperature_loss.backward()
            self.temperature_optimizer.step()

        soft_update(self.target_critic, self.critic, config.soft_update_rate)
        return {
            "critic_loss": float(critic_loss.detach()),
            "actor_loss": float(actor_loss.detach()),
            "temperature": self.temperature,
            "mean_q": float(torch.min(q1, q2).mean().detach()),
        }

    def named_networks(self) -> dict[str, nn.Module]:
        return {
            "actor": self.actor,
            "critic": self.critic,
            "target_critic": self.target_critic,
        }
