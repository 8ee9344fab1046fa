"""Latent models of the other agent and their training loss.

Four small fully-connected networks cooperate here:

- strategy encoder: one interaction's flattened (state, action, reward)
  record -> latent strategy z
- strategy decoder: (flattened state-action trajectory, z) -> reconstructed
  per-step rewards
- dynamics encoder: the last m strategies -> Gaussian over the latent
  dynamics p
- predictor: (interaction record, p sample, z) -> Gaussian over the next
  interaction's strategy

Hyperbolic tangents run throughout: hidden layers everywhere, and also the
latent-valued output heads (strategy codes and posterior means), so every
latent lives in the unit cube and the predictor's reachable set matches the
encoder's code manifold by construction. Standard-deviation heads instead
use a softplus with a small floor, and reward reconstructions are unbounded.
Rewards enter this module scaled by a fixed gain (see REWARD_GAIN).

The composite training loss sums, per sampled window of m+1 consecutive
interactions: a squared reconstruction residual norm for every interaction
in the window, a squared one-step prediction residual norm through the
dynamics/predictor path, and a KL regularizer pulling both posteriors
toward the standard normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from coadapt.core import Experience, InteractionSequence

STD_FLOOR = 1e-4

# Fixed feature scaling for the reward channel inside the latent models.
# Rewards here are a fraction of a unit per step, so raw reconstruction
# residuals are small next to the unit-weight KL regularizer and the
# predictor's posterior collapses to the prior. Scaling the channel puts
# residuals at the magnitude the composite loss expects; everything
# outside this module (policy, environments, bounds) sees raw rewards.
REWARD_GAIN = 5.0


@dataclass(frozen=True)
class ReprConfig:
    """Shapes and input conventions for the representation networks."""

    state_dim: int
    action_dim: int
    horizon: int = 10
    latent_dim: int = 10
    history_length: int = 4
    hidden_size: int = 64
    # False drops the dynamics encoder and the predictor's p input
    # (the single-dynamics baseline family)
    use_dynamics_encoder: bool = True
    reward_gain: float = REWARD_GAIN

    @property
    def tau_dim(self) -> int:
        return self.horizon * (self.state_dim + self.action_dim + 1)

    @property
    def xi_dim(self) -> int:
        return self.horizon * (self.state_dim + self.action_dim)


def _mlp(in_dim: int, hidden: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, hidden),
        nn.Tanh(),
        nn.Linear(hidden, hidden),
        nn.Tanh(),
        nn.Linear(hidden, out_dim),
    )


def reinitialize_linear_layers(module: nn.Module, generator: torch.Generator) -> None:
    """Standard uniform fan-in init, drawn from a private generator.

    Keeps network construction independent of torch's global rng so models
    are reproducible per seed no matter what else has run.
    """
    for layer in module.modules():
        if isinstance(layer, nn.Linear):
            bound = 1.0 / math.sqrt(layer.in_features)
            with torch.no_grad():
                layer.weight.uniform_(-bound, bound, generator=generator)
                layer.bias.uniform_(-bound, bound, generator=generator)


def positive_std(raw: torch.Tensor) -> torch.Tensor:
    return nn.functional.softplus(raw) + STD_FLOOR


def flatten_tau(exp: Experience, reward_gain: float = REWARD_GAIN) -> np.ndarray:
    """Row-major [s_t, a_t, g·r_t] per timestep."""
    return np.concatenate(
        [exp.states, exp.actions, reward_gain * exp.rewards[:, None]], axis=1
    ).reshape(-1)


def flatten_xi(exp: Experience) -> np.ndarray:
    return np.concatenate([exp.states, exp.actions], axis=1).reshape(-1)


class RepresentationModel(nn.Module):
    """Container for the four networks, with single-input helpers.

    Batched tensor methods are the training path; the Experience-typed
    helpers serve rollouts and tests.
    """

    def __init__(self, config: ReprConfig, seed: int = 0):
        super().__init__()
        self.config = config
        d = config.latent_dim
        hidden = config.hidden_size
        self.strategy_encoder = _mlp(config.tau_dim, hidden, d)
        self.strategy_decoder = _mlp(config.xi_dim + d, hidden, config.horizon)
        if config.use_dynamics_encoder:
            self.dynamics_encoder = _mlp(config.history_length * d, hidden, 2 * d)
            predictor_in = config.tau_dim + 2 * d
        else:
            self.dynamics_encoder = None
            predictor_in = config.tau_dim + d
        self.predictor = _mlp(predictor_in, hidden, 2 * d)
        generator = torch.Generator()
        generator.manual_seed(seed)
        reinitialize_linear_layers(self, generator)

    # ------------------------------------------------------------------
    # batched tensor API

    def encode_strategy_batch(self, tau: torch.Tensor) -> torch.Tensor:
        if tau.shape[-1] != self.config.tau_dim:
            raise ValueError(
                f"expected flattened interactions of length {self.config.tau_dim}, "
                f"got {tau.shape[-1]}"
            )
        return torch.tanh(self.strategy_encoder(tau))

    def decode_rewards_batch(self, xi: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        if xi.shape[-1] != self.config.xi_dim:
            raise ValueError(
                f"expected flattened trajectories of length {self.config.xi_dim}, "
                f"got {xi.shape[-1]}"
            )
        return self.strategy_decoder(torch.cat([xi, z], dim=-1))

    def encode_dynamics_batch(
        self, history: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if self.dynamics_encoder is None:
            raise RuntimeError("this model was built without a dynamics encoder")
        expected = self.config.history_length * self.config.latent_dim
        if history.shape[-1] != expected:
            raise ValueError(
                f"expected a history of {self.config.history_length} strategies "
                f"({expected} values), got {history.shape[-1]}"
            )
        out = self.dynamics_encoder(history)
        mean, raw_std = torch.chunk(out, 2, dim=-1)
        return torch.tanh(mean), positive_std(raw_std)

    def predict_next_batch(
        self, tau: torch.Tensor, p: torch.Tensor | None, z: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if self.dynamics_encoder is None:
            inputs = torch.cat([tau, z], dim=-1)
        else:
            if p is None:
                raise ValueError("this model's predictor needs a dynamics sample")
            inputs = torch.cat([tau, p, z], dim=-1)
        out = self.predictor(inputs)
        mean, raw_std = torch.chunk(out, 2, dim=-1)
        return torch.tanh(mean), positive_std(raw_std)

    # ------------------------------------------------------------------
    # single-Experience helpers

    def _tensor(self, array: np.ndarray) -> torch.Tensor:
        param = next(self.parameters())
        return torch.as_tensor(array, dtype=param.dtype, device=param.device)

    def encode_strategy(self, exp: Experience) -> torch.Tensor:
        if exp.horizon != self.config.horizon:
            raise ValueError(
                f"expected {self.config.horizon}-step interactions, got {exp.horizon}"
            )
        with torch.no_grad():
            return self.encode_strategy_batch(
                self._tensor(flatten_tau(exp, self.config.reward_gain))
            )

    def decode_rewards(self, exp: Experience, z: torch.Tensor) -> torch.Tensor:
        """Reward estimates in raw units (the decoder itself works in gain units)."""
        if exp.horizon != self.config.horizon:
            raise ValueError(
                f"expected {self.config.horizon}-step interactions, got {exp.horizon}"
            )
        with torch.no_grad():
            scaled = self.decode_rewards_batch(self._tensor(flatten_xi(exp)), z)
        return scaled / self.config.reward_gain

    def encode_dynamics(self, history: list[torch.Tensor]):
        if len(history) != self.config.history_length:
            raise ValueError(
                f"need exactly {self.config.history_length} strategies, "
                f"got {len(history)}"
            )
        with torch.no_grad():
            return self.encode_dynamics_batch(torch.cat(list(history), dim=-1))

    def predict_next_strategy(
        self, exp: Experience, p: torch.Tensor | None, z: torch.Tensor
    ):
        with torch.no_grad():
            return self.predict_next_batch(
                self._tensor(flatten_tau(exp, self.config.reward_gain)), p, z
            )

    def named_networks(self) -> dict[str, nn.Module]:
        networks = {
            "strategy_encoder": self.strategy_encoder,
            "strategy_decoder": self.strategy_decoder,
            "predictor": self.predictor,
        }
        if self.dynamics_encoder is not None:
            networks["dynamics_encoder"] = self.dynamics_encoder
        return networks


def reparameterize(
    mean: torch.Tensor, std: torch.Tensor, noise: torch.Tensor
) -> torch.Tensor:
    if torch.any(std <= 0):
        raise ValueError("standard deviations must be strictly positive")
    return mean + std * noise


def kl_to_standard_normal(mean: torch.Tensor, std: torch.Tensor) -> torch.Tensor:
    """KL(N(mean, std^2) || N(0, I)), summed over the last axis."""
    if torch.any(std <= 0):
        raise ValueError("standard deviations must be strictly positive")
    return 0.5 * torch.sum(std**2 + mean**2 - 1.0 - 2.0 * torch.log(std), dim=-1)


@dataclass
class SequenceBatch:
    """Flattened tensors for a batch of (m+1)-interaction windows.

    Rewards (both inside tau and as reconstruction targets) carry the
    configured reward gain.
    """

    tau: torch.Tensor  # (B, m+1, tau_dim)
    xi: torch.Tensor  # (B, m+1, xi_dim)
    rewards: torch.Tensor  # (B, m+1, H)

    @classmethod
    def from_sequences(
        cls,
        sequences: list[InteractionSequence],
        config: ReprConfig,
        dtype: torch.dtype = torch.float32,
    ) -> "SequenceBatch":
        if not sequences:
            raise ValueError("batch must hold at least one sequence")
        window = config.history_length + 1
        for seq in sequences:
            if len(seq) != window:
                raise ValueError(f"sequences must have {window} interactions, got {len(seq)}")
        gain = config.reward_gain
        tau = torch.tensor(
            np.stack([[flatten_tau(e, gain) for e in seq] for seq in sequences]),
            dtype=dtype,
        )
        xi = torch.tensor(
            np.stack([[flatten_xi(e) for e in seq] for seq in sequences]), dtype=dtype
        )
        rewards = torch.tensor(
            np.stack([[gain * e.rewards for e in seq] for seq in sequences]), dtype=dtype
        )
        return cls(tau=tau, xi=xi, rewards=rewards)

    def __len__(self) -> int:
        return self.tau.shape[0]


@dataclass
class LossParts:
    total: torch.Tensor
    strategy: torch.Tensor
    prediction: torch.Tensor
    kl: torch.Tensor

    def detached(self) -> dict[str, float]:
        return {
            "loss_total": float(self.total.detach()),
            "loss_strategy": float(self.strategy.detach()),
            "loss_prediction": float(self.prediction.detach()),
            "loss_kl": float(self.kl.detach()),
        }


def total_loss(
    model: RepresentationModel,
    batch: SequenceBatch,
    noise_p: torch.Tensor | None = None,
    noise_z: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> LossParts:
    """Composite loss over a batch of windows, summed (not averaged).

    Per window: squared reconstruction residual norms for all m+1
    interactions, the squared one-step prediction residual norm, and the KL
    of the concatenated posterior to the standard normal. Squaring matters:
    it weights windows by how wrong they are, which is what teaches the
    predictor to separate strategies (plain norms give every window a
    unit-magnitude gradient and the predictor never escapes the marginal).
    Noise tensors may be passed explicitly for deterministic evaluation;
    otherwise fresh standard-normal draws are used for both reparameterized
    samples.
    """
    m = model.config.history_length
    d = model.config.latent_dim
    batch_size = len(batch)

    z_all = model.encode_strategy_batch(batch.tau)  # (B, m+1, d)
    reconstructed = model.decode_rewards_batch(batch.xi, z_all)  # (B, m+1, H)
    residuals = torch.linalg.vector_norm(batch.rewards - reconstructed, dim=-1)
    strategy_term = residuals.square().sum()

    history = z_all[:, :m, :].reshape(batch_size, m * d)
    if model.dynamics_encoder is not None:
        p_mean, p_std = model.encode_dynamics_batch(history)
        if noise_p is None:
            noise_p = _draw_noise(p_mean, generator)
        p_sample = reparameterize(p_mean, p_std, noise_p)
    else:
        p_mean = p_std = p_sample = None

    z_current = z_all[:, m - 1, :]
    z_mean, z_std = model.predict_next_batch(batch.tau[:, m - 1, :], p_sample, z_current)
    if noise_z is None:
        noise_z = _draw_noise(z_mean, generator)
    z_next = reparameterize(z_mean, z_std, noise_z)

    predicted_rewards = model.decode_rewards_batch(batch.xi[:, m, :], z_next)
    prediction_term = torch.linalg.vector_norm(
        batch.rewards[:, m, :] - predicted_rewards, dim=-1
    ).square().sum()

    if p_mean is not None:
        posterior_mean = torch.cat([p_mean, z_mean], dim=-1)
        posterior_std = torch.cat([p_std, z_std], dim=-1)
    else:
        posterior_mean, posterior_std = z_mean, z_std
    kl_term = kl_to_standard_normal(posterior_mean, posterior_std).sum()

    return LossParts(
        total=strategy_term + prediction_term + kl_term,
        strategy=strategy_term,
        prediction=prediction_term,
        kl=kl_term,
    )


def _draw_noise(
    like: torch.Tensor, generator: torch.Generator | None
) -> torch.Tensor:
    return torch.randn(
        like.shape, dtype=like.dtype, device=like.device, generator=generator
    )


def strategy_loss(model: RepresentationModel, exp: Experience) -> torch.Tensor:
    """Squared reconstruction residual norm for one interaction."""
    gain = model.config.reward_gain
    tau = model._tensor(flatten_tau(exp, gain))
    xi = model._tensor(flatten_xi(exp))
    rewards = model._tensor(exp.rewards) * gain
    z = model.encode_strategy_batch(tau)
    reconstructed = model.decode_rewards_batch(xi, z)
    return torch.linalg.vector_norm(rewards - reconstructed).square()


def prediction_loss(
    model: RepresentationModel,
    sequence: InteractionSequence,
    noise_p: torch.Tensor | None = None,
    noise_z: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Squared one-step prediction residual norm for a single (m+1)-window."""
    dtype = next(model.parameters()).dtype
    batch = SequenceBatch.from_sequences([sequence], model.config, dtype=dtype)
    m = model.config.history_length
    d = model.config.latent_dim

    z_all = model.encode_strategy_batch(batch.tau)
    history = z_all[:, :m, :].reshape(1, m * d)
    if model.dynamics_encoder is not None:
        p_mean, p_std = model.encode_dynamics_batch(history)
        if noise_p is None:
            noise_p = _draw_noise(p_mean, generator)
        p_sample = reparameterize(p_mean, p_std, noise_p)
    else:
        p_sample = None
    z_mean, z_std = model.predict_next_batch(
        batch.tau[:, m - 1, :], p_sample, z_all[:, m - 1, :]
    )
    if noise_z is None:
        noise_z = _draw_noise(z_mean, generator)
    z_next = reparameterize(z_mean, z_std, noise_z)
    predicted = model.decode_rewards_batch(batch.xi[:, m, :], z_next)
    residual = torch.linalg.vector_norm(batch.rewards[:, m, :] - predicted, dim=-1)
    return residual.square().squeeze(0)


class RepresentationTrainer:
    """One Adam step per call over a batch of sampled windows."""

    def __init__(
        self,
        model: RepresentationModel,
        learning_rate: float = 1e-3,
        seed: int = 0,
    ):
        self.model = model
        self.optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
        self.generator = torch.Generator()
        self.generator.manual_seed(seed)

    def train_step(self, batch: SequenceBatch) -> dict[str, float]:
        parts = total_loss(self.model, batch, generator=self.generator)
        self.optimizer.zero_grad()
        parts.total.backward()
        self.optimizer.step()
        return parts.detached()
