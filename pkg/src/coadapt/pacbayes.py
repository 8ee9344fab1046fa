"""Generalization-bound evaluation for the latent-conditioned agent.

Three quantities feed the bound: the empirical cost of acting on latents
sampled from the learned posterior across the partner dynamics seen in
training, the KL divergence of that posterior from the standard-normal
prior, and a confidence term shrinking with the number of training
dynamics. The module also estimates the true expected cost on fresh
partners so reports can show the bound actually holds.

Costs are interaction-level: one rollout's summed reward mapped into
[0, 1] by the environment's nominal reward bounds (0 best, 1 worst).
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
import torch

from coadapt.agents import Agent, LatentContext
from coadapt.core import InteractionSequence, ReplayBuffer, normalize_cost
from coadapt.envs import Environment
from coadapt.representation import RepresentationModel


@dataclass
class CostSequence:
    """A posterior's evidence window plus the partner state it predicts.

    ``window`` holds the last ``m`` experiences against one partner;
    ``opponent_strategy`` is the strategy the partner held for the
    following interaction, so probe rollouts face exactly the situation
    the posterior was asked to predict.
    """

    window: InteractionSequence
    opponent_strategy: Any
    dynamics_id: str
    dynamics_params: dict


def posterior_parameters(
    model: RepresentationModel, window: InteractionSequence
) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean and standard deviation of the latent posterior for one window.

    The window's last ``m`` experiences are encoded; models with a
    dynamics encoder return the concatenated (dynamics, strategy)
    posterior, others just the strategy posterior. The dynamics mean is
    fed to the predictor, matching the rollout-time inference path.
    """
    m = model.config.history_length
    if len(window) < m:
        raise ValueError(f"need at least {m} experiences, got {len(window)}")
    recent = window.experiences[-m:]
    strategies = [model.encode_strategy(e) for e in recent]
    if model.dynamics_encoder is not None:
        p_mean, p_std = model.encode_dynamics(strategies)
        z_mean, z_std = model.predict_next_strategy(recent[-1], p_mean, strategies[-1])
        return torch.cat([p_mean, z_mean]), torch.cat([p_std, z_std])
    z_mean, z_std = model.predict_next_strategy(recent[-1], None, strategies[-1])
    return z_mean, z_std


def sample_posterior_context(
    agent: Agent, window: InteractionSequence, generator: torch.Generator
) -> np.ndarray:
    """Draw one latent sample and package it as the policy's context.

    Fresh noise reparameterizes both the dynamics and strategy posteriors;
    the strategy posterior is conditioned on the sampled dynamics, so the
    draw follows the joint distribution the agent learned.
    """
    model = agent.model
    if model is None:
        raise ValueError(f"agent kind {agent.kind!r} has no latent posterior")
    config = model.config
    m = config.history_length
    d = config.latent_dim
    recent = window.experiences[-m:]
    strategies = [model.encode_strategy(e) for e in recent]
    if model.dynamics_encoder is not None:
        p_mean, p_std = model.encode_dynamics(strategies)
        p_sample = p_mean + p_std * torch.randn(d, generator=generator)
        z_mean, z_std = model.predict_next_strategy(recent[-1], p_sample, strategies[-1])
        z_sample = z_mean + z_std * torch.randn(d, generator=generator)
        context = LatentContext(
            z=z_sample.numpy(),
            p=p_sample.numpy(),
            sigma=np.concatenate([p_std.numpy(), z_std.numpy()]),
        )
        return np.concatenate([context.z, context.p, context.sigma])
    z_mean, z_std = model.predict_next_strategy(recent[-1], None, strategies[-1])
    z_sample = z_mean + z_std * torch.randn(d, generator=generator)
    return np.concatenate([z_sample.numpy(), z_std.numpy()])


def probe_interaction_cost(
    agent: Agent, env: Environment, context: np.ndarray, deterministic: bool = True
) -> float:
    """Roll one interaction under a forced context; the partner is untouched."""
    env.reset_interaction()
    total = 0.0
    for _ in range(env.horizon):
        state = env.observation()
        action = agent.act(state, context, deterministic=deterministic)
        _, reward = env.step(env.clamp_action(action))
        total += reward
    low, high = env.reward_bounds
    return normalize_cost(total, low, high)


def collect_cost_sequences(
    agent: Agent,
    env: Environment,
    dynamics: list[tuple[str, dict]],
    interactions_each: int,
    rng: np.random.Generator,
    deterministic: bool = True,
) -> dict[int, list[CostSequence]]:
    """Run the frozen agent against each training dynamics, keeping windows.

    For every interaction past the first ``m`` the last-``m`` window is
    stored together with the partner strategy that follows it. No
    parameters move; latent inference runs as in deployment. The table is
    keyed by position in ``dynamics``: partners from a continuous family
    all share one rule id, so the id cannot tell them apart.
    """
    m = agent.config.history_length
    sets: dict[int, list[CostSequence]] = {}
    saved_buffer = agent.buffer
    saved_contexts = agent.contexts
    saved_context = agent.current_context
    saved_switch = env.switch_probability
    env.switch_probability = 0.0
    try:
        for position, (dynamics_id, params) in enumerate(dynamics):
            env.reset_opponent(rng)
            env.set_dynamics(dynamics_id, params)
            agent.buffer = ReplayBuffer(capacity=interactions_each + m + 1)
            agent.contexts = {}
            agent.current_context = LatentContext.zeros(agent.config.latent_dim)
            rows: list[CostSequence] = []
            for i in range(interactions_each):
                exp = agent.rollout(env, i, deterministic=deterministic)
                agent.buffer.append(exp)
                agent.infer_next_context()
                env.end_interaction(exp, rng)
                if len(agent.buffer) >= m:
                    rows.append(
                        CostSequence(
                            window=InteractionSequence(agent.buffer.recent(m)),
                            opponent_strategy=copy.deepcopy(env.opponent.strategy),
                            dynamics_id=dynamics_id,
                            dynamics_params=dict(params),
                        )
                    )
            sets[position] = rows
    finally:
        env.switch_probability = saved_switch
        agent.buffer = saved_buffer
        agent.contexts = saved_contexts
        agent.current_context = saved_context
    return sets


def empirical_cost(
    agent: Agent,
    env: Environment,
    sequence_sets: dict[int, list[CostSequence]] | dict[str, list[CostSequence]],
    mc_samples: int = 8,
    generator: torch.Generator | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Average posterior-sampled interaction cost, weighted per dynamics.

    Every dynamics contributes equally regardless of how many sequences it
    recorded; every sequence contributes the Monte-Carlo mean over
    ``mc_samples`` latent draws. Keys only group the rows; each row carries
    its own partner description.
    """
    if not sequence_sets:
        raise ValueError("need at least one dynamics with recorded sequences")
    for key, rows in sequence_sets.items():
        if not rows:
            raise ValueError(f"dynamics {key!r} has no recorded sequences")
    if generator is None:
        generator = torch.Generator()
        generator.manual_seed(0)
    if rng is None:
        rng = np.random.default_rng(0)
    saved_switch = env.switch_probability
    env.switch_probability = 0.0
    try:
        if env.opponent is None:
            env.reset_opponent(rng)
        per_dynamics = []
        for rows in sequence_sets.values():
            sequence_costs = []
            for row in rows:
                env.set_dynamics(row.dynamics_id, row.dynamics_params)
                env.opponent.strategy = copy.deepcopy(row.opponent_strategy)
                draws = [
                    probe_interaction_cost(
                        agent,
                        env,
                        sample_posterior_context(agent, row.window, generator),
                    )
                    for _ in range(mc_samples)
                ]
                sequence_costs.append(float(np.mean(draws)))
            per_dynamics.append(float(np.mean(sequence_costs)))
        return float(np.mean(per_dynamics))
    finally:
        env.switch_probability = saved_switch


def posterior_kl(agent: Agent, sequences: list[InteractionSequence]) -> float:
    """Mean KL of the latent posterior from the standard-normal prior."""
    if agent.model is None:
        raise ValueError(f"agent kind {agent.kind!r} has no latent posterior")
    if not sequences:
        raise ValueError("need at least one sequence")
    values = []
    for window in sequences:
        mean, std = posterior_parameters(agent.model, window)
        var = std.numpy().astype(np.float64) ** 2
        mu = mean.numpy().astype(np.float64)
        values.append(float(0.5 * np.sum(var + mu**2 - 1.0 - np.log(var))))
    return float(np.mean(values))


def pac_bound(empirical: float, kl: float, n: int, delta: float) -> float:
    """Upper confidence bound on the true expected cost.

    bound = empirical + sqrt((kl + ln(2 sqrt(n) / delta)) / (2 n))
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if kl < 0.0:
        raise ValueError(f"kl must be >= 0, got {kl}")
    if not 0.0 <= empirical <= 1.0:
        raise ValueError(f"empirical cost must lie in [0, 1], got {empirical}")
    return empirical + math.sqrt((kl + math.log(2.0 * math.sqrt(n) / delta)) / (2.0 * n))


def estimate_true_cost(
    agent: Agent,
    env: Environment,
    num_dynamics: int,
    interactions_each: int,
    rng: np.random.Generator,
    deterministic: bool = True,
) -> tuple[float, float]:
    """Mean normalized cost over fresh partner draws, with standard error.

    Each draw fixes one partner sampled from the environment's dynamics
    distribution; the frozen agent plays ``interactions_each`` interactions
    with live latent inference, and the partner-level costs are averaged.
    """
    m = agent.config.history_length
    low, high = env.reward_bounds
    saved_buffer = agent.buffer
    saved_contexts = agent.contexts
    saved_context = agent.current_context
    saved_switch = env.switch_probability
    env.switch_probability = 0.0
    partner_costs = []
    try:
        for _ in range(num_dynamics):
            env.reset_opponent(rng)
            agent.buffer = ReplayBuffer(capacity=interactions_each + m + 1)
            agent.contexts = {}
            agent.current_context = LatentContext.zeros(agent.config.latent_dim)
            costs = []
            for i in range(interactions_each):
                exp = agent.rollout(env, i, deterministic=deterministic)
                agent.buffer.append(exp)
                agent.infer_next_context()
                env.end_interaction(exp, rng)
                costs.append(normalize_cost(exp.reward_sum, low, high))
            partner_costs.append(float(np.mean(costs)))
    finally:
        env.switch_probability = saved_switch
        agent.buffer = saved_buffer
        agent.contexts = saved_contexts
        agent.current_context = saved_context
    values = np.asarray(partner_costs)
    std_error = (
        float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    )
    return float(values.mean()), std_error


@dataclass
class BoundReport:
    """Everything a bound evaluation produced, serializable as JSON."""

    n: int
    delta: float
    empirical_cost: float
    kl: float
    bound: float
    bound_clamped: float
    estimated_true_cost: float | None = None
    true_cost_std_error: float | None = None
    mc_samples: int = 8
    sequences_per_dynamics: int = 0
    eval_dynamics: int = 0
    eval_interactions_each: int = 0

    def verify(self) -> None:
        """Recompute the bound from the stored fields; raise on mismatch."""
        expected = pac_bound(self.empirical_cost, self.kl, self.n, self.delta)
        if expected != self.bound:
            raise ValueError(
                f"stored bound {self.bound} does not match recomputed {expected}"
            )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BoundReport":
        return cls(**json.loads(text))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "BoundReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def evaluate_bound(
    agent: Agent,
    env: Environment,
    dynamics: list[tuple[str, dict]],
    sequences_per_dynamics: int = 25,
    mc_samples: int = 8,
    delta: float = 0.01,
    eval_dynamics: int = 0,
    eval_interactions_each: int = 20,
    seed: int = 0,
) -> BoundReport:
    """Full pipeline: collect sequences, score the bound, optionally test it."""
    rng = np.random.default_rng([seed, 21])
    generator = torch.Generator()
    generator.manual_seed(seed + 55)
    # the first m interactions only warm the window, so play enough that
    # every partner actually records sequences_per_dynamics of them
    warm_up = agent.config.history_length - 1
    sets = collect_cost_sequences(
        agent, env, dynamics, interactions_each=sequences_per_dynamics + warm_up, rng=rng
    )
    cost = empirical_cost(agent, env, sets, mc_samples=mc_samples, generator=generator, rng=rng)
    windows = [row.window for rows in sets.values() for row in rows]
    kl = posterior_kl(agent, windows)
    bound = pac_bound(cost, kl, len(dynamics), delta)
    true_cost = std_error = None
    if eval_dynamics > 0:
        true_cost, std_error = estimate_true_cost(
            agent, env, eval_dynamics, eval_interactions_each, rng
        )
    return BoundReport(
        n=len(dynamics),
        delta=delta,
        empirical_cost=cost,
        kl=kl,
        bound=bound,
        bound_clamped=min(bound, 1.0),
        estimated_true_cost=true_cost,
        true_cost_std_error=std_error,
        mc_samples=mc_samples,
        sequences_per_dynamics=sequences_per_dynamics,
        eval_dynamics=eval_dynamics,
        eval_interactions_each=eval_interactions_each,
    )
