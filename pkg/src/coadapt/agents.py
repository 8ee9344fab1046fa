"""Interaction-level agents: the adaptive learner and its baselines.

Five variants share one chassis and differ only in what the policy sees:

- ``rili``: state + predicted strategy + predicted dynamics + both
  posterior scales
- ``lili``: state + predicted strategy + its posterior scale (no dynamics
  model; assumes every partner follows the same update rule)
- ``sili``: like ``lili`` plus a shaping bonus on the final reward that
  pushes the predicted strategy to stay put
- ``oracle``: state + a privileged numeric encoding of the partner's true
  strategy
- ``sac``: state only

Each interaction runs the same cycle: train from replay, roll the policy
out for one interaction, store the experience, then infer the latent
context for the next interaction. Latents are frozen within an interaction.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from coadapt.core import (
    AGENT_NAMES,
    Experience,
    IntegrityError,
    ReplayBuffer,
    RunConfig,
    RunLogger,
    make_log_record,
)
from coadapt.envs import Environment, make_env
from coadapt.representation import (
    RepresentationModel,
    RepresentationTrainer,
    ReprConfig,
    SequenceBatch,
    flatten_tau,
)
from coadapt.rl import SacAgent, SacConfig, build_transition_batch

SILI_BONUS_WEIGHT = 1.0


@dataclass
class LatentContext:
    """Per-interaction conditioning, constant across the interaction."""

    z: np.ndarray
    p: np.ndarray
    sigma: np.ndarray

    @classmethod
    def zeros(cls, latent_dim: int) -> "LatentContext":
        return cls(
            z=np.zeros(latent_dim),
            p=np.zeros(latent_dim),
            sigma=np.zeros(2 * latent_dim),
        )


def context_width(kind: str, latent_dim: int, oracle_dim: int) -> int:
    """How many values the policy sees beyond the raw state."""
    if kind == "rili":
        return 4 * latent_dim  # z, p, sigma_p, sigma_z
    if kind in ("lili", "sili"):
        return 2 * latent_dim  # z, sigma_z
    if kind == "oracle":
        return oracle_dim
    if kind == "sac":
        return 0
    raise ValueError(f"unknown agent kind {kind!r}; expected one of {AGENT_NAMES}")


class Agent:
    """One learning agent bound to an environment's shapes.

    Construction wires up the representation networks (when the variant has
    any), the soft actor-critic, the replay buffer, and the bookkeeping
    that records which latent context was active during each interaction.
    """

    def __init__(self, config: RunConfig, env: Environment, seed: int | None = None):
        if config.agent_name not in AGENT_NAMES:
            raise ValueError(f"unknown agent kind {config.agent_name!r}")
        if config.horizon != env.horizon:
            raise ValueError(
                f"config horizon {config.horizon} does not match "
                f"environment horizon {env.horizon}"
            )
        self.kind = config.agent_name
        self.config = config
        self.env_name = env.name
        self.state_dim = env.state_dim
        self.action_dim = env.action_dim
        self.horizon = env.horizon
        seed = config.seed if seed is None else seed
        self.seed = seed

        self.context_dim = context_width(self.kind, config.latent_dim, env.oracle_dim)
        self.observation_dim = self.state_dim + self.context_dim

        if self.kind in ("rili", "lili", "sili"):
            self.repr_config = ReprConfig(
                state_dim=self.state_dim,
                action_dim=self.action_dim,
                horizon=self.horizon,
                latent_dim=config.latent_dim,
                history_length=config.history_length,
                use_dynamics_encoder=(self.kind == "rili"),
            )
            self.model = RepresentationModel(self.repr_config, seed=seed)
            self.repr_trainer = RepresentationTrainer(
                self.model, learning_rate=config.repr_learning_rate, seed=seed
            )
        else:
            self.repr_config = None
            self.model = None
            self.repr_trainer = None

        self.sac = SacAgent(
            SacConfig(
                observation_dim=self.observation_dim,
                action_dim=self.action_dim,
                action_scale=env.action_scale,
                gamma=config.gamma,
                learning_rate=config.rl_learning_rate,
            ),
            seed=seed,
        )

        self.buffer = ReplayBuffer(capacity=config.replay_capacity)
        self.contexts: dict[int, np.ndarray] = {}
        self.terminal_bonus: dict[int, float] = {}
        self.current_context = LatentContext.zeros(config.latent_dim)
        self.interactions_seen = 0
        self.rng = np.random.default_rng([seed, 101])
        self.latent_generator = torch.Generator()
        self.latent_generator.manual_seed(seed + 202)
        self.relabel_generator = torch.Generator()
        self.relabel_generator.manual_seed(seed + 303)

    # ------------------------------------------------------------------
    # policy interface

    @property
    def warmed_up(self) -> bool:
        """Latent models can train: at least one full window is stored."""
        return len(self.buffer) >= self.config.history_length + 1

    @property
    def exploring(self) -> bool:
        """Policy still acting uniformly while the buffer fills with
        diverse data; the latent models may already be training."""
        floor = max(self.config.start_interactions, self.config.history_length + 1)
        return self.interactions_seen < floor

    def context_vector(self, env: Environment | None = None) -> np.ndarray:
        """The augmentation appended to every state of the next rollout."""
        if self.kind == "rili":
            c = self.current_context
            return np.concatenate([c.z, c.p, c.sigma])
        if self.kind in ("lili", "sili"):
            c = self.current_context
            d = self.config.latent_dim
            return np.concatenate([c.z, c.sigma[d:]])
        if self.kind == "oracle":
            if env is None:
                raise IntegrityError("oracle context requires the environment")
            return np.asarray(env.oracle_encoding(), dtype=float)
        return np.zeros(0)

    def act(self, state: np.ndarray, context: np.ndarray, deterministic: bool = False) -> np.ndarray:
        observation = np.concatenate([np.asarray(state, dtype=float), context])
        return self.sac.act(observation, deterministic=deterministic)

    def rollout(
        self,
        env: Environment,
        interaction_index: int,
        deterministic: bool = False,
        record_context: bool = True,
    ) -> Experience:
        """Play one interaction; warm-up interactions act uniformly."""
        context = self.context_vector(env if self.kind == "oracle" else None)
        if record_context:
            self.contexts[interaction_index] = context
        env.reset_interaction()
        states, actions, rewards = [], [], []
        scale = env.action_scale
        for _ in range(env.horizon):
            state = env.observation()
            if self.exploring and not deterministic:
                action = self.rng.uniform(-scale, scale, size=self.action_dim)
            else:
                action = self.act(state, context, deterministic=deterministic)
            executed = env.clamp_action(action)
            _, reward = env.step(executed)
            states.append(state)
            actions.append(executed)
            rewards.append(reward)
        return Experience(
            states=np.asarray(states),
            actions=np.asarray(actions),
            rewards=np.asarray(rewards),
            interaction_index=interaction_index,
        )

    # ------------------------------------------------------------------
    # learning

    def record(self, exp: Experience) -> None:
        self.buffer.append(exp)
        self.interactions_seen += 1

    def train_step(self) -> dict[str, float] | None:
        """One representation update then one policy update, if ready.

        The representation trains as soon as one window exists; the policy
        waits out the exploration period so its first updates already see
        informative latent inputs.
        """
        if not self.warmed_up:
            return None
        metrics: dict[str, float] = {}
        if self.repr_trainer is not None:
            window = self.config.history_length + 1
            sequences = [
                self.buffer.sample_consecutive(window, self.rng)
                for _ in range(self.config.repr_batch_size)
            ]
            batch = SequenceBatch.from_sequences(sequences, self.repr_config)
            metrics.update(self.repr_trainer.train_step(batch))
        if not self.exploring:
            contexts = self.fresh_context_batch if self.model is not None else self.contexts
            transitions = build_transition_batch(
                self.buffer,
                contexts,
                self.rng,
                self.config.sac_batch_size,
                terminal_bonus=self.terminal_bonus if self.kind == "sili" else None,
            )
            metrics.update(self.sac.update(transitions))
        return metrics

    def fresh_context_batch(self, positions: np.ndarray) -> np.ndarray:
        """Re-infer contexts for sampled interactions with the current nets.

        The replay buffer stores raw experiences, not latents. If sampled
        interactions were joined with the latents recorded when they ran,
        the policy would train against context labels whose meaning keeps
        drifting as the representation learns, and the critic would learn
        to ignore the context channel altogether. Instead the conditioning
        for buffer position ``i`` is recomputed here from the window that
        precedes it, exactly as it would be at rollout time under today's
        networks (mean dynamics code, sampled strategy). Positions too
        early for a full window get the zero context they actually ran
        with. Gradients never flow through these labels, so policy updates
        still leave the representation untouched.
        """
        positions = np.asarray(positions, dtype=int)
        rows = np.zeros((len(positions), self.context_dim))
        if self.model is None:
            return rows
        m = self.config.history_length
        if self.kind == "rili":
            valid = np.flatnonzero(positions >= m)
            if len(valid) == 0:
                return rows
            gain = self.repr_config.reward_gain
            windows = np.stack(
                [
                    [
                        flatten_tau(self.buffer[int(pos) - m + k], gain)
                        for k in range(m)
                    ]
                    for pos in positions[valid]
                ]
            )
            taus = torch.tensor(windows, dtype=torch.float32)
            with torch.no_grad():
                strategies = self.model.encode_strategy_batch(taus)
                history = strategies.reshape(len(valid), -1)
                p_mean, p_std = self.model.encode_dynamics_batch(history)
                z_mean, z_std = self.model.predict_next_batch(
                    taus[:, -1, :], p_mean, strategies[:, -1, :]
                )
            noise = torch.randn(z_mean.shape, generator=self.relabel_generator)
            z = (z_mean + z_std * noise).numpy()
            rows[valid] = np.concatenate(
                [z, p_mean.numpy(), p_std.numpy(), z_std.numpy()], axis=1
            )
            return rows
        valid = np.flatnonzero(positions >= 1)
        if len(valid) == 0:
            return rows
        gain = self.repr_config.reward_gain
        taus = torch.tensor(
            np.stack([flatten_tau(self.buffer[int(pos) - 1], gain) for pos in positions[valid]]),
            dtype=torch.float32,
        )
        with torch.no_grad():
            z_last = self.model.encode_strategy_batch(taus)
            z_mean, z_std = self.model.predict_next_batch(taus, None, z_last)
        noise = torch.randn(z_mean.shape, generator=self.relabel_generator)
        z = (z_mean + z_std * noise).numpy()
        rows[valid] = np.concatenate([z, z_std.numpy()], axis=1)
        return rows

    def infer_next_context(self) -> None:
        """Refresh (z, p, sigma) from the buffer tail for the next rollout."""
        if self.model is None:
            return
        m = self.config.history_length
        d = self.config.latent_dim
        if self.kind == "rili":
            if len(self.buffer) < m:
                return
            recent = self.buffer.recent(m)
            strategies = [self.model.encode_strategy(e) for e in recent]
            p_mean, p_std = self.model.encode_dynamics(strategies)
            z_mean, z_std = self.model.predict_next_strategy(
                recent[-1], p_mean, strategies[-1]
            )
            noise = torch.randn(d, generator=self.latent_generator)
            z_next = (z_mean + z_std * noise).numpy()
            sigma = np.concatenate([p_std.numpy(), z_std.numpy()])
            next_context = LatentContext(z=z_next, p=p_mean.numpy(), sigma=sigma)
        else:
            if len(self.buffer) < 1:
                return
            last = self.buffer.recent(1)[0]
            z_last = self.model.encode_strategy(last)
            z_mean, z_std = self.model.predict_next_strategy(last, None, z_last)
            noise = torch.randn(d, generator=self.latent_generator)
            z_next = (z_mean + z_std * noise).numpy()
            sigma = np.concatenate([np.zeros(d), z_std.numpy()])
            next_context = LatentContext(z=z_next, p=np.zeros(d), sigma=sigma)
        if self.kind == "sili":
            # shaping bonus: −β‖ẑ(next) − ẑ(current)‖ on the interaction
            # that just ended, pushing predictions toward stability
            index = self.buffer.last_index
            change = float(np.linalg.norm(next_context.z - self.current_context.z))
            self.terminal_bonus[index] = -SILI_BONUS_WEIGHT * change
        self.current_context = next_context

    # ------------------------------------------------------------------
    # persistence

    def named_networks(self) -> dict[str, torch.nn.Module]:
        networks = {f"sac.{k}": v for k, v in self.sac.named_networks().items()}
        if self.model is not None:
            for name, net in self.model.named_networks().items():
                networks[f"repr.{name}"] = net
        return networks

    def parameter_digest(self) -> str:
        """Stable hash of every learnable parameter, for frozen-run audits."""
        digest = hashlib.sha256()
        for name in sorted(self.named_networks()):
            net = self.named_networks()[name]
            digest.update(name.encode())
            for key, tensor in sorted(net.state_dict().items()):
                digest.update(key.encode())
                digest.update(tensor.detach().numpy().tobytes())
        return digest.hexdigest()

    def save_checkpoint(self, directory: str | os.PathLike) -> None:
        directory = str(directory)
        os.makedirs(directory, exist_ok=True)
        manifest = {
            "format": 1,
            "agent": self.kind,
            "env": self.env_name,
            "config": dataclasses.asdict(self.config),
            "observation_dim": self.observation_dim,
            "context_dim": self.context_dim,
            "interactions_seen": self.interactions_seen,
            "networks": sorted(self.named_networks()),
            "parameter_digest": self.parameter_digest(),
            "saved_at": time.time(),
        }
        with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
        weights = {name: net.state_dict() for name, net in self.named_networks().items()}
        torch.save(weights, os.path.join(directory, "weights.pt"))

    @classmethod
    def load_checkpoint(
        cls, directory: str | os.PathLike, env: Environment | None = None
    ) -> "Agent":
        directory = str(directory)
        with open(os.path.join(directory, "manifest.json"), "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        config = RunConfig.from_dict(manifest["config"])
        if env is None:
            env = make_env(config)
        if env.name != manifest["env"]:
            raise IntegrityError(
                f"checkpoint was trained on {manifest['env']!r}, "
                f"cannot load against {env.name!r}"
            )
        agent = cls(config, env)
        weights = torch.load(os.path.join(directory, "weights.pt"), weights_only=True)
        networks = agent.named_networks()
        if set(weights) != set(networks):
            raise IntegrityError(
                f"checkpoint networks {sorted(weights)} do not match "
                f"agent networks {sorted(networks)}"
            )
        for name, net in networks.items():
            net.load_state_dict(weights[name])
        agent.interactions_seen = int(manifest.get("interactions_seen", 0))
        expected = manifest.get("parameter_digest")
        if expected is not None and agent.parameter_digest() != expected:
            raise IntegrityError("checkpoint weights failed digest verification")
        return agent


@dataclass
class RunResult:
    """Everything a caller needs after a training run."""

    config: RunConfig
    reward_sums: np.ndarray
    switch_count: int
    agent: Agent
    env: Environment


def run_training(
    config: RunConfig,
    env: Environment | None = None,
    logger: RunLogger | None = None,
    learning: bool = True,
    progress_every: int = 0,
    checkpoint_dir: str | os.PathLike | None = None,
) -> RunResult:
    """Run the full interaction loop for ``config.total_interactions``.

    The per-interaction order is fixed: train from replay, roll out with
    the current latent context, store the experience, infer the next
    context, then let the environment advance the partner (possibly
    switching its dynamics). ``learning=False`` keeps the loop identical
    but skips every gradient update. With ``checkpoint_dir`` set, a rolling
    checkpoint lands in ``<dir>/latest`` every ``config.checkpoint_interval``
    interactions and a last one in ``<dir>/final``.
    """
    if env is None:
        env = make_env(config)
    agent = Agent(config, env)
    env_rng = np.random.default_rng([config.seed, 7])
    env.reset_opponent(env_rng)
    reward_sums = np.zeros(config.total_interactions)

    for i in range(config.total_interactions):
        metrics = agent.train_step() if learning else None
        exp = agent.rollout(env, i)
        agent.record(exp)
        agent.infer_next_context()
        env.end_interaction(exp, env_rng)
        reward_sums[i] = exp.reward_sum
        if logger is not None:
            record = make_log_record(
                exp,
                predicted_z=agent.current_context.z,
                predicted_p=agent.current_context.p,
                sigma=agent.current_context.sigma,
                true_dynamics_id=env.opponent.dynamics_id,
            )
            logger.append(record)
        if checkpoint_dir is not None and (i + 1) % config.checkpoint_interval == 0:
            agent.save_checkpoint(os.path.join(str(checkpoint_dir), "latest"))
        if progress_every and (i + 1) % progress_every == 0:
            print(
                f"[{config.agent_name}/{config.env_name} seed {config.seed}] "
                f"interaction {i + 1}/{config.total_interactions} "
                f"mean reward (last {progress_every}) "
                f"{reward_sums[max(0, i + 1 - progress_every) : i + 1].mean():.3f}",
                flush=True,
            )
    if checkpoint_dir is not None:
        agent.save_checkpoint(os.path.join(str(checkpoint_dir), "final"))
    return RunResult(
        config=config,
        reward_sums=reward_sums,
        switch_count=env.switch_count,
        agent=agent,
        env=env,
    )


@dataclass
class FrozenEvalRow:
    dynamics_id: str
    mean_reward: float
    std_error: float
    reward_sums: list[float] = field(default_factory=list)


def evaluate_frozen(
    agent: Agent,
    env: Environment,
    dynamics: list[tuple[str, dict]],
    interactions_per_dynamics: int,
    rng: np.random.Generator,
    deterministic: bool = True,
) -> list[FrozenEvalRow]:
    """Score a trained agent against fixed partner dynamics, no learning.

    Latent inference keeps running (the agent re-reads its partner every
    interaction) but no parameters move; callers can verify that with
    ``parameter_digest`` before and after.
    """
    rows = []
    saved_buffer = agent.buffer
    saved_contexts = agent.contexts
    saved_context = agent.current_context
    saved_bonus = agent.terminal_bonus
    saved_switch = env.switch_probability
    env.switch_probability = 0.0  # each row measures one fixed rule
    try:
        for dynamics_id, params in dynamics:
            env.reset_opponent(rng)
            env.set_dynamics(dynamics_id, params)
            agent.buffer = ReplayBuffer(
                capacity=interactions_per_dynamics + agent.config.history_length + 1
            )
            agent.contexts = {}
            agent.terminal_bonus = {}
            agent.current_context = LatentContext.zeros(agent.config.latent_dim)
            sums = []
            for i in range(interactions_per_dynamics):
                exp = agent.rollout(env, i, deterministic=deterministic)
                agent.buffer.append(exp)
                agent.infer_next_context()
                env.end_interaction(exp, rng)
                sums.append(exp.reward_sum)
            values = np.asarray(sums)
            rows.append(
                FrozenEvalRow(
                    dynamics_id=dynamics_id,
                    mean_reward=float(values.mean()),
                    std_error=float(values.std(ddof=1) / np.sqrt(len(values))),
                    reward_sums=[float(v) for v in values],
                )
            )
    finally:
        env.switch_probability = saved_switch
        agent.buffer = saved_buffer
        agent.contexts = saved_contexts
        agent.current_context = saved_context
        agent.terminal_bonus = saved_bonus
    return rows
