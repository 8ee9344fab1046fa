"""Scripted experiment campaigns with durable CSV/JSON artifacts.

Each campaign runs a family of seeded training or evaluation cells and
writes three files into its output directory:

- ``metrics.csv``: long-form rows, one per logged quantity
- ``manifest.json``: the exact configuration, seeds, and a content hash of
  the package source, so a rerun can be checked for drift
- ``summary.json``: the aggregate numbers downstream checks consume

Campaigns never mutate checkpoints they read; frozen evaluations verify
that with parameter digests.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

import coadapt
from coadapt.agents import Agent, evaluate_frozen, run_training
from coadapt.core import RunConfig, normalize_cost
from coadapt.envs import make_env
from coadapt.pacbayes import evaluate_bound
from coadapt.rl import SacConfig

AGENT_ROSTER = ("oracle", "rili", "lili", "sili", "sac")
SMOOTHING_WINDOW = 200
TERMINAL_WINDOW = 500


def smooth(values: np.ndarray, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing-window running mean; early entries average what exists."""
    values = np.asarray(values, dtype=float)
    sums = np.cumsum(values)
    out = np.empty_like(values)
    for i in range(len(values)):
        lo = max(0, i + 1 - window)
        total = sums[i] - (sums[lo - 1] if lo > 0 else 0.0)
        out[i] = total / (i + 1 - lo)
    return out


def terminal_mean(values: np.ndarray, window: int = TERMINAL_WINDOW) -> float:
    return float(np.asarray(values, dtype=float)[-window:].mean())


def package_digest() -> str:
    """Content hash of every module in the installed package."""
    root = os.path.dirname(os.path.abspath(coadapt.__file__))
    digest = hashlib.sha256()
    for directory, _, files in sorted(os.walk(root)):
        if "__pycache__" in directory:
            continue
        for name in sorted(files):
            if not name.endswith(".py"):
                continue
            path = os.path.join(directory, name)
            digest.update(os.path.relpath(path, root).encode())
            with open(path, "rb") as fh:
                digest.update(fh.read())
    return digest.hexdigest()


@dataclass
class CampaignWriter:
    """Owns one campaign's output directory and its three artifacts."""

    name: str
    out_dir: str
    settings: dict
    columns: Sequence[str]
    rows: list[dict] = field(default_factory=list)

    def __post_init__(self):
        os.makedirs(self.out_dir, exist_ok=True)

    def add(self, **row) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise ValueError(f"row is missing columns {sorted(missing)}")
        self.rows.append(row)

    def finish(self, summary: dict) -> dict:
        metrics_path = os.path.join(self.out_dir, "metrics.csv")
        with open(metrics_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.columns))
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)
        manifest = {
            "campaign": self.name,
            "settings": self.settings,
            "package_digest": package_digest(),
            "row_count": len(self.rows),
            "finished_at": time.time(),
        }
        with open(os.path.join(self.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
        with open(os.path.join(self.out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
        return summary


def load_summary(out_dir: str | os.PathLike) -> dict | None:
    path = os.path.join(str(out_dir), "summary.json")
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _progress(tag: str, enabled: bool) -> Callable[[str], None]:
    def emit(message: str) -> None:
        if enabled:
            print(f"[{tag}] {message}", flush=True)

    return emit


def _train_cell(
    env_name: str,
    agent_name: str,
    seed: int,
    interactions: int,
    switch_probability: float,
    horizon: int = 10,
    checkpoint_dir: str | None = None,
) -> tuple[RunConfig, np.ndarray, Agent]:
    config = RunConfig(
        env_name=env_name,
        agent_name=agent_name,
        seed=seed,
        total_interactions=interactions,
        switch_probability=switch_probability,
        horizon=horizon,
    )
    result = run_training(config)
    if checkpoint_dir is not None:
        result.agent.save_checkpoint(checkpoint_dir)
    return config, result.reward_sums, result.agent


def exp_learning_curves(
    out_dir: str,
    envs: Iterable[str] = ("circle",),
    agents: Iterable[str] = AGENT_ROSTER,
    seeds: Iterable[int] = (0, 1, 2),
    interactions: int = 15_000,
    switch_probability: float = 0.01,
    log_stride: int = 10,
    horizon: int = 10,
    checkpoints: bool = False,
    verbose: bool = True,
) -> dict:
    """All agent x env x seed learning curves with smoothed reward traces."""
    envs, agents, seeds = list(envs), list(agents), list(seeds)
    writer = CampaignWriter(
        name="learning_curves",
        out_dir=out_dir,
        settings=dict(
            envs=envs, agents=agents, seeds=seeds, interactions=interactions,
            switch_probability=switch_probability, log_stride=log_stride,
            horizon=horizon,
        ),
        columns=("env", "agent", "seed", "interaction", "smoothed_reward"),
    )
    emit = _progress("learning_curves", verbose)
    terminal: dict[str, dict[str, list[float]]] = {
        env: {agent: [] for agent in agents} for env in envs
    }
    for env_name in envs:
        for agent_name in agents:
            for seed in seeds:
                start = time.time()
                checkpoint_dir = (
                    os.path.join(out_dir, "checkpoints", f"{env_name}-{agent_name}-s{seed}")
                    if checkpoints
                    else None
                )
                _, rewards, _ = _train_cell(
                    env_name, agent_name, seed, interactions,
                    switch_probability, horizon, checkpoint_dir,
                )
                smoothed = smooth(rewards)
                for i in range(log_stride - 1, interactions, log_stride):
                    writer.add(
                        env=env_name, agent=agent_name, seed=seed,
                        interaction=i + 1, smoothed_reward=round(float(smoothed[i]), 6),
                    )
                terminal[env_name][agent_name].append(terminal_mean(rewards))
                emit(
                    f"{env_name}/{agent_name} seed {seed}: terminal "
                    f"{terminal[env_name][agent_name][-1]:.3f} "
                    f"({time.time() - start:.0f}s)"
                )
    summary = {
        "interactions": interactions,
        "terminal_window": TERMINAL_WINDOW,
        "terminal_by_cell": terminal,
        "terminal_means": {
            env: {agent: float(np.mean(vals)) for agent, vals in table.items()}
            for env, table in terminal.items()
        },
    }
    return writer.finish(summary)


def exp_circlen(
    out_dir: str,
    agents: Iterable[str] = AGENT_ROSTER,
    seeds: Iterable[int] = (0, 1, 2),
    interactions: int = 15_000,
    switch_probability: float = 0.01,
    verbose: bool = True,
) -> dict:
    """Learning curves against the continuous family of circle opponents."""
    return exp_learning_curves(
        out_dir,
        envs=("circle_n",),
        agents=agents,
        seeds=seeds,
        interactions=interactions,
        switch_probability=switch_probability,
        verbose=verbose,
    )


def exp_per_dynamics(
    out_dir: str,
    checkpoint_dir: str,
    interactions_per_dynamics: int = 1000,
    seed: int = 0,
) -> dict:
    """Frozen rollouts of one checkpoint against each discrete circle rule."""
    agent = Agent.load_checkpoint(checkpoint_dir)
    env = make_env(agent.config)
    digest_before = agent.parameter_digest()
    rows = evaluate_frozen(
        agent,
        env,
        [(d, {}) for d in ("d1", "d2", "d3", "d4")],
        interactions_per_dynamics,
        np.random.default_rng([seed, 31]),
    )
    if agent.parameter_digest() != digest_before:
        raise RuntimeError("frozen evaluation moved checkpoint parameters")
    writer = CampaignWriter(
        name="per_dynamics",
        out_dir=out_dir,
        settings=dict(
            checkpoint=os.path.abspath(checkpoint_dir),
            interactions_per_dynamics=interactions_per_dynamics,
            seed=seed,
        ),
        columns=("dynamics_id", "mean_reward", "std_error"),
    )
    for row in rows:
        writer.add(
            dynamics_id=row.dynamics_id,
            mean_reward=round(row.mean_reward, 6),
            std_error=round(row.std_error, 6),
        )
    return writer.finish(
        {
            "per_dynamics": {
                row.dynamics_id: {"mean": row.mean_reward, "se": row.std_error}
                for row in rows
            }
        }
    )


def sequential_dynamics_training(
    agent_name: str,
    seed: int,
    num_dynamics: int = 100,
    interactions_each: int = 150,
    verbose: bool = True,
) -> tuple[Agent, list[dict], np.ndarray]:
    """Train against a fixed tour of fresh continuous-family opponents.

    Instead of random switching, the partner's step size is redrawn every
    ``interactions_each`` interactions, so the agent meets ``num_dynamics``
    partners in a fixed order. Returns the trained agent, the tour, and the
    reward trace.
    """
    total = num_dynamics * interactions_each
    config = RunConfig(
        env_name="circle_n",
        agent_name=agent_name,
        seed=seed,
        total_interactions=total,
        switch_probability=0.0,
    )
    if config.start_interactions >= total:
        # short tours still need a policy: cap exploration at a fifth
        config = config.with_overrides(start_interactions=max(total // 5, 1))
    env = make_env(config)
    agent = Agent(config, env)
    env_rng = np.random.default_rng([seed, 47])
    env.reset_opponent(env_rng)
    tour: list[dict] = []
    rewards = np.zeros(total)
    emit = _progress(f"sequential/{agent_name}", verbose)
    for block in range(num_dynamics):
        step_size = float(env_rng.uniform(-np.pi, np.pi))
        env.set_dynamics("step", {"step_size": step_size})
        tour.append({"dynamics_id": "step", "step_size": step_size})
        for i in range(block * interactions_each, (block + 1) * interactions_each):
            agent.train_step()
            exp = agent.rollout(env, i)
            agent.record(exp)
            agent.infer_next_context()
            env.end_interaction(exp, env_rng)
            rewards[i] = exp.reward_sum
        if verbose and (block + 1) % 20 == 0:
            lo = (block - 19) * interactions_each
            emit(
                f"partner {block + 1}/{num_dynamics}, mean reward "
                f"(last 20 partners) {rewards[lo:(block + 1) * interactions_each].mean():.3f}"
            )
    return agent, tour, rewards


def exp_memory(
    out_dir: str,
    seed: int = 0,
    num_dynamics: int = 100,
    interactions_each: int = 150,
    eval_interactions: int = 200,
    verbose: bool = True,
) -> dict:
    """Sequential tour, then frozen replay of the first five partners.

    Both the adaptive agent and a plain SAC baseline take the same tour;
    the test is whether the adaptive agent still beats the baseline on
    partners it met early, long after training moved on.
    """
    emit = _progress("memory", verbose)
    results: dict[str, list[dict]] = {}
    tours: dict[str, list[dict]] = {}
    for agent_name in ("rili", "sac"):
        agent, tour, rewards = sequential_dynamics_training(
            agent_name, seed, num_dynamics, interactions_each, verbose
        )
        emit(f"{agent_name} tour done, terminal {terminal_mean(rewards):.3f}")
        env = make_env(agent.config)
        first_five = [
            ("step", {"step_size": entry["step_size"]}) for entry in tour[:5]
        ]
        rows = evaluate_frozen(
            agent, env, first_five, eval_interactions, np.random.default_rng([seed, 53])
        )
        results[agent_name] = [
            {
                "dynamics_index": i,
                "step_size": first_five[i][1]["step_size"],
                "mean_reward": row.mean_reward,
                "std_error": row.std_error,
            }
            for i, row in enumerate(rows)
        ]
        tours[agent_name] = tour
    writer = CampaignWriter(
        name="memory",
        out_dir=out_dir,
        settings=dict(
            seed=seed, num_dynamics=num_dynamics,
            interactions_each=interactions_each,
            eval_interactions=eval_interactions,
        ),
        columns=("agent", "dynamics_index", "step_size", "mean_reward", "std_error"),
    )
    for agent_name, rows in results.items():
        for row in rows:
            writer.add(agent=agent_name, **{k: round(v, 6) if isinstance(v, float) else v for k, v in row.items()})
    wins = sum(
         1
        for a, b in zip(results["rili"], results["sac"])
        if a["mean_reward"] > b["mean_reward"]
    )
    return writer.finish(
        {
            "first_five": results,
            "rili_wins": wins,
            "tour_matches": tours["rili"][:5] == tours["sac"][:5],
        }
    )


def exp_bound(
    out_dir: str,
    n_values: Iterable[int] = (10, 20, 30, 40),
    delta: float = 0.01,
    seed: int = 0,
    interactions_per_dynamics: int = 150,
    sequences_per_dynamics: int = 25,
    eval_dynamics: int = 200,
    eval_interactions_each: int = 20,
    verbose: bool = True,
) -> dict:
    """Generalization bound versus number of training partners.

    For each N: train against N sampled continuous-family partners in
    sequence, freeze, compute the bound, and check it against fresh
    partner draws.
    """
    emit = _progress("bound", verbose)
    writer = CampaignWriter(
        name="bound",
        out_dir=out_dir,
        settings=dict(
            n_values=list(n_values), delta=delta, seed=seed,
            interactions_per_dynamics=interactions_per_dynamics,
            sequences_per_dynamics=sequences_per_dynamics,
            eval_dynamics=eval_dynamics,
            eval_interactions_each=eval_interactions_each,
        ),
        columns=(
            "n", "empirical_cost", "kl", "bound", "bound_clamped",
            "estimated_true_cost", "true_cost_std_error",
        ),
    )
    reports = {}
    for n in n_values:
        agent, tour, _ = sequential_dynamics_training(
            "rili", seed, num_dynamics=n,
            interactions_each=interactions_per_dynamics, verbose=False,
        )
        env = make_env(agent.config)
        dynamics = [("step", {"step_size": entry["step_size"]}) for entry in tour]
        report = evaluate_bound(
            agent,
            env,
            dynamics,
            sequences_per_dynamics=sequences_per_dynamics,
            delta=delta,
            eval_dynamics=eval_dynamics if n == min(n_values) else 0,
            eval_interactions_each=eval_interactions_each,
            seed=seed,
        )
        report.save(os.path.join(out_dir, f"bound_n{n}.json"))
        reports[n] = report
        writer.add(
            n=n,
            empirical_cost=round(report.empirical_cost, 6),
            kl=round(report.kl, 6),
            bound=round(report.bound, 6),
            bound_clamped=round(report.bound_clamped, 6),
            estimated_true_cost=(
                round(report.estimated_true_cost, 6)
                if report.estimated_true_cost is not None
                else ""
            ),
            true_cost_std_error=(
                round(report.true_cost_std_error, 6)
                if report.true_cost_std_error is not None
                else ""
            ),
        )
        emit(
            f"N={n}: empirical {report.empirical_cost:.4f}, kl {report.kl:.2f}, "
            f"bound {report.bound:.4f}"
            + (
                f", fresh-draw cost {report.estimated_true_cost:.4f}"
                if report.estimated_true_cost is not None
                else ""
            )
        )
    smallest = min(reports)
    return writer.finish(
        {
            "delta": delta,
            "bounds": {str(n): reports[n].bound for n in reports},
            "empirical_costs": {str(n): reports[n].empirical_cost for n in reports},
            "kls": {str(n): reports[n].kl for n in reports},
            "holdout": {
                "n": smallest,
                "estimated_true_cost": reports[smallest].estimated_true_cost,
                "true_cost_std_error": reports[smallest].true_cost_std_error,
                "bound": reports[smallest].bound,
                "eval_dynamics": eval_dynamics,
            },
        }
    )


def exp_switch_sweep(
    out_dir: str,
    probabilities: Iterable[float] = (0.01, 0.05, 0.10, 0.20),
    agents: Iterable[str] = ("rili", "sac"),
    seeds: Iterable[int] = (0, 1, 2),
    interactions: int = 15_000,
    verbose: bool = True,
) -> dict:
    """Terminal reward as the partner's switch rate grows."""
    probabilities, agents, seeds = list(probabilities), list(agents), list(seeds)
    emit = _progress("switch_sweep", verbose)
    writer = CampaignWriter(
        name="switch_sweep",
        out_dir=out_dir,
        settings=dict(
            probabilities=probabilities, agents=agents, seeds=seeds,
            interactions=interactions,
        ),
        columns=("agent", "switch_probability", "seed", "terminal_reward"),
    )
    table: dict[str, dict[float, list[float]]] = {
        agent: {p: [] for p in probabilities} for agent in agents
    }
    for agent_name in agents:
        for p in probabilities:
            for seed in seeds:
                _, rewards, _ = _train_cell("circle", agent_name, seed, interactions, p)
                value = terminal_mean(rewards)
                table[agent_name][p].append(value)
                writer.add(
                    agent=agent_name, switch_probability=p, seed=seed,
                    terminal_reward=round(value, 6),
                )
                emit(f"{agent_name} p={p} seed {seed}: terminal {value:.3f}")
    summary = {
        "interactions": interactions,
        "terminal_by_cell": {
            agent: {str(p): vals for p, vals in per.items()}
            for agent, per in table.items()
        },
        "means": {
            agent: {str(p): float(np.mean(vals)) for p, vals in per.items()}
            for agent, per in table.items()
        },
        "std_errors": {
            agent: {
                str(p): float(np.std(vals, ddof=1) / np.sqrt(len(vals)))
                for p, vals in per.items()
            }
            for agent, per in table.items()
        },
    }
    return writer.finish(summary)


def exp_subtasks(
    out_dir: str,
    agents: Iterable[str] = AGENT_ROSTER,
    seeds: Iterable[int] = (0, 1, 2),
    interactions: int = 20_000,
    switch_probability: float = 0.01,
    verbose: bool = True,
) -> dict:
    """Learning curves in the goal-sequence arena (30-step horizon)."""
    return exp_learning_curves(
        out_dir,
        envs=("robot_subtask",),
        agents=agents,
        seeds=seeds,
        interactions=interactions,
        switch_probability=switch_probability,
        horizon=30,
        verbose=verbose,
    )


CAMPAIGNS: dict[str, Callable[..., dict]] = {
    "learning_curves": exp_learning_curves,
    "circlen": exp_circlen,
    "per_dynamics": exp_per_dynamics,
    "memory": exp_memory,
    "bound": exp_bound,
    "switch_sweep": exp_switch_sweep,
    "subtasks": exp_subtasks,
}
