"""Command-line entry point: train, eval, exp, serve.

``train`` runs one seeded training cell and writes logs plus rolling
checkpoints. ``eval`` scores a checkpoint against chosen partner rules with
frozen weights. ``exp`` launches a named campaign from the experiments
module. ``serve`` starts the tag-game HTTP service.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from coadapt.agents import Agent, evaluate_frozen, run_training
from coadapt.core import AGENT_NAMES, ENV_NAMES, RunConfig, RunLogger
from coadapt.envs import make_env
from coadapt.experiments import CAMPAIGNS


def parse_dynamics(spec: str) -> list[tuple[str, dict]]:
    """Parse ``d1,d2`` or ``step:0.8,step:-1.2`` into (id, params) pairs.

    A bare token is a discrete rule id; ``step:<x>`` is the continuous
    family at fixed angular step x (radians).
    """
    out: list[tuple[str, dict]] = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if ":" in token:
            name, _, raw = token.partition(":")
            if name != "step":
                raise ValueError(f"only the 'step' rule takes a parameter, got {name!r}")
            out.append(("step", {"step_size": float(raw)}))
        else:
            out.append((token, {}))
    if not out:
        raise ValueError("empty dynamics spec")
    return out


def cmd_train(args: argparse.Namespace) -> int:
    if args.config:
        config = RunConfig.from_file(args.config)
    else:
        config = RunConfig()
    config = config.with_overrides(
        env_name=args.env,
        agent_name=args.agent,
        total_interactions=args.interactions,
        seed=args.seed,
        switch_probability=args.switch_prob,
    )
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
    logger = RunLogger(os.path.join(args.out, "interactions.jsonl"))
    try:
        result = run_training(
            config,
            logger=logger,
            progress_every=args.progress_every,
            checkpoint_dir=args.out,
        )
    finally:
        logger.close()
    terminal = float(result.reward_sums[-500:].mean())
    with open(os.path.join(args.out, "result.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "terminal_mean_last_500": terminal,
                "switch_count": result.switch_count,
                "interactions": config.total_interactions,
            },
            fh,
            indent=2,
        )
    print(f"terminal mean reward (last 500): {terminal:.3f}")
    print(f"checkpoint: {os.path.join(args.out, 'final')}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    agent = Agent.load_checkpoint(args.checkpoint)
    env = make_env(agent.config)
    dynamics = parse_dynamics(args.dynamics)
    before = agent.parameter_digest()
    rows = evaluate_frozen(
        agent,
        env,
        dynamics,
        args.interactions,
        np.random.default_rng([args.seed, 11]),
    )
    if agent.parameter_digest() != before:
        raise RuntimeError("evaluation moved checkpoint parameters")
    report = [
        {
            "dynamics_id": row.dynamics_id,
            "mean_reward": row.mean_reward,
            "std_error": row.std_error,
        }
        for row in rows
    ]
    print(json.dumps(report, indent=2))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    return 0


def cmd_exp(args: argparse.Namespace) -> int:
    if args.name not in CAMPAIGNS:
        print(
            f"unknown campaign {args.name!r}; choose from {sorted(CAMPAIGNS)}",
            file=sys.stderr,
        )
        return 2
    runner = CAMPAIGNS[args.name]
    kwargs: dict = {"out_dir": args.out}
    if args.scale == "paper":
        # published-scale interaction counts; desk scale is the default
        if args.name in ("learning_curves", "circlen", "switch_sweep"):
            kwargs["interactions"] = 30_000
        elif args.name == "subtasks":
            kwargs["interactions"] = 40_000
        elif args.name == "bound":
            kwargs["eval_dynamics"] = 1000
    if args.checkpoint:
        kwargs["checkpoint_dir"] = args.checkpoint
    summary = runner(**kwargs)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from coadapt.service import create_app, run_server

    app = create_app(
        log_dir=args.log_dir,
        checkpoint_dir=args.checkpoint,
        static_dir=args.static_dir,
    )
    run_server(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coadapt",
        description="Train, evaluate, and serve agents that model co-adapting partners.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one seeded training cell")
    train.add_argument("--env", choices=sorted(ENV_NAMES), default=None)
    train.add_argument("--agent", choices=sorted(AGENT_NAMES), default=None)
    train.add_argument("--interactions", type=int, default=None)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--switch-prob", type=float, default=None)
    train.add_argument("--config", type=str, default=None, help="TOML config file")
    train.add_argument("--out", type=str, required=True)
    train.add_argument("--progress-every", type=int, default=1000)
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", help="frozen rollouts of a checkpoint")
    evaluate.add_argument("--checkpoint", type=str, required=True)
    evaluate.add_argument(
        "--dynamics",
        type=str,
        required=True,
        help="comma-separated rule ids, e.g. d1,d2 or step:0.8",
    )
    evaluate.add_argument("--interactions", type=int, default=1000)
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--out", type=str, default=None)
    evaluate.set_defaults(func=cmd_eval)

    exp = sub.add_parser("exp", help="run a named experiment campaign")
    exp.add_argument("name", type=str, help=f"one of {sorted(CAMPAIGNS)}")
    exp.add_argument("--scale", choices=("desk", "paper"), default="desk")
    exp.add_argument("--out", type=str, required=True)
    exp.add_argument(
        "--checkpoint", type=str, default=None,
        help="checkpoint directory for campaigns that evaluate one",
    )
    exp.set_defaults(func=cmd_exp)

    serve = sub.add_parser("serve", help="start the tag-game HTTP service")
    serve.add_argument("--host", type=str, default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--log-dir", type=str, default="service_logs")
    serve.add_argument("--checkpoint", type=str, default=None)
    serve.add_argument("--static-dir", type=str, default=None)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
