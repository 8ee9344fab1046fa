"""HTTP service for live tag games between a human evader and an agent.

The human hides on the unit circle and relocates once per turn, constrained
to steps of at most pi/2; after each move the server rolls out one full
pursuit interaction and, unless the session was created frozen, runs one
learning update. The agent is never shown the human's position: it sees only
its own trajectory and the rewards that position induces, exactly as in
simulated training. Clients see the agent's final position, never the full
trajectory.

Each session owns an agent, an arena, and an append-only JSONL log that is
flushed to disk before any response is sent. Requests within a session are
serialized; distinct sessions run concurrently. An optional shared-agent
mode chains every session onto one continuously-learning agent instead.
"""

from __future__ import annotations

import json
import math
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from coadapt.agents import Agent
from coadapt.core import AGENT_NAMES, CoadaptError, RunConfig
from coadapt.envs.base import OpponentState
from coadapt.envs.circle import (
    PAPER_SET,
    TWO_PI,
    CircleEnv,
    evader_position,
    final_position,
)

MAX_STEP = np.pi / 2.0
STEP_TOLERANCE = 1e-9
CATCH_DISTANCE = 0.5
AUTOSAVE_EVERY = 50


class ServiceError(CoadaptError):
    """An API error with a machine-readable code and an HTTP status."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def angular_distance(a: float, b: float) -> float:
    """Shortest rotation between two angles, in [0, pi]."""
    delta = abs(a - b) % TWO_PI
    return min(delta, TWO_PI - delta)


def is_caught(distance: float) -> bool:
    """The catch rule: strictly closer than the threshold at the final step."""
    return distance < CATCH_DISTANCE


class HumanCircle(CircleEnv):
    """Circle arena whose evader is a human player.

    The strategy angle is written directly from each accepted move and no
    dynamics rule ever runs; ``end_interaction`` is simply never called.
    """

    def __init__(self):
        super().__init__(PAPER_SET, switch_probability=0.0)
        self.opponent = OpponentState(strategy=0.0, dynamics_id="human")

    def set_human_angle(self, theta: float) -> None:
        self.opponent.strategy = float(theta) % TWO_PI


class CreateSessionRequest(BaseModel):
    agent_kind: str | None = None
    checkpoint: str | None = None
    learning_enabled: bool = True


class MoveRequest(BaseModel):
    target_angle: float


@dataclass
class Session:
    """One human's game: agent, arena, counters, and a durable log."""

    session_id: str
    agent_kind: str
    checkpoint: str | None
    learning_enabled: bool
    agent: Agent
    env: HumanCircle
    lock: threading.Lock
    log_path: Path
    human_angle: float
    agent_seed: int
    move_count: int = 0
    times_caught: int = 0
    upper_half_count: int = 0
    last_result: dict[str, Any] | None = None
    _log_file: Any = field(default=None, repr=False)

    @property
    def interaction_count(self) -> int:
        return self.agent.interactions_seen

    def append_log(self, record: dict[str, Any]) -> None:
        """Write one record and force it to disk before returning."""
        if self._log_file is None:
            self._log_file = open(self.log_path, "a", encoding="utf-8")
        self._log_file.write(json.dumps(record) + "\n")
        self._log_file.flush()
        os.fsync(self._log_file.fileno())


class TagService:
    """Session registry and game logic behind the HTTP endpoints."""

    def __init__(
        self,
        log_dir: str | os.PathLike,
        checkpoint_dir: str | os.PathLike | None = None,
        shared_agent: bool = False,
        seed: int | None = None,
    ):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        if self.checkpoint_dir is not None:
            self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        self.shared_agent = shared_agent
        self.rng = np.random.default_rng(seed)
        self.sessions: dict[str, Session] = {}
        self.registry_lock = threading.Lock()
        # populated on first create when shared_agent is set
        self._shared: tuple[Agent, HumanCircle, threading.Lock] | None = None

    # ------------------------------------------------------------------
    # session lifecycle

    def _build_agent(
        self, agent_kind: str | None, checkpoint: str | None, seed: int
    ) -> tuple[Agent, HumanCircle, str]:
        env = HumanCircle()
        if checkpoint is not None:
            try:
                agent = Agent.load_checkpoint(checkpoint, env=env)
            except (OSError, CoadaptError, ValueError, KeyError) as exc:
                raise ServiceError(
                    400, "bad_checkpoint", f"cannot restore checkpoint: {exc}"
                ) from exc
            if agent_kind is not None and agent_kind != agent.kind:
                raise ServiceError(
                    400,
                    "bad_checkpoint",
                    f"checkpoint holds a {agent.kind!r} agent, not {agent_kind!r}",
                )
            kind = agent.kind
        else:
            kind = agent_kind or "rili"
            if kind not in AGENT_NAMES:
                raise ServiceError(
                    400, "invalid_agent_kind", f"unknown agent kind {kind!r}"
                )
            config = RunConfig(
                env_name="circle",
                agent_name=kind,
                seed=seed,
                switch_probability=0.0,
                start_interactions=0,
            )
            agent = Agent(config, env)
        if kind == "oracle":
            raise ServiceError(
                400,
                "invalid_agent_kind",
                "oracle agents read the evader's true position and would "
                "leak the human's hiding spot; choose a latent or plain agent",
            )
        # a human opponent never warms up via exploration
        agent.config = agent.config.with_overrides(start_interactions=0)
        return agent, env, kind

    def create_session(self, request: CreateSessionRequest) -> Session:
        with self.registry_lock:
            session_id = uuid.uuid4().hex[:12]
            human_angle = float(self.rng.uniform(0.0, TWO_PI))
            agent_seed = int(self.rng.integers(2**31))
            if self.shared_agent:
                if self._shared is None:
                    agent, env, kind = self._build_agent(
                        request.agent_kind, request.checkpoint, agent_seed
                    )
                    self._shared = (agent, env, threading.Lock())
                else:
                    agent, env, _ = self._shared
                    if (
                        request.agent_kind is not None
                        and request.agent_kind != agent.kind
                    ):
                        raise ServiceError(
                            409,
                            "shared_agent_mismatch",
                            f"the shared agent is a {agent.kind!r}; new sessions "
                            "cannot request a different kind",
                        )
                    kind = agent.kind
                lock = self._shared[2]
            else:
                agent, env, kind = self._build_agent(
                    request.agent_kind, request.checkpoint, agent_seed
                )
                lock = threading.Lock()
            session = Session(
                session_id=session_id,
                agent_kind=kind,
                checkpoint=request.checkpoint,
                learning_enabled=request.learning_enabled,
                agent=agent,
                env=env,
                lock=lock,
                log_path=self.log_dir / f"{session_id}.jsonl",
                human_angle=human_angle,
                agent_seed=agent_seed,
            )
            self.sessions[session_id] = session
        session.append_log(
            {
                "event": "session_created",
                "session_id": session_id,
                "agent_kind": kind,
                "checkpoint": request.checkpoint,
                "learning_enabled": request.learning_enabled,
                "interaction_count": session.interaction_count,
                "human_angle": human_angle,
            }
        )
        return session

    def get_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError(
                404, "unknown_session", f"no session {session_id!r}"
            )
        return session

    # ------------------------------------------------------------------
    # game turns

    def submit_move(self, session_id: str, target_angle: float) -> dict[str, Any]:
        session = self.get_session(session_id)
        if not math.isfinite(target_angle):
            raise ServiceError(
                400, "invalid_request", "target_angle must be a finite number"
            )
        with session.lock:
            step = angular_distance(session.human_angle, target_angle)
            if step > MAX_STEP + STEP_TOLERANCE:
                raise ServiceError(
                    400,
                    "step_too_large",
                    f"step of {step:.4f} rad exceeds the maximum allowed "
                    f"{MAX_STEP:.4f} rad",
                )
            session.human_angle = float(target_angle) % TWO_PI
            session.env.set_human_angle(session.human_angle)

            agent = session.agent
            index = agent.interactions_seen
            exp = agent.rollout(session.env, index)
            agent.record(exp)
            if session.learning_enabled:
                agent.train_step()
                agent.infer_next_context()

            final = final_position(exp)
            evader = evader_position(session.human_angle)
            distance = float(np.linalg.norm(final - evader))
            caught = is_caught(distance)
            session.move_count += 1
            if caught:
                session.times_caught += 1
            if math.sin(session.human_angle) > 0.0:
                session.upper_half_count += 1
            result = {
                "agent_final_position": [float(final[0]), float(final[1])],
                "distance": distance,
                "caught": caught,
                "interaction_index": index,
                "times_caught": session.times_caught,
            }
            session.last_result = result
            session.append_log(
                {
                    "event": "interaction",
                    "session_id": session_id,
                    "interaction_index": index,
                    "human_angle": session.human_angle,
                    "reward_sum": float(exp.rewards.sum()),
                    **{k: result[k] for k in ("agent_final_position", "distance", "caught")},
                }
            )
            if (
                self.checkpoint_dir is not None
                and agent.interactions_seen % AUTOSAVE_EVERY == 0
            ):
                name = "shared-agent" if self.shared_agent else session_id
                agent.save_checkpoint(self.checkpoint_dir / name)
            return {
                "session_id": session_id,
                "human_angle": session.human_angle,
                "interaction_count": session.interaction_count,
                **result,
            }

    def interaction_result(self, session_id: str) -> dict[str, Any]:
        session = self.get_session(session_id)
        with session.lock:
            if session.last_result is None:
                raise ServiceError(
                    409, "no_interactions", "this session has no completed interaction"
                )
            return dict(session.last_result)

    def influence_metrics(self, session_id: str) -> dict[str, Any]:
        session = self.get_session(session_id)
        with session.lock:
            if session.move_count == 0:
                raise ServiceError(
                    409, "no_interactions", "this session has no completed interaction"
                )
            return {
                "upper_half_fraction": session.upper_half_count / session.move_count
            }


def session_payload(session: Session) -> dict[str, Any]:
    return {
        "session_id": session.session_id,
        "agent_kind": session.agent_kind,
        "learning_enabled": session.learning_enabled,
        "interaction_count": session.interaction_count,
        "human_angle": session.human_angle,
        "max_step": MAX_STEP,
    }


def create_app(
    log_dir: str | os.PathLike = "service_logs",
    checkpoint_dir: str | os.PathLike | None = None,
    static_dir: str | os.PathLike | None = None,
    shared_agent: bool = False,
    seed: int | None = None,
) -> FastAPI:
    """Build the FastAPI application around a fresh session registry."""
    service = TagService(
        log_dir=log_dir,
        checkpoint_dir=checkpoint_dir,
        shared_agent=shared_agent,
        seed=seed,
    )
    app = FastAPI(title="coadapt tag service")
    app.state.service = service

    @app.exception_handler(ServiceError)
    async def service_error(_request: Request, exc: ServiceError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.exception_handler(RequestValidationError)
    async def validation_error(
        _request: Request, exc: RequestValidationError
    ) -> JSONResponse:
        return JSONResponse(
            status_code=400, content={"code": "invalid_request", "message": str(exc)}
        )

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest) -> dict[str, Any]:
        return session_payload(service.create_session(request))

    @app.post("/sessions/{session_id}/move")
    def submit_move(session_id: str, request: MoveRequest) -> dict[str, Any]:
        return service.submit_move(session_id, request.target_angle)

    @app.get("/sessions/{session_id}/result")
    def interaction_result(session_id: str) -> dict[str, Any]:
        return service.interaction_result(session_id)

    @app.get("/sessions/{session_id}/metrics")
    def influence_metrics(session_id: str) -> dict[str, Any]:
        return service.influence_metrics(session_id)

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def run_server(app: FastAPI, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port)
