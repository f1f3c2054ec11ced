"""HTTP/WebSocket session service: one environment per session, strictly
serialized steps, logs in the same schema as the cohort runner. This is the
surface the operator UI consumes; the client never computes hits or metrics.
"""

from __future__ import annotations

import asyncio
import base64
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from ..anatomy import LabelVolume
from ..env import BiopsyEnv, EnvConfig, Observation, StepResult
from ..metrics import episode_metrics


def encode_observation(obs: Observation) -> dict:
    """Bit-packed row-major planes as base64, plus dims and the grid point."""
    packed = np.packbits(obs.plane.ravel())
    return {
        "shape": list(obs.plane.shape),
        "plane_b64": base64.b64encode(packed.tobytes()).decode("ascii"),
        "grid": [obs.grid[0], obs.grid[1]],
        "grid_norm": [obs.grid_pos[0], obs.grid_pos[1]],
    }


def decode_observation_planes(payload: dict) -> np.ndarray:
    """Inverse of encode_observation (used by tests and the bridge peer)."""
    shape = tuple(payload["shape"])
    n = int(np.prod(shape))
    raw = np.frombuffer(base64.b64decode(payload["plane_b64"]), dtype=np.uint8)
    return np.unpackbits(raw)[:n].reshape(shape)


def step_payload(t: int, result: StepResult) -> dict:
    n = result.info["needle"]
    return {
        "t": t,
        "obs": encode_observation(result.observation),
        "reward": result.reward,
        "terminated": result.terminated,
        "info": {
            "hit": result.info["hit"],
            "outside_prostate": result.info["outside_prostate"],
            "ccl_mm": result.info["ccl_mm"],
            "dist_mm": result.info["dist_mm"],
            "termination_reason": result.info["termination_reason"],
            "needle": {
                "i": n.i, "j": n.j, "x_mm": n.x_mm, "y_mm": n.y_mm,
                "depth_mm": n.depth_mm, "length_mm": n.length_mm,
                "hit": n.hit, "ccl_mm": n.ccl_mm, "step": n.step,
            },
        },
    }


class _Session:
    def __init__(self, case_id: str, env: BiopsyEnv, seed: int | None, role: str):
        self.id = uuid.uuid4().hex[:12]
        self.case_id = case_id
        self.env = env
        self.seed = seed
        self.role = role
        self.lock = threading.Lock()
        self.events: list[dict] = []       # step payloads, in order, for /stream


class CreateSession(BaseModel):
    case: str
    seed: int | None = None
    role: str = "human"


class StepRequest(BaseModel):
    di: float
    dj: float


def create_app(cases: dict[str, LabelVolume], cfg: EnvConfig = EnvConfig()) -> FastAPI:
    app = FastAPI(title="bioptx session service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    sessions: dict[str, _Session] = {}

    def get_session(session_id: str) -> _Session:
        s = sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return s

    @app.get("/cases")
    def list_cases():
        return {"cases": sorted(cases)}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSession):
        if req.case not in cases:
            raise HTTPException(status_code=404, detail=f"unknown case {req.case!r}")
        env = BiopsyEnv(cases[req.case], cfg, req.case)
        obs = env.reset(seed=req.seed)
        s = _Session(req.case, env, req.seed, req.role)
        sessions[s.id] = s
        return {
            "id": s.id,
            "case": s.case_id,
            "role": s.role,
            "obs": encode_observation(obs),
            "grid": [obs.grid[0], obs.grid[1]],
            "steps": 0,
            "hits": 0,
            "max_steps": cfg.max_steps,
            "hit_quota": cfg.hit_quota,
            "terminated": False,
        }

    @app.post("/sessions/{session_id}/step")
    def step(session_id: str, req: StepRequest):
        s = get_session(session_id)
        with s.lock:
            if s.env.terminated:
                raise HTTPException(status_code=409, detail="episode finished")
            result = s.env.step((req.di, req.dj))
            payload = step_payload(s.env.steps_taken - 1, result)
            payload["steps"] = s.env.steps_taken
            payload["hits"] = s.env.hits
            s.events.append(payload)
        return payload

    @app.get("/sessions/{session_id}/log")
    def get_log(session_id: str):
        s = get_session(session_id)
        with s.lock:
            log = s.env.log
            body = {
                "case": s.case_id,
                "role": s.role,
                "seed": s.seed,
                "start": list(log.start),
                "noise_offset_mm": list(log.noise_offset_mm),
                "records": log.records(),
                "total_reward": log.total_reward,
                "terminated": s.env.terminated,
                "metrics": None,
            }
            if log.needles:
                m = episode_metrics(log)
                body["metrics"] = {
                    "hr_pct": m.hr_pct,
                    "ccl_mm": m.ccl_mm,
                    "ccl_max_mm": m.ccl_max_mm,
                    "significant": m.significant,
                    "na_mm2": m.na_mm2,
                    "needles_fired": m.needles_fired,
                }
        return body

    @app.get("/sessions/{session_id}/log.jsonl", response_class=PlainTextResponse)
    def get_log_jsonl(session_id: str):
        """The episode as canonical JSON-lines records — byte-identical to
        agent logs, ready for the cohort ingestion path and `compare`."""
        s = get_session(session_id)
        with s.lock:
            text = s.env.log.to_jsonl()
        return text + "\n" if text else ""

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(ws: WebSocket, session_id: str):
        await ws.accept()
        s = sessions.get(session_id)
        if s is None:
            await ws.close(code=4404)
            return
        sent = 0
        try:
            while True:
                if sent < len(s.events):
                    await ws.send_json(s.events[sent])
                    sent += 1
                elif s.env.terminated and sent == len(s.events):
                    break
                else:
                    await asyncio.sleep(0.02)
        except WebSocketDisconnect:
            return
        await ws.close()

    return app
