"""Websocket playground service.

Sessions wrap a `SimulationEngine`, so anything done over the socket — seeds,
damage, rate changes — lands in the same intervention log the offline `grow`
command uses, and a session's log replays to bitwise-identical frames.

Protocol (JSON text messages):
  client -> server:
    {"type": "intervene", "event": {...}}   apply one event, get a frame back
    {"type": "play"}                        stream frames, one step each
    {"type": "pause"}                       stop streaming
  server -> client:
    {"type": "frame", "step", "width", "height", "rgba", "alive_count",
     "gene_rgb"?}                           rgba/gene_rgb are base64 bytes
    {"type": "error", "code", "message"}    recoverable; session stays open

The machine-readable copy of this protocol lives in
schemas/ws_protocol.schema.json and is vendored by UI clients.
"""
from __future__ import annotations

import asyncio
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, Field

from .errors import EngramError
from .models import ROLE_GENE, ROLE_PROP
from .persistence import load_checkpoint, load_checkpoint_as
from .session import SimulationEngine

BASE_FRAME_RATE = 10.0


class GridSpec(BaseModel):
    h: int = Field(default=30, ge=3, le=256)
    w: int = Field(default=30, ge=3, le=256)


class CreateSession(BaseModel):
    checkpoint: str
    prop_checkpoint: str | None = None
    grid: GridSpec = GridSpec()
    rng_seed: int = 0
    gene_every: int = Field(default=1, ge=1)
    prop_every: int = Field(default=1, ge=1)


def _resolve(root: Path, relative: str) -> Path:
    path = (root / relative).resolve()
    if not str(path).startswith(str(root.resolve())):
        raise HTTPException(status_code=400, detail="checkpoint path escapes the root")
    if not path.is_file():
        raise HTTPException(status_code=404, detail=f"no checkpoint at {relative!r}")
    return path


def create_app(checkpoint_root: Path | str) -> FastAPI:
    root = Path(checkpoint_root)
    app = FastAPI(title="engramnca playground")
    sessions: dict[str, SimulationEngine] = {}
    counter = {"next": 1}

    @app.get("/checkpoints")
    def list_checkpoints() -> dict:
        entries = []
        if root.is_dir():
            for path in sorted(root.rglob("*.nca")):
                try:
                    params, manifest = load_checkpoint(path)
                except EngramError:
                    continue
                entries.append({
                    "path": str(path.relative_to(root)),
                    "role": params.role,
                    "layout": params.layout.to_dict(),
                    "hidden_units": params.hidden_units,
                    "config_digest": manifest.get("config_digest"),
                })
        return {"checkpoints": entries}

    @app.post("/sessions")
    def create_session(req: CreateSession) -> dict:
        try:
            gene_params, _ = load_checkpoint_as(_resolve(root, req.checkpoint), ROLE_GENE)
            prop_params = None
            if req.prop_checkpoint:
                prop_params, _ = load_checkpoint_as(
                    _resolve(root, req.prop_checkpoint), ROLE_PROP)
            layout = prop_params.layout if prop_params is not None else gene_params.layout
            engine = SimulationEngine(gene_params, prop_params, layout,
                                      req.grid.h, req.grid.w, rng_seed=req.rng_seed,
                                      rates=(req.gene_every, req.prop_every))
        except EngramError as exc:
            raise HTTPException(status_code=400,
                                detail={"code": type(exc).__name__, "message": str(exc)})
        sid = f"s{counter['next']}"
        counter["next"] += 1
        sessions[sid] = engine
        info = engine.info()
        return {"id": sid, "width": info.width, "height": info.height,
                "layout": info.layout.to_dict(), "has_prop": info.has_prop,
                "rng_seed": info.rng_seed}

    @app.get("/sessions/{sid}/log")
    def session_log(sid: str) -> dict:
        engine = sessions.get(sid)
        if engine is None:
            raise HTTPException(status_code=404, detail=f"no session {sid!r}")
        return {"rng_seed": engine.rng_seed, "log": engine.log,
                "step": engine.tick}

    @app.delete("/sessions/{sid}")
    def close_session(sid: str) -> dict:
        if sid not in sessions:
            raise HTTPException(status_code=404, detail=f"no session {sid!r}")
        del sessions[sid]
        return {"closed": sid}

    @app.websocket("/ws/session/{sid}")
    async def session_socket(ws: WebSocket, sid: str) -> None:
        engine = sessions.get(sid)
        await ws.accept()
        if engine is None:
            await ws.send_json({"type": "error", "code": "ConfigError",
                                "message": f"no session {sid!r}"})
            await ws.close()
            return

        player: asyncio.Task | None = None

        async def play_loop() -> None:
            try:
                while True:
                    engine.step(1)
                    await ws.send_json(engine.frame_message())
                    await asyncio.sleep(1.0 / (BASE_FRAME_RATE * engine.speed))
            except (WebSocketDisconnect, RuntimeError, asyncio.CancelledError):
                pass

        def stop_player() -> None:
            nonlocal player
            if player is not None:
                player.cancel()
                player = None

        await ws.send_json(engine.frame_message())
        try:
            while True:
                message = await ws.receive_json()
                kind = message.get("type")
                if kind == "intervene":
                    try:
                        engine.apply_event(dict(message.get("event") or {}))
                    except EngramError as exc:
                        await ws.send_json({"type": "error",
                                            "code": type(exc).__name__,
                                            "message": str(exc)})
                        continue
                    await ws.send_json(engine.frame_message())
                elif kind == "play":
                    if player is None:
                        player = asyncio.create_task(play_loop())
                elif kind == "pause":
                    stop_player()
                    await ws.send_json(engine.frame_message())
                else:
                    await ws.send_json({"type": "error", "code": "ConfigError",
                                        "message": f"unknown message type {kind!r}"})
        except WebSocketDisconnect:
            pass
        finally:
            stop_player()

    return app
