"""HTTP/websocket gateway around the pipeline.

Endpoints: GET /status, GET /archive, GET /archive/{id}, POST /config, and a
websocket at /events streaming DisplayEvents (kinds: poem, state, presence,
heartbeat) with per-connection strictly increasing sequence numbers. Slow
clients skip to the latest state/poem rather than back-pressuring the
pipeline; a client connecting mid-presentation immediately receives the
current state and active poem. See docs/wire_schema.md.
"""

from __future__ import annotations

import asyncio
import contextlib
import socket
import threading
from collections import deque
from typing import Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, ConfigDict, Field

from .config import GatewayConfig
from .errors import BindFailure
from .pipeline import Runtime
from .poems import poem_to_dict

_DROPPABLE = ("heartbeat", "presence", "state")


class Broadcaster:
    """Thread-to-asyncio fan-out with per-client bounded buffers."""

    def __init__(self, max_buffer: int = 64):
        self._clients: dict[int, tuple[deque, asyncio.Event]] = {}
        self._next_id = 0
        self._lock = threading.Lock()
        self._loop: asyncio.AbstractEventLoop | None = None
        self._max = max_buffer
        self.last_state: dict | None = None
        self.last_poem: dict | None = None

    def attach_loop(self, loop: asyncio.AbstractEventLoop):
        self._loop = loop

    def publish(self, kind: str, payload, ts: int):
        event = {"kind": kind, "payload": payload, "ts": ts}
        with self._lock:
            if kind == "state":
                self.last_state = event
            elif kind == "poem":
                self.last_poem = event if payload is not None else None
            loop = self._loop
        if loop is not None:
            loop.call_soon_threadsafe(self._fanout, event)

    def _fanout(self, event: dict):
        with self._lock:
            clients = list(self._clients.values())
        for buf, wake in clients:
            buf.append(event)
            if len(buf) > self._max:
                # keep poems; shed the oldest ephemeral event first
                for i, pending in enumerate(buf):
                    if pending["kind"] in _DROPPABLE:
                        del buf[i]
                        break
                else:
                    buf.popleft()
            wake.set()

    def register(self) -> tuple[int, deque, asyncio.Event, list[dict]]:
        buf: deque = deque()
        wake = asyncio.Event()
        with self._lock:
            cid = self._next_id
            self._next_id += 1
            self._clients[cid] = (buf, wake)
            snapshot = [e for e in (self.last_state, self.last_poem) if e is not None]
        return cid, buf, wake, snapshot

    def unregister(self, cid: int):
        with self._lock:
            self._clients.pop(cid, None)


# --- wire models ---------------------------------------------------------------


class LatencyStats(BaseModel):
    median: Optional[float] = None
    p90: Optional[float] = None
    count: int = 0


class EngineSettings(BaseModel):
    engage_after_ms: int = Field(gt=0)
    presence_grace_ms: int = Field(gt=0)
    present_for_ms: int = Field(gt=0)
    cooldown_ms: int = Field(gt=0)
    generate_on_neutral: bool
    ema_alpha: float = Field(ge=0, le=1)
    label_margin: float = Field(ge=0)
    label_dwell_ms: int = Field(gt=0)
    intensity_threshold: float = Field(ge=0, le=1)


class SamplingSettings(BaseModel):
    temperature: float = Field(ge=0)
    top_k: int = Field(ge=0)
    top_p: float = Field(gt=0, le=1)
    max_tokens: int = Field(ge=1)


class StatusResponse(BaseModel):
    phase: str
    phase_since: int
    face_present: bool
    uptime_ms: int
    poems_generated: int
    frames_analyzed: int
    frame_label_latency_ms: LatencyStats
    engine: EngineSettings
    sampling: SamplingSettings
    backend: str
    active_poem: Optional[dict] = None


class ConfigUpdate(BaseModel):
    """Hot-tunable subset; model swaps need a restart."""

    model_config = ConfigDict(extra="forbid")

    engage_after_ms: Optional[int] = Field(default=None, gt=0)
    presence_grace_ms: Optional[int] = Field(default=None, gt=0)
    present_for_ms: Optional[int] = Field(default=None, gt=0)
    cooldown_ms: Optional[int] = Field(default=None, gt=0)
    generate_on_neutral: Optional[bool] = None
    ema_alpha: Optional[float] = Field(default=None, ge=0, le=1)
    label_margin: Optional[float] = Field(default=None, ge=0)
    label_dwell_ms: Optional[int] = Field(default=None, gt=0)
    intensity_threshold: Optional[float] = Field(default=None, ge=0, le=1)
    temperature: Optional[float] = Field(default=None, ge=0)
    top_k: Optional[int] = Field(default=None, ge=0)
    top_p: Optional[float] = Field(default=None, gt=0, le=1)
    max_tokens: Optional[int] = Field(default=None, ge=1)
    reload_lexicon: bool = False


class ArchiveEntry(BaseModel):
    sequence: int
    id: str
    created_at: int


class ArchiveList(BaseModel):
    poems: list[ArchiveEntry]


_ENGINE_KEYS = (
    "engage_after_ms", "presence_grace_ms", "present_for_ms", "cooldown_ms",
    "generate_on_neutral", "ema_alpha", "label_margin", "label_dwell_ms",
    "intensity_threshold",
)
_SAMPLING_KEYS = ("temperature", "top_k", "top_p", "max_tokens")


def build_app(config: GatewayConfig) -> FastAPI:
    """Construct the service. Models load here, so a broken config fails fast
    before anything binds."""
    hub = Broadcaster()
    runtime = Runtime(config, publish=hub.publish)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        hub.attach_loop(asyncio.get_running_loop())
        runtime.start()
        yield
        runtime.stop()

    app = FastAPI(title="affectmirror", lifespan=lifespan)
    app.state.runtime = runtime
    app.state.hub = hub

    @app.get("/status", response_model=StatusResponse)
    def status():
        return runtime.snapshot()

    @app.get("/archive", response_model=ArchiveList)
    def archive_index():
        return {
            "poems": [
                {"sequence": seq, "id": pid, "created_at": created}
                for seq, pid, created in runtime.archive.index()
            ]
        }

    @app.get("/archive/{poem_id}")
    def archive_poem(poem_id: str):
        try:
            return poem_to_dict(runtime.archive.get(poem_id))
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no poem {poem_id!r}") from None

    @app.post("/config", response_model=StatusResponse)
    def update_config(update: ConfigUpdate):
        changes = {
            k: v for k, v in update.model_dump().items() if k in _ENGINE_KEYS and v is not None
        }
        sampling = {
            k: v for k, v in update.model_dump().items() if k in _SAMPLING_KEYS and v is not None
        }
        runtime.update_engine_config(changes, sampling, update.reload_lexicon)
        return runtime.snapshot()

    @app.websocket("/events")
    async def events(ws: WebSocket):
        await ws.accept()
        cid, buf, wake, snapshot = hub.register()
        seq = 0
        try:
            for event in snapshot:
                seq += 1
                await ws.send_json(dict(event, seq=seq))
            while True:
                if not buf:
                    wake.clear()
                    await wake.wait()
                while buf:
                    event = buf.popleft()
                    seq += 1
                    await ws.send_json(dict(event, seq=seq))
        except WebSocketDisconnect:
            pass
        finally:
            hub.unregister(cid)

    return app


def serve(config: GatewayConfig) -> None:
    """Run the gateway until interrupted. Raises BindFailure if the address is
    taken and ModelLoadFailure if any model fails to load."""
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((config.host, config.port))
    except OSError as e:
        raise BindFailure(f"cannot bind {config.host}:{config.port}: {e}") from None
    finally:
        probe.close()
    app = build_app(config)
    import uvicorn

    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
