"""Service shell: scenario endpoint plus the live event/command socket.

One process hosts one session. The HTTP surface is intentionally tiny:

* ``GET /scenario``: the twin document the UI builds its scene from.
* ``GET /healthz``: liveness.
* ``WS /ws``: hello/ack handshake, full event-log catch-up, live tail,
  command intake with acks and error frames.

All commands funnel into the engine under one lock (single-writer), and
observers receive the same ordered records, so any number of consoles can
watch one session.
"""

from __future__ import annotations

import asyncio
import json
from contextlib import asynccontextmanager

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, PlainTextResponse

from . import wire
from .bim_repo import load_scenario
from .perception import GroundTruthWorld, NoiseModel
from .workflow import AUTONOMOUS_STATES, TERMINAL_STATES, Command, Engine


class SessionHost:
    """Owns the engine, its pump task, and the observer fan-out."""

    def __init__(self, document: str, seed: int = 0, noise: NoiseModel | None = None,
                 world_overrides: dict | None = None, pace: float = 0.0):
        self.document = document if isinstance(document, str) else json.dumps(document)
        repo = load_scenario(self.document)
        world = GroundTruthWorld.from_repository(repo, world_overrides)
        self.engine = Engine(
            repo, world, seed=seed, noise=noise,
            emit_execution_states=True, fast_execution=False,
        )
        self.lock = asyncio.Lock()
        self.queues: list[asyncio.Queue] = []
        self.pace = pace
        self.engine.observers.append(self._fanout)
        self._pump_task: asyncio.Task | None = None

    def _fanout(self, record):
        for q in list(self.queues):
            q.put_nowait(record)

    def subscribe(self) -> tuple[list, asyncio.Queue]:
        """Atomically snapshot the log and attach a live queue (no gap, no
        duplicate between catch-up and tail)."""
        q: asyncio.Queue = asyncio.Queue()
        snapshot = list(self.engine.event_log)
        self.queues.append(q)
        return snapshot, q

    def unsubscribe(self, q: asyncio.Queue):
        if q in self.queues:
            self.queues.remove(q)

    async def start(self):
        async with self.lock:
            if self.engine.state.value == "idle":
                self.engine.start()
        self._pump_task = asyncio.get_event_loop().create_task(self._pump())

    async def stop(self):
        if self._pump_task is not None:
            self._pump_task.cancel()
            self._pump_task = None

    async def _pump(self):
        try:
            while True:
                async with self.lock:
                    progressed = False
                    if self.engine.state in AUTONOMOUS_STATES:
                        self.engine.step()
                        progressed = True
                if self.engine.state in TERMINAL_STATES:
                    return
                await asyncio.sleep(self.pace if progressed else 0.01)
        except asyncio.CancelledError:
            pass

    async def submit(self, cmd: Command) -> bool:
        async with self.lock:
            return self.engine.handle(cmd)


def build_app(host: SessionHost) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        await host.start()
        yield
        await host.stop()

    app = FastAPI(title="construction-twin", lifespan=lifespan)

    @app.get("/healthz")
    async def healthz():
        return PlainTextResponse("ok")

    @app.get("/scenario")
    async def scenario():
        return JSONResponse(json.loads(host.document))

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session = host.engine.session_id
        out_seq = 0

        async def send(msg: wire.WireMessage):
            await ws.send_text(msg.serialize())

        # handshake: first frame must be a hello command with our version
        try:
            first = wire.parse_frame(await ws.receive_text())
            if first.type != "command" or first.payload.get("name") != "hello":
                await send(wire.error_frame(0, session, "expected hello command"))
                await ws.close()
                return
            if first.version != wire.PROTOCOL_VERSION:
                await send(
                    wire.error_frame(0, session, f"unsupported protocol version {first.version}")
                )
                await ws.close()
                return
        except (WebSocketDisconnect, wire.WireError) as exc:
            if isinstance(exc, wire.WireError):
                await send(wire.error_frame(0, session, str(exc)))
                await ws.close()
            return
        await send(
            wire.ack_frame(
                first.seq, session,
                {"hello": True, "version": wire.PROTOCOL_VERSION,
                 "log_length": len(host.engine.event_log)},
            )
        )
        snapshot, queue = host.subscribe()
        try:
            for record in snapshot:
                await send(wire.event_frame(record, session))

            async def reader():
                last_seq = first.seq
                while True:
                    text = await ws.receive_text()
                    try:
                        frame = wire.parse_frame(text)
                        if frame.type != "command":
                            raise wire.WireError(f"clients may only send commands, got {frame.type!r}")
                        if frame.seq <= last_seq:
                            raise wire.WireError(
                                f"sequence must increase (got {frame.seq} after {last_seq})"
                            )
                    except wire.WireError as exc:
                        await send(wire.error_frame(0, session, str(exc)))
                        continue
                    last_seq = frame.seq
                    name = frame.payload.get("name", "")
                    data = frame.payload.get("data", {})
                    applied = await host.submit(Command(name, data))
                    await send(wire.ack_frame(frame.seq, session, {"applied": applied, "name": name}))

            async def writer():
                while True:
                    record = await queue.get()
                    await send(wire.event_frame(record, session))

            read_task = asyncio.create_task(reader())
            write_task = asyncio.create_task(writer())
            done, pending = await asyncio.wait(
                {read_task, write_task}, return_when=asyncio.FIRST_COMPLETED
            )
            for task in pending:
                task.cancel()
            for task in done:
                exc = task.exception()
                if exc is not None and not isinstance(exc, WebSocketDisconnect):
                    raise exc
        except WebSocketDisconnect:
            pass
        finally:
            host.unsubscribe(queue)

    return app


def serve(document: str, bind: str = "127.0.0.1", port: int = 8732, seed: int = 0,
          noise: NoiseModel | None = None, pace: float = 0.02):
    """Run the service until interrupted."""
    import uvicorn

    host = SessionHost(document, seed=seed, noise=noise, pace=pace)
    app = build_app(host)
    uvicorn.run(app, host=bind, port=port, log_level="warning")
