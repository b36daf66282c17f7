"""WebSocket feed for live sessions.

One engine, one source, many subscribers. Events fan out through bounded
queues; a subscriber that stops draining is disconnected rather than
allowed to stall the session. Control messages let a client start or stop
the run, adjust the alert policy, force the synthetic phase, and
acknowledge alerts.
"""

from __future__ import annotations

import asyncio
import contextlib
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .core import LABEL_ATTENTIVE, LABEL_NONATTENTIVE
from .errors import SourceExhausted
from .realtime import AlertPolicy, AlertTracker, StreamEngine, session_summary
from .synth import PhaseSource

QUEUE_LIMIT = 256


class BroadcastHub:
    def __init__(self) -> None:
        self._queues: set[asyncio.Queue] = set()

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=QUEUE_LIMIT)
        self._queues.add(q)
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        self._queues.discard(q)

    def publish(self, message: dict) -> None:
        for q in list(self._queues):
            try:
                q.put_nowait(message)
            except asyncio.QueueFull:
                # slow consumer: cut it loose instead of blocking the feed
                self._queues.discard(q)
                with contextlib.suppress(asyncio.QueueFull):
                    q.put_nowait({"type": "bye", "reason": "overflow"})


class SessionRunner:
    """Pulls chunks from the source, feeds the engine, publishes events."""

    def __init__(self, engine: StreamEngine, source, hub: BroadcastHub,
                 rate: float = 1.0, chunk: int | None = None):
        self.engine = engine
        self.source = source
        self.hub = hub
        self.rate = rate
        self.chunk = chunk or engine.segmentation.step
        self.running = False
        self.acked: set[int] = set()
        self._task: asyncio.Task | None = None

    def start(self) -> None:
        if self._task is None or self._task.done():
            self.running = True
            self._task = asyncio.create_task(self._run())

    def stop(self) -> None:
        self.running = False

    async def _run(self) -> None:
        delay = (self.chunk / self.engine.sample_rate / self.rate
                 if self.rate > 0 else 0.0)
        label_fn = getattr(self.source, "true_label_at", None)
        while self.running:
            try:
                samples, aux = self.source.read(self.chunk)
            except SourceExhausted:
                break
            true_label = None
            if label_fn is not None:
                true_label = label_fn(self.engine._next_window
                                      + self.engine.segmentation.segment_len - 1)
            elif hasattr(self.source, "current_label"):
                true_label = int(self.source.current_label)
            for event in self.engine.push_samples(samples, aux, true_label):
                self.hub.publish(event.to_dict())
            if delay:
                await asyncio.sleep(delay)
            else:
                await asyncio.sleep(0)  # let subscribers drain
        self.running = False
        if self.engine.events:
            self.hub.publish(self.summary())

    def summary(self) -> dict:
        out = session_summary(self.engine.events, self.engine.policy,
                              self.engine.segmentation,
                              self.engine.sample_rate)
        out["acked_alerts"] = sorted(self.acked)
        out["unacked_alerts"] = [a["index"] for a in out["alerts"]
                                 if a["index"] not in self.acked]
        return out

    def set_policy(self, fields: dict) -> dict:
        base = {
            "consecutive_required": self.engine.policy.consecutive_required,
            "cooldown_events": self.engine.policy.cooldown_events,
            "min_duration_s": self.engine.policy.min_duration_s,
            "duration_convention": self.engine.policy.duration_convention,
            "warning_threshold_uv": self.engine.policy.warning_threshold_uv,
        }
        base.update({k: v for k, v in fields.items() if k in base})
        policy = AlertPolicy(**base)
        self.engine.policy = policy
        self.engine.tracker = AlertTracker(policy)  # run counter restarts
        return base

    def set_phase(self, label: int) -> bool:
        if isinstance(self.source, PhaseSource):
            self.source.schedule = [(int(label), 30.0)]
            self.source._phase = 0
            return True
        return False


def create_app(engine: StreamEngine, source, rate: float = 1.0,
               chunk: int | None = None,
               static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="eegmon live feed")
    hub = BroadcastHub()
    runner = SessionRunner(engine, source, hub, rate, chunk)
    app.state.runner = runner
    app.state.hub = hub

    @app.get("/healthz")
    async def healthz() -> dict:
        return {"ok": True, "running": runner.running,
                "events": len(engine.events)}

    @app.get("/summary")
    async def summary() -> dict:
        if not engine.events:
            return {"type": "summary", "n_events": 0}
        return runner.summary()

    @app.websocket("/ws")
    async def ws(socket: WebSocket) -> None:
        await socket.accept()
        queue = hub.subscribe()
        await socket.send_json({
            "type": "hello",
            "policy": {
                "consecutive_required": engine.policy.consecutive_required,
                "cooldown_events": engine.policy.cooldown,
                "min_duration_s": engine.policy.min_duration_s,
                "duration_convention": engine.policy.duration_convention,
            },
            "sample_rate": engine.sample_rate,
            "segment_len": engine.segmentation.segment_len,
            "step": engine.segmentation.step,
            "labels": {"attentive": LABEL_ATTENTIVE,
                       "non_attentive": LABEL_NONATTENTIVE},
        })

        async def pump() -> None:
            while True:
                message = await queue.get()
                await socket.send_json(message)
                if message.get("type") == "bye":
                    await socket.close()
                    return

        sender = asyncio.create_task(pump())
        try:
            while True:
                message = await socket.receive_json()
                if message.get("type") != "control":
                    continue
                action = message.get("action")
                if action == "start":
                    runner.start()
                    hub.publish({"type": "state", "running": True})
                elif action == "stop":
                    runner.stop()
                    if runner._task is not None:
                        await runner._task
                elif action == "set_policy":
                    applied = runner.set_policy(message.get("policy", {}))
                    hub.publish({"type": "policy", "policy": applied})
                elif action == "set_phase":
                    ok = runner.set_phase(message.get("label",
                                                      LABEL_ATTENTIVE))
                    hub.publish({"type": "phase",
                                 "applied": ok,
                                 "label": message.get("label")})
                elif action == "ack":
                    runner.acked.add(int(message.get("index", -1)))
                    hub.publish({"type": "ack",
                                 "index": int(message.get("index", -1))})
                elif action == "summary":
                    if engine.events:
                        hub.publish(runner.summary())
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await sender
            hub.unsubscribe(queue)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="static")
    return app
