"""Long-running session host.

One Session owns the scheduler state; every mutation goes through its lock,
so concurrent transport connections see a single consistent order.  Events
are appended to the session log, broadcast to server-sent-event subscribers,
and (optionally) flushed to disk as they happen.  The same machinery drives
the offline trace harness, which is how sessions are rendered and replayed
deterministically.
"""

from __future__ import annotations

import asyncio
import io
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response, StreamingResponse

from . import render, scheduler
from .loopgen import LoopLibrary, generate_library
from .music import TimebaseConfig, default_config

ENV_PORT = "LOOPWALL_PORT"
ENV_REALTIME = "LOOPWALL_REALTIME"

CLOCK_TICK_S = 0.05


def _wav_bytes(buf: "render.PcmBuffer") -> bytes:
    import wave
    bio = io.BytesIO()
    with wave.open(bio, "wb") as wf:
        wf.setnchannels(buf.channels)
        wf.setsampwidth(2)
        wf.setframerate(buf.sample_rate_hz)
        wf.writeframes(render.quantize16(buf.data).tobytes())
    return bio.getvalue()


class TraceParseError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class SessionConfig:
    timebase: TimebaseConfig
    lifetime_measures: int = scheduler.DEFAULT_LIFETIME_MEASURES
    fade_measures: int = scheduler.DEFAULT_FADE_MEASURES
    seed: int = 1
    realtime: bool = False
    port: int = 8765

    def to_dict(self) -> dict:
        return {
            "timebase": self.timebase.to_dict(),
            "lifetime_measures": self.lifetime_measures,
            "fade_measures": self.fade_measures,
            "seed": self.seed,
            "realtime": self.realtime,
            "port": self.port,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        timebase = (TimebaseConfig.from_dict(d["timebase"])
                    if "timebase" in d else default_config())
        return cls(
            timebase=timebase,
            lifetime_measures=d.get("lifetime_measures",
                                    scheduler.DEFAULT_LIFETIME_MEASURES),
            fade_measures=d.get("fade_measures",
                                scheduler.DEFAULT_FADE_MEASURES),
            seed=d.get("seed", 1),
            realtime=d.get("realtime", False),
            port=d.get("port", 8765),
        )

    @classmethod
    def load(cls, path) -> "SessionConfig":
        cfg = cls.from_dict(json.loads(Path(path).read_text()))
        return cfg.with_env_overrides()

    def with_env_overrides(self) -> "SessionConfig":
        port = int(os.environ.get(ENV_PORT, self.port))
        realtime = self.realtime
        if ENV_REALTIME in os.environ:
            realtime = os.environ[ENV_REALTIME].lower() in ("1", "true", "yes")
        return SessionConfig(self.timebase, self.lifetime_measures,
                             self.fade_measures, self.seed, realtime, port)


class Session:
    """Single-owner soundtrack session with an append-only log."""

    def __init__(self, config: SessionConfig,
                 library: Optional[LoopLibrary] = None,
                 log_path: Optional[Path] = None):
        self.config = config
        self.library = library or generate_library(config.seed, config.timebase)
        self.state = scheduler.new_state(config.timebase, self.library,
                                         config.lifetime_measures,
                                         config.fade_measures)
        self.log: list[dict] = []
        self.log_path = Path(log_path) if log_path else None
        self._log_file = None
        if self.log_path:
            self._log_file = open(self.log_path, "a", encoding="utf-8")
        self._lock = threading.Lock()
        self._subscribers: list[asyncio.Queue] = []
        self._started_monotonic = time.monotonic()
        self._render_cursor_measure = 0

    @property
    def samples_per_measure(self) -> int:
        return self.config.timebase.samples_per_measure

    def _append_log(self, entry: dict) -> None:
        self.log.append(entry)
        if self._log_file:
            self._log_file.write(json.dumps(entry, sort_keys=True) + "\n")
            self._log_file.flush()

    def _broadcast(self, message: dict) -> None:
        for q in list(self._subscribers):
            q.put_nowait(message)

    def _emit_events(self, events) -> None:
        spm = self.samples_per_measure
        boundary = None
        for ev in events:
            if ev.at_sample != boundary:
                boundary = ev.at_sample
                self._broadcast({"kind": "tick", "at_sample": boundary,
                                 "measure": boundary // spm})
            doc = ev.to_dict(spm)
            self._append_log({"t_wall": time.time(), "type": "event", **doc})
            self._broadcast(doc)

    def wall_sample(self) -> int:
        elapsed = time.monotonic() - self._started_monotonic
        return int(elapsed * self.config.timebase.sample_rate_hz)

    def advance(self, target_sample: int) -> list:
        with self._lock:
            if target_sample <= self.state.current_sample:
                return []
            events = scheduler.advance_to(self.state, target_sample)
            self._emit_events(events)
            return events

    def tick_realtime(self) -> None:
        self.advance(self.wall_sample())

    def launch(self, station: int) -> dict:
        with self._lock:
            now = self.state.current_sample
            self._append_log({"t_wall": time.time(), "type": "request",
                              "station": station, "at_sample": now})
            try:
                out = scheduler.request_launch(self.state, station, now)
            except scheduler.LaunchRejected as exc:
                doc = {"accepted": False, "reason": exc.reason,
                       "station": station}
                self._append_log({"t_wall": time.time(), "type": "outcome",
                                  **doc})
                return doc
            doc = {
                "accepted": True, "station": out.station, "slot": out.slot,
                "loop_id": out.loop_id,
                "announce_measure": out.announce_measure,
                "start_measure": out.start_measure,
                "end_measure": out.end_measure,
                "bell_note": out.bell_note,
            }
            self._append_log({"t_wall": time.time(), "type": "outcome", **doc})
            return doc

    def snapshot(self) -> dict:
        with self._lock:
            return scheduler.snapshot(self.state)

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue()
        with self._lock:
            q.put_nowait({"kind": "snapshot", **scheduler.snapshot(self.state)})
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def loop_wav_bytes(self, loop_id: str) -> bytes:
        loop = self.library.loop_by_id(loop_id)
        buf = render.render_loop(loop, self.config.timebase)
        return _wav_bytes(buf)

    def next_audio_chunk(self) -> bytes:
        """Render and return the next measure of session audio (WAV bytes)."""
        with self._lock:
            measure = self._render_cursor_measure
            spm = self.samples_per_measure
            relevant = [e for e in self._events_from_log()
                        if e.at_sample <= (measure + 1) * spm]
            self._render_cursor_measure += 1
        mix = render.mix_session(relevant, self.library, measure + 1,
                                 self.config.timebase)
        chunk = render.PcmBuffer(mix.data[measure * spm:(measure + 1) * spm],
                                 mix.sample_rate_hz)
        return _wav_bytes(chunk)

    def _events_from_log(self) -> list:
        events = []
        for entry in self.log:
            if entry.get("type") != "event":
                continue
            events.append(scheduler.ScheduleEvent(
                at_sample=entry["at_sample"], kind=entry["kind"],
                station=entry.get("station"), slot=entry.get("slot"),
                loop_id=entry.get("loop_id"), bed=entry.get("bed"),
                fade_measures=entry.get("fade_measures")))
        return events

    def close(self) -> None:
        if self._log_file:
            self._log_file.close()
            self._log_file = None


def replay_requests(log_entries, config: SessionConfig,
                    library: LoopLibrary) -> scheduler.SoundtrackState:
    """Fold the request log into a fresh scheduler; returns the final state."""
    state = scheduler.new_state(config.timebase, library,
                                config.lifetime_measures, config.fade_measures)
    final_sample = 0
    for entry in log_entries:
        if entry.get("type") == "request":
            scheduler.advance_to(state, entry["at_sample"])
            try:
                scheduler.request_launch(state, entry["station"],
                                         entry["at_sample"])
            except scheduler.LaunchRejected:
                pass
            final_sample = entry["at_sample"]
        elif entry.get("type") == "event":
            final_sample = max(final_sample, entry["at_sample"])
    return state


def parse_trace(text: str) -> list[dict]:
    """Line-delimited {"t_ms": int, "event": "launch", "station": 1..6}."""
    records = []
    last_t = -1
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"invalid JSON: {exc.msg}", lineno)
        if not isinstance(rec, dict):
            raise TraceParseError("record must be an object", lineno)
        if rec.get("event") != "launch":
            raise TraceParseError(f"unknown event {rec.get('event')!r}", lineno)
        t_ms = rec.get("t_ms")
        if not isinstance(t_ms, int) or t_ms < 0:
            raise TraceParseError("t_ms must be a nonnegative integer", lineno)
        if t_ms < last_t:
            raise TraceParseError("t_ms must be nondecreasing", lineno)
        station = rec.get("station")
        if not isinstance(station, int) or not 1 <= station <= 6:
            raise TraceParseError("station must be 1..6", lineno)
        last_t = t_ms
        records.append({"t_ms": t_ms, "station": station})
    return records


def simulate_trace(records, library: LoopLibrary, config: TimebaseConfig,
                   total_measures: int,
                   lifetime_measures: int = scheduler.DEFAULT_LIFETIME_MEASURES,
                   fade_measures: int = scheduler.DEFAULT_FADE_MEASURES):
    """Feed a parsed trace into a fresh scheduler; returns (events, outcomes)."""
    state = scheduler.new_state(config, library, lifetime_measures,
                                fade_measures)
    sr = config.sample_rate_hz
    events = []
    outcomes = []
    for rec in records:
        at = rec["t_ms"] * sr // 1000
        events.extend(scheduler.advance_to(state, at))
        try:
            out = scheduler.request_launch(state, rec["station"], at)
            outcomes.append({"accepted": True, "station": out.station,
                             "slot": out.slot, "loop_id": out.loop_id,
                             "announce_measure": out.announce_measure})
        except scheduler.LaunchRejected as exc:
            outcomes.append({"accepted": False, "station": rec["station"],
                             "reason": exc.reason})
    events.extend(scheduler.advance_to(
        state, total_measures * config.samples_per_measure))
    return events, outcomes


def run_trace(trace_path, out_dir, total_measures: int,
              config: Optional[SessionConfig] = None,
              library: Optional[LoopLibrary] = None) -> dict:
    """Offline harness: trace in, WAV plus event log out.  Deterministic."""
    config = config or SessionConfig(default_config())
    library = library or generate_library(config.seed, config.timebase)
    records = parse_trace(Path(trace_path).read_text())
    events, outcomes = simulate_trace(records, library, config.timebase,
                                      total_measures,
                                      config.lifetime_measures,
                                      config.fade_measures)
    mix = render.mix_session(events, library, total_measures, config.timebase)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wav_path = out_dir / "session.wav"
    events_path = out_dir / "events.jsonl"
    render.write_wav(mix, wav_path)
    spm = config.timebase.samples_per_measure
    with open(events_path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_dict(spm), sort_keys=True) + "\n")
    return {
        "wav": str(wav_path), "events": str(events_path),
        "event_count": len(events), "outcomes": outcomes,
        "clipped_samples": mix.clipped_samples,
        "frames": mix.frames,
    }


def create_app(session: Session) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = None
        if session.config.realtime:
            async def clock():
                while True:
                    session.tick_realtime()
                    await asyncio.sleep(CLOCK_TICK_S)
            task = asyncio.create_task(clock())
        yield
        if task:
            task.cancel()

    app = FastAPI(title="loopwall session", lifespan=lifespan)
    app.state.session = session

    def _maybe_tick():
        if session.config.realtime:
            session.tick_realtime()

    @app.post("/launch")
    async def launch(body: dict):
        _maybe_tick()
        station = body.get("station")
        if not isinstance(station, int) or not 1 <= station <= 6:
            return JSONResponse({"error": "station must be 1..6"},
                                status_code=422)
        return session.launch(station)

    @app.get("/state")
    async def state():
        _maybe_tick()
        return session.snapshot()

    @app.get("/config")
    async def config():
        return session.config.to_dict()

    @app.post("/advance")
    async def advance(body: dict):
        # Accelerated-clock hook; realtime sessions advance on their own.
        if session.config.realtime:
            return JSONResponse({"error": "session runs in realtime"},
                                status_code=409)
        measures = body.get("measures", 1)
        target = session.state.current_sample \
            + int(measures) * session.samples_per_measure
        events = session.advance(target)
        spm = session.samples_per_measure
        return {"advanced_to_sample": session.state.current_sample,
                "events": [e.to_dict(spm) for e in events]}

    @app.get("/loops/{loop_id}.wav")
    async def loop_wav(loop_id: str):
        try:
            data = session.loop_wav_bytes(loop_id)
        except KeyError:
            return JSONResponse({"error": f"unknown loop {loop_id}"},
                                status_code=404)
        return Response(content=data, media_type="audio/wav")

    @app.get("/audio/next")
    async def audio_next():
        _maybe_tick()
        return Response(content=session.next_audio_chunk(),
                        media_type="audio/wav")

    @app.get("/events")
    async def events(limit: int = 0):
        queue = session.subscribe()

        async def stream():
            sent = 0
            try:
                while True:
                    try:
                        message = await asyncio.wait_for(queue.get(), 1.0)
                    except asyncio.TimeoutError:
                        _maybe_tick()
                        yield ": keepalive\n\n"
                        continue
                    yield f"data: {json.dumps(message, sort_keys=True)}\n\n"
                    sent += 1
                    if limit and sent >= limit:
                        return
            finally:
                session.unsubscribe(queue)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(config: SessionConfig, log_path: Optional[Path] = None) -> None:
    import uvicorn
    session = Session(config, log_path=log_path)
    app = create_app(session)
    uvicorn.run(app, host="0.0.0.0", port=config.port, log_level="warning")
