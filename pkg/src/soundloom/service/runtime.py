"""Service assembly: config file + environment overrides, artifact loading
(refusing to start on any failure), and the combined TCP + HTTP server."""

from __future__ import annotations

import asyncio
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..corpus import read_manifest
from ..models import GanModel, SpecVae, TextCvae
from ..retrieval import DiversityController, load_index
from ..session import Session, SessionConfig, probe_recording_durations
from .app import build_app
from .frames import FrameError, read_frame, write_frame
from .host import Connection, SessionHost, event_to_wire

log = logging.getLogger(__name__)

# Environment overrides; values are applied after the config file is read.
ENV_OVERRIDES = {
    "SOUNDLOOM_HTTP_HOST": ("http_host", str),
    "SOUNDLOOM_HTTP_PORT": ("http_port", int),
    "SOUNDLOOM_TCP_PORT": ("tcp_port", int),
    "SOUNDLOOM_CORPUS_ROOT": ("session.corpus_root", str),
    "SOUNDLOOM_MANIFEST": ("session.manifest", str),
    "SOUNDLOOM_INDEX": ("session.index", str),
    "SOUNDLOOM_SPEC_VAE": ("session.spec_vae", str),
    "SOUNDLOOM_TEXT_CVAE": ("session.text_cvae", str),
    "SOUNDLOOM_GAN": ("session.gan", str),
    "SOUNDLOOM_FEEDBACK_LOG": ("session.feedback_log", str),
}


@dataclass
class ServiceConfig:
    session: SessionConfig = field(default_factory=SessionConfig)
    http_host: str = "127.0.0.1"
    http_port: int = 8765
    tcp_port: int = 8766
    pacing: str = "interval"
    step_interval_s: float = 0.5

    @staticmethod
    def from_file(path, env: dict | None = None) -> "ServiceConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        session_data = data.pop("session", {})
        unknown = set(session_data) - set(SessionConfig.FIELDS)
        if unknown:
            raise ValueError(f"unknown session config keys {sorted(unknown)}")
        own = {"http_host", "http_port", "tcp_port", "pacing",
               "step_interval_s"}
        bad = set(data) - own
        if bad:
            raise ValueError(f"unknown service config keys {sorted(bad)}")
        session = SessionConfig(**session_data)
        session.duration_range = tuple(session.duration_range)
        session.crossfade_range = tuple(session.crossfade_range)
        cfg = ServiceConfig(session=session, **data)
        cfg.apply_env(os.environ if env is None else env)
        return cfg

    def apply_env(self, env: dict) -> None:
        for var, (target, cast) in ENV_OVERRIDES.items():
            if var not in env:
                continue
            value = cast(env[var])
            if target.startswith("session."):
                setattr(self.session, target.split(".", 1)[1], value)
            else:
                setattr(self, target, value)


@dataclass
class Runtime:
    records: list
    index: object
    spec_vae: SpecVae
    text_cvae: TextCvae
    gan: GanModel
    session: Session


def load_runtime(cfg: ServiceConfig) -> Runtime:
    """Load every artifact up front; any failure refuses startup (the loop
    must never discover a missing model mid-flight)."""
    s = cfg.session
    records = read_manifest(s.manifest)
    index = load_index(s.index, records=records)
    spec_vae = SpecVae.load(s.spec_vae)
    text_cvae = TextCvae.load(s.text_cvae)
    gan = GanModel.load(s.gan)
    recordings_dir = Path(s.corpus_root) / "recordings"
    durations = probe_recording_durations(recordings_dir) \
        if recordings_dir.is_dir() else {}
    if not durations:
        log.warning("no recordings found under %s; schedule truncation "
                    "disabled", recordings_dir)
    controller = DiversityController(k_min=s.k_min, k_max=s.k_max,
                                     frequency=s.noise_frequency,
                                     seed=s.seed)
    session = Session(
        records, index, spec_vae, text_cvae, gan, controller=controller,
        seed=s.seed, mode=s.mode, candidates=s.candidates,
        line_top_k=s.line_top_k, duration_range=s.duration_range,
        crossfade_range=s.crossfade_range, recording_durations=durations,
        sample_tau=s.sample_tau, step_budget_s=s.step_budget_s,
        feedback_log=s.feedback_log)
    return Runtime(records=records, index=index, spec_vae=spec_vae,
                   text_cvae=text_cvae, gan=gan, session=session)


async def tcp_connection(reader: asyncio.StreamReader,
                         writer: asyncio.StreamWriter,
                         host: SessionHost) -> None:
    conn = Connection(host)

    async def pump_events():
        while True:
            event = await conn.out.get()
            await write_frame(writer, event_to_wire(event))

    sender = asyncio.ensure_future(pump_events())
    try:
        while True:
            try:
                payload = await read_frame(reader)
            except FrameError as exc:
                # JSON-level garbage is survivable; a broken length prefix
                # desynchronizes the stream, so report and hang up.
                host.reply(conn.out, "error", text=f"malformed frame: {exc}")
                if "mid-" in str(exc) or "length" in str(exc):
                    await asyncio.sleep(0.05)  # let the error flush
                    break
                continue
            if payload is None:
                break
            await conn.handle_payload(payload)
    except (ConnectionResetError, BrokenPipeError):
        pass
    finally:
        sender.cancel()
        conn.close()
        writer.close()


async def serve_async(cfg: ServiceConfig, ready: asyncio.Event | None = None):
    """Run the loop, the TCP channel, and the HTTP app until cancelled."""
    import uvicorn

    runtime = load_runtime(cfg)
    host = SessionHost(runtime.session, step_interval_s=cfg.step_interval_s,
                       pacing=cfg.pacing)
    host.prime()
    app = build_app(host, runtime.records, cfg.session.corpus_root)

    tcp_server = await asyncio.start_server(
        lambda r, w: tcp_connection(r, w, host), cfg.http_host, cfg.tcp_port)
    uv_config = uvicorn.Config(app, host=cfg.http_host, port=cfg.http_port,
                               log_level="warning")
    uv_server = uvicorn.Server(uv_config)

    loop_task = asyncio.ensure_future(host.run())
    http_task = asyncio.ensure_future(uv_server.serve())
    if ready is not None:
        ready.set()
    log.info("serving: tcp %s:%d, http %s:%d", cfg.http_host, cfg.tcp_port,
             cfg.http_host, cfg.http_port)
    joined = asyncio.gather(loop_task, http_task)
    try:
        # Shielded so cancellation requests a clean shutdown instead of
        # killing uvicorn mid-lifespan.
        await asyncio.shield(joined)
    except asyncio.CancelledError:
        log.info("shutting down")
    finally:
        await host.stop()
        uv_server.should_exit = True
        tcp_server.close()
        await tcp_server.wait_closed()
        try:
            await asyncio.wait_for(joined, timeout=5.0)
        except (asyncio.TimeoutError, asyncio.CancelledError):
            joined.cancel()


def serve(cfg: ServiceConfig) -> None:
    asyncio.run(serve_async(cfg))
