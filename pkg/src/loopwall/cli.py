"""Operator entry points: gen, check, render-trace, simulate, serve.

Exit codes: 0 success, 1 validation/check failure, 2 usage or input error.
Every subcommand is deterministic given its flags and seed.
"""

from __future__ import annotations

import json
import random
import sys
from fractions import Fraction
from pathlib import Path

import click

from . import compat, render, service
from .loopgen import GenerationExhausted, LoopLibrary, generate_library
from .music import (MeasureTooLong, NonIntegerGrid, TimebaseConfig,
                    default_config)

EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _load_timebase(config_path) -> TimebaseConfig:
    if config_path is None:
        return default_config()
    try:
        d = json.loads(Path(config_path).read_text())
        tb = d.get("timebase", d)
        return TimebaseConfig.from_dict(tb)
    except (NonIntegerGrid, MeasureTooLong) as exc:
        raise click.UsageError(str(exc))
    except (OSError, ValueError, KeyError) as exc:
        raise click.UsageError(f"bad config file: {exc}")


@click.group()
def main():
    """Modular interlocking-loop soundtrack tools."""


@main.command()
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="JSON timebase/session config.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def gen(seed, config_path, out_dir):
    """Generate the loop library: 30 WAVs plus library.json."""
    tb = _load_timebase(config_path)
    try:
        lib = generate_library(seed, tb)
    except GenerationExhausted as exc:
        click.echo(f"generation exhausted: {exc}", err=True)
        sys.exit(EXIT_CHECK_FAILED)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for loop in lib.all_loops():
        render.write_wav(render.render_loop(loop, tb), out / f"{loop.id}.wav")
    for ann in lib.announcements:
        render.write_wav(render.render_announcement(ann, lib, tb),
                         out / f"{ann.id}.wav")
    (out / "library.json").write_text(lib.to_json())
    click.echo(f"wrote {len(lib.all_loops()) + len(lib.announcements)} WAVs "
               f"and library.json to {out}")


@main.command()
@click.option("--library", "library_path", required=True,
              type=click.Path(), help="Path to library.json.")
@click.option("--report", "report_path", type=click.Path(), default=None)
def check(library_path, report_path):
    """Verify pairwise compatibility of every bed and collage loop."""
    path = Path(library_path)
    if not path.exists():
        click.echo(f"no such manifest: {path}", err=True)
        sys.exit(EXIT_USAGE)
    lib = LoopLibrary.from_json(path.read_text())
    matrix = compat.check_library(lib)
    ids = matrix.loop_ids
    width = max(len(i) for i in ids) + 1
    click.echo(" " * width + " ".join(f"{i:>{width}}" for i in ids))
    for a in ids:
        row = [f"{a:>{width}}"]
        for b in ids:
            if a == b:
                row.append(f"{'-':>{width}}")
            else:
                row.append(f"{'ok' if matrix.report(a, b).passed else 'FAIL':>{width}}")
        click.echo(" ".join(row))
    if report_path:
        Path(report_path).write_text(
            json.dumps(matrix.to_dict(), sort_keys=True, indent=2) + "\n")
    if not matrix.passed:
        for r in matrix.failing_pairs():
            click.echo(f"FAIL {r.loop_a} x {r.loop_b} at offset "
                       f"{r.worst_offset} (dissonance {r.worst_dissonance_pulses} "
                       f"pulses, density {r.max_collision_density:.2f})",
                       err=True)
        sys.exit(EXIT_CHECK_FAILED)
    click.echo(f"all {len(matrix.pairs)} pairs compatible")


@main.command("render-trace")
@click.option("--trace", "trace_path", required=True, type=click.Path())
@click.option("--measures", default=32, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
def render_trace(trace_path, measures, out_dir, seed, config_path):
    """Render a launch trace to session.wav plus events.jsonl."""
    tb = _load_timebase(config_path)
    if not Path(trace_path).exists():
        click.echo(f"no such trace: {trace_path}", err=True)
        sys.exit(EXIT_USAGE)
    cfg = service.SessionConfig(tb, seed=seed)
    try:
        result = service.run_trace(trace_path, out_dir, measures, cfg)
    except service.TraceParseError as exc:
        click.echo(f"trace parse error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    click.echo(json.dumps({k: result[k] for k in
                           ("wav", "events", "event_count", "frames",
                            "clipped_samples")}, sort_keys=True))


@main.command()
@click.option("--arrival-rate", default=2.0, show_default=True, type=float,
              help="Mean launches per minute.")
@click.option("--duration", default=120, show_default=True, type=int,
              help="Trace duration in seconds.")
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--measures", default=None, type=int,
              help="Session length; defaults to covering the trace.")
def simulate(arrival_rate, duration, seed, out_dir, measures):
    """Emit a seeded random visitor trace, then render it."""
    if arrival_rate < 0 or duration < 0:
        raise click.UsageError("rate and duration must be nonnegative")
    rng = random.Random(f"simulate:{seed}")
    t = 0.0
    records = []
    while arrival_rate > 0:
        t += rng.expovariate(arrival_rate / 60.0)
        if t >= duration:
            break
        records.append({"t_ms": int(t * 1000), "event": "launch",
                        "station": rng.randint(1, 6)})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.jsonl"
    trace_path.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    tb = default_config()
    if measures is None:
        measure_s = tb.samples_per_measure / tb.sample_rate_hz
        measures = int(duration / measure_s) + 4
    cfg = service.SessionConfig(tb, seed=seed)
    result = service.run_trace(trace_path, out_dir, measures, cfg)
    click.echo(json.dumps({"trace": str(trace_path), "launches": len(records),
                           "wav": result["wav"],
                           "events": result["events"]}, sort_keys=True))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@click.option("--log", "log_path", type=click.Path(), default=None)
def serve(config_path, log_path):
    """Host a live session over HTTP until interrupted."""
    if config_path:
        cfg = service.SessionConfig.load(config_path)
    else:
        cfg = service.SessionConfig(default_config(),
                                    realtime=True).with_env_overrides()
    click.echo(f"serving on port {cfg.port} (realtime={cfg.realtime})")
    service.serve(cfg, log_path)


if __name__ == "__main__":
    main()
