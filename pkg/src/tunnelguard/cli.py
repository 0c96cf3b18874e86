"""Command-line entry points.

    tunnelguard run-scenario <file> [--out DIR] [--no-figures]
    tunnelguard sniff-report <capture> [--json]
    tunnelguard serve <file> [--bind HOST:PORT] [--fast] [--ui DIR] [--out DIR]
    tunnelguard version

Exit codes: 0 run completed (regardless of what the adversary got),
2 bad input (scenario, flags, unreadable capture), 3 environment
trouble (bind failure, unexpected runtime error).

TG_SEED overrides the scenario's master seed, which is how fuzz
campaigns rerun one document under many seeds without editing it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib import metadata
from pathlib import Path

from . import runner
from .scenario import ScenarioError, load_scenario

ENV_SEED = "TG_SEED"


def _seed_override() -> int | None:
    raw = os.environ.get(ENV_SEED)
    if raw is None or raw.strip() == "":
        return None
    try:
        value = int(raw.strip(), 0)
    except ValueError:
        raise ScenarioError(ENV_SEED, f"must be an integer, got {raw!r}") from None
    if value < 0:
        raise ScenarioError(ENV_SEED, f"must be >= 0, got {value}")
    return value


def _parse_bind(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ScenarioError("--bind", f"expected HOST:PORT, got {text!r}")
    try:
        port_num = int(port)
    except ValueError:
        raise ScenarioError("--bind", f"port must be an integer, got {port!r}") from None
    if not 0 <= port_num <= 65535:
        raise ScenarioError("--bind", f"port out of range: {port_num}")
    return host, port_num


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    seed = _seed_override()
    result = runner.run_scenario(
        scenario, outdir=args.out, seed=seed, figures=not args.no_figures
    )
    r = result.report
    print(f"scenario {r.scenario}: completed {scenario.duration_s} virtual seconds "
          f"(variant {r.variant}, adversary {r.adversary})")
    print(f"  telemetry: {r.lines_emitted} lines emitted, "
          f"{r.extras['lines_persisted']} persisted")
    print(f"  capture: {r.frames_captured} frames (control {r.control_frames}, "
          f"data {r.data_frames}, stream {r.stream_chunks})")
    print(f"  recovered: {r.plaintext_lines_recovered}/{r.lines_emitted} lines, "
          f"{r.commands_recovered}/{r.commands_sent} commands")
    print(f"  tamper: attempts {r.tamper_attempts}, auth failures {r.tamper_auth_failures}, "
          f"accepted by victim {r.extras['tampered_accepted_by_victim']}")
    for name in sorted(result.written):
        print(f"  wrote {result.written[name]}")
    return 0


def _empty_report_doc() -> dict:
    return {
        "scenario": "(empty capture)", "variant": "?", "adversary": "?",
        "frames_captured": 0, "control_frames": 0, "data_frames": 0,
        "stream_chunks": 0, "lines_emitted": 0, "plaintext_lines_recovered": 0,
        "commands_sent": 0, "commands_recovered": 0, "tamper_attempts": 0,
        "tampered_delivered": 0, "tamper_auth_failures": 0,
        "tampered_commands_accepted": 0,
    }


def _load_capture_doc(path: Path) -> dict:
    """Accept an output directory, a capture_report.json, or a raw
    capture.log (report alongside it used for the oracle counts)."""
    if path.is_dir():
        path = path / "capture_report.json"
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(str(path), f"cannot read capture: {exc}") from None
    if text.strip() == "":
        return _empty_report_doc()
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(str(path), f"not a capture report: {exc}") from None
        if not isinstance(doc, dict):
            raise ScenarioError(str(path), "capture report must be a JSON object")
        return doc
    # raw hex log: count frames; use the sibling report for the rest
    frames = sum(1 for line in text.splitlines() if line.strip())
    sibling = path.with_name("capture_report.json")
    if sibling.is_file():
        doc = _load_capture_doc(sibling)
        doc["frames_captured"] = frames
        return doc
    doc = _empty_report_doc()
    doc["frames_captured"] = frames
    doc["scenario"] = path.name
    return doc


def _cmd_sniff(args: argparse.Namespace) -> int:
    doc = _load_capture_doc(Path(args.capture))
    if args.json:
        print(json.dumps(doc, indent=2, sort_keys=True))
        return 0
    get = doc.get
    print(f"scenario: {get('scenario', '?')} (variant {get('variant', '?')}, "
          f"adversary {get('adversary', '?')})")
    print(f"frames seen: {get('frames_captured', 0)} (control {get('control_frames', 0)}, "
          f"data {get('data_frames', 0)}, stream {get('stream_chunks', 0)})")
    print(f"recovered: {get('plaintext_lines_recovered', 0)}/{get('lines_emitted', 0)} lines, "
          f"{get('commands_recovered', 0)}/{get('commands_sent', 0)} commands")
    print(f"tamper: attempts {get('tamper_attempts', 0)}, "
          f"delivered {get('tampered_delivered', 0)}, "
          f"auth failures {get('tamper_auth_failures', 0)}, "
          f"tampered commands accepted {get('tampered_commands_accepted', 0)}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import signal

    from .server.api import ApiServer, Runtime

    scenario = load_scenario(args.scenario)
    seed = _seed_override()
    host, port = _parse_bind(args.bind)
    ui_root = None
    if args.ui is not None:
        ui_root = Path(args.ui)
        if not ui_root.is_dir():
            raise ScenarioError("--ui", f"not a directory: {ui_root}")

    handles = runner.build_run(scenario, seed=seed, endless=True)
    handles.network.start()
    runtime = Runtime(handles.network, handles.core, fast=args.fast)
    try:
        server = ApiServer(runtime, host, port, static_root=ui_root)
    except OSError as exc:
        print(f"error: cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return 3
    runtime.start()
    server.start()

    # Ctrl-C and TERM both mean "stop and flush"; SIGINT may arrive
    # ignored when launched as a background job, so re-arm it.
    def _interrupt(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGINT, _interrupt)
    signal.signal(signal.SIGTERM, _interrupt)

    bound_host, bound_port = server.address
    pace = "uncapped" if args.fast else "1 virtual second per real second"
    print(f"serving {scenario.name} on http://{bound_host}:{bound_port}/ ({pace})",
          flush=True)
    print("press Ctrl-C to stop; logs flush on shutdown", flush=True)
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        print("\nshutting down")
    finally:
        server.stop()
        runtime.stop()
        outdir = Path(args.out) if args.out else Path(f"{scenario.name}_logs")
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "telemetry.log").write_text(
            "".join(line + "\n" for line in handles.core.telemetry_log_lines()))
        (outdir / "events.log").write_text(
            "".join(line + "\n" for line in handles.core.event_log_lines()))
        print(f"flushed logs to {outdir}")
    return 0


def _cmd_version(args: argparse.Namespace) -> int:
    try:
        version = metadata.version("tunnelguard")
    except metadata.PackageNotFoundError:
        version = "0+unknown"
    print(f"tunnelguard {version}")
    return 0


# ---------------------------------------------------------------------------
# parser / entry
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tunnelguard",
        description="Estate telemetry over userspace tunnels: run scenarios, "
                    "inspect captures, serve the live API.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run-scenario", help="run a scenario document to completion")
    run.add_argument("scenario", help="path to a scenario JSON document")
    run.add_argument("--out", default=None, metavar="DIR",
                     help="write reports, logs and figures here")
    run.add_argument("--no-figures", action="store_true",
                     help="skip figure rendering even when --out is given")
    run.set_defaults(fn=_cmd_run)

    sniff = sub.add_parser("sniff-report", help="summarize a run's capture")
    sniff.add_argument("capture", help="output dir, capture_report.json, or capture.log")
    sniff.add_argument("--json", action="store_true", help="machine-readable output")
    sniff.set_defaults(fn=_cmd_sniff)

    serve = sub.add_parser("serve", help="run live with the HTTP API attached")
    serve.add_argument("scenario", help="path to a scenario JSON document")
    serve.add_argument("--bind", default="127.0.0.1:8080", metavar="HOST:PORT")
    serve.add_argument("--fast", action="store_true",
                       help="no pacing: burn through virtual time")
    serve.add_argument("--ui", default=None, metavar="DIR",
                       help="static directory to serve at / (operator console bundle)")
    serve.add_argument("--out", default=None, metavar="DIR",
                       help="where to flush logs on shutdown (default <scenario>_logs)")
    serve.set_defaults(fn=_cmd_serve)

    version = sub.add_parser("version", help="print the package version")
    version.set_defaults(fn=_cmd_version)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # contract: never a traceback on bad input
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
