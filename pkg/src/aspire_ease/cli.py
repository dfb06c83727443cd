"""Command line entry point; a thin client over the run/compare service.

    aspire-ease run <config.json> [--seed N] [--mode M] [--gamma X]
                    [--out DIR] [--server URL] [--<dotted.key>=<value> ...]
    aspire-ease compare <metrics.csv> <metrics.csv> ... [--eps E]
    aspire-ease serve [--host H] [--port P]

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
ASPIRE_LOG=debug|info|warning controls verbosity.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .client import ServiceClient, ServiceError

log = logging.getLogger("aspire_ease")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _setup_logging() -> None:
    level = os.environ.get("ASPIRE_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s",
                        force=True)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aspire-ease",
        description="Run and compare robust distributed-training simulations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one experiment from a JSON config")
    run_p.add_argument("config", help="path to the experiment config (JSON)")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--mode", default=None)
    run_p.add_argument("--gamma", type=float, default=None)
    run_p.add_argument("--out", default=None, help="output directory (default: cwd)")
    run_p.add_argument("--server", default=None, help="remote service URL")

    cmp_p = sub.add_parser("compare", help="summarize and ratio >= 2 metric files")
    cmp_p.add_argument("files", nargs="+", help="metrics.csv files")
    cmp_p.add_argument("--eps", type=float, default=1e-3)
    cmp_p.add_argument("--server", default=None)

    srv_p = sub.add_parser("serve", help="start the HTTP service")
    srv_p.add_argument("--host", default="127.0.0.1")
    srv_p.add_argument("--port", type=int, default=8000)
    return parser


def _parse_overrides(extra: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for item in extra:
        if not item.startswith("--") or "=" not in item:
            raise ValueError(f"unrecognized argument {item!r}; expected --key=value")
        key, _, value = item[2:].partition("=")
        if not key:
            raise ValueError(f"empty override key in {item!r}")
        overrides[key] = value
    return overrides


def _cmd_run(args, extra: list[str]) -> int:
    try:
        overrides = _parse_overrides(extra)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    path = Path(args.config)
    if not path.exists():
        print(f"error: config file not found: {path}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.mode is not None:
        overrides["mode"] = json.dumps(args.mode)
    if args.gamma is not None:
        overrides["uncertainty.gamma"] = str(args.gamma)

    out_dir = Path(args.out) if args.out else Path.cwd()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        with ServiceClient(args.server) as client:
            result = client.run(raw, overrides)
    except ServiceError as exc:
        stream = sys.stderr
        print(f"error: {exc.detail}", file=stream)
        return EXIT_CONFIG if exc.status_code in (400, 422) else EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    (out_dir / "metrics.csv").write_text(result["metrics_csv"], encoding="utf-8")
    (out_dir / "trace.jsonl").write_text(result["trace_jsonl"], encoding="utf-8")
    (out_dir / "resolved-config.json").write_text(
        json.dumps(result["resolved_config"], indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    summary = result["summary"]
    log.info("run finished: %s", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_compare(args) -> int:
    entries = []
    for name in args.files:
        path = Path(name)
        if not path.exists():
            print(f"error: metrics file not found: {path}", file=sys.stderr)
            return EXIT_CONFIG
        entry = {"name": path.stem if path.stem != "metrics" else path.parent.name or path.stem,
                 "metrics_csv": path.read_text(encoding="utf-8"), "config": None}
        sibling = path.parent / "resolved-config.json"
        if sibling.exists():
            try:
                entry["config"] = json.loads(sibling.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                pass
        entries.append(entry)
    try:
        with ServiceClient(args.server) as client:
            result = client.compare(entries, eps=args.eps)
    except ServiceError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return EXIT_CONFIG if exc.status_code in (400, 422) else EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(result["table"], end="")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args, extra = parser.parse_known_args(argv)
    if args.command == "run":
        return _cmd_run(args, extra)
    if extra:
        print(f"error: unrecognized arguments: {' '.join(extra)}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "compare":
        return _cmd_compare(args)
    if args.command == "serve":
        return _cmd_serve(args)
    parser.error(f"unknown command {args.command!r}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
