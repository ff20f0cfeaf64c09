"""Command-line front end.

Thin client over the HTTP service: by default requests go to an in-process
app instance; --server routes them to a running instance instead.  Exit
codes: 0 success, 2 input error, 3 extraction error, 4 training error,
1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import httpx

from . import __version__
from .pipeline import FAILURE_RATE_LIMIT

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_EXTRACTION = 3
EXIT_TRAINING = 4

_EXIT_BY_CATEGORY = {
    "input": EXIT_INPUT,
    "extraction": EXIT_EXTRACTION,
    "training": EXIT_TRAINING,
    "internal": EXIT_INTERNAL,
}

# CLI flag destination -> PipelineConfig field (None payload values are
# dropped, so unset flags defer to the config file / defaults).
_FLAG_FIELDS = (
    "source",
    "data_path",
    "feature",
    "method",
    "t0",
    "seg_hop",
    "folds",
    "seed",
    "workers",
    "out_dir",
    "grid",
    "record_rate_hz",
    "target_rate_hz",
    "synth_subjects",
    "synth_segments",
    "synth_duration",
    "synth_snr_db",
    "synth_seed",
    "synth_rate_hz",
)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="INI config file")
    sub.add_argument("--server", help="base URL of a running service; default in-process")
    sub.add_argument("--source", choices=["fmcw", "cw", "synth"], dest="source")
    sub.add_argument("--data", dest="data_path", help="record file, manifest, or dataset dir")
    sub.add_argument("--feature", choices=["resp", "hb", "prop"], dest="feature")
    sub.add_argument("--method", dest="method", help="method ID A1..C3")
    sub.add_argument("--t0", type=float, dest="t0", help="segment length, s")
    sub.add_argument("--hop", type=float, dest="seg_hop", help="segment hop, s")
    sub.add_argument("--folds", type=int, dest="folds")
    sub.add_argument("--seed", type=int, dest="seed")
    sub.add_argument("--workers", type=int, dest="workers")
    sub.add_argument("--out", dest="out_dir", help="output directory")
    sub.add_argument("--grid", action="store_const", const=True, dest="grid",
                     help="grid-search the classifier before evaluating")
    sub.add_argument("--record-rate", type=float, dest="record_rate_hz")
    sub.add_argument("--target-rate", type=float, dest="target_rate_hz")
    sub.add_argument("--subjects", type=int, dest="synth_subjects")
    sub.add_argument("--segments", type=int, dest="synth_segments")
    sub.add_argument("--duration", type=float, dest="synth_duration")
    sub.add_argument("--snr", type=float, dest="synth_snr_db")
    sub.add_argument("--synth-seed", type=int, dest="synth_seed")
    sub.add_argument("--synth-rate", type=float, dest="synth_rate_hz")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitalid",
        description="Radar vital-sign biometric pipeline",
    )
    parser.add_argument("--version", action="version", version="vitalid %s" % __version__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("ingest", "standardize raw recordings into a CW dataset"),
        ("extract", "extract feature vectors into a CSV"),
        ("evaluate", "cross-validate a method on extracted features"),
        ("synth", "generate a synthetic labeled dataset"),
        ("dump-diagnostics", "write per-window fit and mel tables"),
    ):
        sub = subs.add_parser(name, help=desc)
        _add_common(sub)
        if name == "dump-diagnostics":
            sub.add_argument("--limit", type=int, default=4,
                             help="number of segments to diagnose")
    serve = subs.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _payload(args: argparse.Namespace) -> dict:
    overrides = {}
    for name in _FLAG_FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    return {"config_path": args.config, "config": overrides}


class _Client:
    """Uniform POST interface over in-process ASGI or a remote server."""

    def __init__(self, server: str | None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=3600.0)
        else:
            import warnings

            with warnings.catch_warnings():
                # This starlette build nags about an httpx successor that is
                # not on the index; the shim works fine.
                warnings.filterwarnings("ignore", message=".*httpx.*deprecated.*")
                from fastapi.testclient import TestClient

            from .app import create_app

            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> httpx.Response:
        return self._client.post(path, json=payload)

    def close(self) -> None:
        self._client.close()


def _error_exit(resp: httpx.Response) -> int:
    try:
        detail = resp.json().get("detail")
    except ValueError:
        detail = None
    if isinstance(detail, dict) and "category" in detail:
        print("error (%s): %s" % (detail["category"], detail["message"]), file=sys.stderr)
        return _EXIT_BY_CATEGORY.get(detail["category"], EXIT_INTERNAL)
    print("error (HTTP %d): %s" % (resp.status_code, detail), file=sys.stderr)
    # Bad request bodies are caught by service-side validation.
    return EXIT_INPUT if resp.status_code in (400, 422) else EXIT_INTERNAL


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK

    client = _Client(args.server)
    try:
        payload = _payload(args)
        if args.command == "synth":
            resp = client.post("/synth", payload)
            if resp.status_code != 200:
                return _error_exit(resp)
            body = resp.json()
            print("wrote %d records; manifest: %s" % (body["n_records"], body["manifest"]))
        elif args.command == "ingest":
            resp = client.post("/ingest", payload)
            if resp.status_code != 200:
                return _error_exit(resp)
            body = resp.json()
            print("ingested %d records; manifest: %s" % (body["n_records"], body["manifest"]))
        elif args.command == "extract":
            resp = client.post("/extract", payload)
            if resp.status_code != 200:
                return _error_exit(resp)
            body = resp.json()
            print(
                "extracted %d segments (%d failed) -> %s"
                % (body["n_rows"], body["n_failed"], body["features"])
            )
            if body["failure_rate"] > FAILURE_RATE_LIMIT:
                print(
                    "error (extraction): %.0f%% of segments failed"
                    % (100.0 * body["failure_rate"]),
                    file=sys.stderr,
                )
                return EXIT_EXTRACTION
        elif args.command == "evaluate":
            resp = client.post("/evaluate", payload)
            if resp.status_code != 200:
                return _error_exit(resp)
            body = resp.json()
            auc = body["macro_auc"]
            print(
                "method %s: accuracy=%.4f macro_f1=%.4f macro_auc=%s"
                % (
                    body["method"],
                    body["accuracy"],
                    body["macro_f1"],
                    ("%.4f" % auc) if auc is not None else "undefined",
                )
            )
            for kind, path in sorted(body["paths"].items()):
                print("  %s: %s" % (kind, path))
        elif args.command == "dump-diagnostics":
            payload["limit"] = args.limit
            resp = client.post("/diagnostics", payload)
            if resp.status_code != 200:
                return _error_exit(resp)
            for path in resp.json()["files"]:
                print(path)
        else:  # pragma: no cover - argparse enforces the choices
            print("unknown command %r" % args.command, file=sys.stderr)
            return EXIT_INPUT
    finally:
        client.close()
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
