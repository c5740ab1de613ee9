"""Run the sidecar under uvicorn.

Checkpoint set and listen address come from flags or environment:
EMBEDSERVER_HOST, EMBEDSERVER_PORT, EMBEDSERVER_CONFIG (registry JSON),
EMBEDSERVER_PRELOAD (model name, or "none" to skip warm-loading).
"""

from __future__ import annotations

import argparse
import os

import uvicorn

from .app import create_app
from .registry import Registry, RegistryError, UnknownModelError, load_registry


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="embedserver", description="pooled sentence-embedding sidecar")
    ap.add_argument("--host", default=os.environ.get("EMBEDSERVER_HOST", "127.0.0.1"))
    ap.add_argument("--port", type=int, default=int(os.environ.get("EMBEDSERVER_PORT", "8098")))
    ap.add_argument("--config", default=os.environ.get("EMBEDSERVER_CONFIG"),
                    help="registry JSON; defaults to the built-in checkpoint set")
    ap.add_argument("--preload", default=os.environ.get("EMBEDSERVER_PRELOAD"),
                    help="model to warm-load at startup ('none' to disable); "
                         "defaults to the first registry entry")
    args = ap.parse_args(argv)

    try:
        registry = load_registry(args.config) if args.config else Registry()
        preload = args.preload if args.preload is not None else registry.names()[0]
        app = create_app(registry, preload=None if preload == "none" else preload)
    except (RegistryError, UnknownModelError) as exc:
        ap.exit(2, f"embedserver: {exc}\n")
        return 2  # unreachable; keeps type-checkers happy

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
