"""Command-line entry point.

Fatal setup problems (bad flags, missing model, missing runtime) are
reported on stderr and exit nonzero before the handshake, so the
pipeline side sees a clean spawn failure instead of a half-open
backend.
"""

from __future__ import annotations

import argparse
import sys

from .models import AdapterConfig, AdapterError
from .server import serve


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mavdet-adapter",
        description="serve a detector or patch classifier over stdio",
    )
    p.add_argument("--role", required=True, choices=("detector", "classifier"))
    p.add_argument("--model", help="path to an ONNX model")
    p.add_argument(
        "--stub",
        action="store_true",
        help="use the built-in heuristic model instead of weights",
    )
    p.add_argument(
        "--input-size", type=int, default=640, help="detector square input side"
    )
    p.add_argument(
        "--conf-floor", type=float, default=0.25, help="drop detections below this"
    )
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = AdapterConfig(
            role=args.role,
            model=args.model,
            stub=args.stub,
            input_size=args.input_size,
            conf_floor=args.conf_floor,
        )
        return serve(config)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
