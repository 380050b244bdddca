"""Bridge service entry point.

    encoder-bridge --mock --port 7070 --dim 64 --seed 0
    encoder-bridge --model facebook/timesformer-base-finetuned-k400 --port 7070
    encoder-bridge --mock --stdio
"""

from __future__ import annotations

import argparse
import sys

from .mockenc import MockEncoder
from .server import serve_mock, serve_model, serve_stdio


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="encoder-bridge")
    parser.add_argument("--model", default=None,
                        help="Hugging Face video-model id to serve")
    parser.add_argument("--mock", action="store_true",
                        help="serve the deterministic mock encoder")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=7070)
    parser.add_argument("--stdio", action="store_true",
                        help="speak the protocol on stdin/stdout instead of TCP")
    parser.add_argument("--dim", type=int, default=64, help="mock embedding dim")
    parser.add_argument("--seed", type=int, default=0, help="mock projection seed")
    parser.add_argument("--pooling", default="mean", choices=("mean", "cls"))
    args = parser.parse_args(argv)

    if bool(args.model) == bool(args.mock):
        parser.error("exactly one of --model or --mock is required")

    if args.stdio:
        if args.mock:
            serve_stdio(MockEncoder(dim=args.dim, seed=args.seed),
                        f"mock-d{args.dim}-s{args.seed}")
        else:
            from .realenc import RealEncoder

            enc = RealEncoder(args.model, pooling=args.pooling)
            serve_stdio(enc, args.model)
        return 0

    if args.mock:
        server = serve_mock(args.dim, args.seed, args.host, args.port)
    else:
        server = serve_model(args.model, args.pooling, args.host, args.port)
    actual = server.server_address
    print(f"listening on {actual[0]}:{actual[1]}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
