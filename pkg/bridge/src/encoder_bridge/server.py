"""Newline-delimited JSON encoder service.

Protocol (UTF-8, one JSON object per line):

    server -> client, once, on connect:
        {"hello": 1, "d": <int>, "model_name": <str>}
    client -> server, any number of times:
        {"id": <int>, "h": <int>, "w": <int>,
         "frames": [<base64 row-major uint8>, x8]}
    server -> client, in request order:
        {"id": <int>, "d": <int>,
         "embedding": <base64 of d little-endian float32>}
    on a malformed request (any reason):
        {"id": <id if recoverable, else null>, "error": <str>}

Malformed input never terminates the server; each connection is handled
independently and requests within a connection are answered in order.
"""

from __future__ import annotations

import base64
import json
import socketserver
import sys

import numpy as np

from .mockenc import CLIP_LEN, MockEncoder

PROTOCOL_VERSION = 1


def handshake_line(dim: int, model_name: str) -> bytes:
    return (
        json.dumps({"hello": PROTOCOL_VERSION, "d": dim,
                    "model_name": model_name}) + "\n"
    ).encode()


def error_line(req_id, code: str) -> bytes:
    return (json.dumps({"id": req_id, "error": code}) + "\n").encode()


def decode_request(line: bytes):
    """Returns (id, frames array) or raises ValueError('code')."""
    try:
        msg = json.loads(line)
    except json.JSONDecodeError:
        raise ValueError("bad_json") from None
    if not isinstance(msg, dict):
        raise ValueError("not_object")
    req_id = msg.get("id")
    if not isinstance(req_id, int):
        raise ValueError("bad_id")
    try:
        h, w = int(msg["h"]), int(msg["w"])
        frames = msg["frames"]
    except (KeyError, TypeError, ValueError):
        raise _tagged(req_id, "missing_fields") from None
    if h <= 0 or w <= 0 or h > 4096 or w > 4096:
        raise _tagged(req_id, "bad_dimensions")
    if not isinstance(frames, list) or len(frames) != CLIP_LEN:
        raise _tagged(req_id, "bad_frame_count")
    decoded = []
    for s in frames:
        if not isinstance(s, str):
            raise _tagged(req_id, "bad_frame_encoding")
        try:
            raw = base64.b64decode(s, validate=True)
        except Exception:
            raise _tagged(req_id, "bad_base64") from None
        if len(raw) != h * w:
            raise _tagged(req_id, "bad_frame_size")
        decoded.append(np.frombuffer(raw, dtype=np.uint8).reshape(h, w))
    return req_id, np.stack(decoded)


class _TaggedError(ValueError):
    def __init__(self, req_id, code):
        super().__init__(code)
        self.req_id = req_id
        self.code = code


def _tagged(req_id, code):
    return _TaggedError(req_id, code)


def response_line(req_id: int, vector: np.ndarray) -> bytes:
    payload = base64.b64encode(
        np.asarray(vector, dtype="<f4").tobytes()
    ).decode("ascii")
    return (
        json.dumps({"id": req_id, "d": int(len(vector)), "embedding": payload})
        + "\n"
    ).encode()


def serve_stream(rfile, wfile, encoder, model_name: str) -> None:
    """Handshake, then answer every line until EOF; never raises on input."""
    wfile.write(handshake_line(encoder.dim, model_name))
    wfile.flush()
    for line in rfile:
        if not line.strip():
            wfile.write(error_line(None, "empty_line"))
            wfile.flush()
            continue
        try:
            req_id, frames = decode_request(line)
        except _TaggedError as e:
            wfile.write(error_line(e.req_id, e.code))
            wfile.flush()
            continue
        except ValueError as e:
            wfile.write(error_line(None, str(e)))
            wfile.flush()
            continue
        try:
            vec = encoder.encode(frames)
        except Exception as e:  # encoder rejected the payload shape
            wfile.write(error_line(req_id, f"encode_failed:{type(e).__name__}"))
            wfile.flush()
            continue
        wfile.write(response_line(req_id, vec))
        wfile.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        try:
            serve_stream(self.rfile, self.wfile, self.server.encoder,
                         self.server.model_name)
        except (BrokenPipeError, ConnectionResetError):
            pass


class BridgeServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, encoder, model_name: str):
        super().__init__(address, _Handler)
        self.encoder = encoder
        self.model_name = model_name


def serve_mock(dim: int, seed: int, host: str, port: int) -> BridgeServer:
    """Construct (but do not run) a TCP server around the mock encoder."""
    return BridgeServer((host, port), MockEncoder(dim=dim, seed=seed),
                        f"mock-d{dim}-s{seed}")


def serve_model(model_id: str, pooling: str, host: str, port: int) -> BridgeServer:
    from .realenc import RealEncoder

    enc = RealEncoder(model_id, pooling=pooling)
    return BridgeServer((host, port), enc, model_id)


def serve_stdio(encoder, model_name: str) -> None:
    serve_stream(sys.stdin.buffer, sys.stdout.buffer, encoder, model_name)
