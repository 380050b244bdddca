"""Out-of-process clip-encoder service (mock and pretrained-model backends)."""

from .mockenc import MockEncoder
from .server import BridgeServer, serve_mock, serve_stdio

__all__ = ["MockEncoder", "BridgeServer", "serve_mock", "serve_stdio"]
