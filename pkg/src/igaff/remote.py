"""Wire-protocol client that lets the engine attack any external classifier.

Framing is JSON lines: one request object per line, one response object per
line, over TCP (``host:port``) or the stdio of a spawned server process
(``stdio:<command ...>``).  Tensor payloads travel as base64-encoded little-
endian float32, so any language can implement the other end.

Handshake:    {"op":"hello","version":1}
              -> {"op":"meta","num_classes":K,"input":[C,H,W]}
Prediction:   {"op":"predict","id":n,"shape":[B,C,H,W],"dtype":"f32le","data":"..."}
              -> {"op":"logits","id":n,"shape":[B,K],"data":"..."}
Servers report failures as {"op":"error","id":n,"msg":"..."}.

One request is in flight per connection; a RemoteModel serializes its own
callers so it satisfies the VictimModel contract under concurrent scoring.
"""

from __future__ import annotations

import base64
import json
import os
import selectors
import shlex
import socket
import subprocess
import threading

import numpy as np

from .imagecore import Batch
from .models import VictimModel

PROTOCOL_VERSION = 1
ENDPOINT_ENV_VAR = "IGAFF_MODEL_ENDPOINT"
DEFAULT_TIMEOUT_MS = 10_000


class ProtocolError(RuntimeError):
    """Peer sent something the protocol does not allow."""


class VersionMismatchError(ProtocolError):
    pass


def encode_f32(arr: np.ndarray) -> str:
    """Base64 of the little-endian float32 bytes of an array."""
    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return base64.b64encode(data).decode("ascii")


def decode_f32(data: str, shape) -> np.ndarray:
    raw = base64.b64decode(data, validate=True)
    count = int(np.prod(shape))
    if len(raw) != 4 * count:
        raise ProtocolError(f"payload holds {len(raw)} bytes, expected {4 * count}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def dump_frame(obj: dict) -> str:
    """Canonical one-line JSON encoding (insertion order, no spaces)."""
    return json.dumps(obj, separators=(",", ":"))


def hello_frame() -> str:
    return dump_frame({"op": "hello", "version": PROTOCOL_VERSION})


def predict_frame(request_id: int, batch_data: np.ndarray) -> str:
    return dump_frame(
        {
            "op": "predict",
            "id": request_id,
            "shape": list(batch_data.shape),
            "dtype": "f32le",
            "data": encode_f32(batch_data),
        }
    )


class _LineTransport:
    """Blocking line-oriented transport with a receive timeout."""

    def __init__(self, timeout_ms: int):
        self.timeout_ms = timeout_ms
        self._buffer = b""
        self._selector = selectors.DefaultSelector()

    def _read_fd(self) -> int:
        raise NotImplementedError

    def _write_bytes(self, data: bytes) -> None:
        raise NotImplementedError

    def send_line(self, line: str) -> None:
        self._write_bytes(line.encode("utf-8") + b"\n")

    def recv_line(self) -> str:
        deadline = self.timeout_ms / 1000.0
        while b"\n" not in self._buffer:
            ready = self._selector.select(timeout=deadline)
            if not ready:
                raise TimeoutError(f"no response within {self.timeout_ms} ms")
            chunk = os.read(self._read_fd(), 65536)
            if not chunk:
                raise ProtocolError("transport closed mid-response")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8")

    def close(self) -> None:
        self._selector.close()


class _TcpTransport(_LineTransport):
    def __init__(self, host: str, port: int, timeout_ms: int):
        super().__init__(timeout_ms)
        self._sock = socket.create_connection((host, port), timeout=timeout_ms / 1000.0)
        self._sock.setblocking(False)
        self._selector.register(self._sock, selectors.EVENT_READ)

    def _read_fd(self) -> int:
        return self._sock.fileno()

    def _write_bytes(self, data: bytes) -> None:
        self._sock.setblocking(True)
        try:
            self._sock.sendall(data)
        finally:
            self._sock.setblocking(False)

    def close(self) -> None:
        super().close()
        self._sock.close()


class _StdioTransport(_LineTransport):
    """Talks to a spawned server over its stdin/stdout."""

    def __init__(self, command: str, timeout_ms: int):
        super().__init__(timeout_ms)
        self._proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        self._selector.register(self._proc.stdout, selectors.EVENT_READ)

    def _read_fd(self) -> int:
        return self._proc.stdout.fileno()

    def _write_bytes(self, data: bytes) -> None:
        self._proc.stdin.write(data)
        self._proc.stdin.flush()

    def close(self) -> None:
        super().close()
        self._proc.stdin.close()
        self._proc.terminate()
        self._proc.wait(timeout=5)


def _open_transport(endpoint: str, timeout_ms: int) -> _LineTransport:
    if endpoint.startswith("stdio:"):
        return _StdioTransport(endpoint[len("stdio:") :], timeout_ms)
    if endpoint.startswith("tcp:"):
        endpoint = endpoint[len("tcp:") :]
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port or stdio:<command>, got {endpoint!r}")
    return _TcpTransport(host, int(port), timeout_ms)


class RemoteModel(VictimModel):
    """A served classifier behind the wire protocol, usable as a VictimModel."""

    def __init__(self, transport: _LineTransport, num_classes: int, input_shape):
        self._transport = transport
        self.num_classes = num_classes
        self.input_shape = tuple(input_shape)
        self._next_id = 0
        self._lock = threading.Lock()

    def predict(self, batch: Batch) -> np.ndarray:
        self._check_batch(batch)
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            self._transport.send_line(predict_frame(request_id, batch.data))
            reply = json.loads(self._transport.recv_line())
        if reply.get("op") == "error":
            raise ProtocolError(f"server error: {reply.get('msg')}")
        if reply.get("op") != "logits":
            raise ProtocolError(f"expected a logits frame, got {reply.get('op')!r}")
        if reply.get("id") != request_id:
            raise ProtocolError(f"response id {reply.get('id')} does not echo request id {request_id}")
        shape = reply.get("shape")
        if (
            not isinstance(shape, list)
            or len(shape) != 2
            or shape[0] != batch.size
            or shape[1] != self.num_classes
        ):
            raise ProtocolError(f"logits shape {shape} does not match ({batch.size}, {self.num_classes})")
        return decode_f32(reply["data"], shape)

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "RemoteModel":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def handshake(endpoint: str | None = None, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> RemoteModel:
    """Open a connection, negotiate the protocol, and return the model."""
    if endpoint is None or endpoint == "":
        endpoint = os.environ.get(ENDPOINT_ENV_VAR, "")
        if not endpoint:
            raise ValueError(f"no endpoint given and {ENDPOINT_ENV_VAR} is not set")
    transport = _open_transport(endpoint, timeout_ms)
    try:
        transport.send_line(hello_frame())
        meta = json.loads(transport.recv_line())
    except Exception:
        transport.close()
        raise
    if meta.get("op") == "error":
        transport.close()
        raise ProtocolError(f"server error: {meta.get('msg')}")
    if meta.get("op") != "meta":
        transport.close()
        raise ProtocolError(f"expected a meta frame, got {meta.get('op')!r}")
    if "version" in meta and meta["version"] != PROTOCOL_VERSION:
        transport.close()
        raise VersionMismatchError(f"server speaks version {meta['version']}, client {PROTOCOL_VERSION}")
    try:
        num_classes = int(meta["num_classes"])
        input_shape = tuple(int(v) for v in meta["input"])
        if num_classes < 1 or len(input_shape) != 3:
            raise ValueError
    except (KeyError, TypeError, ValueError):
        transport.close()
        raise ProtocolError(f"malformed meta frame: {meta}") from None
    return RemoteModel(transport, num_classes, input_shape)


def remote_predict(model: RemoteModel, batch: Batch) -> np.ndarray:
    """Query the served classifier; logits come back bit-exact (f32 wire)."""
    return model.predict(batch)
