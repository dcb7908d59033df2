"""JSON-lines protocol server.

One request per line, one response per line.  Malformed input never kills a
connection: the server answers with an error frame and keeps reading.  The
server holds no per-request state, so responses are independent of request
order.

Frames (canonical encoding: compact separators, field order as below):
    {"op":"hello","version":1}   -> {"op":"meta","num_classes":K,"input":[C,H,W]}
    {"op":"predict","id":n,"shape":[B,C,H,W],"dtype":"f32le","data":b64}
                                 -> {"op":"logits","id":n,"shape":[B,K],"data":b64}
    anything else                -> {"op":"error","id":n-or-null,"msg":"..."}
"""

from __future__ import annotations

import base64
import json
import socket
import sys
import threading

import numpy as np

from .nets import ServedModel

PROTOCOL_VERSION = 1


def _frame(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def _error(request_id, msg: str) -> str:
    return _frame({"op": "error", "id": request_id, "msg": msg})


def handle_line(model: ServedModel, line: str) -> str:
    """Map one request line to one response line; never raises."""
    try:
        req = json.loads(line)
    except json.JSONDecodeError:
        return _error(None, "request is not valid JSON")
    if not isinstance(req, dict):
        return _error(None, "request must be a JSON object")
    op = req.get("op")
    request_id = req.get("id")

    if op == "hello":
        if req.get("version") != PROTOCOL_VERSION:
            return _error(request_id, f"unsupported protocol version {req.get('version')!r}")
        return _frame(
            {"op": "meta", "num_classes": model.num_classes, "input": list(model.input_shape)}
        )

    if op == "predict":
        try:
            shape = [int(v) for v in req["shape"]]
            if req.get("dtype") != "f32le":
                raise ValueError(f"unsupported dtype {req.get('dtype')!r}")
            raw = base64.b64decode(req["data"], validate=True)
            count = 1
            for d in shape:
                count *= d
            if len(raw) != 4 * count:
                raise ValueError(f"payload holds {len(raw)} bytes, expected {4 * count}")
            batch = np.frombuffer(raw, dtype="<f4").reshape(shape)
            logits = model.logits(batch)
            payload = base64.b64encode(np.ascontiguousarray(logits, dtype="<f4").tobytes()).decode("ascii")
            return _frame({"op": "logits", "id": request_id, "shape": list(logits.shape), "data": payload})
        except (KeyError, TypeError, ValueError) as exc:
            return _error(request_id, str(exc))

    return _error(request_id, f"unknown op {op!r}")


def serve_stdio(model: ServedModel) -> None:
    """Serve over this process's stdin/stdout until EOF."""
    out = sys.stdout
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        out.write(handle_line(model, line) + "\n")
        out.flush()


def _serve_connection(model: ServedModel, conn: socket.socket) -> None:
    buf = b""
    with conn:
        while True:
            try:
                chunk = conn.recv(65536)
            except OSError:
                return
            if not chunk:
                return
            buf += chunk
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                text = line.decode("utf-8", errors="replace").strip()
                if not text:
                    continue
                try:
                    conn.sendall((handle_line(model, text) + "\n").encode("utf-8"))
                except OSError:
                    return


class TcpServer:
    """Threaded TCP front end; one worker per connection."""

    def __init__(self, model: ServedModel, host: str = "127.0.0.1", port: int = 0):
        self.model = model
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(16)
        self.host, self.port = self._sock.getsockname()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def serve_forever(self) -> None:
        while not self._stop.is_set():
            try:
                self._sock.settimeout(0.2)
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(
                target=_serve_connection, args=(self.model, conn), daemon=True
            ).start()

    def start_background(self) -> "TcpServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def close(self) -> None:
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass
        if self._thread is not None:
            self._thread.join(timeout=2)
