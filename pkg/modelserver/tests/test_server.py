import base64
import json
import socket
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from modelserver.nets import ServedModel, load_manifest, load_ref
from modelserver.server import TcpServer, handle_line

ROOT = Path(__file__).resolve().parent.parent.parent
PROTOCOL = ROOT / "fixtures" / "protocol"


def constant_model(num_classes=2, input_shape=(3, 2, 2)):
    return ServedModel(
        {"kind": "constant-oracle", "num_classes": num_classes, "input_shape": list(input_shape)},
        {},
    )


def predict_line(request_id, arr):
    arr = np.asarray(arr, dtype=np.float32)
    return json.dumps(
        {
            "op": "predict",
            "id": request_id,
            "shape": list(arr.shape),
            "dtype": "f32le",
            "data": base64.b64encode(arr.astype("<f4").tobytes()).decode("ascii"),
        },
        separators=(",", ":"),
    )


def decode_logits(reply_line):
    reply = json.loads(reply_line)
    assert reply["op"] == "logits", reply
    raw = base64.b64decode(reply["data"])
    return np.frombuffer(raw, dtype="<f4").reshape(reply["shape"]).copy()


# ---------------------------------------------------------------------------
# frame handling


def test_hello_reports_meta():
    reply = json.loads(handle_line(constant_model(7, (3, 8, 8)), '{"op":"hello","version":1}'))
    assert reply == {"op": "meta", "num_classes": 7, "input": [3, 8, 8]}


def test_hello_golden_transcript_byte_for_byte():
    request = (PROTOCOL / "hello_request.txt").read_text().rstrip("\n")
    golden = (PROTOCOL / "meta_response.txt").read_text().rstrip("\n")
    assert handle_line(constant_model(2, (3, 2, 2)), request) == golden


def test_predict_golden_request_is_served():
    request = (PROTOCOL / "predict_request.txt").read_text().rstrip("\n")
    model = constant_model(2, (3, 2, 2))
    logits = decode_logits(handle_line(model, request))
    assert logits.shape == (1, 2)
    assert np.array_equal(logits, np.zeros((1, 2), dtype=np.float32))


def test_wrong_version_hello_errors():
    reply = json.loads(handle_line(constant_model(), '{"op":"hello","version":2}'))
    assert reply["op"] == "error"
    assert "version" in reply["msg"]


def test_garbage_line_yields_error_frame_and_connection_survives():
    model = constant_model()
    reply = json.loads(handle_line(model, "this is not json"))
    assert reply["op"] == "error"
    # next request on the same logical connection still works
    follow_up = handle_line(model, predict_line(5, np.zeros((1, 3, 2, 2))))
    assert json.loads(follow_up)["op"] == "logits"


def test_decode_failures_echo_the_request_id():
    model = constant_model()
    bad_payload = json.dumps(
        {"op": "predict", "id": 9, "shape": [1, 3, 2, 2], "dtype": "f32le", "data": "AAAA"},
        separators=(",", ":"),
    )
    reply = json.loads(handle_line(model, bad_payload))
    assert reply["op"] == "error" and reply["id"] == 9

    bad_dtype = json.dumps(
        {"op": "predict", "id": 10, "shape": [1], "dtype": "f64le", "data": "AAAAAAAAAAA="},
        separators=(",", ":"),
    )
    reply = json.loads(handle_line(model, bad_dtype))
    assert reply["op"] == "error" and reply["id"] == 10


def test_shape_mismatch_is_an_error_not_a_crash():
    model = constant_model(2, (3, 2, 2))
    reply = json.loads(handle_line(model, predict_line(1, np.zeros((1, 1, 2, 2)))))
    assert reply["op"] == "error"


def test_statelessness_same_request_same_response():
    model = constant_model()
    line = predict_line(3, np.full((2, 3, 2, 2), 0.25))
    first = handle_line(model, line)
    handle_line(model, predict_line(4, np.zeros((1, 3, 2, 2))))  # interleave another request
    assert handle_line(model, line) == first


# ---------------------------------------------------------------------------
# served math vs engine builtins


@pytest.mark.parametrize("name", ["linear8", "mlp32"])
def test_fixture_weights_match_engine_builtin(name):
    from igaff.imagecore import Batch
    from igaff.models import load_model

    manifest = ROOT / "fixtures" / "models" / name / "model.json"
    served = load_manifest(manifest)
    builtin = load_model(manifest)
    rng = np.random.default_rng(8)
    batch = rng.uniform(0, 1, (4, *served.input_shape)).astype(np.float32)
    served_logits = served.logits(batch)
    builtin_logits = builtin.predict(Batch(batch))
    assert np.max(np.abs(served_logits - builtin_logits)) < 1e-4


def test_pretrained_registry_resolves_smoke_model():
    model = load_ref("pretrained:smoke-mlp")
    assert model.num_classes == 4
    assert model.input_shape == (3, 32, 32)
    assert model.norm_mean is not None  # normalization lives server-side
    with pytest.raises(ValueError, match="unknown pretrained"):
        load_ref("pretrained:nope")


def test_normalization_changes_logits():
    manifest = ROOT / "modelserver" / "models" / "smoke-mlp" / "model.json"
    spec = json.loads(manifest.read_text())
    served = load_manifest(manifest)
    stripped_spec = {k: v for k, v in spec.items() if k != "normalize"}
    stripped = ServedModel(stripped_spec, {k: served.tensors[k] for k in served.tensors})
    batch = np.random.default_rng(0).uniform(0, 1, (2, 3, 32, 32)).astype(np.float32)
    assert not np.allclose(served.logits(batch), stripped.logits(batch))


# ---------------------------------------------------------------------------
# transports


def test_tcp_server_round_trip():
    model = constant_model(3, (1, 2, 2))
    server = TcpServer(model).start_background()
    try:
        with socket.create_connection((server.host, server.port), timeout=5) as conn:
            conn.sendall(b'{"op":"hello","version":1}\n')
            fh = conn.makefile("rb")
            meta = json.loads(fh.readline())
            assert meta["num_classes"] == 3
            conn.sendall((predict_line(0, np.zeros((2, 1, 2, 2))) + "\n").encode())
            logits = decode_logits(fh.readline().decode())
            assert logits.shape == (2, 3)
    finally:
        server.close()


def test_stdio_server_round_trip(tmp_path):
    manifest = ROOT / "fixtures" / "models" / "linear8" / "model.json"
    proc = subprocess.Popen(
        [sys.executable, "-m", "modelserver.cli", "--stdio", "--model", f"fixture:{manifest}"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
    )
    try:
        proc.stdin.write('{"op":"hello","version":1}\n')
        proc.stdin.flush()
        meta = json.loads(proc.stdout.readline())
        assert meta == {"op": "meta", "num_classes": 4, "input": [3, 8, 8]}
        proc.stdin.write(predict_line(0, np.full((1, 3, 8, 8), 0.5)) + "\n")
        proc.stdin.flush()
        logits = decode_logits(proc.stdout.readline())
        assert logits.shape == (1, 4)
    finally:
        proc.stdin.close()
        proc.terminate()
        proc.wait(timeout=5)
