import io
import json
import socket
import sys
import threading
from pathlib import Path

import numpy as np
import pytest

from specdecode.bridge import ExternalModel, bridge_external, serve
from specdecode.decode import GenerationConfig, beam_search, generate_batch, topk_sample
from specdecode.errors import BridgeTimeout, InvalidTokenId, ProtocolError, SizeMismatch
from specdecode.lm import FunctionModel
from specdecode.vocab import VocabMap

import echo_server

ECHO = [sys.executable, str(Path(__file__).with_name("echo_server.py"))]


def scripted(*frames):
    """Reader preloaded with server frames, plus a sink for client requests."""
    data = "".join(json.dumps(f) + "\n" for f in frames).encode()
    return io.BytesIO(data), io.BytesIO()


def test_handshake_and_logits():
    reader, writer = scripted({"type": "hello", "vocab": list("abcde")},
                              {"type": "logits", "id": 0, "values": [0.0, 1.0, 2.0, 3.0, 4.0]})
    m = bridge_external(reader, writer, timeout=2)
    assert len(m.vocab) == 5
    lv = m.next_logits([1, 2])
    assert list(lv.values) == [0.0, 1.0, 2.0, 3.0, 4.0] and lv.step_index == 2
    assert json.loads(writer.getvalue()) == {"type": "logits", "id": 0, "prefix": [1, 2]}


def test_short_response_is_size_mismatch():
    reader, writer = scripted({"type": "hello", "vocab": list("abcde")},
                              {"type": "logits", "id": 0, "values": [0.0, 1.0, 2.0, 3.0]})
    with pytest.raises(SizeMismatch):
        bridge_external(reader, writer, timeout=2).next_logits([])


@pytest.mark.parametrize("frame", [
    {"type": "logits", "id": 7, "values": [0.0] * 3},
    {"type": "other", "id": 0},
    {"type": "logits", "id": 0, "values": "nope"},
    {"type": "error", "id": 0, "message": "boom"},
])
def test_bad_responses_are_protocol_errors(frame):
    reader, writer = scripted({"type": "hello", "vocab": list("abc")}, frame)
    with pytest.raises(ProtocolError):
        bridge_external(reader, writer, timeout=2).next_logits([])


def test_bad_handshake():
    reader, writer = scripted({"type": "logits"})
    with pytest.raises(ProtocolError):
        bridge_external(reader, writer, timeout=2)
    with pytest.raises(ProtocolError):
        bridge_external(io.BytesIO(b"garbage\n"), io.BytesIO(), timeout=2)


def test_closed_stream():
    reader, writer = scripted({"type": "hello", "vocab": list("abc")})
    m = bridge_external(reader, writer, timeout=2)
    with pytest.raises(ProtocolError):
        m.next_logits([])


def test_invalid_id_checked_client_side():
    reader, writer = scripted({"type": "hello", "vocab": list("abc")})
    with pytest.raises(InvalidTokenId):
        bridge_external(reader, writer, timeout=2).next_logits([3])


def test_subprocess_echo_matches_in_process():
    inproc = FunctionModel(VocabMap(tuple(echo_server.VOCAB)), echo_server.logits)
    with ExternalModel.spawn(ECHO, timeout=10) as remote:
        assert remote.vocab == inproc.vocab
        for prefix in ([], [1, 2, 3], [5, 5]):
            assert np.array_equal(remote.next_logits(prefix).values, inproc.next_logits(prefix).values)
        prompt = remote.encode("cryptography is used by")
        assert prompt == [1, 2, 3, 4]
        for cfg in (GenerationConfig(mode="beam", beam_width=3, max_new_tokens=4),
                    GenerationConfig(mode="topk", k=5, max_new_tokens=6, seed=42)):
            a = generate_batch(remote, prompt, None, cfg, m=4)
            b = generate_batch(inproc, prompt, None, cfg, m=4)
            assert a == b


@pytest.mark.parametrize("flag, exc", [("--short", SizeMismatch), ("--garbage", ProtocolError)])
def test_subprocess_errors(flag, exc):
    with ExternalModel.spawn(ECHO + [flag], timeout=10) as remote:
        with pytest.raises(exc):
            remote.next_logits([])


def test_timeout():
    with ExternalModel.spawn(ECHO + ["--silent"], timeout=0.3) as remote:
        with pytest.raises(BridgeTimeout):
            remote.next_logits([])


def test_serve_over_socket(tiny_model):
    srv = socket.socket()
    srv.bind(("127.0.0.1", 0))
    srv.listen(1)
    port = srv.getsockname()[1]

    def run():
        conn, _ = srv.accept()
        with conn, conn.makefile("rb") as r, conn.makefile("wb") as w:
            serve(tiny_model, r, w)

    t = threading.Thread(target=run, daemon=True)
    t.start()
    with ExternalModel.connect("127.0.0.1", port, timeout=10) as remote:
        assert remote.can_encode
        assert remote.encode("a b zebra") == tiny_model.encode("a b zebra")
        cfg = GenerationConfig(mode="topk", k=4, max_new_tokens=5, seed=3)
        assert topk_sample(remote, [3], None, cfg) == topk_sample(tiny_model, [3], None, cfg)
        assert beam_search(remote, [3], None, GenerationConfig(max_new_tokens=3)) == \
            beam_search(tiny_model, [3], None, GenerationConfig(max_new_tokens=3))
        with pytest.raises(ProtocolError):
            remote._call("bogus")
    t.join(timeout=5)
    srv.close()
