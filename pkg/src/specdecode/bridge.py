"""Newline-delimited JSON bridge to an out-of-process language model.

Wire protocol (UTF-8, one JSON object per line):

    server -> {"type":"hello","vocab":[...], "encode": true?}
    client -> {"type":"logits","id":N,"prefix":[ids]}
    server -> {"type":"logits","id":N,"values":[reals]}

``encode`` is an optional capability: when the hello advertises it, the
client may send ``{"type":"encode","id":N,"text":...}`` and expects
``{"type":"encode","id":N,"ids":[...]}``.  Without it prompts are encoded
word by word against the vocabulary.  A server may answer any request with
``{"type":"error","id":N,"message":...}``.
"""

from __future__ import annotations

import json
import math
import queue
import socket
import subprocess
import sys
import threading
from typing import IO, Sequence

import numpy as np

from .errors import BridgeTimeout, ProtocolError, SizeMismatch, SpecDecodeError
from .lm import LanguageModel, LogitVector, encode_words
from .vocab import VocabMap

_EOF = object()


class ExternalModel:
    """Client side of the bridge; satisfies :class:`~specdecode.lm.LanguageModel`.

    Requests are serialized per connection.  Use one instance per worker
    for parallel generation.
    """

    def __init__(self, reader: IO, writer: IO, timeout: float | None = 30.0,
                 process: subprocess.Popen | None = None, sock: socket.socket | None = None):
        self._reader = reader
        self._writer = writer
        self._timeout = timeout
        self._process = process
        self._sock = sock
        self._lock = threading.Lock()
        self._next_id = 0
        self._lines: queue.Queue = queue.Queue()
        threading.Thread(target=self._pump, daemon=True).start()
        try:
            hello = self._recv()
            if hello.get("type") != "hello" or not isinstance(hello.get("vocab"), list):
                raise ProtocolError(f"expected a hello frame with a vocab list, got {_short(hello)}")
            self.vocab = VocabMap(tuple(hello["vocab"]))
        except BaseException:
            self.close()
            raise
        self.can_encode = bool(hello.get("encode", False))

    def _pump(self):
        try:
            for line in iter(self._reader.readline, b"" if _is_binary(self._reader) else ""):
                self._lines.put(line)
        except (OSError, ValueError):
            pass
        self._lines.put(_EOF)

    def _recv(self) -> dict:
        try:
            line = self._lines.get(timeout=self._timeout)
        except queue.Empty:
            raise BridgeTimeout(f"no response from model server within {self._timeout}s") from None
        if line is _EOF:
            raise ProtocolError("model server closed the connection")
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        try:
            frame = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"malformed frame: {line.strip()[:80]!r}") from None
        if not isinstance(frame, dict):
            raise ProtocolError(f"frame is not a JSON object: {line.strip()[:80]!r}")
        return frame

    def _send(self, obj: dict) -> None:
        data = json.dumps(obj, separators=(",", ":")) + "\n"
        try:
            if _is_binary(self._writer):
                self._writer.write(data.encode("utf-8"))
            else:
                self._writer.write(data)
            self._writer.flush()
        except (OSError, ValueError) as e:
            raise ProtocolError(f"cannot write to model server: {e}") from None

    def _call(self, kind: str, **payload) -> dict:
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            self._send({"type": kind, "id": rid, **payload})
            resp = self._recv()
        if resp.get("type") == "error":
            raise ProtocolError(f"model server error: {resp.get('message', '')}")
        if resp.get("type") != kind or resp.get("id") != rid:
            raise ProtocolError(f"expected {kind!r} response id {rid}, got {_short(resp)}")
        return resp

    def next_logits(self, prefix: Sequence[int]) -> LogitVector:
        prefix = [int(i) for i in prefix]
        self.vocab.check_ids(prefix)
        values = self._call("logits", prefix=prefix).get("values")
        if not isinstance(values, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in values):
            raise ProtocolError("logits response needs a 'values' list of numbers")
        if len(values) != len(self.vocab):
            raise SizeMismatch(f"server sent {len(values)} logits for vocabulary of {len(self.vocab)}")
        if not all(math.isfinite(x) for x in values):
            raise ProtocolError("server sent non-finite logits")
        return LogitVector(np.array(values, dtype=np.float64), len(prefix))

    def encode(self, text: str) -> list[int]:
        if not self.can_encode:
            return encode_words(self.vocab, text)
        ids = self._call("encode", text=text).get("ids")
        if not isinstance(ids, list):
            raise ProtocolError("encode response needs an 'ids' list")
        self.vocab.check_ids(ids)
        return ids

    def close(self) -> None:
        for f in (self._writer,):
            try:
                f.close()
            except (OSError, ValueError):
                pass
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()
        if self._process is not None:
            try:
                self._process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._process.kill()
                self._process.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @classmethod
    def spawn(cls, argv: Sequence[str], timeout: float | None = 30.0) -> "ExternalModel":
        """Start ``argv`` as a subprocess speaking the protocol on stdin/stdout."""
        try:
            proc = subprocess.Popen(list(argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as e:
            raise SpecDecodeError(f"cannot start model server {argv[0]!r}: {e}") from None
        return cls(proc.stdout, proc.stdin, timeout=timeout, process=proc)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float | None = 30.0) -> "ExternalModel":
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(None)
        return cls(sock.makefile("rb"), sock.makefile("wb"), timeout=timeout, sock=sock)


def bridge_external(reader: IO, writer: IO, timeout: float | None = 30.0) -> ExternalModel:
    return ExternalModel(reader, writer, timeout=timeout)


def serve(model: LanguageModel, reader: IO = None, writer: IO = None) -> None:
    """Serve ``model`` over the protocol until the reader hits EOF."""
    reader = reader if reader is not None else sys.stdin.buffer
    writer = writer if writer is not None else sys.stdout.buffer
    binary = _is_binary(writer)

    def emit(obj):
        data = json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"
        writer.write(data.encode("utf-8") if binary else data)
        writer.flush()

    emit({"type": "hello", "vocab": list(model.vocab.id_to_surface), "encode": True})
    for line in iter(reader.readline, b"" if _is_binary(reader) else ""):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        rid = None
        try:
            req = json.loads(line)
            rid = req.get("id")
            if req.get("type") == "logits":
                values = model.next_logits(req["prefix"]).values
                emit({"type": "logits", "id": rid, "values": values.tolist()})
            elif req.get("type") == "encode":
                emit({"type": "encode", "id": rid, "ids": model.encode(req["text"])})
            else:
                emit({"type": "error", "id": rid, "message": f"unknown request type {req.get('type')!r}"})
        except Exception as e:  # report and keep serving
            emit({"type": "error", "id": rid, "message": f"{type(e).__name__}: {e}"})


def _is_binary(f: IO) -> bool:
    return not hasattr(f, "encoding") or "b" in getattr(f, "mode", "")


def _short(obj) -> str:
    s = json.dumps(obj)
    return s if len(s) <= 80 else s[:77] + "..."
