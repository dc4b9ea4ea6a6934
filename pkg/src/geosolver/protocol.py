"""NDJSON wire protocol between the engine and a theorem predictor.

One UTF-8 JSON object per line over a localhost socket.  Handshake:
engine sends {"type":"hello","theorems":[...]}, predictor answers
{"type":"ready","m":M}.  Each {"type":"predict","id":N,...} request gets
a {"type":"scores","id":N,"scores":[...]} response matched by id.
Unknown fields are ignored.
"""

from __future__ import annotations

import json
import socket
import socketserver
from dataclasses import dataclass


class ProtocolError(Exception):
    pass


def _send(wfile, obj: dict) -> None:
    wfile.write((json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8"))
    wfile.flush()


def _recv(rfile) -> dict | None:
    line = rfile.readline()
    if not line:
        return None
    try:
        obj = json.loads(line.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ProtocolError(f"malformed line from peer: {e}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("protocol messages must be JSON objects")
    return obj


def parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ProtocolError(f"address must be host:port, got {addr!r}")
    return host, int(port)


class PredictorClient:
    """Blocking client; responses are matched by id, so pipelined or
    out-of-order replies still resolve."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._rfile = sock.makefile("rb")
        self._wfile = sock.makefile("wb")
        self._pending: dict[int, list[float]] = {}
        self._next_id = 0
        self.m: int | None = None

    @classmethod
    def connect(cls, addr: str, timeout: float = 10.0, read_timeout: float = 120.0) -> "PredictorClient":
        host, port = parse_addr(addr)
        sock = socket.create_connection((host, port), timeout=timeout)
        # scoring a large state can take a while; reads get their own budget
        sock.settimeout(read_timeout)
        return cls(sock)

    def handshake(self, theorems: list[str]) -> int:
        _send(self._wfile, {"type": "hello", "theorems": theorems})
        reply = _recv(self._rfile)
        if reply is None:
            raise ProtocolError("connection closed during handshake")
        if reply.get("type") == "error":
            raise ProtocolError(f"predictor refused handshake: {reply.get('message')}")
        if reply.get("type") != "ready":
            raise ProtocolError(f"expected ready, got {reply.get('type')!r}")
        self.m = int(reply["m"])
        if self.m != len(theorems):
            raise ProtocolError(
                f"vocabulary size mismatch: sent {len(theorems)}, predictor has {self.m}"
            )
        return self.m

    def score(self, graph_payload: dict) -> list[float]:
        if self.m is None:
            raise ProtocolError("handshake not completed")
        request_id = self._next_id
        self._next_id += 1
        message = {"type": "predict", "id": request_id}
        message.update(graph_payload)
        _send(self._wfile, message)
        return self._await(request_id)

    def _await(self, request_id: int) -> list[float]:
        while request_id not in self._pending:
            reply = _recv(self._rfile)
            if reply is None:
                raise ProtocolError("connection closed while awaiting scores")
            if reply.get("type") != "scores":
                raise ProtocolError(f"expected scores, got {reply.get('type')!r}")
            self._pending[int(reply["id"])] = list(reply["scores"])
        scores = self._pending.pop(request_id)
        if self.m is not None and len(scores) != self.m:
            raise ProtocolError(f"expected {self.m} scores, got {len(scores)}")
        for s in scores:
            if not isinstance(s, (int, float)) or s != s:
                raise ProtocolError("scores must be finite numbers")
        return scores

    def close(self) -> None:
        # the makefile handles keep the fd open; close them too so the
        # server sees EOF and can finish the request
        for closer in (self._rfile, self._wfile, self._sock):
            try:
                closer.close()
            except OSError:
                pass


@dataclass
class ScoreFn:
    """Server-side scorer: called with the theorem list and a predict payload."""

    fn: object

    def __call__(self, theorems: list[str], payload: dict) -> list[float]:
        return self.fn(theorems, payload)


class _PredictorHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        theorems: list[str] | None = None
        while True:
            try:
                message = _recv(self.rfile)
            except ProtocolError:
                return
            if message is None:
                return
            kind = message.get("type")
            if kind == "hello":
                theorems = [str(t) for t in message.get("theorems", [])]
                verdict = self.server.check_vocabulary(theorems)
                if verdict is not None:
                    _send(self.wfile, {"type": "error", "message": verdict})
                    return
                _send(self.wfile, {"type": "ready", "m": len(theorems)})
            elif kind == "predict":
                if theorems is None:
                    _send(self.wfile, {"type": "error", "message": "hello required first"})
                    return
                scores = self.server.score_fn(theorems, message)
                _send(self.wfile, {
                    "type": "scores",
                    "id": int(message["id"]),
                    "scores": [float(s) for s in scores],
                })
            else:
                _send(self.wfile, {"type": "error", "message": f"unknown type {kind!r}"})
                return


class PredictorServer(socketserver.TCPServer):
    """One connection at a time; requests answered in arrival order."""

    allow_reuse_address = True

    def __init__(self, addr: str, score_fn, expected_vocab: list[str] | None = None):
        host, port = parse_addr(addr)
        super().__init__((host, port), _PredictorHandler)
        self.score_fn = score_fn
        self.expected_vocab = expected_vocab

    def check_vocabulary(self, theorems: list[str]) -> str | None:
        if self.expected_vocab is not None and theorems != self.expected_vocab:
            return "theorem vocabulary mismatch"
        return None

    @property
    def bound_addr(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"
