"""Line-delimited classification service with per-conversation sessions.

One JSON request per line: {conversation_id, speaker, timestamp_s, text}.
One JSON response per line: {labels, probabilities, low_confidence}, or
{error} for a malformed request (which leaves the session untouched).
Assistant lines extend the session history but come back unclassified.

Sessions are keyed by conversation_id and remember only what the causal
shallow features need: (speaker, timestamp, word count) per seen turn. The
same request stream therefore reproduces batch predictions exactly.
"""

from __future__ import annotations

import json
import socketserver
import threading
from dataclasses import dataclass, field
from typing import IO

from .classifier import MultiLabelModel, predict_labels
from .corpus import PARTICIPANT, SPEAKERS
from .featurize import shallow_from_history, tokenize, vector_from_parts


@dataclass
class ServeSession:
    conversation_id: str
    history: list[tuple[str, float, int]] = field(default_factory=list)  # (speaker, ts, wc)
    lock: threading.Lock = field(default_factory=threading.Lock)


class ServeEngine:
    """Shared immutable model plus mutable per-conversation session state."""

    def __init__(self, model: MultiLabelModel, fallback: bool = False):
        self.model = model
        self.fallback = fallback
        self._sessions: dict[str, ServeSession] = {}
        self._sessions_lock = threading.Lock()

    def _session(self, conversation_id: str) -> ServeSession:
        with self._sessions_lock:
            if conversation_id not in self._sessions:
                self._sessions[conversation_id] = ServeSession(conversation_id)
            return self._sessions[conversation_id]

    def handle_request(self, request: dict) -> dict:
        cid = request.get("conversation_id")
        speaker = request.get("speaker")
        ts = request.get("timestamp_s")
        text = request.get("text")
        if not isinstance(cid, str) or not cid:
            return {"error": "conversation_id must be a non-empty string"}
        if speaker not in SPEAKERS:
            return {"error": f"unknown speaker {speaker!r}"}
        if isinstance(ts, bool) or not isinstance(ts, (int, float)) or ts < 0:
            return {"error": "timestamp_s must be a number >= 0"}
        if not isinstance(text, str):
            return {"error": "text must be a string"}

        session = self._session(cid)
        with session.lock:
            if session.history and ts < session.history[-1][1]:
                return {"error": f"timestamp_s {ts} precedes the session's last turn"}
            tokens = tokenize(text)
            wc = len(tokens)
            if speaker != PARTICIPANT:
                session.history.append((speaker, float(ts), wc))
                return {"labels": [], "probabilities": {}, "low_confidence": False}
            shallow = shallow_from_history(
                session.history, speaker, float(ts), wc, self.model.slen_scope
            )
            session.history.append((speaker, float(ts), wc))
        vector = vector_from_parts(tokens, shallow, self.model.vocabulary, self.model.scaling)
        prediction = predict_labels(self.model, vector, self.fallback)
        return {
            "labels": sorted(prediction.labels),
            "probabilities": {k: prediction.probabilities[k] for k in self.model.catalog.labels},
            "low_confidence": prediction.low_confidence,
        }

    def handle_line(self, line: str) -> str:
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                response = {"error": "request is not an object"}
            else:
                response = self.handle_request(request)
        except json.JSONDecodeError as exc:
            response = {"error": f"not valid JSON ({exc.msg})"}
        return json.dumps(response, ensure_ascii=True)


def serve_stdio(engine: ServeEngine, stdin: IO[str], stdout: IO[str]) -> int:
    """Process request lines sequentially until the input stream ends."""
    handled = 0
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(engine.handle_line(line) + "\n")
        stdout.flush()
        handled += 1
    return handled


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        engine: ServeEngine = self.server.engine  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8")
            if not line.strip():
                continue
            self.wfile.write((engine.handle_line(line) + "\n").encode("utf-8"))
            self.wfile.flush()


class ServeServer(socketserver.ThreadingTCPServer):
    """TCP server speaking the line protocol; one thread per connection.

    Connections share the engine, so sessions span connections; requests
    within one conversation serialize on the session lock.
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], engine: ServeEngine):
        super().__init__(address, _LineHandler)
        self.engine = engine
