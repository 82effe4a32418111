"""Shared fixtures: chain builders, a scripted generator, and a stub HTTP server."""

from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from stepsearch.core import ReasoningChain, ReasoningStep, Token
from stepsearch.generation.base import FinishReason, GeneratedStep


def tokens_from_text(text: str, first_logprob: float = -0.1) -> list[Token]:
    words = text.split()
    toks = [Token(text=words[0], logprob=first_logprob)]
    toks.extend(Token(text=" " + w, logprob=0.0) for w in words[1:])
    return toks


def chain_from_texts(*texts: str, answer: str | None = None) -> ReasoningChain:
    steps = [
        ReasoningStep.from_tokens(tokens_from_text(t), length_penalty=1.0)
        for t in texts
    ]
    return ReasoningChain(steps=steps, answer=answer)


class ScriptedGenerator:
    """Returns pre-scripted step texts in order; records every call."""

    def __init__(self, texts: list[str], logprob: float = -0.5):
        self.texts = list(texts)
        self.logprob = logprob
        self.calls = 0

    def generate_step(self, context, rng: random.Random) -> GeneratedStep:
        self.calls += 1
        if not self.texts:
            return GeneratedStep(tokens=(), finish_reason=FinishReason.EOS)
        text = self.texts.pop(0)
        return GeneratedStep(
            tokens=tuple(tokens_from_text(text, self.logprob)),
            finish_reason=FinishReason.STOP_MARKER,
        )

    def generate_chain(self, context, rng: random.Random, max_total_tokens: int) -> GeneratedStep:
        raise NotImplementedError


class CountingGenerator:
    """Wraps a generator and tallies every token it hands out."""

    def __init__(self, inner):
        self.inner = inner
        self.total_tokens = 0
        self.calls = 0

    def generate_step(self, context, rng):
        step = self.inner.generate_step(context, rng)
        self.calls += 1
        self.total_tokens += len(step.tokens)
        return step

    def generate_chain(self, context, rng, max_total_tokens):
        step = self.inner.generate_chain(context, rng, max_total_tokens)
        self.calls += 1
        self.total_tokens += len(step.tokens)
        return step


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length)) if length else {}
        self.server.requests.append((self.path, payload))
        status, body = self.server.responder(self.path, payload)
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class StubServer:
    """Tiny JSON POST server for exercising the wire protocols."""

    def __init__(self):
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self._server.requests = []
        self._server.responder = lambda path, payload: (200, {})
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    @property
    def requests(self) -> list:
        return self._server.requests

    def respond_with(self, responder) -> None:
        """responder(path, payload) -> (status, body dict)."""
        self._server.responder = responder

    def canned(self, body: dict, status: int = 200) -> None:
        self._server.responder = lambda path, payload: (status, body)

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()
