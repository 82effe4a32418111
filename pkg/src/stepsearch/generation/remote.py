"""HTTP client for external completion servers.

Wire protocol (JSON over POST):

    request  {prompt, max_tokens, temperature, top_k?, top_p?, stop: [str],
              logprobs: true, seed?}
    response {text, tokens: [str], token_logprobs: [float],
              finish_reason: "stop" | "length"}

One request is issued per step; stop sequences enforce step boundaries, so
step scores come bit-exact from the server's token logprobs.
"""

from __future__ import annotations

import random

import httpx

from ..core import Token
from ..errors import ProtocolError, RetryableError
from .base import FinishReason, GeneratedStep, GenerationContext

_FINISH_MAP = {"stop": FinishReason.STOP_MARKER, "length": FinishReason.LENGTH}


class RemoteCompletionClient:
    """Step generator backed by a completion server."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 60.0,
        retries: int = 2,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.retries = retries
        self._client = client or httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _post(self, payload: dict) -> dict:
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = self._client.post(self.endpoint, json=payload)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = RetryableError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise ProtocolError(f"completion server returned {response.status_code}")
            try:
                return response.json()
            except ValueError as exc:
                raise ProtocolError(f"non-JSON completion response: {exc}") from exc
        raise RetryableError(
            f"completion request failed after {self.retries + 1} attempts: {last_error}"
        ) from last_error

    def _parse(self, data: dict) -> GeneratedStep:
        if "token_logprobs" not in data or "tokens" not in data:
            raise ProtocolError("completion response is missing token logprobs")
        tokens_text = data["tokens"]
        logprobs = data["token_logprobs"]
        if len(tokens_text) != len(logprobs):
            raise ProtocolError("tokens and token_logprobs lengths differ")
        finish = data.get("finish_reason")
        if finish not in _FINISH_MAP:
            raise ProtocolError(f"unknown finish_reason {finish!r}")
        try:
            tokens = tuple(
                Token(text=t, logprob=min(0.0, float(lp)))
                for t, lp in zip(tokens_text, logprobs)
            )
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed token payload: {exc}") from exc
        if not tokens:
            return GeneratedStep(tokens=(), finish_reason=FinishReason.EOS)
        return GeneratedStep(tokens=tokens, finish_reason=_FINISH_MAP[finish])

    def _request_payload(
        self, context: GenerationContext, max_tokens: int, rng: random.Random
    ) -> dict:
        params = context.params
        payload = {
            "prompt": context.full_prompt(),
            "max_tokens": max_tokens,
            "temperature": params.temperature,
            "stop": list(context.stop_markers),
            "logprobs": True,
            "seed": rng.randrange(2**31),
        }
        if params.top_k is not None:
            payload["top_k"] = params.top_k
        if params.top_p is not None:
            payload["top_p"] = params.top_p
        return payload

    def generate_step(self, context: GenerationContext, rng: random.Random) -> GeneratedStep:
        payload = self._request_payload(context, context.max_tokens, rng)
        return self._parse(self._post(payload))

    def generate_chain(
        self, context: GenerationContext, rng: random.Random, max_total_tokens: int
    ) -> GeneratedStep:
        payload = self._request_payload(context, max_total_tokens, rng)
        # Whole-chain sampling only stops at the end of the answer line.
        payload["stop"] = ["\nQ:", "\n\n"]
        return self._parse(self._post(payload))
