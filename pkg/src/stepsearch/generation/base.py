"""Step-generator contract and token-sampling helpers shared by all backends."""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence, runtime_checkable

from ..core import ReasoningStep, Token, TokenSamplingParams

# Default step delimiters forwarded to completion servers as stop sequences.
DEFAULT_STOP_MARKERS = ("\n", ". ")


class FinishReason(str, Enum):
    STOP_MARKER = "stop_marker"
    EOS = "eos"
    LENGTH = "length"


@dataclass(frozen=True)
class GenerationContext:
    """Everything a backend needs to generate the next step.

    ``prompt`` is the full input (few-shot exemplars included); ``prior_steps``
    are the texts of steps already on this branch.
    """

    prompt: str
    prior_steps: tuple[str, ...] = ()
    params: TokenSamplingParams = TokenSamplingParams(temperature=1.0, top_p=1.0)
    max_tokens: int = 128
    stop_markers: tuple[str, ...] = DEFAULT_STOP_MARKERS

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not self.stop_markers:
            raise ValueError("stop_markers must be non-empty")
        object.__setattr__(self, "prior_steps", tuple(self.prior_steps))
        object.__setattr__(self, "stop_markers", tuple(self.stop_markers))

    def full_prompt(self) -> str:
        if not self.prior_steps:
            return self.prompt
        return self.prompt + " " + " ".join(self.prior_steps)


@dataclass(frozen=True)
class GeneratedStep:
    """Raw output of one generation call."""

    tokens: tuple[Token, ...]
    finish_reason: FinishReason

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def text(self) -> str:
        return "".join(t.text for t in self.tokens)


@runtime_checkable
class StepGenerator(Protocol):
    """Backend contract: step-wise and whole-chain generation."""

    def generate_step(self, context: GenerationContext, rng: random.Random) -> GeneratedStep:
        """Sample the next step under ``context.params``."""
        ...

    def generate_chain(
        self, context: GenerationContext, rng: random.Random, max_total_tokens: int
    ) -> GeneratedStep:
        """Sample a whole chain in one go, capped at ``max_total_tokens``."""
        ...


def rotate_sampling_params(
    schedule: Sequence[TokenSamplingParams], branch_index: int
) -> TokenSamplingParams:
    """Round-robin over the sampling schedule by branch index."""
    if not schedule:
        raise ValueError("schedule must be non-empty")
    if branch_index < 0:
        raise ValueError("branch_index must be >= 0")
    return schedule[branch_index % len(schedule)]


def truncate_distribution(
    probs: Sequence[float], params: TokenSamplingParams
) -> list[tuple[int, float]]:
    """Apply temperature warping and top-k/top-p truncation to a distribution.

    Returns (original index, renormalized probability) pairs, sorted by
    descending pre-truncation weight (ties keep input order). Top-p keeps the
    smallest prefix of the sorted weights with cumulative mass >= p; top-k
    keeps exactly the k heaviest. Greedy params are handled by the caller.
    """
    if params.temperature <= 0:
        raise ValueError("truncate_distribution needs temperature > 0")
    if params.temperature == 1.0:
        weights = [(i, p) for i, p in enumerate(probs)]
    else:
        weights = [(i, p ** (1.0 / params.temperature)) for i, p in enumerate(probs)]
    weights.sort(key=lambda iw: -iw[1])
    if params.top_k is not None:
        weights = weights[: params.top_k]
    if params.top_p is not None:
        total = sum(w for _, w in weights)
        kept: list[tuple[int, float]] = []
        cumulative = 0.0
        for i, w in weights:
            kept.append((i, w))
            cumulative += w
            if cumulative >= params.top_p * total:
                break
        weights = kept
    z = sum(w for _, w in weights)
    return [(i, w / z) for i, w in weights]


def sample_categorical(
    entries: Sequence[tuple[int, float]], rng: random.Random
) -> tuple[int, float]:
    """Draw one (index, probability) pair by cumulative scan."""
    u = rng.random()
    cumulative = 0.0
    for i, p in entries:
        cumulative += p
        if u < cumulative:
            return i, p
    return entries[-1]


def split_tokens_into_steps(
    tokens: Sequence[Token], length_penalty: float
) -> list[ReasoningStep]:
    """Split a whole-chain token stream into steps at sentence/line boundaries.

    A step closes after a token ending in "." or containing a newline. The
    first token of every step is stripped of one leading space so step texts
    read as clean sentences. Anything after the first terminal step (answer
    marker) is dropped, and a trailing unterminated fragment becomes a final
    step of its own.
    """
    steps: list[ReasoningStep] = []
    current: list[Token] = []
    for token in tokens:
        text = token.text
        if not current and text.startswith(" "):
            text = text[1:]
            if not text:
                continue
        current.append(Token(text=text, logprob=token.logprob))
        if text.endswith(".") or "\n" in text:
            step = ReasoningStep.from_tokens(current, length_penalty)
            steps.append(step)
            current = []
            if step.terminal:
                break
    if current and not (steps and steps[-1].terminal):
        steps.append(ReasoningStep.from_tokens(current, length_penalty))
    return steps


def tokenize_emission(text: str, first_logprob: float, leading_space: bool = False) -> list[Token]:
    """Whitespace-tokenize one emission; the first token carries its logprob.

    Continuation tokens carry a leading space and logprob 0 so that strict
    concatenation rebuilds the text and the token logprob sum equals the
    emission's log-probability.
    """
    words = text.split()
    if not words:
        raise ValueError("emission must contain at least one token")
    tokens = [Token(text=(" " + words[0]) if leading_space else words[0], logprob=first_logprob)]
    tokens.extend(Token(text=" " + w, logprob=0.0) for w in words[1:])
    return tokens
