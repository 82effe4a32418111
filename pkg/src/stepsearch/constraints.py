"""Generation constraints: repetition and contradiction checks.

A candidate step is rejected when it is too similar to the question or an
ancestor step (cosine similarity above a threshold), or when an entailment
classifier says it contradicts the context. Both checks sit behind provider
contracts with deterministic in-process fallbacks (term-frequency cosine and
a rule-based assignment checker) and optional HTTP-backed neural providers.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence, runtime_checkable

import httpx

from .errors import ProviderError

REPETITION_THRESHOLD = 0.9

ENTAILMENT_LABELS = ("entailment", "neutral", "contradiction")


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine of the angle between two equal-length, non-zero vectors."""
    if len(u) != len(v):
        raise ValueError(f"dimension mismatch: {len(u)} vs {len(v)}")
    dot = math.fsum(a * b for a, b in zip(u, v))
    nu = math.sqrt(math.fsum(a * a for a in u))
    nv = math.sqrt(math.fsum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity is undefined for zero vectors")
    return max(-1.0, min(1.0, dot / (nu * nv)))


@runtime_checkable
class SimilarityProvider(Protocol):
    name: str

    def similarity(self, a: str, b: str) -> float: ...


@runtime_checkable
class EntailmentProvider(Protocol):
    name: str

    def classify(self, premise: str, hypothesis: str) -> tuple[str, dict[str, float]]: ...


class LexicalSimilarityProvider:
    """Term-frequency cosine over lowercased whitespace tokens.

    Stateless and exact: each pair is compared in the union vocabulary of the
    two texts, so disjoint texts score exactly 0 and equal-after-lowercasing
    texts score exactly 1.
    """

    name = "lexical-tf"

    def embed(self, text: str) -> dict[str, int]:
        return Counter(text.lower().split())

    def similarity(self, a: str, b: str) -> float:
        ta, tb = self.embed(a), self.embed(b)
        if not ta or not tb:
            raise ProviderError("cannot embed an empty text")
        dot = sum(ta[tok] * tb[tok] for tok in ta.keys() & tb.keys())
        na = math.sqrt(sum(c * c for c in ta.values()))
        nb = math.sqrt(sum(c * c for c in tb.values()))
        return dot / (na * nb)


class RuleEntailmentProvider:
    """Flags contradictory variable assignments like "x = 5" after "x = 4".

    Variable names must start with a letter or underscore, so arithmetic in
    running text ("12 + 5 = 17") never matches.
    """

    name = "rule-assignments"
    _ASSIGNMENT = re.compile(r"\b([A-Za-z_]\w*)\s*=\s*(-?\d+)\b")

    def classify(self, premise: str, hypothesis: str) -> tuple[str, dict[str, float]]:
        bound = {var: value for var, value in self._ASSIGNMENT.findall(premise)}
        for var, value in self._ASSIGNMENT.findall(hypothesis):
            if var in bound and bound[var] != value:
                return "contradiction", {"entailment": 0.0, "neutral": 0.0, "contradiction": 1.0}
        return "neutral", {"entailment": 0.0, "neutral": 1.0, "contradiction": 0.0}


class NeutralEntailmentProvider:
    """Always-neutral stub; disables the contradiction constraint."""

    name = "neutral"

    def classify(self, premise: str, hypothesis: str) -> tuple[str, dict[str, float]]:
        return "neutral", {"entailment": 0.0, "neutral": 1.0, "contradiction": 0.0}


class HttpSimilarityProvider:
    """Sentence-embedding service client: POST {texts: [...]} -> {vectors: [[...]]}."""

    def __init__(self, endpoint: str, timeout: float = 30.0, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.name = f"http-embed:{endpoint}"
        self._client = client or httpx.Client(timeout=timeout)

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        try:
            response = self._client.post(self.endpoint, json={"texts": texts})
        except httpx.HTTPError as exc:
            raise ProviderError(f"embedding service unreachable: {exc}") from exc
        if response.status_code != 200:
            raise ProviderError(f"embedding service returned {response.status_code}")
        try:
            vectors = response.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProviderError("embedding count does not match text count")
        return vectors

    def similarity(self, a: str, b: str) -> float:
        va, vb = self.embed_batch([a, b])
        return cosine_similarity(va, vb)


class HttpEntailmentProvider:
    """NLI service client: POST {premise, hypothesis} -> {label, scores}."""

    def __init__(self, endpoint: str, timeout: float = 30.0, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.name = f"http-nli:{endpoint}"
        self._client = client or httpx.Client(timeout=timeout)

    def classify(self, premise: str, hypothesis: str) -> tuple[str, dict[str, float]]:
        try:
            response = self._client.post(
                self.endpoint, json={"premise": premise, "hypothesis": hypothesis}
            )
        except httpx.HTTPError as exc:
            raise ProviderError(f"entailment service unreachable: {exc}") from exc
        if response.status_code != 200:
            raise ProviderError(f"entailment service returned {response.status_code}")
        try:
            data = response.json()
            label = data["label"]
            scores = {k: float(v) for k, v in data["scores"].items()}
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderError(f"malformed entailment response: {exc}") from exc
        if label not in ENTAILMENT_LABELS:
            raise ProviderError(f"unknown entailment label {label!r}")
        if abs(math.fsum(scores.values()) - 1.0) > 1e-9:
            raise ProviderError("entailment scores do not sum to 1")
        return label, scores


class Violation(str, Enum):
    REPETITION = "repetition"
    CONTRADICTION = "contradiction"


@dataclass(frozen=True)
class ConstraintVerdict:
    passed: bool
    violation: Violation | None = None
    detail: str = ""

    def __post_init__(self) -> None:
        if self.passed != (self.violation is None):
            raise ValueError("passed must be true exactly when violation is absent")


def _fail_policy_verdict(fail_closed: bool, violation: Violation, detail: str) -> ConstraintVerdict:
    if fail_closed:
        return ConstraintVerdict(passed=False, violation=violation, detail=detail)
    return ConstraintVerdict(passed=True, detail=detail)


def check_repetition(
    step_text: str,
    context_texts: Sequence[str],
    provider: SimilarityProvider,
    threshold: float = REPETITION_THRESHOLD,
    fail_closed: bool = False,
) -> ConstraintVerdict:
    """Reject a step whose similarity to any context text exceeds ``threshold``."""
    if not step_text:
        raise ValueError("step_text must be non-empty")
    for text in context_texts:
        try:
            value = provider.similarity(step_text, text)
        except ProviderError as exc:
            return _fail_policy_verdict(
                fail_closed, Violation.REPETITION, f"similarity provider failed: {exc}"
            )
        if value > threshold:
            return ConstraintVerdict(
                passed=False,
                violation=Violation.REPETITION,
                detail=f"similarity {value:.4f} > {threshold} with {text!r}",
            )
    return ConstraintVerdict(passed=True)


def check_contradiction(
    context_text: str,
    step_text: str,
    provider: EntailmentProvider,
    fail_closed: bool = False,
) -> ConstraintVerdict:
    """Reject a step the entailment provider classifies as contradicting context."""
    if not context_text or not step_text:
        raise ValueError("context_text and step_text must be non-empty")
    try:
        label, scores = provider.classify(premise=context_text, hypothesis=step_text)
    except ProviderError as exc:
        return _fail_policy_verdict(
            fail_closed, Violation.CONTRADICTION, f"entailment provider failed: {exc}"
        )
    if label == "contradiction":
        return ConstraintVerdict(
            passed=False,
            violation=Violation.CONTRADICTION,
            detail=f"contradiction score {scores.get('contradiction', 0.0):.4f}",
        )
    return ConstraintVerdict(passed=True)


class GateDecision(str, Enum):
    ACCEPT = "accept"
    REGENERATE = "regenerate"
    PRUNE = "prune"


@dataclass
class StepConstraints:
    """Bundle of providers and policy applied to every candidate step."""

    similarity: SimilarityProvider
    entailment: EntailmentProvider
    repetition_threshold: float = REPETITION_THRESHOLD
    fail_closed: bool = False

    @classmethod
    def default(cls) -> "StepConstraints":
        return cls(similarity=LexicalSimilarityProvider(), entailment=RuleEntailmentProvider())

    def check(self, step_text: str, question: str, ancestor_steps: Sequence[str]) -> ConstraintVerdict:
        context_texts = [question, *ancestor_steps] if question else list(ancestor_steps)
        verdict = check_repetition(
            step_text,
            context_texts,
            self.similarity,
            threshold=self.repetition_threshold,
            fail_closed=self.fail_closed,
        )
        if not verdict.passed:
            return verdict
        if context_texts:
            premise = "\n".join(context_texts)
            verdict = check_contradiction(
                premise, step_text, self.entailment, fail_closed=self.fail_closed
            )
            if not verdict.passed:
                return verdict
        return ConstraintVerdict(passed=True)


def gate_step(
    step_text: str,
    question: str,
    ancestor_steps: Sequence[str],
    constraints: StepConstraints,
    max_regeneration_attempts: int,
    attempt: int,
) -> tuple[GateDecision, ConstraintVerdict]:
    """Accept a step, ask for a regeneration, or give the branch up.

    ``attempt`` counts failed tries so far; once it reaches the regeneration
    budget a failing step prunes the branch instead of retrying.
    """
    if attempt < 0:
        raise ValueError("attempt must be >= 0")
    verdict = constraints.check(step_text, question, ancestor_steps)
    if verdict.passed:
        return GateDecision.ACCEPT, verdict
    if attempt < max_regeneration_attempts:
        return GateDecision.REGENERATE, verdict
    return GateDecision.PRUNE, verdict
