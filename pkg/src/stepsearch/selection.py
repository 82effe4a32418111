"""Candidate selection over a pool of reasoning chains.

The chosen hypothesis maximizes the summed pairwise similarity to the rest of
the pool. Scorers plug in as pairwise similarity functions (common n-gram
count by default, cosine of chain embeddings as an alternative); majority
vote over extracted answers and external verifier ranking are also provided.
"""

from __future__ import annotations

import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Callable, Sequence

from .constraints import SimilarityProvider
from .core import ANSWER_MARKER, CandidatePool, ReasoningChain, TokenSamplingParams
from .errors import ProtocolError, RetryableError, SelectionError, StepSearchError
from .generation.base import GenerationContext
from .generation.remote import RemoteCompletionClient

log = logging.getLogger(__name__)

DEFAULT_NGRAM_ORDER = 3

PairwiseSimilarity = Callable[[ReasoningChain, ReasoningChain], float]
Scorer = Callable[[CandidatePool], "SelectionResult"]


class TaskKind(str, Enum):
    NUMERIC = "numeric"
    YES_NO = "yes_no"
    MULTIPLE_CHOICE = "multiple_choice"


@dataclass(frozen=True)
class NGramSet:
    """The distinct n-grams of one hypothesis text."""

    n: int
    grams: frozenset[tuple[str, ...]]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if any(len(g) != self.n for g in self.grams):
            raise ValueError("every gram must have exactly n tokens")

    def __len__(self) -> int:
        return len(self.grams)


@dataclass
class SelectionResult:
    chosen_index: int
    chosen_chain: ReasoningChain
    scores: list[float]
    scorer_name: str
    note: str = ""


def ngram_set(text: str, n: int) -> NGramSet:
    """Distinct lowercased whitespace n-grams; short texts yield the empty set."""
    if n < 1:
        raise ValueError("n must be >= 1")
    tokens = text.lower().split()
    grams = frozenset(
        tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
    )
    return NGramSet(n=n, grams=grams)


def ngram_similarity(g_j: NGramSet, g_k: NGramSet) -> int:
    """Number of n-grams the two sets share."""
    if g_j.n != g_k.n:
        raise ValueError(f"n-gram order mismatch: {g_j.n} vs {g_k.n}")
    return len(g_j.grams & g_k.grams)


def _argmax_lowest(scores: Sequence[float]) -> int:
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best


def select_by_pairwise(pool: CandidatePool, similarity: PairwiseSimilarity,
                       scorer_name: str = "pairwise") -> SelectionResult:
    """Pick the chain with the largest summed similarity to every other chain.

    Similarity is assumed symmetric, so only K(K-1)/2 evaluations are made.
    Ties break to the lowest candidate index.
    """
    chains = pool.candidates
    if not chains:
        raise SelectionError("cannot select from an empty pool")
    totals = [0.0] * len(chains)
    for j in range(len(chains)):
        for k in range(j + 1, len(chains)):
            s = similarity(chains[j], chains[k])
            totals[j] += s
            totals[k] += s
    chosen = _argmax_lowest(totals)
    return SelectionResult(
        chosen_index=chosen,
        chosen_chain=chains[chosen],
        scores=totals,
        scorer_name=scorer_name,
    )


def make_ngram_scorer(n: int = DEFAULT_NGRAM_ORDER) -> Scorer:
    """Pairwise scorer counting shared chain-level n-grams (trigrams by default)."""

    def scorer(pool: CandidatePool) -> SelectionResult:
        cache = {id(c): ngram_set(c.text, n) for c in pool.candidates}
        return select_by_pairwise(
            pool,
            lambda a, b: float(ngram_similarity(cache[id(a)], cache[id(b)])),
            scorer_name=f"{n}-gram",
        )

    return scorer


def select_self_consistency(pool: CandidatePool) -> SelectionResult:
    """Majority vote over extracted answers.

    Chains without a parseable answer are left out of the tally; the winning
    answer's lowest-index chain is returned. If nothing parses the first
    chain wins with a diagnostic note.
    """
    chains = pool.candidates
    if not chains:
        raise SelectionError("cannot select from an empty pool")
    tally = AnswerTally.from_chains(chains)
    if not tally.counts:
        log.warning("self-consistency: no parseable answers in a pool of %d", len(chains))
        return SelectionResult(
            chosen_index=0,
            chosen_chain=chains[0],
            scores=[0.0] * len(chains),
            scorer_name="self-consistency",
            note="no candidate carried a parseable answer; fell back to index 0",
        )
    scores = [
        float(tally.counts.get(normalize_answer(c.answer), 0)) if c.answer is not None else 0.0
        for c in chains
    ]
    chosen = _argmax_lowest(scores)
    return SelectionResult(
        chosen_index=chosen,
        chosen_chain=chains[chosen],
        scores=scores,
        scorer_name="self-consistency",
    )


@dataclass
class AnswerTally:
    """Occurrence counts of normalized extracted answers."""

    counts: dict[str, int]

    @classmethod
    def from_chains(cls, chains: Sequence[ReasoningChain]) -> "AnswerTally":
        counter: Counter[str] = Counter(
            normalize_answer(c.answer) for c in chains if c.answer is not None
        )
        return cls(counts=dict(counter))


def make_cosine_scorer(provider: SimilarityProvider) -> Scorer:
    """Pairwise scorer using whole-chain embedding cosine similarity.

    Provider failures abort selection (callers may fall back to n-grams).
    """

    def scorer(pool: CandidatePool) -> SelectionResult:
        def sim(a: ReasoningChain, b: ReasoningChain) -> float:
            try:
                return provider.similarity(a.text, b.text)
            except StepSearchError as exc:
                raise SelectionError(f"cosine scorer provider failed: {exc}") from exc

        return select_by_pairwise(pool, sim, scorer_name=f"cosine:{provider.name}")

    return scorer


def select_by_cosine(pool: CandidatePool, provider: SimilarityProvider) -> SelectionResult:
    return make_cosine_scorer(provider)(pool)


# -- verifier ranking -------------------------------------------------------


def verifier_prompt_template() -> str:
    """The versioned few-shot template asking whether reasoning is correct."""
    return (
        resources.files("stepsearch.assets")
        .joinpath("verifier_5shot_v1.txt")
        .read_text(encoding="utf-8")
    )


class VerifierClient:
    """Scores a chain by an external model's probability that it is correct.

    The model is prompted with five multiple-choice exemplars and asked to
    answer (A) for correct reasoning or (B) for incorrect; the score is the
    probability mass the completion puts on option A.
    """

    def __init__(self, endpoint: str, template: str | None = None, timeout: float = 60.0,
                 retries: int = 2):
        self.endpoint = endpoint
        self.template = template if template is not None else verifier_prompt_template()
        self._client = RemoteCompletionClient(endpoint, timeout=timeout, retries=retries)

    def score(self, question: str, reasoning: str) -> float:
        """Faithfulness score in [0, 1] for one candidate."""
        prompt = self.template.format(question=question, reasoning=reasoning)
        context = GenerationContext(
            prompt=prompt,
            params=TokenSamplingParams(temperature=0.0, top_k=1),
            max_tokens=4,
            stop_markers=("\n",),
        )
        generated = self._client.generate_step(context, random.Random(0))
        if not generated.tokens:
            return 0.0
        text = generated.text.strip()
        first_prob = math.exp(generated.tokens[0].logprob)
        if text.startswith("A"):
            return min(1.0, first_prob)
        if text.startswith("B"):
            return max(0.0, 1.0 - first_prob)
        return 0.0


def verifier_rank(
    pool: CandidatePool, client: VerifierClient, question: str = ""
) -> SelectionResult:
    """Rank candidates by verifier faithfulness score; failures score 0."""
    chains = pool.candidates
    if not chains:
        raise SelectionError("cannot select from an empty pool")
    scores: list[float] = []
    notes: list[str] = []
    for i, chain in enumerate(chains):
        try:
            scores.append(client.score(question, chain.text))
        except (RetryableError, ProtocolError) as exc:
            scores.append(0.0)
            notes.append(f"candidate {i} scored 0 after verifier failure: {exc}")
    chosen = _argmax_lowest(scores)
    return SelectionResult(
        chosen_index=chosen,
        chosen_chain=chains[chosen],
        scores=scores,
        scorer_name="verifier",
        note="; ".join(notes),
    )


# -- answer extraction ------------------------------------------------------

_NUMBER = re.compile(r"-?\$?\d[\d,]*(?:\.\d+)?")
_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_CHOICE = re.compile(r"\b([A-E])\b")


def extract_answer(chain: ReasoningChain, task_kind: TaskKind | str) -> str | None:
    """Read the final answer off the chain's last step, if it carries one."""
    kind = TaskKind(task_kind)
    last = chain.steps[-1].text
    at = last.rfind(ANSWER_MARKER)
    if at < 0:
        return None
    tail = last[at + len(ANSWER_MARKER):]
    if kind is TaskKind.NUMERIC:
        match = _NUMBER.search(tail)
        return match.group(0).replace("$", "").replace(",", "") if match else None
    if kind is TaskKind.YES_NO:
        match = _YES_NO.search(tail)
        return match.group(1).lower() if match else None
    match = _CHOICE.search(tail)
    return match.group(1) if match else None


def normalize_answer(answer: str) -> str:
    """Canonical form for tallying and gold comparison."""
    text = answer.strip().rstrip(".!?").strip().lower()
    text = text.replace(",", "")
    if text.startswith("$"):
        text = text[1:]
    if text.endswith(".0"):
        text = text[:-2]
    return text


def annotate_pool_answers(pool: CandidatePool, task_kind: TaskKind | str) -> CandidatePool:
    """Fill in each chain's extracted answer in place; returns the pool."""
    for chain in pool.candidates:
        if chain.steps[-1].terminal:
            chain.answer = extract_answer(chain, task_kind)
    return pool


def make_scorer(
    name: str,
    ngram_n: int = DEFAULT_NGRAM_ORDER,
    provider: SimilarityProvider | None = None,
    verifier: VerifierClient | None = None,
    question: str = "",
) -> Scorer:
    """Build one of the named scorers used by the harness and the service."""
    if name == "ngram":
        return make_ngram_scorer(ngram_n)
    if name == "selfcons":
        return select_self_consistency
    if name == "cosine":
        if provider is None:
            raise ValueError("cosine scorer needs a similarity provider")
        return make_cosine_scorer(provider)
    if name == "verifier":
        if verifier is None:
            raise ValueError("verifier scorer needs a verifier client")
        return lambda pool: verifier_rank(pool, verifier, question=question)
    raise ValueError(f"unknown scorer {name!r}")
