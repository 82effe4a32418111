"""A deterministic grammar-driven toy language model.

The toy model is a weighted state machine over whole reasoning sentences:
each state owns a set of productions (emission text, next state, probability).
Because one emission maps to one step and the production probability lands on
the step's first token, step scores are analytically checkable against the
grammar. The model is immutable; all randomness comes from the caller's rng.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from ..core import Token
from ..errors import GenerationError
from .base import (
    FinishReason,
    GeneratedStep,
    GenerationContext,
    sample_categorical,
    tokenize_emission,
    truncate_distribution,
)

# Prompts for toy problems lead with "Problem <id>:" so the model can find
# its entry state without textual matching.
PROMPT_PREFIX = "Problem "


def toy_prompt(problem_id: str, question: str) -> str:
    return f"{PROMPT_PREFIX}{problem_id}: {question}\nAnswer:"


@dataclass(frozen=True)
class Production:
    """One weighted rule: emit ``text`` (a full sentence) and move to ``next_state``."""

    text: str
    next_state: str
    probability: float

    def __post_init__(self) -> None:
        if not self.text.split():
            raise ValueError("production text must contain at least one token")
        if not (0.0 < self.probability <= 1.0):
            raise ValueError("production probability must be in (0, 1]")


@dataclass
class ToyLMSpec:
    """Grammar, entry points and gold answers for a batch of toy problems."""

    grammar: dict[str, list[Production]]
    entry_points: dict[str, str] = field(default_factory=dict)
    answer_table: dict[str, str] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        for state, productions in self.grammar.items():
            if not productions:
                continue
            total = math.fsum(p.probability for p in productions)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"probabilities out of state {state!r} sum to {total!r}")

    def merge(self, other: "ToyLMSpec") -> None:
        self.grammar.update(other.grammar)
        self.entry_points.update(other.entry_points)
        self.answer_table.update(other.answer_table)

    def to_dict(self) -> dict:
        return {
            "grammar": {
                state: [
                    {"text": p.text, "next_state": p.next_state, "probability": p.probability}
                    for p in productions
                ]
                for state, productions in self.grammar.items()
            },
            "entry_points": dict(self.entry_points),
            "answer_table": dict(self.answer_table),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ToyLMSpec":
        grammar = {
            state: [Production(**p) for p in productions]
            for state, productions in payload["grammar"].items()
        }
        return cls(
            grammar=grammar,
            entry_points=dict(payload.get("entry_points", {})),
            answer_table=dict(payload.get("answer_table", {})),
            seed=int(payload.get("seed", 0)),
        )


class ToyLanguageModel:
    """Samples steps from a :class:`ToyLMSpec` under the generator contract."""

    def __init__(self, spec: ToyLMSpec):
        self.spec = spec

    # -- state resolution ---------------------------------------------------

    def _entry_state(self, prompt: str) -> str:
        marker = prompt.rfind(PROMPT_PREFIX)
        if marker < 0:
            raise GenerationError(f"prompt has no {PROMPT_PREFIX!r} entry marker")
        rest = prompt[marker + len(PROMPT_PREFIX):]
        problem_id = rest.split(":", 1)[0].strip()
        state = self.spec.entry_points.get(problem_id)
        if state is None:
            raise GenerationError(f"unknown toy problem id {problem_id!r}")
        return state

    def _resolve_state(self, context: GenerationContext) -> str:
        state = self._entry_state(context.prompt)
        for step_text in context.prior_steps:
            productions = self.spec.grammar.get(state)
            if productions is None:
                raise GenerationError(f"toy LM state {state!r} missing from grammar")
            match = next((p for p in productions if p.text == step_text), None)
            if match is None:
                raise GenerationError(
                    f"step {step_text!r} is not a production of state {state!r}"
                )
            state = match.next_state
        return state

    # -- sampling -----------------------------------------------------------

    def _choose(
        self, state: str, context: GenerationContext, rng: random.Random
    ) -> Production | None:
        """Pick a production of ``state``, or None when the state is exhausted."""
        productions = self.spec.grammar.get(state)
        if productions is None:
            raise GenerationError(f"toy LM state {state!r} missing from grammar")
        if not productions:
            return None
        params = context.params
        if params.greedy:
            # Greedy bypasses truncation and keeps the raw model logprob.
            best = max(range(len(productions)), key=lambda i: (productions[i].probability, -i))
            chosen = productions[best]
            return Production(chosen.text, chosen.next_state, chosen.probability)
        entries = truncate_distribution([p.probability for p in productions], params)
        index, prob = sample_categorical(entries, rng)
        chosen = productions[index]
        return Production(chosen.text, chosen.next_state, prob)

    def _emit(
        self, production: Production, budget: int, leading_space: bool
    ) -> tuple[list[Token], bool]:
        tokens = tokenize_emission(
            production.text, math.log(production.probability), leading_space=leading_space
        )
        if len(tokens) > budget:
            return tokens[:budget], True
        return tokens, False

    def generate_step(self, context: GenerationContext, rng: random.Random) -> GeneratedStep:
        state = self._resolve_state(context)
        production = self._choose(state, context, rng)
        if production is None:
            return GeneratedStep(tokens=(), finish_reason=FinishReason.EOS)
        tokens, truncated = self._emit(production, context.max_tokens, leading_space=False)
        reason = FinishReason.LENGTH if truncated else FinishReason.STOP_MARKER
        return GeneratedStep(tokens=tuple(tokens), finish_reason=reason)

    def generate_chain(
        self, context: GenerationContext, rng: random.Random, max_total_tokens: int
    ) -> GeneratedStep:
        state = self._resolve_state(context)
        tokens: list[Token] = []
        while True:
            production = self._choose(state, context, rng)
            if production is None:
                return GeneratedStep(tokens=tuple(tokens), finish_reason=FinishReason.EOS)
            emitted, truncated = self._emit(
                production, max_total_tokens - len(tokens), leading_space=bool(tokens)
            )
            tokens.extend(emitted)
            if truncated or len(tokens) >= max_total_tokens:
                return GeneratedStep(tokens=tuple(tokens), finish_reason=FinishReason.LENGTH)
            state = production.next_state
