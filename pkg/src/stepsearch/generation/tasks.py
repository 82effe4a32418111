"""Synthetic multi-step arithmetic word problems for the toy language model.

Each problem compiles to a small grammar with one correct 3-step reasoning
path (probability 0.4) and two distractor paths (0.3 each). On a controlled
fraction of problems the two distractors share a locally-likelier wrong
opening step (probability 0.6), so stepwise-greedy decoding walks off the
correct path even though the correct path has the highest whole-path
probability. Distractor middle steps copy long fragments of the correct
reasoning, so correct chains sit at the center of the candidate pool under
n-gram similarity.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .toy import Production, ToyLMSpec, toy_prompt

NAMES = ["Mara", "Jonas", "Priya", "Tom", "Elif", "Ruth", "Diego", "Hana"]
ITEMS = ["apples", "marbles", "stickers", "coins", "pebbles", "buttons", "shells", "beads"]

CORRECT_PATH_PROBABILITY = 0.4
STEM_PROBABILITY = 0.6


@dataclass(frozen=True)
class ToyProblem:
    """One generated problem plus the metadata the harness needs."""

    id: str
    question: str
    prompt: str
    gold_answer: str
    greedy_trap: bool


def _problem_grammar(pid: str, name: str, item: str, x: int, y: int, trap: bool) -> ToyLMSpec:
    gold = x + y
    wrong_a = x - y
    wrong_b = x + 2 * y

    opener_c = (
        f"{name} started out holding {x} {item} in hand well before going over to the market stand."
    )
    middle_c = (
        f"Adding the {y} freshly bought {item} back onto the earlier pile gives"
        f" {x} + {y} = {gold} for the final tally."
    )
    middle_a = (
        f"Since {name} started out holding {x} {item} in hand well before going over to the"
        f" market stand {name} still keeps just {x} minus {y} leaving {wrong_a}."
    )
    middle_b = (
        f"Adding the {y} freshly bought {item} back onto the earlier pile gives a doubled"
        f" jump of {x} + {y} + {y} = {wrong_b} instead."
    )
    stem = f"{name} rushed the tally and skipped checking the purchase closely."
    opener_a = f"Maybe {name} lost count of the {item} somewhere along the line."
    opener_b = f"A quick guess about the {item} pile seemed good enough for {name}."

    s = lambda tag: f"{pid}/{tag}"
    grammar: dict[str, list[Production]] = {
        s("C1"): [Production(middle_c, s("C2"), 1.0)],
        s("C2"): [Production(f"The answer is {gold}.", s("END"), 1.0)],
        s("A2"): [Production(f"The answer is {wrong_a}.", s("END"), 1.0)],
        s("B2"): [Production(f"The answer is {wrong_b}.", s("END"), 1.0)],
        s("END"): [],
    }
    if trap:
        # Both distractors descend from one wrong stem that outweighs the
        # correct opener step-for-step (0.6 vs 0.4).
        grammar[s("S0")] = [
            Production(opener_c, s("C1"), CORRECT_PATH_PROBABILITY),
            Production(stem, s("D1"), STEM_PROBABILITY),
        ]
        grammar[s("D1")] = [
            Production(middle_a, s("A2"), 0.5),
            Production(middle_b, s("B2"), 0.5),
        ]
    else:
        grammar[s("S0")] = [
            Production(opener_c, s("C1"), CORRECT_PATH_PROBABILITY),
            Production(opener_a, s("A1"), 0.3),
            Production(opener_b, s("B1"), 0.3),
        ]
        grammar[s("A1")] = [Production(middle_a, s("A2"), 1.0)]
        grammar[s("B1")] = [Production(middle_b, s("B2"), 1.0)]

    return ToyLMSpec(grammar=grammar, entry_points={pid: s("S0")}, answer_table={pid: str(gold)})


def build_toy_task(
    seed: int, count: int, trap_fraction: float = 0.6
) -> tuple[list[ToyProblem], ToyLMSpec]:
    """Generate ``count`` seeded problems and the merged grammar serving them.

    ``trap_fraction`` controls the exact share of problems on which greedy
    step decoding reaches a wrong answer.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not (0.0 <= trap_fraction <= 1.0):
        raise ValueError("trap_fraction must be in [0, 1]")
    rng = random.Random(seed)
    trap_ids = set(rng.sample(range(count), int(count * trap_fraction)))

    problems: list[ToyProblem] = []
    merged = ToyLMSpec(grammar={}, seed=seed)
    for i in range(count):
        pid = f"toy-{seed}-{i:04d}"
        name = rng.choice(NAMES)
        item = rng.choice(ITEMS)
        x = rng.randint(6, 20)
        y = rng.randint(2, 5)
        trap = i in trap_ids
        question = (
            f"{name} had {x} {item}. Then {name} bought {y} more {item}."
            f" How many {item} does {name} have in the end?"
        )
        merged.merge(_problem_grammar(pid, name, item, x, y, trap))
        problems.append(
            ToyProblem(
                id=pid,
                question=question,
                prompt=toy_prompt(pid, question),
                gold_answer=str(x + y),
                greedy_trap=trap,
            )
        )
    return problems, merged
