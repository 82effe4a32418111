"""Domain types and pure numeric primitives for step-level tree search decoding.

Steps carry per-token log-probabilities; a step's score is its token logprob
sum normalized by token count raised to a length penalty. Frontier pruning
samples from a softmax over step scores whose temperature decays with depth.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import Enum

__all__ = [
    "Token",
    "ReasoningStep",
    "ReasoningChain",
    "NodeStatus",
    "TreeNode",
    "ReasoningTree",
    "TokenSamplingParams",
    "DecodeConfig",
    "PoolOrigin",
    "CandidatePool",
    "ANSWER_MARKER",
    "score_step",
    "step_selection_distribution",
    "anneal_temperature",
    "derive_seed",
]

# Marker that closes a reasoning chain ("The answer is 6.").
ANSWER_MARKER = "The answer is"


def derive_seed(base_seed: int, label: str) -> int:
    """Derive a stable sub-seed from a run seed and a label.

    Used for per-node, per-depth and per-instance random sources so results
    do not depend on scheduling order. Not salted (unlike ``hash``), so the
    derivation is identical across processes.
    """
    digest = hashlib.sha256(f"{base_seed}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class Token:
    """One generated token with its natural-log probability."""

    text: str
    logprob: float

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("token text must be non-empty")
        if not math.isfinite(self.logprob) or self.logprob > 0.0:
            raise ValueError(f"token logprob must be finite and <= 0, got {self.logprob}")


@dataclass(frozen=True)
class ReasoningStep:
    """One reasoning step: a token sequence with a length-normalized score.

    ``text`` is the concatenation of token texts; ``score`` is always
    recomputable from the tokens and the length penalty it was built with.
    """

    tokens: tuple[Token, ...]
    text: str
    score: float
    terminal: bool = False

    def __post_init__(self) -> None:
        if len(self.tokens) < 1:
            raise ValueError("a step needs at least one token")

    @classmethod
    def from_tokens(
        cls,
        tokens: list[Token] | tuple[Token, ...],
        length_penalty: float,
        terminal: bool | None = None,
    ) -> "ReasoningStep":
        toks = tuple(tokens)
        text = "".join(t.text for t in toks)
        if terminal is None:
            terminal = ANSWER_MARKER in text
        score = score_step([t.logprob for t in toks], length_penalty)
        return cls(tokens=toks, text=text, score=score, terminal=terminal)


@dataclass
class ReasoningChain:
    """A root-to-leaf sequence of steps, optionally with an extracted answer."""

    steps: list[ReasoningStep]
    answer: str | None = None

    def __post_init__(self) -> None:
        if len(self.steps) < 1:
            raise ValueError("a chain needs at least one step")
        if any(s.terminal for s in self.steps[:-1]):
            raise ValueError("only the last step of a chain may be terminal")
        if self.answer is not None and not self.steps[-1].terminal:
            raise ValueError("a chain with an answer must end in a terminal step")

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.steps)

    def token_count(self) -> int:
        return sum(len(s.tokens) for s in self.steps)


class NodeStatus(str, Enum):
    ACTIVE = "active"
    PRUNED = "pruned"
    TERMINAL = "terminal"
    EXHAUSTED = "exhausted"


@dataclass
class TreeNode:
    """A node of the search tree; the root holds the prompt and no step."""

    id: int
    parent: int | None
    step: ReasoningStep | None
    depth: int
    status: NodeStatus = NodeStatus.ACTIVE
    children: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class TokenSamplingParams:
    """Token-level sampling knobs for one branch of the schedule.

    ``temperature == 0`` means greedy token decoding. At least one of
    ``top_k``/``top_p`` must be set; ``top_p = 1.0`` keeps the whole
    distribution.
    """

    temperature: float = 1.0
    top_k: int | None = None
    top_p: float | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.top_k is None and self.top_p is None:
            raise ValueError("at most one of top_k/top_p may be absent")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.top_p is not None and not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")

    @property
    def greedy(self) -> bool:
        return self.temperature == 0.0 or self.top_k == 1


# Default token sampling: T=1.0 with combined top-k 40 / top-p 0.5 truncation.
DEFAULT_SAMPLING = TokenSamplingParams(temperature=1.0, top_k=40, top_p=0.5)


@dataclass(frozen=True)
class DecodeConfig:
    """All decoding knobs for one run."""

    branching_factor: int = 4
    buffer_size: int = 8
    length_penalty: float = 1.0
    step_temperature: float = 1.0
    annealing_factor: float = 0.5
    max_regeneration_attempts: int = 2
    max_depth: int = 16
    max_step_tokens: int = 128
    max_end2end_tokens: int = 512
    repetition_threshold: float = 0.9
    token_sampling_schedule: tuple[TokenSamplingParams, ...] = (DEFAULT_SAMPLING,)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.branching_factor < 1:
            raise ValueError("branching_factor must be >= 1")
        if self.buffer_size < 1:
            raise ValueError("buffer_size must be >= 1")
        if self.step_temperature <= 0:
            raise ValueError("step_temperature must be > 0")
        if not (0.0 < self.annealing_factor <= 1.0):
            raise ValueError("annealing_factor must be in (0, 1]")
        if self.max_regeneration_attempts < 0:
            raise ValueError("max_regeneration_attempts must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.max_step_tokens < 1:
            raise ValueError("max_step_tokens must be >= 1")
        if self.max_end2end_tokens < 1:
            raise ValueError("max_end2end_tokens must be >= 1")
        if not (0.0 <= self.repetition_threshold <= 1.0):
            raise ValueError("repetition_threshold must be in [0, 1]")
        if not self.token_sampling_schedule:
            raise ValueError("token_sampling_schedule must be non-empty")
        object.__setattr__(
            self, "token_sampling_schedule", tuple(self.token_sampling_schedule)
        )

    def with_seed(self, seed: int) -> "DecodeConfig":
        return replace(self, rng_seed=seed)


@dataclass
class ReasoningTree:
    """The search tree for one input prompt. Single-writer."""

    prompt: str
    config_snapshot: DecodeConfig
    rng_seed: int
    nodes: dict[int, TreeNode] = field(default_factory=dict)
    frontier: list[int] = field(default_factory=list)
    _next_id: int = 0

    def __post_init__(self) -> None:
        if not self.nodes:
            root = TreeNode(id=0, parent=None, step=None, depth=0)
            self.nodes[0] = root
            self.frontier = [0]
            self._next_id = 1
        else:
            self._next_id = max(self.nodes) + 1

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def add_child(self, parent_id: int, step: ReasoningStep) -> TreeNode:
        parent = self.nodes[parent_id]
        if parent.status in (NodeStatus.PRUNED, NodeStatus.EXHAUSTED):
            raise ValueError(f"cannot extend node {parent_id} with status {parent.status.value}")
        if len(parent.children) >= self.config_snapshot.branching_factor:
            raise ValueError(f"node {parent_id} already has branching_factor children")
        node = TreeNode(
            id=self._next_id,
            parent=parent_id,
            step=step,
            depth=parent.depth + 1,
            status=NodeStatus.TERMINAL if step.terminal else NodeStatus.ACTIVE,
        )
        self.nodes[node.id] = node
        parent.children.append(node.id)
        self._next_id += 1
        return node

    def path_steps(self, node_id: int) -> list[ReasoningStep]:
        """Steps along the path root -> node (root itself carries no step)."""
        steps: list[ReasoningStep] = []
        node = self.nodes[node_id]
        while node.parent is not None:
            assert node.step is not None
            steps.append(node.step)
            node = self.nodes[node.parent]
        steps.reverse()
        return steps

    def chain_for(self, node_id: int) -> ReasoningChain:
        return ReasoningChain(steps=self.path_steps(node_id))


class PoolOrigin(str, Enum):
    TREE = "tree"
    END_TO_END = "end_to_end"


@dataclass
class CandidatePool:
    """The completed hypotheses a selection scorer chooses from."""

    candidates: list[ReasoningChain]
    origin: PoolOrigin

    def __len__(self) -> int:
        return len(self.candidates)


def score_step(token_logprobs: list[float], length_penalty: float) -> float:
    """Length-normalized step score: sum of token logprobs over N**length_penalty."""
    if not token_logprobs:
        raise ValueError("token_logprobs must be non-empty")
    for lp in token_logprobs:
        if not math.isfinite(lp) or lp > 0.0:
            raise ValueError(f"token logprob must be finite and <= 0, got {lp}")
    n = len(token_logprobs)
    return math.fsum(token_logprobs) / n**length_penalty


def step_selection_distribution(scores: list[float], tau: float) -> list[float]:
    """Softmax over step scores at temperature ``tau``, max-shifted for safety.

    Output is order-aligned with the input and sums to 1 (within 1e-12).
    ``tau`` must be strictly positive; the greedy limit is reached by sending
    tau -> 0, not by tau = 0.
    """
    if not scores:
        raise ValueError("scores must be non-empty")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    m = max(scores)
    weights = [math.exp((s - m) / tau) for s in scores]
    total = math.fsum(weights)
    return [w / total for w in weights]


def anneal_temperature(tau: float, alpha: float, steps: int) -> float:
    """Temperature after ``steps`` decays: tau * alpha**steps."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must be in (0, 1]")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    return tau * alpha**steps
