"""Tree-search candidate generation.

Every active frontier leaf is expanded with up to ``branching_factor``
candidate steps (token sampling params rotate per branch). Candidates that
violate a constraint are regenerated up to the retry budget, then the branch
slot is abandoned; a leaf none of whose slots survive is exhausted. After each
depth the union of new active leaves is pruned back to the buffer size by
sampling without replacement from a softmax over step scores whose
temperature decays geometrically with depth.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .constraints import GateDecision, StepConstraints, gate_step
from .core import (
    ANSWER_MARKER,
    CandidatePool,
    DecodeConfig,
    NodeStatus,
    PoolOrigin,
    ReasoningChain,
    ReasoningStep,
    ReasoningTree,
    anneal_temperature,
    derive_seed,
    step_selection_distribution,
)
from .errors import GenerationError
from .generation import (
    FinishReason,
    GenerationContext,
    StepGenerator,
    rotate_sampling_params,
    split_tokens_into_steps,
)

__all__ = [
    "ExpansionOutcome",
    "DepthRecord",
    "SearchTrace",
    "expand_leaf",
    "prune_frontier",
    "run_tree_search",
    "run_end_to_end",
    "account_tokens",
    "token_budget_bound",
]


@dataclass
class ExpansionOutcome:
    """What one leaf expansion produced."""

    node_id: int
    produced: list[int]
    pruned_by_constraint: int
    exhausted: bool
    tokens_generated: int


@dataclass
class DepthRecord:
    depth: int
    frontier_before: int
    frontier_after: int
    temperature: float
    tokens_generated: int


@dataclass
class SearchTrace:
    """Per-depth bookkeeping; token counts include rejected regenerations."""

    depths: list[DepthRecord] = field(default_factory=list)
    total_generated_tokens: int = 0


def expand_leaf(
    tree: ReasoningTree,
    node_id: int,
    generator: StepGenerator,
    constraints: StepConstraints,
    config: DecodeConfig,
    rng: random.Random,
) -> ExpansionOutcome:
    """Draw candidate steps from one active leaf, gating each through constraints.

    A candidate matching an already-accepted sibling's text counts as a
    repetition violation. An empty end-of-sequence draw marks the leaf itself
    terminal (the chain ended without an answer marker step).
    """
    node = tree.nodes[node_id]
    if node.status is not NodeStatus.ACTIVE or node.children:
        raise ValueError(f"node {node_id} is not an active leaf")
    if node.depth >= config.max_depth:
        raise ValueError(f"node {node_id} is already at max depth")

    ancestors = [s.text for s in tree.path_steps(node_id)]
    context_base = dict(
        prompt=tree.prompt,
        prior_steps=tuple(ancestors),
        max_tokens=config.max_step_tokens,
    )
    sibling_texts: set[str] = set()
    produced: list[int] = []
    rejections = 0
    tokens_generated = 0
    saw_eos = False

    for branch_index in range(config.branching_factor):
        params = rotate_sampling_params(config.token_sampling_schedule, branch_index)
        context = GenerationContext(params=params, **context_base)
        attempt = 0
        while True:
            try:
                generated = generator.generate_step(context, rng)
            except GenerationError as exc:
                raise GenerationError(f"expanding node {node_id}: {exc}") from exc
            tokens_generated += len(generated.tokens)
            if not generated.tokens:
                saw_eos = generated.finish_reason is FinishReason.EOS
                break
            terminal = (
                ANSWER_MARKER in generated.text
                or generated.finish_reason is FinishReason.EOS
            )
            step = ReasoningStep.from_tokens(
                generated.tokens, config.length_penalty, terminal=terminal
            )
            if step.text in sibling_texts:
                decision = (
                    GateDecision.REGENERATE
                    if attempt < config.max_regeneration_attempts
                    else GateDecision.PRUNE
                )
            else:
                decision, _ = gate_step(
                    step.text,
                    tree.prompt,
                    ancestors,
                    constraints,
                    config.max_regeneration_attempts,
                    attempt,
                )
            if decision is GateDecision.ACCEPT:
                child = tree.add_child(node_id, step)
                produced.append(child.id)
                sibling_texts.add(step.text)
                break
            rejections += 1
            if decision is GateDecision.PRUNE:
                break
            attempt += 1
        if saw_eos:
            break

    exhausted = False
    if not produced:
        if saw_eos:
            node.status = NodeStatus.TERMINAL
        else:
            node.status = NodeStatus.EXHAUSTED
            exhausted = True
    return ExpansionOutcome(
        node_id=node_id,
        produced=produced,
        pruned_by_constraint=rejections,
        exhausted=exhausted,
        tokens_generated=tokens_generated,
    )


def prune_frontier(
    leaves: list[tuple[int, float]],
    buffer_size: int,
    tau: float,
    rng: random.Random,
) -> list[int]:
    """Keep ``buffer_size`` leaves by sampling without replacement over scores.

    Each successive draw re-normalizes the softmax over the remaining leaves.
    Candidates are scanned in (score desc, id asc) order, so as tau -> 0 the
    kept set converges to the deterministic top-``buffer_size`` (exact score
    ties are then resolved by the draw itself).
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if len(leaves) <= buffer_size:
        return [node_id for node_id, _ in leaves]
    remaining = sorted(leaves, key=lambda pair: (-pair[1], pair[0]))
    kept: list[int] = []
    while len(kept) < buffer_size:
        probs = step_selection_distribution([score for _, score in remaining], tau)
        u = rng.random()
        cumulative = 0.0
        chosen = len(remaining) - 1
        for i, p in enumerate(probs):
            cumulative += p
            if u < cumulative:
                chosen = i
                break
        kept.append(remaining.pop(chosen)[0])
    return kept


def run_tree_search(
    prompt: str,
    generator: StepGenerator,
    constraints: StepConstraints,
    config: DecodeConfig,
) -> tuple[CandidatePool, ReasoningTree, SearchTrace]:
    """Grow the reasoning tree for ``prompt`` and collect the candidate pool.

    The loop expands every frontier leaf, prunes the union of new active
    leaves at temperature tau0 * alpha**depth, and stops once the frontier is
    empty or the depth cap is reached. The pool holds the chains to every
    terminal leaf plus any depth-capped leaves, trimmed to the buffer size by
    step score if finished hypotheses outnumber it.
    """
    tree = ReasoningTree(prompt=prompt, config_snapshot=config, rng_seed=config.rng_seed)
    trace = SearchTrace()
    finished: list[int] = []

    for depth in range(config.max_depth):
        if not tree.frontier:
            break
        new_active: list[int] = []
        depth_tokens = 0
        for leaf_id in sorted(tree.frontier):
            node_rng = random.Random(derive_seed(config.rng_seed, f"expand:{leaf_id}"))
            outcome = expand_leaf(tree, leaf_id, generator, constraints, config, node_rng)
            depth_tokens += outcome.tokens_generated
            for child_id in outcome.produced:
                child = tree.nodes[child_id]
                if child.status is NodeStatus.TERMINAL:
                    finished.append(child_id)
                else:
                    new_active.append(child_id)
            if not outcome.produced and tree.nodes[leaf_id].status is NodeStatus.TERMINAL:
                finished.append(leaf_id)

        temperature = anneal_temperature(
            config.step_temperature, config.annealing_factor, depth
        )
        frontier_before = len(new_active)
        if frontier_before > config.buffer_size:
            prune_rng = random.Random(derive_seed(config.rng_seed, f"prune:{depth}"))
            scored = [(nid, tree.nodes[nid].step.score) for nid in new_active]
            kept = set(prune_frontier(scored, config.buffer_size, temperature, prune_rng))
            for nid in new_active:
                if nid not in kept:
                    tree.nodes[nid].status = NodeStatus.PRUNED
            tree.frontier = sorted(kept)
        else:
            tree.frontier = sorted(new_active)
        trace.depths.append(
            DepthRecord(
                depth=depth,
                frontier_before=frontier_before,
                frontier_after=len(tree.frontier),
                temperature=temperature,
                tokens_generated=depth_tokens,
            )
        )
        trace.total_generated_tokens += depth_tokens

    leaf_ids = [nid for nid in finished if nid != 0]
    leaf_ids.extend(tree.frontier)  # depth-capped leaves

    if len(leaf_ids) > config.buffer_size:
        leaf_ids.sort(key=lambda nid: (-tree.nodes[nid].step.score, nid))
        leaf_ids = leaf_ids[: config.buffer_size]
    leaf_ids.sort()
    pool = CandidatePool(
        candidates=[tree.chain_for(nid) for nid in leaf_ids], origin=PoolOrigin.TREE
    )
    return pool, tree, trace


def run_end_to_end(
    prompt: str,
    generator: StepGenerator,
    config: DecodeConfig,
    k: int,
) -> CandidatePool:
    """Sample ``k`` whole chains without any tree or pruning.

    Chains are split into steps post hoc at sentence/line boundaries; token
    sampling params rotate per chain index.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    chains: list[ReasoningChain] = []
    for i in range(k):
        params = rotate_sampling_params(config.token_sampling_schedule, i)
        context = GenerationContext(
            prompt=prompt,
            prior_steps=(),
            params=params,
            max_tokens=config.max_end2end_tokens,
        )
        chain_rng = random.Random(derive_seed(config.rng_seed, f"chain:{i}"))
        generated = generator.generate_chain(context, chain_rng, config.max_end2end_tokens)
        steps = split_tokens_into_steps(generated.tokens, config.length_penalty)
        if steps:
            chains.append(ReasoningChain(steps=steps))
    return CandidatePool(candidates=chains, origin=PoolOrigin.END_TO_END)


def account_tokens(trace: SearchTrace) -> int:
    """Exact total of generated tokens, rejected regenerations included."""
    return trace.total_generated_tokens


def token_budget_bound(config: DecodeConfig) -> int:
    """Worst-case token count for one tree search under ``config``."""
    return (
        config.branching_factor
        * config.buffer_size
        * config.max_depth
        * config.max_step_tokens
        * (1 + config.max_regeneration_attempts)
    )
