"""Step-level tree search decoding with scored pruning and candidate selection."""

__version__ = "0.1.0"

from .core import (
    CandidatePool,
    DecodeConfig,
    PoolOrigin,
    ReasoningChain,
    ReasoningStep,
    ReasoningTree,
    Token,
    TokenSamplingParams,
    anneal_temperature,
    score_step,
    step_selection_distribution,
)
from .search import account_tokens, expand_leaf, prune_frontier, run_end_to_end, run_tree_search

__all__ = [
    "__version__",
    "CandidatePool",
    "DecodeConfig",
    "PoolOrigin",
    "ReasoningChain",
    "ReasoningStep",
    "ReasoningTree",
    "Token",
    "TokenSamplingParams",
    "anneal_temperature",
    "score_step",
    "step_selection_distribution",
    "account_tokens",
    "expand_leaf",
    "prune_frontier",
    "run_end_to_end",
    "run_tree_search",
]
