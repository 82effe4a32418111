"""Lossless JSON round-tripping and DOT rendering of reasoning trees."""

from __future__ import annotations

import json
from dataclasses import asdict

from ..core import (
    DecodeConfig,
    NodeStatus,
    ReasoningStep,
    ReasoningTree,
    Token,
    TokenSamplingParams,
    TreeNode,
)

TREE_SCHEMA_VERSION = 1


def config_to_dict(config: DecodeConfig) -> dict:
    data = asdict(config)
    data["token_sampling_schedule"] = [asdict(p) for p in config.token_sampling_schedule]
    return data


def config_from_dict(data: dict) -> DecodeConfig:
    payload = dict(data)
    payload["token_sampling_schedule"] = tuple(
        TokenSamplingParams(**p) for p in payload.get("token_sampling_schedule", [])
    )
    return DecodeConfig(**payload)


def _step_to_dict(step: ReasoningStep | None) -> dict | None:
    if step is None:
        return None
    return {
        "tokens": [{"text": t.text, "logprob": t.logprob} for t in step.tokens],
        "text": step.text,
        "score": step.score,
        "terminal": step.terminal,
    }


def _step_from_dict(data: dict | None) -> ReasoningStep | None:
    if data is None:
        return None
    return ReasoningStep(
        tokens=tuple(Token(text=t["text"], logprob=t["logprob"]) for t in data["tokens"]),
        text=data["text"],
        score=data["score"],
        terminal=data["terminal"],
    )


def tree_to_dict(tree: ReasoningTree) -> dict:
    return {
        "schema_version": TREE_SCHEMA_VERSION,
        "prompt": tree.prompt,
        "rng_seed": tree.rng_seed,
        "config": config_to_dict(tree.config_snapshot),
        "frontier": list(tree.frontier),
        "nodes": [
            {
                "id": node.id,
                "parent": node.parent,
                "depth": node.depth,
                "status": node.status.value,
                "children": list(node.children),
                "step": _step_to_dict(node.step),
            }
            for _, node in sorted(tree.nodes.items())
        ],
    }


def tree_from_dict(data: dict) -> ReasoningTree:
    nodes = {
        record["id"]: TreeNode(
            id=record["id"],
            parent=record["parent"],
            step=_step_from_dict(record["step"]),
            depth=record["depth"],
            status=NodeStatus(record["status"]),
            children=list(record["children"]),
        )
        for record in data["nodes"]
    }
    return ReasoningTree(
        prompt=data["prompt"],
        config_snapshot=config_from_dict(data["config"]),
        rng_seed=data["rng_seed"],
        nodes=nodes,
        frontier=list(data["frontier"]),
    )


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")


def _dot_label(node: TreeNode, prompt: str) -> str:
    if node.step is None:
        text = prompt
        suffix = ""
    else:
        text = node.step.text
        suffix = f"\\nscore={node.step.score:.4f} [{node.status.value}]"
    if len(text) > 60:
        text = text[:57] + "..."
    return _dot_escape(text) + suffix


def tree_to_dot(tree: ReasoningTree) -> str:
    lines = [
        "digraph reasoning_tree {",
        "  node [shape=box, fontsize=10];",
    ]
    for _, node in sorted(tree.nodes.items()):
        attrs = [f'label="{_dot_label(node, tree.prompt)}"']
        if node.status is NodeStatus.PRUNED:
            attrs.append("style=dashed")
        elif node.status is NodeStatus.TERMINAL:
            attrs.append("style=bold")
        lines.append(f"  n{node.id} [{', '.join(attrs)}];")
    for _, node in sorted(tree.nodes.items()):
        for child in node.children:
            lines.append(f"  n{node.id} -> n{child};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_tree(tree: ReasoningTree, fmt: str = "json") -> str:
    """Render a tree as a document: full-fidelity JSON or graphviz DOT."""
    if fmt == "json":
        return json.dumps(tree_to_dict(tree), sort_keys=True, indent=2) + "\n"
    if fmt == "dot":
        return tree_to_dot(tree)
    raise ValueError(f"unknown tree export format {fmt!r}")
