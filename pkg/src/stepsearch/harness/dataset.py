"""JSONL task datasets and few-shot prompt assembly.

One JSON object per line: ``{"id", "question", "gold_answer", "task_kind"?,
"prompt"?, "template"?}``. When a line has no ready-made prompt, one is
assembled from a named few-shot template shipped with the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import DatasetError
from ..selection import TaskKind

_TEMPLATE_NAMES = ("gsm8k", "strategyqa", "csqa")


def available_templates() -> tuple[str, ...]:
    return _TEMPLATE_NAMES


def prompt_template(name: str) -> str:
    if name not in _TEMPLATE_NAMES:
        raise DatasetError(f"unknown prompt template {name!r}; have {_TEMPLATE_NAMES}")
    return (
        resources.files("stepsearch.assets").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    )


def build_prompt(template_name: str, question: str) -> str:
    return f"{prompt_template(template_name).rstrip()}\n\nQ: {question}\nA:"


@dataclass(frozen=True)
class TaskInstance:
    id: str
    question: str
    prompt: str
    gold_answer: str
    task_kind: TaskKind = TaskKind.NUMERIC


def _instance_from_record(record: dict, default_template: str | None, where: str) -> TaskInstance:
    for key in ("id", "question", "gold_answer"):
        if key not in record:
            raise DatasetError(f"{where}: missing required field {key!r}")
    try:
        kind = TaskKind(record.get("task_kind", "numeric"))
    except ValueError as exc:
        raise DatasetError(f"{where}: {exc}") from exc
    prompt = record.get("prompt")
    if prompt is None:
        template = record.get("template", default_template)
        if template is None:
            raise DatasetError(f"{where}: no prompt and no template to build one from")
        prompt = build_prompt(template, record["question"])
    return TaskInstance(
        id=str(record["id"]),
        question=str(record["question"]),
        prompt=str(prompt),
        gold_answer=str(record["gold_answer"]),
        task_kind=kind,
    )


def load_dataset(path: str | Path, default_template: str | None = None) -> list[TaskInstance]:
    """Load and validate a JSONL dataset; errors carry 1-based line numbers."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file {path} does not exist")
    instances: list[TaskInstance] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: invalid JSON ({exc})") from exc
            if not isinstance(record, dict):
                raise DatasetError(f"{where}: expected a JSON object")
            instance = _instance_from_record(record, default_template, where)
            if instance.id in seen:
                raise DatasetError(f"{where}: duplicate instance id {instance.id!r}")
            seen.add(instance.id)
            instances.append(instance)
    return instances
