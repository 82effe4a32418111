"""Pydantic request/response models for the decoding service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

from ..core import DecodeConfig, TokenSamplingParams

ModeName = Literal["tree", "end2end"]
TaskKindName = Literal["numeric", "yes_no", "multiple_choice"]
ScorerName = Literal["ngram", "selfcons", "cosine", "verifier"]


class SamplingParamsModel(BaseModel):
    temperature: float = 1.0
    top_k: int | None = None
    top_p: float | None = None

    def to_params(self) -> TokenSamplingParams:
        return TokenSamplingParams(
            temperature=self.temperature, top_k=self.top_k, top_p=self.top_p
        )


# Completion-server default: sampled with both top-k and top-p truncation.
REMOTE_SCHEDULE = [SamplingParamsModel(temperature=1.0, top_k=40, top_p=0.5)]
# Toy grammars are coarse (a handful of productions), so truncation would cut
# whole branches; sample the full distribution instead.
TOY_SCHEDULE = [SamplingParamsModel(temperature=1.0, top_p=1.0)]


class ConfigModel(BaseModel):
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
    token_sampling_schedule: list[SamplingParamsModel] | None = None
    rng_seed: int = 0

    def to_config(self, model_kind: str = "toy") -> DecodeConfig:
        schedule = self.token_sampling_schedule
        if schedule is None:
            schedule = TOY_SCHEDULE if model_kind == "toy" else REMOTE_SCHEDULE
        return DecodeConfig(
            branching_factor=self.branching_factor,
            buffer_size=self.buffer_size,
            length_penalty=self.length_penalty,
            step_temperature=self.step_temperature,
            annealing_factor=self.annealing_factor,
            max_regeneration_attempts=self.max_regeneration_attempts,
            max_depth=self.max_depth,
            max_step_tokens=self.max_step_tokens,
            max_end2end_tokens=self.max_end2end_tokens,
            repetition_threshold=self.repetition_threshold,
            token_sampling_schedule=tuple(p.to_params() for p in schedule),
            rng_seed=self.rng_seed,
        )


class ProductionModel(BaseModel):
    text: str
    next_state: str
    probability: float


class ToySpecModel(BaseModel):
    grammar: dict[str, list[ProductionModel]]
    entry_points: dict[str, str] = Field(default_factory=dict)
    answer_table: dict[str, str] = Field(default_factory=dict)
    seed: int = 0


class ModelSpecModel(BaseModel):
    kind: Literal["toy", "remote"] = "toy"
    endpoint: str | None = None
    toy_spec: ToySpecModel | None = None
    toy_seed: int = 0


class ConstraintSpecModel(BaseModel):
    similarity: Literal["lexical", "http"] = "lexical"
    entailment: Literal["rule", "neutral", "http"] = "rule"
    similarity_endpoint: str | None = None
    entailment_endpoint: str | None = None
    fail_closed: bool = False


class ScorerSpecModel(BaseModel):
    name: ScorerName = "ngram"
    ngram_n: int = 3
    verifier_endpoint: str | None = None
    # cosine scorer embeds chains remotely when set, else lexically in-process
    embedding_endpoint: str | None = None


class DecodeRequest(BaseModel):
    prompt: str | None = None
    question: str = ""
    mode: ModeName = "tree"
    end2end_k: int = 16
    task_kind: TaskKindName = "numeric"
    model: ModelSpecModel = Field(default_factory=ModelSpecModel)
    config: ConfigModel = Field(default_factory=ConfigModel)
    constraints: ConstraintSpecModel = Field(default_factory=ConstraintSpecModel)
    scorer: ScorerSpecModel = Field(default_factory=ScorerSpecModel)
    include_tree: bool = False


class StepModel(BaseModel):
    text: str
    score: float
    terminal: bool


class ChainModel(BaseModel):
    steps: list[StepModel]
    answer: str | None


class TraceDepthModel(BaseModel):
    depth: int
    frontier_before: int
    frontier_after: int
    temperature: float
    tokens_generated: int


class DecodeResponse(BaseModel):
    answer: str | None
    chosen_index: int | None
    scores: list[float]
    scorer_name: str
    chain: ChainModel | None
    pool: list[ChainModel]
    pool_origin: str
    total_tokens: int
    tree: dict | None = None
    trace: list[TraceDepthModel] = Field(default_factory=list)


class InstanceModel(BaseModel):
    id: str
    question: str
    gold_answer: str
    task_kind: TaskKindName = "numeric"
    prompt: str | None = None
    template: str | None = None


class RunRequest(BaseModel):
    instances: list[InstanceModel]
    mode: ModeName = "tree"
    end2end_k: int = 16
    model: ModelSpecModel = Field(default_factory=ModelSpecModel)
    config: ConfigModel = Field(default_factory=ConfigModel)
    constraints: ConstraintSpecModel = Field(default_factory=ConstraintSpecModel)
    scorer: ScorerSpecModel = Field(default_factory=ScorerSpecModel)
    include_timing: bool = False


class RunResponse(BaseModel):
    report: dict
    timing: dict | None = None


class SweepRequest(RunRequest):
    branching_factors: list[int] = Field(default_factory=lambda: [2, 4, 8])
    buffer_sizes: list[int] = Field(default_factory=lambda: [8])


class SweepResponse(BaseModel):
    reports: list[dict]


class ToygenRequest(BaseModel):
    seed: int = 0
    count: int = 1
    trap_fraction: float = 0.6


class ToygenResponse(BaseModel):
    instances: list[dict]
    toy_spec: dict


class TreeRenderRequest(BaseModel):
    tree: dict
    format: Literal["json", "dot"] = "dot"


class TreeRenderResponse(BaseModel):
    document: str


class HealthResponse(BaseModel):
    status: str
    version: str
