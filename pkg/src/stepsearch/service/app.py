"""HTTP service exposing the decoding engine.

All computation happens server-side on JSON payloads; clients (including the
bundled CLI) handle file I/O themselves. Every endpoint is deterministic for
a fixed request body.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..constraints import (
    HttpEntailmentProvider,
    HttpSimilarityProvider,
    LexicalSimilarityProvider,
    NeutralEntailmentProvider,
    RuleEntailmentProvider,
    StepConstraints,
)
from ..core import ReasoningChain
from ..errors import DatasetError, StepSearchError
from ..generation import ToyLanguageModel, ToyLMSpec, RemoteCompletionClient, build_toy_task
from ..generation.toy import Production
from ..harness.dataset import TaskInstance, build_prompt
from ..harness.experiment import run_experiment, sweep
from ..harness.treeio import export_tree, tree_from_dict, tree_to_dict
from ..search import run_end_to_end, run_tree_search
from ..selection import VerifierClient, annotate_pool_answers, make_scorer
from .schemas import (
    ChainModel,
    ConstraintSpecModel,
    DecodeRequest,
    DecodeResponse,
    HealthResponse,
    InstanceModel,
    ModelSpecModel,
    RunRequest,
    RunResponse,
    ScorerSpecModel,
    StepModel,
    SweepRequest,
    SweepResponse,
    ToygenRequest,
    ToygenResponse,
    ToySpecModel,
    TraceDepthModel,
    TreeRenderRequest,
    TreeRenderResponse,
)

log = logging.getLogger(__name__)

app = FastAPI(title="stepsearch", version=__version__)


@app.exception_handler(StepSearchError)
async def _domain_error(request: Request, exc: StepSearchError) -> JSONResponse:
    status = 422 if isinstance(exc, DatasetError) else 400
    return JSONResponse(status_code=status, content={"detail": str(exc)})


@app.exception_handler(ValueError)
async def _value_error(request: Request, exc: ValueError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


def _toy_spec_from_model(spec: ToySpecModel) -> ToyLMSpec:
    return ToyLMSpec(
        grammar={
            state: [Production(p.text, p.next_state, p.probability) for p in productions]
            for state, productions in spec.grammar.items()
        },
        entry_points=dict(spec.entry_points),
        answer_table=dict(spec.answer_table),
        seed=spec.seed,
    )


def build_generator(model: ModelSpecModel) -> tuple[object, str | None]:
    """Returns (generator, default prompt for single-prompt decodes)."""
    if model.kind == "toy":
        if model.toy_spec is not None:
            return ToyLanguageModel(_toy_spec_from_model(model.toy_spec)), None
        problems, spec = build_toy_task(model.toy_seed, 1)
        return ToyLanguageModel(spec), problems[0].prompt
    if not model.endpoint:
        raise ValueError("remote model needs an endpoint")
    return RemoteCompletionClient(model.endpoint), None


def build_constraints(spec: ConstraintSpecModel, repetition_threshold: float) -> StepConstraints:
    if spec.similarity == "http":
        if not spec.similarity_endpoint:
            raise ValueError("http similarity provider needs similarity_endpoint")
        similarity = HttpSimilarityProvider(spec.similarity_endpoint)
    else:
        similarity = LexicalSimilarityProvider()
    if spec.entailment == "http":
        if not spec.entailment_endpoint:
            raise ValueError("http entailment provider needs entailment_endpoint")
        entailment = HttpEntailmentProvider(spec.entailment_endpoint)
    elif spec.entailment == "neutral":
        entailment = NeutralEntailmentProvider()
    else:
        entailment = RuleEntailmentProvider()
    return StepConstraints(
        similarity=similarity,
        entailment=entailment,
        repetition_threshold=repetition_threshold,
        fail_closed=spec.fail_closed,
    )


def build_scorer(spec: ScorerSpecModel, question: str = ""):
    verifier = None
    if spec.name == "verifier":
        if not spec.verifier_endpoint:
            raise ValueError("verifier scorer needs verifier_endpoint")
        verifier = VerifierClient(spec.verifier_endpoint)
    provider = None
    if spec.name == "cosine":
        if spec.embedding_endpoint:
            provider = HttpSimilarityProvider(spec.embedding_endpoint)
        else:
            provider = LexicalSimilarityProvider()
    return make_scorer(
        spec.name, ngram_n=spec.ngram_n, provider=provider, verifier=verifier, question=question
    )


def _chain_model(chain: ReasoningChain) -> ChainModel:
    return ChainModel(
        steps=[StepModel(text=s.text, score=s.score, terminal=s.terminal) for s in chain.steps],
        answer=chain.answer,
    )


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/decode", response_model=DecodeResponse)
def decode(request: DecodeRequest) -> DecodeResponse:
    generator, default_prompt = build_generator(request.model)
    prompt = request.prompt if request.prompt is not None else default_prompt
    if prompt is None:
        raise ValueError("decode needs a prompt (or a toy model that provides one)")
    config = request.config.to_config(request.model.kind)
    constraints = build_constraints(request.constraints, config.repetition_threshold)
    scorer = build_scorer(request.scorer, question=request.question)

    tree_payload = None
    trace_models: list[TraceDepthModel] = []
    if request.mode == "tree":
        pool, tree, trace = run_tree_search(prompt, generator, constraints, config)
        total_tokens = trace.total_generated_tokens
        trace_models = [
            TraceDepthModel(
                depth=d.depth,
                frontier_before=d.frontier_before,
                frontier_after=d.frontier_after,
                temperature=d.temperature,
                tokens_generated=d.tokens_generated,
            )
            for d in trace.depths
        ]
        if request.include_tree:
            tree_payload = tree_to_dict(tree)
    else:
        pool = run_end_to_end(prompt, generator, config, request.end2end_k)
        total_tokens = sum(chain.token_count() for chain in pool.candidates)

    annotate_pool_answers(pool, request.task_kind)
    if not pool.candidates:
        return DecodeResponse(
            answer=None,
            chosen_index=None,
            scores=[],
            scorer_name=request.scorer.name,
            chain=None,
            pool=[],
            pool_origin=pool.origin.value,
            total_tokens=total_tokens,
            tree=tree_payload,
            trace=trace_models,
        )
    result = scorer(pool)
    return DecodeResponse(
        answer=result.chosen_chain.answer,
        chosen_index=result.chosen_index,
        scores=result.scores,
        scorer_name=result.scorer_name,
        chain=_chain_model(result.chosen_chain),
        pool=[_chain_model(c) for c in pool.candidates],
        pool_origin=pool.origin.value,
        total_tokens=total_tokens,
        tree=tree_payload,
        trace=trace_models,
    )


def _instances(models: list[InstanceModel]) -> list[TaskInstance]:
    instances = []
    seen: set[str] = set()
    for i, m in enumerate(models):
        if m.id in seen:
            raise DatasetError(f"instance {i}: duplicate id {m.id!r}")
        seen.add(m.id)
        prompt = m.prompt
        if prompt is None:
            if m.template is None:
                raise DatasetError(f"instance {m.id!r}: no prompt and no template")
            prompt = build_prompt(m.template, m.question)
        instances.append(
            TaskInstance(
                id=m.id,
                question=m.question,
                prompt=prompt,
                gold_answer=m.gold_answer,
                task_kind=m.task_kind,
            )
        )
    return instances


@app.post("/run", response_model=RunResponse)
def run(request: RunRequest) -> RunResponse:
    generator, _ = build_generator(request.model)
    config = request.config.to_config(request.model.kind)
    constraints = build_constraints(request.constraints, config.repetition_threshold)
    scorer = build_scorer(request.scorer)
    report = run_experiment(
        _instances(request.instances),
        mode=request.mode,
        config=config,
        scorer=scorer,
        generator=generator,
        constraints=constraints,
        scorer_name=request.scorer.name,
        end2end_k=request.end2end_k,
    )
    return RunResponse(
        report=report.to_dict(),
        timing=report.timing_dict() if request.include_timing else None,
    )


@app.post("/sweep", response_model=SweepResponse)
def run_sweep(request: SweepRequest) -> SweepResponse:
    generator, _ = build_generator(request.model)
    config = request.config.to_config(request.model.kind)
    constraints = build_constraints(request.constraints, config.repetition_threshold)
    scorer = build_scorer(request.scorer)
    reports = sweep(
        _instances(request.instances),
        mode=request.mode,
        config=config,
        scorer=scorer,
        generator=generator,
        branching_factors=request.branching_factors,
        buffer_sizes=request.buffer_sizes,
        constraints=constraints,
        scorer_name=request.scorer.name,
        end2end_k=request.end2end_k,
    )
    return SweepResponse(reports=[r.to_dict() for r in reports])


@app.post("/toygen", response_model=ToygenResponse)
def toygen(request: ToygenRequest) -> ToygenResponse:
    problems, spec = build_toy_task(request.seed, request.count, request.trap_fraction)
    instances = [
        {
            "id": p.id,
            "question": p.question,
            "prompt": p.prompt,
            "gold_answer": p.gold_answer,
            "task_kind": "numeric",
        }
        for p in problems
    ]
    return ToygenResponse(instances=instances, toy_spec=spec.to_dict())


@app.post("/tree/render", response_model=TreeRenderResponse)
def tree_render(request: TreeRenderRequest) -> TreeRenderResponse:
    tree = tree_from_dict(request.tree)
    return TreeRenderResponse(document=export_tree(tree, request.format))
