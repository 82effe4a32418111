from .base import (
    DEFAULT_STOP_MARKERS,
    FinishReason,
    GeneratedStep,
    GenerationContext,
    StepGenerator,
    rotate_sampling_params,
    split_tokens_into_steps,
    truncate_distribution,
)
from .remote import RemoteCompletionClient
from .toy import Production, ToyLMSpec, ToyLanguageModel
from .tasks import ToyProblem, build_toy_task

__all__ = [
    "DEFAULT_STOP_MARKERS",
    "FinishReason",
    "GeneratedStep",
    "GenerationContext",
    "StepGenerator",
    "rotate_sampling_params",
    "split_tokens_into_steps",
    "truncate_distribution",
    "RemoteCompletionClient",
    "Production",
    "ToyLMSpec",
    "ToyLanguageModel",
    "ToyProblem",
    "build_toy_task",
]
