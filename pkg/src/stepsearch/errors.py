"""Exception types shared across the package."""

from __future__ import annotations


class StepSearchError(Exception):
    """Base class for all package errors."""


class GenerationError(StepSearchError):
    """A model backend failed to produce a step (unknown state, bad response)."""


class RetryableError(GenerationError):
    """Transient transport failure; safe to retry the request."""


class ProtocolError(GenerationError):
    """The remote server violated the completion wire protocol."""


class ProviderError(StepSearchError):
    """A similarity/entailment provider call failed."""


class SelectionError(StepSearchError):
    """Candidate selection could not run (e.g. empty pool)."""


class DatasetError(StepSearchError):
    """A dataset file is malformed."""
