"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class TaskmintError(Exception):
    """Base class for all pipeline errors."""


class InvalidName(TaskmintError):
    """A dataset name component is empty or unusable."""


class EmptySchema(TaskmintError):
    """Normalization removed every data field of a dataset."""


class InvalidArgument(TaskmintError):
    """An operation precondition was violated by the caller."""


class MissingField(TaskmintError):
    """An instance lacks a field the task requires."""


class EmptyOutput(TaskmintError):
    """An instance's output-field value is empty; the record is skipped."""


class EmptyResponse(TaskmintError):
    """The LLM returned a well-formed but empty completion."""


class TransportError(TaskmintError):
    """An HTTP call failed after exhausting retries."""


class DimensionError(TaskmintError):
    """Embedding matrices with mismatched dimensions were combined."""


class InvalidEmbedding(TaskmintError):
    """An embedding row is unusable (zero norm or non-finite entries)."""


class ProviderError(TaskmintError):
    """The embedding provider failed to produce vectors."""


class DependencyError(TaskmintError):
    """A pipeline step ran before its upstream steps completed."""


class StaleRun(TaskmintError):
    """The run manifest was produced under a different configuration."""


class EmptyRun(TaskmintError):
    """A report was requested for a run with no completed steps."""


class ConfigError(TaskmintError):
    """The configuration file is malformed or inconsistent."""
