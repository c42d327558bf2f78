"""Exception taxonomy shared across the engine.

CLI exit codes group these: configuration/schema problems are operator
errors, everything else is a runtime port failure.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(EngineError):
    """Invalid configuration value or cross-field violation."""


class GraphError(EngineError):
    """Rejected graph input: empty query, dangling node reference."""


class BudgetError(GraphError):
    """Transition attempted after the generated-node budget was spent."""


class GenerationError(EngineError):
    """Backend returned an unusable completion (e.g. empty text)."""


class TransportError(EngineError):
    """Wire-level failure talking to a remote backend; retryable."""


class CapabilityError(EngineError):
    """Backend lacks a requested capability (e.g. token log-probabilities)."""


class CorpusError(EngineError):
    """Unreadable or empty corpus input."""


class ExhaustedCorpusError(CorpusError):
    """No retrievable documents remain for this search."""


class SchemaError(EngineError):
    """Malformed persisted file: index, scorer model, or trace."""


class SearchError(EngineError):
    """Port failure inside a search; carries the partial graph for export."""

    def __init__(self, message: str, graph=None):
        super().__init__(message)
        self.graph = graph
