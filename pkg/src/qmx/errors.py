"""Exception types raised across the package."""

from __future__ import annotations


class QmxError(Exception):
    """Base class for all package errors."""


class DimensionError(QmxError, ValueError):
    """Array shapes do not agree (items, attributes, profiles or combos)."""


class ConfigError(QmxError, ValueError):
    """Invalid configuration or input data.

    ``line`` is set when the problem can be traced to a line of a config file.
    """

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        super().__init__(message)
        self.message = message
        self.line = line
        self.key = key

    def to_dict(self) -> dict:
        return {"error": "config", "message": self.message, "line": self.line, "key": self.key}


class BudgetExceededError(QmxError):
    """Exhaustive search would enumerate more candidates than allowed."""

    def __init__(self, n_free: int, budget: int, alternatives=("split", "anchored")):
        self.n_free = n_free
        self.budget = budget
        self.alternatives = tuple(alternatives)
        super().__init__(
            f"exhaustive search over {n_free} free Q entries needs 2^{n_free} candidates, "
            f"budget is {budget}; use strategy {' or '.join(self.alternatives)}"
        )


class EmptyCandidateSetError(QmxError):
    """No candidate Q-matrix satisfies the search constraints."""


class AlignmentError(QmxError):
    """Attribute labels of two sub-estimates cannot be matched on their shared items."""

    def __init__(self, message: str, first=None, second=None):
        super().__init__(message)
        self.first = first
        self.second = second
