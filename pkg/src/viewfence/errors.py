"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ViewfenceError(Exception):
    """Base class for all package errors."""


class SqlSyntaxError(ViewfenceError):
    """SQL text could not be tokenized or parsed."""


class UnsupportedFeature(ViewfenceError):
    """SQL feature outside the supported subset (GROUP BY, EXISTS, ANY, ...)."""


class ParseError(ViewfenceError):
    """Malformed policy / replay / template file."""


class ResolutionError(ViewfenceError):
    """Unknown table, column, or parameter reference."""


class NonBasicView(ViewfenceError):
    """A policy view cannot be expressed as an (exact) basic query."""


class UnboundParameter(ViewfenceError):
    """A context parameter referenced by a view is not bound."""


class NotSplittable(ViewfenceError):
    """Query has no top-level IN list to split on, or contains NOT."""


class SolverSpawnError(ViewfenceError):
    """A configured solver executable could not be started."""


class SolverIndecision(ViewfenceError):
    """A solver probe needed by template generation returned Unknown."""


class SessionClosed(ViewfenceError):
    """Operation on a session after end_request."""


class UnverifiedTemplate(ViewfenceError):
    """Attempt to cache a decision template that was not verified sound."""
