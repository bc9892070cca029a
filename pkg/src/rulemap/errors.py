"""Shared exception types for the rulemap workbench."""

from enum import Enum


class RulemapError(Exception):
    """Base class for all domain errors raised by this package."""


class ConfigError(RulemapError):
    """Missing or inconsistent configuration (env vars, run config, packs)."""


class EmptyChildren(RulemapError):
    """A logical operator was applied to an empty child list."""


class InvalidRuleMap(RulemapError):
    """A rulemap failed structural validation.

    Carries the full validation report so callers can surface every problem.
    """

    def __init__(self, report):
        self.report = report
        super().__init__("rulemap failed validation: " + "; ".join(
            f"{i.code}@{i.node_id or '<map>'}" for i in report.errors()))


class IncompleteAssignment(RulemapError):
    """A truth assignment is missing values for demanded leaves."""

    def __init__(self, missing):
        self.missing = tuple(missing)
        super().__init__(f"assignment missing leaf values: {', '.join(self.missing)}")


class FailureKind(Enum):
    AMBIGUOUS = "ambiguous"
    TRANSPORT = "transport"
    MISSING_FIELD = "missing_field"
    BAD_FIELD = "bad_field"
    UNKNOWN_PREDICATE = "unknown_predicate"


class LeafFailure(RulemapError):
    """A leaf evaluator could not produce a boolean value."""

    def __init__(self, node_id: str, kind: FailureKind, detail: str = "",
                 attempts: int = 0):
        self.node_id = node_id
        self.kind = kind
        self.detail = detail
        self.attempts = attempts
        super().__init__(f"leaf '{node_id}' failed ({kind.value}): {detail}")


class AmbiguousAnswer(RulemapError):
    """A model reply could not be mapped onto a binary answer."""

    def __init__(self, raw_text: str):
        self.raw_text = raw_text
        super().__init__(f"not a binary answer: {raw_text!r}")


class CacheMiss(RulemapError):
    """Replay mode found no cache entry for a request."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no cached response for key {key}")


class TransportError(RulemapError):
    """HTTP failure (non-success status or timeout) talking to the model endpoint."""

    def __init__(self, detail: str, status: int | None = None):
        self.status = status
        super().__init__(detail)


class SchemaError(RulemapError):
    """A structured document or dataset file violates its schema."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{message} (at {location})" if location else message)


class DuplicateId(RulemapError):
    """An identifier that must be unique occurred twice."""

    def __init__(self, ident: str, detail: str = ""):
        self.ident = ident
        super().__init__(f"duplicate id {ident!r}" + (f": {detail}" if detail else ""))


class JoinError(RulemapError):
    """Prediction ids do not line up with the reference gold ids."""

    def __init__(self, offenders):
        self.offenders = tuple(sorted(offenders))
        super().__init__(f"prediction ids missing from gold: {', '.join(self.offenders)}")
