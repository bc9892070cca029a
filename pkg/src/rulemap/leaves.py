"""Leaf evaluators: constrained LLM judgments and deterministic predicates.

An LLM-bound leaf turns its question, curated context, and the case text
into a chat request whose reply must be an explicit binary answer; replies
are parsed and validated before any truth value propagates into the tree.
Symbolic leaves compute their value from structured case fields instead.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from typing import TYPE_CHECKING, Callable, Mapping, Union

from dateutil.relativedelta import relativedelta

from .client import ChatClient, ChatRequest, DecodingConfig, cache_key
from .errors import (
    AmbiguousAnswer,
    ConfigError,
    FailureKind,
    LeafFailure,
    TransportError,
)

if TYPE_CHECKING:
    from .core import Node


# --------------------------------------------------------------------------
# Bindings and case input


@dataclass(frozen=True)
class LlmBinding:
    """Leaf decided by a constrained model call."""

    answer_language: str = "de"
    retry_limit: int = 2


@dataclass(frozen=True)
class SymbolicBinding:
    """Leaf decided by a registered predicate over structured case fields."""

    predicate: str
    params: tuple[str, ...] = ()


LeafBinding = Union[LlmBinding, SymbolicBinding]

FieldValue = Union[str, int, float, bool, date]


@dataclass(frozen=True)
class CaseRecord:
    """One input case: unstructured text plus optional structured fields."""

    id: str
    text: str = ""
    fields: Mapping[str, FieldValue] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValueError("case id must be non-empty")


@dataclass(frozen=True)
class LeafResult:
    value: bool
    raw_answer: str
    attempts: int
    evaluator_kind: str  # "llm" | "symbolic"
    request_digest: str = ""


class FailurePolicy(Enum):
    """What evaluation does when a leaf evaluator fails.

    STRICT aborts the case; LENIENT substitutes False and flags the trace
    entry so the default is visible in every audit.
    """

    STRICT = "strict"
    LENIENT = "lenient"


# --------------------------------------------------------------------------
# Binary answer parsing


@dataclass(frozen=True)
class AnswerLexicon:
    affirmative: frozenset[str]
    negative: frozenset[str]

    def __post_init__(self):
        if self.affirmative & self.negative:
            raise ValueError("affirmative and negative token sets overlap")


DEFAULT_LEXICONS: Mapping[str, AnswerLexicon] = {
    "de": AnswerLexicon(frozenset({"ja", "j", "yes", "y"}),
                        frozenset({"nein", "n", "no"})),
    "en": AnswerLexicon(frozenset({"yes", "y"}), frozenset({"no", "n"})),
}

_TERMINAL_PUNCT = ".!?,;:"


def normalize_answer(text: str) -> str:
    """Final non-empty line, trimmed, lowercased, terminal punctuation stripped."""
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines:
        return ""
    return lines[-1].lower().rstrip(_TERMINAL_PUNCT).strip()


def parse_binary_answer(text: str, lexicon: AnswerLexicon) -> bool:
    """Map a model reply onto a boolean by exact token membership.

    Anything that does not normalize to a lexicon token raises
    AmbiguousAnswer carrying the raw text for the trace.
    """
    token = normalize_answer(text)
    if token in lexicon.affirmative:
        return True
    if token in lexicon.negative:
        return False
    raise AmbiguousAnswer(text)


# --------------------------------------------------------------------------
# Prompt construction

BINARY_INSTRUCTION = {
    "de": "Antworte ausschließlich mit ja oder nein.",
    "en": "Answer with yes or no only.",
}

# Same terse sentence is appended as a reminder on every retry.
RETRY_REMINDER = BINARY_INSTRUCTION

DEFAULT_LEAF_TEMPLATE = (
    "Du prüfst als juristischer Assistent genau ein einzelnes "
    "Tatbestandsmerkmal für einen Beitrag aus sozialen Medien.\n"
    "\n"
    "Frage: {question}\n"
    "\n"
    "Kontext:\n"
    "{context}\n"
    "\n"
    "{binary_instruction}"
)


def load_template(template_id: str) -> str:
    """Resolve a template id from run configuration.

    ``default`` is the built-in template; anything else is read as a path to
    a text file with the named placeholders {question}, {context},
    {case_text}, {binary_instruction}.
    """
    if template_id == "default":
        return DEFAULT_LEAF_TEMPLATE
    from pathlib import Path

    return Path(template_id).read_text(encoding="utf-8")


@dataclass(frozen=True)
class LeafPolicy:
    """Everything an LLM leaf evaluation needs besides the leaf itself."""

    decoding: DecodingConfig
    template: str = DEFAULT_LEAF_TEMPLATE
    lexicons: Mapping[str, AnswerLexicon] = field(
        default_factory=lambda: DEFAULT_LEXICONS)

    def lexicon_for(self, language: str) -> AnswerLexicon:
        try:
            return self.lexicons[language]
        except KeyError:
            raise ConfigError(f"no answer lexicon for language {language!r}")


def build_leaf_prompt(leaf: "Node", case: CaseRecord,
                      policy: LeafPolicy) -> ChatRequest:
    """Pure function of (leaf, case, policy): same inputs, same request."""
    kind = leaf.kind
    binding = kind.binding
    if not isinstance(binding, LlmBinding):
        raise ConfigError(f"leaf {leaf.id!r} is not LLM-bound")
    instruction = BINARY_INSTRUCTION.get(binding.answer_language,
                                         BINARY_INSTRUCTION["de"])
    system = policy.template.format(
        question=kind.question,
        context=kind.context_text,
        case_text=case.text,
        binary_instruction=instruction,
    )
    return ChatRequest(system=system, user=case.text, decoding=policy.decoding)


# --------------------------------------------------------------------------
# LLM leaf evaluation


def evaluate_llm_leaf(leaf: "Node", case: CaseRecord, client: ChatClient,
                      policy: LeafPolicy) -> LeafResult:
    """Call the model, parse the binary reply, retry on ambiguous output.

    Each retry appends the reminder line to the user message once more, so
    every attempt is a distinct request (and a distinct cache entry).
    Transport problems and exhausted retries raise LeafFailure; a replay
    cache miss propagates unchanged so callers can abort replay runs.
    """
    binding = leaf.kind.binding
    lexicon = policy.lexicon_for(binding.answer_language)
    reminder = RETRY_REMINDER.get(binding.answer_language, RETRY_REMINDER["de"])
    request = build_leaf_prompt(leaf, case, policy)

    last_raw = ""
    attempts = 0
    for _ in range(binding.retry_limit + 1):
        attempts += 1
        try:
            response = client.complete(request)
        except TransportError as exc:
            raise LeafFailure(leaf.id, FailureKind.TRANSPORT, str(exc),
                              attempts=attempts)
        last_raw = response.text
        try:
            value = parse_binary_answer(response.text, lexicon)
        except AmbiguousAnswer:
            request = ChatRequest(system=request.system,
                                  user=request.user + "\n\n" + reminder,
                                  decoding=request.decoding)
            continue
        return LeafResult(value=value, raw_answer=response.text,
                          attempts=attempts, evaluator_kind="llm",
                          request_digest=cache_key(request))
    raise LeafFailure(leaf.id, FailureKind.AMBIGUOUS, last_raw,
                      attempts=attempts)


# --------------------------------------------------------------------------
# Symbolic predicates


class PredicateError(Exception):
    """Raised by predicates; converted to LeafFailure with the node id."""

    def __init__(self, kind: FailureKind, detail: str):
        self.kind = kind
        self.detail = detail
        super().__init__(detail)


# A predicate maps (case, params, evaluation_date) to (value, explanation).
PredicateFn = Callable[[CaseRecord, tuple[str, ...], date], tuple[bool, str]]


class PredicateRegistry:
    def __init__(self):
        self._predicates: dict[str, PredicateFn] = {}

    def register(self, name: str, fn: PredicateFn) -> None:
        self._predicates[name] = fn

    def get(self, name: str) -> PredicateFn:
        try:
            return self._predicates[name]
        except KeyError:
            raise PredicateError(FailureKind.UNKNOWN_PREDICATE,
                                 f"predicate {name!r} is not registered")

    def names(self) -> list[str]:
        return sorted(self._predicates)


_PERIOD_RE = re.compile(r"^P(?:(\d+)Y)?(?:(\d+)M)?(?:(\d+)D)?$")


def _parse_period(text: str) -> relativedelta:
    m = _PERIOD_RE.match(text)
    if not m or not any(m.groups()):
        raise PredicateError(FailureKind.BAD_FIELD,
                             f"bad ISO-8601 period {text!r} (expected PnYnMnD)")
    years, months, days = (int(g) if g else 0 for g in m.groups())
    return relativedelta(years=years, months=months, days=days)


def _field_as_date(case: CaseRecord, name: str) -> date:
    if name not in case.fields:
        raise PredicateError(FailureKind.MISSING_FIELD,
                             f"case {case.id!r} has no field {name!r}")
    value = case.fields[name]
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    if isinstance(value, str):
        try:
            return date.fromisoformat(value)
        except ValueError:
            pass
    raise PredicateError(FailureKind.BAD_FIELD,
                         f"field {name!r} is not a date: {value!r}")


def deadline_elapsed(case: CaseRecord, params: tuple[str, ...],
                     evaluation_date: date) -> tuple[bool, str]:
    """True once field date + period lies on or before the evaluation date."""
    if len(params) != 2:
        raise PredicateError(FailureKind.BAD_FIELD,
                             "deadline_elapsed expects (field, period)")
    field_name, period_text = params
    start = _field_as_date(case, field_name)
    deadline = start + _parse_period(period_text)
    elapsed = evaluation_date >= deadline
    return elapsed, (f"{field_name}={start.isoformat()} + {period_text} -> "
                     f"deadline {deadline.isoformat()}; evaluated at "
                     f"{evaluation_date.isoformat()}: "
                     f"{'elapsed' if elapsed else 'not elapsed'}")


def field_equals(case: CaseRecord, params: tuple[str, ...],
                 evaluation_date: date) -> tuple[bool, str]:
    """String-compare a case field against an expected literal."""
    if len(params) != 2:
        raise PredicateError(FailureKind.BAD_FIELD,
                             "field_equals expects (field, expected)")
    field_name, expected = params
    if field_name not in case.fields:
        raise PredicateError(FailureKind.MISSING_FIELD,
                             f"case {case.id!r} has no field {field_name!r}")
    actual = case.fields[field_name]
    equal = str(actual) == expected
    return equal, f"{field_name}={actual!r} == {expected!r}: {equal}"


def default_registry() -> PredicateRegistry:
    registry = PredicateRegistry()
    registry.register("deadline_elapsed", deadline_elapsed)
    registry.register("field_equals", field_equals)
    return registry


def evaluate_symbolic_leaf(leaf: "Node", case: CaseRecord,
                           registry: PredicateRegistry,
                           evaluation_date: date) -> LeafResult:
    """Deterministic in (leaf, case, evaluation_date); never calls a model."""
    binding = leaf.kind.binding
    if not isinstance(binding, SymbolicBinding):
        raise ConfigError(f"leaf {leaf.id!r} is not symbolically bound")
    try:
        fn = registry.get(binding.predicate)
        value, explanation = fn(case, binding.params, evaluation_date)
    except PredicateError as exc:
        raise LeafFailure(leaf.id, exc.kind, exc.detail, attempts=1)
    return LeafResult(value=value, raw_answer=explanation, attempts=1,
                      evaluator_kind="symbolic")


# --------------------------------------------------------------------------
# Evaluator environment

# Fixed default so date predicates never depend on the wall clock.
DEFAULT_EVALUATION_DATE = date(2026, 1, 1)


@dataclass
class EvaluatorEnv:
    """Everything ``core.evaluate`` needs to resolve leaf bindings."""

    client: ChatClient | None
    policy: LeafPolicy
    registry: PredicateRegistry = field(default_factory=default_registry)
    evaluation_date: date = DEFAULT_EVALUATION_DATE
    failure_policy: FailurePolicy = FailurePolicy.STRICT
    parallelism: int = 1


def evaluate_leaf(leaf: "Node", case: CaseRecord,
                  env: EvaluatorEnv) -> LeafResult:
    """Dispatch on the leaf binding."""
    binding = leaf.kind.binding
    if isinstance(binding, LlmBinding):
        if env.client is None:
            raise ConfigError(
                f"leaf {leaf.id!r} needs a model client but none is configured")
        return evaluate_llm_leaf(leaf, case, env.client, env.policy)
    return evaluate_symbolic_leaf(leaf, case, env.registry,
                                  env.evaluation_date)
