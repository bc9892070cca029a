"""Rulemap logic trees: data model, validation, and bottom-up evaluation.

A rulemap is a rooted tree. Branch nodes combine their children with a
logical operator (optionally negated); leaf nodes carry a yes/no question
answered by an evaluator (LLM judgment or symbolic predicate). Evaluation
propagates truth values from the leaves to the root and records a complete
audit trace that can be re-checked without re-running any evaluator.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, NamedTuple, Optional, Union

from .errors import (
    EmptyChildren,
    IncompleteAssignment,
    InvalidRuleMap,
    LeafFailure,
    RulemapError,
)
from .leaves import (
    CaseRecord,
    EvaluatorEnv,
    FailurePolicy,
    LlmBinding,
    SymbolicBinding,
    evaluate_leaf,
)


class Operator(Enum):
    """Branch connective: conjunction, disjunction, or exclusive choice."""

    ALL = "all"
    ANY = "any"
    ONE = "one"


class Mode(Enum):
    FULL = "full"
    SHORT_CIRCUIT = "short_circuit"


@dataclass(frozen=True)
class Branch:
    operator: Operator
    negated: bool
    children: tuple[str, ...]


@dataclass(frozen=True)
class Leaf:
    question: str
    binding: Union[LlmBinding, SymbolicBinding]
    context_text: str = ""


@dataclass(frozen=True)
class Node:
    id: str
    label: str
    kind: Union[Branch, Leaf]

    @property
    def is_leaf(self) -> bool:
        return isinstance(self.kind, Leaf)


# Truth assignments are plain dicts: leaf id -> bool.
TruthAssignment = Mapping[str, bool]


@dataclass(frozen=True)
class RuleMap:
    """A versioned rule tree. ``nodes`` preserves document order.

    Instances are immutable values; every edit constructs a new map. Derived
    views (document order, leaf ids, validity) are cached on first use, which
    keeps exhaustive truth-table sweeps cheap.
    """

    id: str
    version: int
    title: str
    root: str
    nodes: dict[str, Node]
    metadata: dict[str, str] = field(default_factory=dict)

    def _views(self) -> tuple[tuple[str, ...], tuple[str, ...], frozenset]:
        cached = self.__dict__.get("_views_cache")
        if cached is None:
            order: list[str] = []
            seen: set[str] = set()
            stack = [self.root]
            while stack:
                nid = stack.pop()
                if nid in seen or nid not in self.nodes:
                    continue
                seen.add(nid)
                order.append(nid)
                kind = self.nodes[nid].kind
                if type(kind) is Branch:
                    stack.extend(reversed(kind.children))
            leaves = tuple(nid for nid in order
                           if type(self.nodes[nid].kind) is Leaf)
            cached = (tuple(order), leaves, frozenset(leaves))
            object.__setattr__(self, "_views_cache", cached)
        return cached

    def walk_ids(self) -> list[str]:
        """Node ids in depth-first document order (parent before children)."""
        return list(self._views()[0])

    def leaf_ids(self) -> list[str]:
        return list(self._views()[1])


class UnknownLeaf(RulemapError):
    """An assignment or override names a node that is not a leaf of the map."""

    def __init__(self, ids):
        self.ids = tuple(sorted(ids))
        super().__init__(f"not leaf ids of this rulemap: {', '.join(self.ids)}")


# --------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Issue:
    severity: str  # "error" | "warning"
    node_id: Optional[str]
    code: str
    message: str


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    def errors(self) -> list[Issue]:
        return [i for i in self.issues if i.severity == "error"]

    def warnings(self) -> list[Issue]:
        return [i for i in self.issues if i.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors()

    def add_error(self, node_id: Optional[str], code: str, message: str) -> None:
        self.issues.append(Issue("error", node_id, code, message))

    def add_warning(self, node_id: Optional[str], code: str, message: str) -> None:
        self.issues.append(Issue("warning", node_id, code, message))


def validate(rulemap: RuleMap) -> ValidationReport:
    """Check all structural invariants. Problems are reported, never raised."""
    report = ValidationReport()
    nodes = rulemap.nodes

    for key, node in nodes.items():
        if key != node.id:
            report.add_error(key, "IdMismatch",
                             f"node stored under {key!r} has id {node.id!r}")

    if rulemap.root not in nodes:
        report.add_error(rulemap.root, "MissingRoot",
                         f"root node {rulemap.root!r} is not defined")
        return report

    parents: dict[str, list[str]] = {}
    for node in nodes.values():
        kind = node.kind
        if isinstance(kind, Leaf):
            if isinstance(kind.binding, LlmBinding):
                if kind.binding.retry_limit < 0:
                    report.add_error(node.id, "BadRetryLimit",
                                     "retry limit must be >= 0")
                if not kind.context_text:
                    report.add_warning(node.id, "EmptyLeafContext",
                                       "LLM-bound leaf has no curated context")
            continue
        if not kind.children:
            report.add_error(node.id, "EmptyBranch", "branch has no children")
            continue
        if len(kind.children) == 1:
            report.add_warning(node.id, "SingleChildBranch",
                               "branch has a single child")
        for cid in kind.children:
            if cid not in nodes:
                report.add_error(node.id, "MissingNode",
                                 f"child {cid!r} is not defined")
            else:
                parents.setdefault(cid, []).append(node.id)

    for cid, ps in parents.items():
        if cid == rulemap.root:
            report.add_error(cid, "RootHasParent",
                             f"root is referenced as a child of {ps[0]!r}")
        elif len(ps) > 1:
            report.add_error(cid, "MultipleParents",
                             f"node referenced by several parents: {', '.join(ps)}")

    # Reachability: in a well-formed tree every non-root node is reached
    # exactly once from the root. Unreached nodes include detached cycles.
    reached = frozenset(rulemap._views()[0])
    for nid in nodes:
        if nid not in reached:
            report.add_error(nid, "UnreachableNode",
                             "node is not reachable from the root")
    return report


def ensure_valid(rulemap: RuleMap) -> None:
    if rulemap.__dict__.get("_valid_cache"):
        return
    report = validate(rulemap)
    if not report.ok:
        raise InvalidRuleMap(report)
    object.__setattr__(rulemap, "_valid_cache", True)


# --------------------------------------------------------------------------
# Operators


def apply_operator(op: Operator, negated: bool, child_values: list[bool]) -> bool:
    """Combine child truth values; ONE means exactly one child is true."""
    if not child_values:
        raise EmptyChildren(f"operator {op.value} applied to empty child list")
    if op is Operator.ALL:
        value = all(child_values)
    elif op is Operator.ANY:
        value = any(child_values)
    else:
        value = sum(1 for v in child_values if v) == 1
    return (not value) if negated else value


def _decided(op: Operator, seen: list[bool]) -> bool:
    """True once further children can no longer change the operator value."""
    if op is Operator.ALL:
        return False in seen
    if op is Operator.ANY:
        return True in seen
    return sum(1 for v in seen if v) >= 2


# --------------------------------------------------------------------------
# Traces


class TraceEntry(NamedTuple):
    """Audit record for one node. ``value`` is None when the node was skipped."""

    node_id: str
    value: Optional[bool]
    raw_answer: str = ""
    attempts: int = 0
    evidence: str = ""
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvaluationTrace:
    rulemap_id: str
    rulemap_version: int
    case_id: Optional[str]
    entries: tuple[TraceEntry, ...]  # document order, one per node
    order: tuple[str, ...]           # ids in the sequence values were determined
    mode: Mode
    root_value: bool

    def entry(self, node_id: str) -> TraceEntry:
        for e in self.entries:
            if e.node_id == node_id:
                return e
        raise KeyError(node_id)

    def value_of(self, node_id: str) -> Optional[bool]:
        return self.entry(node_id).value

    def to_dict(self) -> dict:
        return {
            "rulemap_id": self.rulemap_id,
            "rulemap_version": self.rulemap_version,
            "case_id": self.case_id,
            "mode": self.mode.value,
            "root_value": self.root_value,
            "order": list(self.order),
            "entries": [
                {
                    "node_id": e.node_id,
                    "value": e.value,
                    "raw_answer": e.raw_answer,
                    "attempts": e.attempts,
                    "evidence": e.evidence,
                    "flags": list(e.flags),
                }
                for e in self.entries
            ],
        }

    def to_json(self, indent: Optional[int] = None) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=indent)


def trace_from_dict(doc: dict) -> EvaluationTrace:
    return EvaluationTrace(
        rulemap_id=doc["rulemap_id"],
        rulemap_version=doc["rulemap_version"],
        case_id=doc.get("case_id"),
        entries=tuple(
            TraceEntry(e["node_id"], e["value"], e.get("raw_answer", ""),
                       e.get("attempts", 0), e.get("evidence", ""),
                       tuple(e.get("flags", ())))
            for e in doc["entries"]
        ),
        order=tuple(doc["order"]),
        mode=Mode(doc["mode"]),
        root_value=doc["root_value"],
    )


def verify_trace(rulemap: RuleMap, trace: EvaluationTrace) -> list[str]:
    """Re-check every branch value from its children's trace entries.

    Returns a list of inconsistencies (empty means the trace is coherent).
    """
    problems: list[str] = []
    values = {e.node_id: e.value for e in trace.entries}
    for nid, node in rulemap.nodes.items():
        if node.is_leaf or values.get(nid) is None:
            continue
        kind = node.kind
        child_vals = [values[c] for c in kind.children
                      if values.get(c) is not None]
        if not child_vals:
            problems.append(f"{nid}: no evaluated children")
            continue
        expect = apply_operator(kind.operator, kind.negated, child_vals)
        if expect != values[nid]:
            problems.append(f"{nid}: stored {values[nid]}, recomputed {expect}")
    root_val = values.get(rulemap.root)
    if root_val != trace.root_value:
        problems.append(f"root entry {root_val} != root_value {trace.root_value}")
    return problems


# --------------------------------------------------------------------------
# Evaluation

# Internal resolver outcome: (value, raw_answer, attempts, evidence, flags)
_LeafOutcome = tuple[bool, str, int, str, tuple[str, ...]]


def _walk(rulemap: RuleMap, mode: Mode,
          resolve: Callable[[Node], _LeafOutcome]) -> tuple[dict, list, bool]:
    entries: dict[str, TraceEntry] = {}
    order: list[str] = []

    def mark_skipped(nid: str) -> None:
        entries[nid] = TraceEntry(nid, None)
        kind = rulemap.nodes[nid].kind
        if type(kind) is Branch:
            for cid in kind.children:
                mark_skipped(cid)

    def eval_node(nid: str) -> bool:
        node = rulemap.nodes[nid]
        kind = node.kind
        if type(kind) is Leaf:
            value, raw, attempts, evidence, flags = resolve(node)
            entries[nid] = TraceEntry(nid, value, raw, attempts, evidence, flags)
            order.append(nid)
            return value
        seen: list[bool] = []
        stop = False
        for cid in kind.children:
            if stop:
                mark_skipped(cid)
            else:
                seen.append(eval_node(cid))
                if mode is Mode.SHORT_CIRCUIT and _decided(kind.operator, seen):
                    stop = True
        value = apply_operator(kind.operator, kind.negated, seen)
        entries[nid] = TraceEntry(nid, value)
        order.append(nid)
        return value

    root_value = eval_node(rulemap.root)
    return entries, order, root_value


def _assemble(rulemap: RuleMap, case_id: Optional[str], mode: Mode,
              entries: dict[str, TraceEntry], order: list[str],
              root_value: bool) -> EvaluationTrace:
    ordered = tuple(entries[nid] for nid in rulemap._views()[0])
    return EvaluationTrace(
        rulemap_id=rulemap.id,
        rulemap_version=rulemap.version,
        case_id=case_id,
        entries=ordered,
        order=tuple(order),
        mode=mode,
        root_value=root_value,
    )


def evaluate_with_assignment(rulemap: RuleMap, assignment: TruthAssignment,
                             mode: Mode = Mode.FULL,
                             case_id: Optional[str] = None) -> EvaluationTrace:
    """Evaluate the tree under fixed leaf truth values.

    FULL mode demands a value for every leaf; SHORT_CIRCUIT only for the
    leaves it actually reaches. Identical inputs yield identical traces.
    """
    ensure_valid(rulemap)
    _, leaf_tuple, leaf_set = rulemap._views()
    unknown = [key for key in assignment if key not in leaf_set]
    if unknown:
        raise UnknownLeaf(unknown)
    if mode is Mode.FULL and len(assignment) != len(leaf_tuple):
        raise IncompleteAssignment(
            sorted(leaf for leaf in leaf_tuple if leaf not in assignment))

    def resolve(node: Node) -> _LeafOutcome:
        if node.id not in assignment:
            raise IncompleteAssignment([node.id])
        return bool(assignment[node.id]), "assigned", 0, "", ()

    entries, order, root_value = _walk(rulemap, mode, resolve)
    return _assemble(rulemap, case_id, mode, entries, order, root_value)


def evaluate(rulemap: RuleMap, case: CaseRecord, env: EvaluatorEnv,
             mode: Mode = Mode.FULL,
             overrides: Optional[Mapping[str, bool]] = None) -> EvaluationTrace:
    """Evaluate a case: leaves via their bound evaluators, branches symbolically.

    ``overrides`` substitutes truth values for selected leaves without any
    evaluator call (the what-if feature). In SHORT_CIRCUIT mode leaves are
    requested sequentially in document order and a branch stops requesting
    children once its value is decided. In FULL mode leaf evaluations may run
    concurrently (env.parallelism > 1); the trace is assembled in document
    order either way, so results do not depend on scheduling.
    """
    ensure_valid(rulemap)
    overrides = dict(overrides or {})
    leaf_set = set(rulemap.leaf_ids())
    unknown = set(overrides) - leaf_set
    if unknown:
        raise UnknownLeaf(unknown)

    def outcome_for(node: Node) -> _LeafOutcome:
        if node.id in overrides:
            return bool(overrides[node.id]), "override", 0, "", ("override",)
        try:
            result = evaluate_leaf(node, case, env)
        except LeafFailure as failure:
            if env.failure_policy is FailurePolicy.LENIENT:
                return (False, failure.detail, failure.attempts, "",
                        ("leaf_failure_defaulted", failure.kind.value))
            raise
        return (result.value, result.raw_answer, result.attempts,
                result.request_digest, ())

    prefetched: dict[str, _LeafOutcome] = {}
    if mode is Mode.FULL and env.parallelism > 1 and len(leaf_set) > 1:
        doc_order = rulemap.leaf_ids()
        failures: dict[str, LeafFailure] = {}

        def run(nid: str):
            try:
                prefetched[nid] = outcome_for(rulemap.nodes[nid])
            except LeafFailure as failure:
                failures[nid] = failure

        with ThreadPoolExecutor(max_workers=env.parallelism) as pool:
            list(pool.map(run, doc_order))
        if failures:
            # deterministic: surface the failure of the first leaf in
            # document order, regardless of completion order
            first = next(nid for nid in doc_order if nid in failures)
            raise failures[first]

    def resolve(node: Node) -> _LeafOutcome:
        if node.id in prefetched:
            return prefetched[node.id]
        return outcome_for(node)

    entries, order, root_value = _walk(rulemap, mode, resolve)
    return _assemble(rulemap, case.id, mode, entries, order, root_value)


# --------------------------------------------------------------------------
# Structural comparison (used by DSL round-trip checks and storage)


def same_structure(a: RuleMap, b: RuleMap) -> bool:
    """Equality over what the textual form carries: title and the node tree
    (ids, labels, operators, negations, child order, leaf bindings, context).
    Map id, version, and metadata are intentionally not compared."""
    if a.title != b.title or a.root != b.root:
        return False
    ids_a, ids_b = a.walk_ids(), b.walk_ids()
    if ids_a != ids_b:
        return False
    for nid in ids_a:
        na, nb = a.nodes[nid], b.nodes[nid]
        if na.label != nb.label or na.kind != nb.kind:
            return False
    return True
