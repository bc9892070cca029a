"""Rule-tree workbench for statutory reasoning.

Deterministic Boolean rule trees whose open-textured leaves are decided by
constrained LLM calls (or symbolic predicates), a textual DSL with canonical
serialization, a record/replay model client, two LLM-only baseline methods,
and an offline benchmark harness with bootstrap confidence intervals.
"""

from .client import ChatClient, ChatRequest, ChatResponse, ClientMode, DecodingConfig, cache_key
from .core import (
    Branch,
    EvaluationTrace,
    Leaf,
    Mode,
    Node,
    Operator,
    RuleMap,
    TraceEntry,
    apply_operator,
    evaluate,
    evaluate_with_assignment,
    same_structure,
    validate,
    verify_trace,
)
from .dsl import from_canonical, load_rulemap, parse, parse_file, serialize, to_canonical
from .leaves import (
    AnswerLexicon,
    CaseRecord,
    EvaluatorEnv,
    FailurePolicy,
    LeafPolicy,
    LeafResult,
    LlmBinding,
    SymbolicBinding,
    parse_binary_answer,
)

__version__ = "0.1.0"
