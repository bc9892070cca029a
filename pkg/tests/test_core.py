import random

import pytest
from hypothesis import given, strategies as st

from conftest import WORKED_EXAMPLE_ASSIGNMENT
from rulemap.core import (
    Branch,
    Leaf,
    Mode,
    Node,
    Operator,
    RuleMap,
    UnknownLeaf,
    apply_operator,
    evaluate,
    evaluate_with_assignment,
    validate,
    verify_trace,
)
from rulemap.client import ChatClient, DecodingConfig
from rulemap.errors import (
    EmptyChildren,
    FailureKind,
    IncompleteAssignment,
    InvalidRuleMap,
    LeafFailure,
)
from rulemap.leaves import (
    CaseRecord,
    EvaluatorEnv,
    FailurePolicy,
    LeafPolicy,
    LlmBinding,
)
from treegen import all_assignments, brute_force, random_rulemap


# --------------------------------------------------------------------------
# apply_operator


def test_operator_examples():
    # a single failing conjunct defeats the whole condition
    assert apply_operator(Operator.ALL, False, [True, False, True]) is False
    assert apply_operator(Operator.ANY, True, [False, False]) is True
    assert apply_operator(Operator.ONE, False, [True, True]) is False
    assert apply_operator(Operator.ALL, False, [True, True, True]) is True


def test_operator_empty_children():
    with pytest.raises(EmptyChildren):
        apply_operator(Operator.ALL, False, [])


@given(st.lists(st.booleans(), min_size=1, max_size=8),
       st.integers(min_value=0, max_value=7),
       st.sampled_from([Operator.ALL, Operator.ANY]))
def test_all_any_monotone(values, index, op):
    index = index % len(values)
    low = list(values)
    low[index] = False
    high = list(values)
    high[index] = True
    assert apply_operator(op, False, low) <= apply_operator(op, False, high)


@given(st.lists(st.booleans(), min_size=1, max_size=8),
       st.sampled_from(list(Operator)))
def test_negation_is_complement(values, op):
    plain = apply_operator(op, False, values)
    negated = apply_operator(op, True, values)
    assert negated == (not plain)
    assert (not negated) == plain  # double complement restores the value


@given(st.lists(st.booleans(), min_size=1, max_size=10))
def test_one_means_exactly_one(values):
    assert apply_operator(Operator.ONE, False, values) == \
        (sum(values) == 1)


# --------------------------------------------------------------------------
# validate


def test_validate_bundled_map_clean(stgb130):
    report = validate(stgb130)
    assert report.ok
    assert report.issues == []


def _tiny_map(nodes, root="r"):
    return RuleMap(id="t", version=1, title="t", root=root, nodes=nodes)


def _leaf(nid, context="K"):
    return Node(nid, "", Leaf(f"Frage {nid}?", LlmBinding(), context))


def test_validate_missing_child():
    nodes = {"r": Node("r", "", Branch(Operator.ALL, False, ("ghost",)))}
    report = validate(_tiny_map(nodes))
    assert [i.code for i in report.errors()] == ["MissingNode"]


def test_validate_empty_branch():
    nodes = {"r": Node("r", "", Branch(Operator.ALL, False, ()))}
    report = validate(_tiny_map(nodes))
    assert "EmptyBranch" in [i.code for i in report.errors()]


def test_validate_single_child_warns():
    nodes = {"r": Node("r", "", Branch(Operator.ALL, False, ("a",))),
             "a": _leaf("a")}
    report = validate(_tiny_map(nodes))
    assert report.ok
    assert [i.code for i in report.warnings()] == ["SingleChildBranch"]


def test_validate_empty_llm_context_warns():
    nodes = {"r": Node("r", "", Branch(Operator.ALL, False, ("a", "b"))),
             "a": _leaf("a", context=""), "b": _leaf("b")}
    report = validate(_tiny_map(nodes))
    assert report.ok
    assert [(i.code, i.node_id) for i in report.warnings()] == \
        [("EmptyLeafContext", "a")]


def test_validate_multi_parent_and_unreachable():
    nodes = {
        "r": Node("r", "", Branch(Operator.ALL, False, ("a", "a"))),
        "a": _leaf("a"),
        "stray": _leaf("stray"),
    }
    report = validate(_tiny_map(nodes))
    codes = {i.code for i in report.errors()}
    assert "MultipleParents" in codes
    assert "UnreachableNode" in codes


def test_validate_root_has_parent():
    nodes = {"r": Node("r", "", Branch(Operator.ALL, False, ("a", "r"))),
             "a": _leaf("a")}
    report = validate(_tiny_map(nodes))
    assert "RootHasParent" in {i.code for i in report.errors()}


def test_validate_bad_retry_limit():
    nodes = {"r": Node("r", "", Branch(Operator.ALL, False, ("a", "b"))),
             "a": Node("a", "", Leaf("F?", LlmBinding(retry_limit=-1), "K")),
             "b": _leaf("b")}
    report = validate(_tiny_map(nodes))
    assert "BadRetryLimit" in {i.code for i in report.errors()}


# --------------------------------------------------------------------------
# evaluate_with_assignment


def test_worked_example_trace(stgb130):
    trace = evaluate_with_assignment(stgb130, WORKED_EXAMPLE_ASSIGNMENT)
    assert trace.root_value is False
    assert trace.value_of("attacking_action") is True
    assert trace.value_of("protected_target") is True
    assert trace.value_of("suitability") is False


def test_all_true_satisfies(stgb130):
    assignment = {leaf: True for leaf in stgb130.leaf_ids()}
    assert evaluate_with_assignment(stgb130, assignment).root_value is True


def test_satisfying_assignment_count(stgb130):
    # frozen from the brute-force truth-table oracle over all 2^6 assignments
    leaves = stgb130.leaf_ids()
    count = sum(evaluate_with_assignment(stgb130, a).root_value
                for a in all_assignments(leaves))
    assert count == 21


def test_full_mode_requires_complete_assignment(stgb130):
    partial = dict(WORKED_EXAMPLE_ASSIGNMENT)
    del partial["individual"]
    with pytest.raises(IncompleteAssignment) as err:
        evaluate_with_assignment(stgb130, partial)
    assert "individual" in err.value.missing


def test_unknown_assignment_key_rejected(stgb130):
    bad = dict(WORKED_EXAMPLE_ASSIGNMENT, nonexistent=True)
    with pytest.raises(UnknownLeaf):
        evaluate_with_assignment(stgb130, bad)


def test_invalid_map_rejected():
    nodes = {"r": Node("r", "", Branch(Operator.ALL, False, ("ghost",)))}
    with pytest.raises(InvalidRuleMap):
        evaluate_with_assignment(_tiny_map(nodes), {})


def test_full_mode_has_no_skips(stgb130):
    trace = evaluate_with_assignment(stgb130, WORKED_EXAMPLE_ASSIGNMENT)
    assert all(e.value is not None for e in trace.entries)
    assert len(trace.entries) == len(stgb130.nodes)


def test_trace_determinism(stgb130):
    a = evaluate_with_assignment(stgb130, WORKED_EXAMPLE_ASSIGNMENT)
    b = evaluate_with_assignment(stgb130, WORKED_EXAMPLE_ASSIGNMENT)
    assert a.to_json() == b.to_json()


def test_short_circuit_skips_second_alternative(stgb130):
    # first attacking-action leaf already true: the disjunction is decided
    assignment = {"incitement": True, "suitability": True,
                  "national_group": True}
    trace = evaluate_with_assignment(stgb130, assignment, Mode.SHORT_CIRCUIT)
    assert trace.entry("call_violence").value is None
    assert trace.root_value is True
    assert "call_violence" not in trace.order


def test_short_circuit_demands_only_reached_leaves(stgb130):
    # suitability False kills the conjunction before protected_target
    assignment = {"incitement": False, "call_violence": True,
                  "suitability": False}
    trace = evaluate_with_assignment(stgb130, assignment, Mode.SHORT_CIRCUIT)
    assert trace.root_value is False
    assert trace.entry("national_group").value is None


def test_short_circuit_missing_demanded_leaf(stgb130):
    with pytest.raises(IncompleteAssignment):
        evaluate_with_assignment(stgb130, {"incitement": False},
                                 Mode.SHORT_CIRCUIT)


def test_modes_agree_on_root(stgb130):
    rng = random.Random(7)
    for _ in range(25):
        rulemap = random_rulemap(rng, max_leaves=8)
        leaves = rulemap.leaf_ids()
        assignment = {leaf: rng.random() < 0.5 for leaf in leaves}
        full = evaluate_with_assignment(rulemap, assignment, Mode.FULL)
        short = evaluate_with_assignment(rulemap, assignment,
                                         Mode.SHORT_CIRCUIT)
        assert full.root_value == short.root_value


def test_trace_self_consistency(stgb130):
    rng = random.Random(11)
    for _ in range(25):
        rulemap = random_rulemap(rng, max_leaves=8)
        assignment = {leaf: rng.random() < 0.5
                      for leaf in rulemap.leaf_ids()}
        for mode in (Mode.FULL, Mode.SHORT_CIRCUIT):
            trace = evaluate_with_assignment(rulemap, assignment, mode)
            assert verify_trace(rulemap, trace) == []


def test_matches_brute_force_small():
    rng = random.Random(99)
    for _ in range(30):
        rulemap = random_rulemap(rng, max_leaves=6)
        oracle = brute_force(rulemap)
        leaves = rulemap.leaf_ids()
        for assignment in all_assignments(leaves):
            got = evaluate_with_assignment(rulemap, assignment).root_value
            assert got == oracle(assignment)


# --------------------------------------------------------------------------
# evaluate (leaf evaluators in the loop)


def _always(text):
    def transport(url, headers, payload, timeout):
        return {"choices": [{"message": {"content": text}}], "usage": {}}
    return transport


def _env(transport, failure_policy=FailurePolicy.STRICT, parallelism=1):
    client = ChatClient(mode="live", api_base="https://stub.invalid",
                        api_key="k", transport=transport)
    return EvaluatorEnv(client=client,
                        policy=LeafPolicy(decoding=DecodingConfig(model="m")),
                        failure_policy=failure_policy,
                        parallelism=parallelism)


def test_evaluate_with_stub_answers(stgb130):
    env = _env(_always("ja"))
    case = CaseRecord(id="c1", text="Ein Beitrag.")
    trace = evaluate(stgb130, case, env)
    assert trace.root_value is True
    assert trace.case_id == "c1"
    leaf_entries = [trace.entry(leaf) for leaf in stgb130.leaf_ids()]
    assert all(e.attempts == 1 and e.raw_answer == "ja" for e in leaf_entries)


def test_evaluate_strict_leaf_failure(stgb130):
    env = _env(_always("kommt drauf an"))
    with pytest.raises(LeafFailure) as err:
        evaluate(stgb130, CaseRecord(id="c", text="T"), env)
    assert err.value.kind is FailureKind.AMBIGUOUS
    assert err.value.node_id == "incitement"  # first leaf in document order


def test_evaluate_lenient_flags_failures(stgb130):
    env = _env(_always("unklar"), failure_policy=FailurePolicy.LENIENT)
    trace = evaluate(stgb130, CaseRecord(id="c", text="T"), env)
    assert trace.root_value is False
    entry = trace.entry("suitability")
    assert entry.value is False
    assert "leaf_failure_defaulted" in entry.flags


def test_evaluate_override_avoids_client(stgb130):
    env = EvaluatorEnv(client=None,
                       policy=LeafPolicy(decoding=DecodingConfig(model="m")))
    overrides = dict(WORKED_EXAMPLE_ASSIGNMENT)
    trace = evaluate(stgb130, CaseRecord(id="c", text="T"), env,
                     overrides=overrides)
    assert trace.root_value is False
    assert trace.entry("suitability").flags == ("override",)


def test_evaluate_override_unknown_leaf(stgb130):
    env = _env(_always("ja"))
    with pytest.raises(UnknownLeaf):
        evaluate(stgb130, CaseRecord(id="c", text="T"), env,
                 overrides={"attacking_action": True})


def test_parallel_full_mode_trace_identical(stgb130):
    case = CaseRecord(id="c", text="Ein Beitrag über das Wetter.")
    sequential = evaluate(stgb130, case, _env(_always("nein"), parallelism=1))
    parallel = evaluate(stgb130, case, _env(_always("nein"), parallelism=8))
    assert sequential.to_json() == parallel.to_json()


def test_parallel_strict_failure_is_first_in_document_order(stgb130):
    def transport(url, headers, payload, timeout):
        # suitability answers cleanly, everything else is ambiguous
        text = "ja" if "Frieden" in payload["messages"][0]["content"] \
            else "tja"
        return {"choices": [{"message": {"content": text}}], "usage": {}}

    with pytest.raises(LeafFailure) as err:
        evaluate(stgb130, CaseRecord(id="c", text="T"),
                 _env(transport, parallelism=6))
    assert err.value.node_id == "incitement"
