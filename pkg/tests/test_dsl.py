import json
import random
from pathlib import Path

import pytest

from rulemap.core import Branch, Leaf, Operator, same_structure, validate
from rulemap.dsl import (
    ParseFailure,
    from_canonical,
    parse,
    parse_file,
    serialize,
    slugify,
    to_canonical,
)
from rulemap.errors import SchemaError
from rulemap.leaves import LlmBinding, SymbolicBinding
from treegen import random_rulemap

ROUNDTRIP_DIR = Path(__file__).parent / "fixtures" / "roundtrip"


# --------------------------------------------------------------------------
# parsing


def test_parse_bundled_map(fixtures_dir):
    rulemap = parse_file(fixtures_dir / "stgb130.rmap")
    branches = [n for n in rulemap.nodes.values()
                if isinstance(n.kind, Branch)]
    leaves = [n for n in rulemap.nodes.values() if isinstance(n.kind, Leaf)]
    assert len(branches) == 3
    assert len(leaves) == 6
    root = rulemap.nodes[rulemap.root]
    assert root.kind.operator is Operator.ALL
    assert validate(rulemap).ok


def test_parse_minimal_single_child():
    rulemap = parse('rulemap "t" { all r { leaf a "q?" } }')
    assert rulemap.title == "t"
    assert rulemap.root == "r"
    assert rulemap.nodes["a"].kind.question == "q?"
    report = validate(rulemap)
    assert report.ok
    assert [i.code for i in report.warnings()] == \
        ["SingleChildBranch", "EmptyLeafContext"]


def test_parse_defaults():
    rulemap = parse('rulemap "t" { leaf solo "q?" }')
    binding = rulemap.nodes["solo"].kind.binding
    assert binding == LlmBinding(answer_language="de", retry_limit=2)
    assert rulemap.nodes["solo"].kind.context_text == ""
    assert rulemap.version == 1


def test_parse_symbolic_evaluator():
    rulemap = parse('rulemap "t" { leaf f "q?" { '
                    'evaluator: symbolic(deadline_elapsed, "act_date", "P5Y") '
                    '} }')
    binding = rulemap.nodes["f"].kind.binding
    assert binding == SymbolicBinding("deadline_elapsed", ("act_date", "P5Y"))


def test_parse_unbalanced_brace_has_span():
    source = 'rulemap "t" { all r { leaf a "q?" }'
    with pytest.raises(ParseFailure) as err:
        parse(source)
    span = err.value.errors[0].span
    assert 0 <= span.start <= len(source.encode("utf-8"))
    assert span.line == 1


def test_parse_duplicate_id_reports_both_spans():
    source = ('rulemap "t" {\n'
              '  all r {\n'
              '    leaf a "q1?"\n'
              '    leaf a "q2?"\n'
              '  }\n'
              '}\n')
    with pytest.raises(ParseFailure) as err:
        parse(source)
    messages = [e.message for e in err.value.errors]
    assert any("DuplicateId" in m and "3:10" in m for m in messages)
    dup = [e for e in err.value.errors if "DuplicateId" in e.message][0]
    assert dup.span.line == 4


def test_parse_error_catalogue():
    bad = [
        'rulemap "t" { }',                              # missing node
        'rulemap { leaf a "q?" }',                      # missing title
        'rulemap "t" { leaf a "q? }',                   # unterminated string
        'rulemap "t" { leaf a "q\\x?" }',               # unknown escape
        'rulemap "t" { all r { } }',                    # empty branch
        'rulemap "t" { leaf a "q?" { evaluator: x } }',  # bad evaluator
        'rulemap "t" { leaf a "q?" { answer_language: fr } }',
        'rulemap "t" { leaf a "q?" } trailing',         # trailing input
        'rulemap "t" { leaf a "q?" { context: @ } }',   # empty path
        'rulemap "t" { leaf a "q?" { context: "x" context: "y" } }',
    ]
    for source in bad:
        with pytest.raises(ParseFailure):
            parse(source)


def test_parse_error_spans_inside_source():
    sources = [
        'rulemap "t" { leaf a }',
        'rulemap "t" { all r { leaf a "q?" } } }',
        'rulemap "t" { one }',
        'rulemap',
        '',
    ]
    for source in sources:
        with pytest.raises(ParseFailure) as err:
            parse(source)
        for error in err.value.errors:
            assert error.message
            assert 0 <= error.span.start <= error.span.end
            assert error.span.end <= len(source.encode("utf-8")) + 1
            assert error.span.line >= 1 and error.span.column >= 1


def test_context_file_reference():
    rulemap = parse_file(ROUNDTRIP_DIR / "rt14_context_file.rmap")
    context = rulemap.nodes["datei"].kind.context_text
    assert context.startswith("Kontext aus einer Nachbardatei")


def test_slugify():
    assert slugify("Volksverhetzung (§ 130 Abs. 1 Nr. 1 StGB)") == \
        "volksverhetzung-130-abs-1-nr-1-stgb"
    assert slugify("Größe & Co") == "groesse-co"
    assert slugify("§§§") == "rulemap"


# --------------------------------------------------------------------------
# round trips


def _roundtrip_fixtures():
    paths = sorted(ROUNDTRIP_DIR.glob("*.rmap"))
    assert len(paths) >= 18
    return paths


@pytest.mark.parametrize("path", _roundtrip_fixtures(),
                         ids=lambda p: p.stem)
def test_roundtrip_fixture(path):
    original = parse_file(path)
    text = serialize(original)
    reparsed = parse(text)
    assert same_structure(original, reparsed)
    assert serialize(reparsed) == text  # idempotent


def test_roundtrip_bundled_maps(fixtures_dir):
    for name in ("stgb130.rmap", "stgb130_fine.rmap"):
        original = parse_file(fixtures_dir / name)
        assert same_structure(original, parse(serialize(original)))


def test_golden_serialization_bytes(fixtures_dir):
    rulemap = parse_file(fixtures_dir / "stgb130.rmap")
    golden = (fixtures_dir / "stgb130.golden.rmap").read_bytes()
    assert serialize(rulemap).encode("utf-8") == golden


def test_roundtrip_random_maps():
    rng = random.Random(20240)
    for _ in range(40):
        rulemap = random_rulemap(rng, max_leaves=10, allow_symbolic=True)
        text = serialize(rulemap)
        reparsed = parse(text)
        assert same_structure(rulemap, reparsed)
        assert serialize(reparsed) == text


# --------------------------------------------------------------------------
# canonical document


def test_canonical_identity(stgb130):
    doc = to_canonical(stgb130)
    back = from_canonical(doc)
    assert back == stgb130  # full dataclass equality incl. id/version/metadata
    assert to_canonical(back) == doc


def test_canonical_node_count(stgb130):
    doc = to_canonical(stgb130)
    assert len(doc["nodes"]) == 9


def test_canonical_json_is_stable(stgb130):
    a = json.dumps(to_canonical(stgb130), ensure_ascii=False)
    b = json.dumps(to_canonical(stgb130), ensure_ascii=False)
    assert a == b


def test_from_canonical_missing_root():
    doc = to_canonical(parse('rulemap "t" { leaf a "q?" }'))
    del doc["root"]
    with pytest.raises(SchemaError) as err:
        from_canonical(doc)
    assert err.value.location == "/root"


def test_from_canonical_bad_operator():
    doc = to_canonical(parse('rulemap "t" { all r { leaf a "q?" leaf b "p?" } }'))
    doc["nodes"][0]["branch"]["op"] = "xor"
    with pytest.raises(SchemaError) as err:
        from_canonical(doc)
    assert err.value.location == "/nodes/0/branch/op"


def test_from_canonical_duplicate_node():
    doc = to_canonical(parse('rulemap "t" { all r { leaf a "q?" leaf b "p?" } }'))
    doc["nodes"].append(dict(doc["nodes"][1]))
    with pytest.raises(SchemaError) as err:
        from_canonical(doc)
    assert "duplicate" in str(err.value)


def test_from_canonical_random_maps():
    rng = random.Random(4711)
    for _ in range(25):
        rulemap = random_rulemap(rng, max_leaves=8, allow_symbolic=True)
        assert from_canonical(to_canonical(rulemap)) == rulemap
