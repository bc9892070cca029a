"""Textual rulemap DSL and the canonical JSON document form.

The DSL is the human-writable carrier for rule trees::

    rulemap "Title" {
      all root "Label" {
        leaf q1 "Question?" {
          context: "curated context"
        }
        not any exceptions {
          leaf q2 "Other question?" { evaluator: symbolic(field_equals, "kind", "post") }
        }
      }
    }

Keywords all/any/one select the branch operator, a leading ``not`` negates
it. Leaf properties: ``evaluator`` (default llm), ``context`` (inline string
or ``@file`` relative to the DSL file), ``answer_language`` (default de).
Comments run from ``#`` to end of line. Serialization is canonical: two-space
indentation, properties in grammar order, default values omitted, strings
escaped deterministically. Note the DSL cannot express an LLM retry limit or
a leaf label; parsing always yields the defaults for those.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .core import Branch, Leaf, Node, Operator, RuleMap, ensure_valid
from .errors import RulemapError, SchemaError
from .leaves import LlmBinding, SymbolicBinding


@dataclass(frozen=True)
class SourceSpan:
    """Byte offsets into the source plus 1-based line/column of the start."""

    start: int
    end: int
    line: int
    column: int

    def __str__(self):
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    message: str
    expected: Optional[tuple[str, ...]] = None


class ParseFailure(RulemapError):
    """Parsing failed; carries every collected ParseError."""

    def __init__(self, errors: list[ParseError]):
        self.errors = list(errors)
        first = errors[0]
        super().__init__(f"parse error at {first.span}: {first.message}"
                         + (f" (+{len(errors) - 1} more)" if len(errors) > 1 else ""))


# --------------------------------------------------------------------------
# Lexer

_WORD = "word"
_STRING = "string"
_PUNCT = "punct"
_PATH = "path"
_EOF = "eof"

_WORD_START = re.compile(r"[A-Za-z_]")
_WORD_CHAR = re.compile(r"[A-Za-z0-9_]")
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}


@dataclass(frozen=True)
class _Token:
    kind: str
    value: str
    span: SourceSpan


class _Lexer:
    def __init__(self, source: str):
        self.source = source
        self.pos = 0          # character index
        self.byte = 0         # byte offset (UTF-8)
        self.line = 1
        self.column = 1

    def _peek(self) -> str:
        return self.source[self.pos] if self.pos < len(self.source) else ""

    def _advance(self) -> str:
        ch = self.source[self.pos]
        self.pos += 1
        self.byte += len(ch.encode("utf-8"))
        if ch == "\n":
            self.line += 1
            self.column = 1
        else:
            self.column += 1
        return ch

    def _mark(self) -> tuple[int, int, int]:
        return self.byte, self.line, self.column

    def _span(self, mark: tuple[int, int, int]) -> SourceSpan:
        return SourceSpan(mark[0], self.byte, mark[1], mark[2])

    def _error(self, mark, message, expected=None):
        raise ParseFailure([ParseError(self._span(mark), message, expected)])

    def tokens(self) -> list[_Token]:
        out: list[_Token] = []
        while True:
            ch = self._peek()
            if ch == "":
                out.append(_Token(_EOF, "", self._span(self._mark())))
                return out
            if ch in " \t\r\n":
                self._advance()
                continue
            if ch == "#":
                while self._peek() not in ("", "\n"):
                    self._advance()
                continue
            mark = self._mark()
            if ch in "{}(),:":
                self._advance()
                out.append(_Token(_PUNCT, ch, self._span(mark)))
                continue
            if ch == '"':
                out.append(self._string(mark))
                continue
            if ch == "@":
                self._advance()
                path = []
                while self._peek() not in ("", " ", "\t", "\r", "\n", "}", "{"):
                    path.append(self._advance())
                if not path:
                    self._error(mark, "expected a file path after '@'")
                out.append(_Token(_PATH, "".join(path), self._span(mark)))
                continue
            if _WORD_START.match(ch):
                word = [self._advance()]
                while _WORD_CHAR.match(self._peek() or "\0"):
                    word.append(self._advance())
                out.append(_Token(_WORD, "".join(word), self._span(mark)))
                continue
            self._error(mark, f"unexpected character {ch!r}")

    def _string(self, mark) -> _Token:
        self._advance()  # opening quote
        chars: list[str] = []
        while True:
            ch = self._peek()
            if ch == "":
                self._error(mark, "unterminated string")
            if ch == "\n":
                self._error(mark, "newline inside string (use \\n)")
            self._advance()
            if ch == '"':
                return _Token(_STRING, "".join(chars), self._span(mark))
            if ch == "\\":
                esc = self._peek()
                if esc not in _ESCAPES:
                    self._error(mark, f"unknown escape \\{esc}")
                self._advance()
                chars.append(_ESCAPES[esc])
            else:
                chars.append(ch)


# --------------------------------------------------------------------------
# Parser

_OPERATORS = {"all": Operator.ALL, "any": Operator.ANY, "one": Operator.ONE}
_NODE_STARTERS = ("leaf", "not", "all", "any", "one")


class _Parser:
    def __init__(self, tokens: list[_Token], base_dir: Optional[Path]):
        self.tokens = tokens
        self.i = 0
        self.base_dir = base_dir
        self.nodes: dict[str, Node] = {}
        self.spans: dict[str, SourceSpan] = {}
        self.errors: list[ParseError] = []

    def _peek(self) -> _Token:
        return self.tokens[self.i]

    def _next(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind is not _EOF:
            self.i += 1
        return tok

    def _fail(self, tok: _Token, message: str, expected=None):
        raise ParseFailure(self.errors
                           + [ParseError(tok.span, message,
                                         tuple(expected) if expected else None)])

    def _expect_punct(self, ch: str) -> _Token:
        tok = self._next()
        if tok.kind is not _PUNCT or tok.value != ch:
            self._fail(tok, f"expected {ch!r}", expected=[ch])
        return tok

    def _expect_word(self, *choices: str) -> _Token:
        tok = self._next()
        if tok.kind is not _WORD or (choices and tok.value not in choices):
            what = " or ".join(repr(c) for c in choices) if choices else "a name"
            self._fail(tok, f"expected {what}", expected=list(choices) or None)
        return tok

    def _expect_string(self, what: str) -> _Token:
        tok = self._next()
        if tok.kind is not _STRING:
            self._fail(tok, f"expected {what} (a quoted string)")
        return tok

    def parse(self) -> RuleMap:
        self._expect_word("rulemap")
        title = self._expect_string("the rulemap title").value
        self._expect_punct("{")
        root_id = self._node()
        self._expect_punct("}")
        tail = self._next()
        if tail.kind is not _EOF:
            self._fail(tail, "trailing input after closing '}'")
        if self.errors:
            raise ParseFailure(self.errors)
        return RuleMap(id=slugify(title), version=1, title=title,
                       root=root_id, nodes=self.nodes, metadata={})

    def _register(self, node: Node, span: SourceSpan) -> None:
        if node.id in self.nodes:
            first = self.spans[node.id]
            self.errors.append(ParseError(
                span,
                f"DuplicateId: node id {node.id!r} already defined at {first}"))
            return
        self.nodes[node.id] = node
        self.spans[node.id] = span

    def _node(self) -> str:
        tok = self._peek()
        if tok.kind is not _WORD or tok.value not in _NODE_STARTERS:
            self._fail(tok, "expected a node (leaf, all, any, one, or not)",
                       expected=list(_NODE_STARTERS))
        if tok.value == "leaf":
            return self._leaf()
        return self._branch()

    def _branch(self) -> str:
        negated = False
        tok = self._peek()
        if tok.value == "not":
            self._next()
            negated = True
        op_tok = self._expect_word("all", "any", "one")
        ident = self._expect_word()
        label = ""
        if self._peek().kind is _STRING:
            label = self._next().value
        self._expect_punct("{")
        children: list[str] = []
        # reserve document order: parent precedes children
        placeholder_index = len(self.nodes)
        while self._peek().kind is _WORD and self._peek().value in _NODE_STARTERS:
            children.append(self._node())
        close = self._next()
        if close.kind is not _PUNCT or close.value != "}":
            self._fail(close, "expected a node or '}'")
        if not children:
            self.errors.append(ParseError(
                op_tok.span, "branch must contain at least one node"))
        node = Node(id=ident.value, label=label,
                    kind=Branch(_OPERATORS[op_tok.value], negated,
                                tuple(children)))
        self._register(node, ident.span)
        # restore document order: move the branch before its children
        self._reorder(ident.value, placeholder_index)
        return ident.value

    def _reorder(self, node_id: str, position: int) -> None:
        if node_id not in self.nodes:
            return
        items = list(self.nodes.items())
        entry = (node_id, self.nodes[node_id])
        items.remove(entry)
        items.insert(position, entry)
        self.nodes = dict(items)

    def _leaf(self) -> str:
        self._expect_word("leaf")
        ident = self._expect_word()
        question = self._expect_string("the leaf question").value
        evaluator: Optional[SymbolicBinding] = None
        language: Optional[str] = None
        context = ""
        seen: set[str] = set()
        if self._peek().kind is _PUNCT and self._peek().value == "{":
            self._next()
            while self._peek().kind is _WORD:
                prop = self._expect_word("evaluator", "context",
                                         "answer_language")
                if prop.value in seen:
                    self._fail(prop, f"duplicate property {prop.value!r}")
                seen.add(prop.value)
                self._expect_punct(":")
                if prop.value == "evaluator":
                    evaluator = self._evaluator()
                elif prop.value == "context":
                    context = self._context(ident.value)
                else:
                    language = self._expect_word("de", "en").value
            self._expect_punct("}")
        if evaluator is not None:
            binding = evaluator
        else:
            binding = LlmBinding(answer_language=language or "de")
        node = Node(id=ident.value, label="",
                    kind=Leaf(question=question, binding=binding,
                              context_text=context))
        self._register(node, ident.span)
        return ident.value

    def _evaluator(self) -> Optional[SymbolicBinding]:
        kind = self._expect_word("llm", "symbolic")
        if kind.value == "llm":
            return None
        self._expect_punct("(")
        predicate = self._expect_word()
        params: list[str] = []
        while self._peek().kind is _PUNCT and self._peek().value == ",":
            self._next()
            params.append(self._expect_string("a predicate parameter").value)
        self._expect_punct(")")
        return SymbolicBinding(predicate.value, tuple(params))

    def _context(self, leaf_id: str) -> str:
        tok = self._next()
        if tok.kind is _STRING:
            return tok.value
        if tok.kind is _PATH:
            base = self.base_dir or Path.cwd()
            path = base / tok.value
            try:
                return path.read_text(encoding="utf-8")
            except OSError as exc:
                self._fail(tok, f"cannot read context file {tok.value!r}: {exc}")
        self._fail(tok, "expected a string or @file for context")


def parse(source: str, base_dir: Optional[Path] = None) -> RuleMap:
    """Parse DSL text. Raises ParseFailure with source spans on any problem.

    The map id is derived from the title; version starts at 1.
    """
    tokens = _Lexer(source).tokens()
    return _Parser(tokens, base_dir).parse()


def parse_file(path: str | Path) -> RuleMap:
    path = Path(path)
    return parse(path.read_text(encoding="utf-8"), base_dir=path.parent)


def slugify(title: str) -> str:
    text = title.lower()
    for src, dst in (("ä", "ae"), ("ö", "oe"), ("ü", "ue"), ("ß", "ss")):
        text = text.replace(src, dst)
    parts = re.findall(r"[a-z0-9]+", text)
    return "-".join(parts) or "rulemap"


# --------------------------------------------------------------------------
# Canonical DSL serialization


def _quote(text: str) -> str:
    out = text.replace("\\", "\\\\").replace('"', '\\"')
    out = out.replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    return f'"{out}"'


def serialize(rulemap: RuleMap) -> str:
    """Canonical text: 2-space indent, stored child order, grammar property
    order, defaults omitted. A pure function of the map value."""
    ensure_valid(rulemap)
    lines: list[str] = [f"rulemap {_quote(rulemap.title)} {{"]

    def emit(nid: str, depth: int) -> None:
        node = rulemap.nodes[nid]
        pad = "  " * depth
        kind = node.kind
        if isinstance(kind, Branch):
            head = "not " if kind.negated else ""
            head += f"{kind.operator.value} {nid}"
            if node.label:
                head += f" {_quote(node.label)}"
            lines.append(f"{pad}{head} {{")
            for cid in kind.children:
                emit(cid, depth + 1)
            lines.append(f"{pad}}}")
            return
        props: list[str] = []
        binding = kind.binding
        if isinstance(binding, SymbolicBinding):
            args = binding.predicate + "".join(
                f", {_quote(p)}" for p in binding.params)
            props.append(f"evaluator: symbolic({args})")
        if kind.context_text:
            props.append(f"context: {_quote(kind.context_text)}")
        if isinstance(binding, LlmBinding) and binding.answer_language != "de":
            props.append(f"answer_language: {binding.answer_language}")
        head = f"{pad}leaf {nid} {_quote(kind.question)}"
        if props:
            lines.append(f"{head} {{")
            for prop in props:
                lines.append(f"{pad}  {prop}")
            lines.append(f"{pad}}}")
        else:
            lines.append(head)

    emit(rulemap.root, 1)
    lines.append("}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Canonical JSON document


def to_canonical(rulemap: RuleMap) -> dict:
    """Lossless structured document (inverse of from_canonical)."""
    ensure_valid(rulemap)
    nodes = []
    for nid in rulemap.walk_ids():
        node = rulemap.nodes[nid]
        kind = node.kind
        if isinstance(kind, Branch):
            nodes.append({
                "id": nid,
                "label": node.label,
                "branch": {
                    "op": kind.operator.value,
                    "negated": kind.negated,
                    "children": list(kind.children),
                },
            })
        else:
            binding = kind.binding
            if isinstance(binding, SymbolicBinding):
                evaluator = {"kind": "symbolic", "predicate": binding.predicate,
                             "params": list(binding.params)}
                language = None
            else:
                evaluator = {"kind": "llm"}
                language = binding.answer_language
            nodes.append({
                "id": nid,
                "question": kind.question,
                "evaluator": evaluator,
                "context": kind.context_text,
                "answer_language": language,
            })
    return {
        "id": rulemap.id,
        "version": rulemap.version,
        "title": rulemap.title,
        "root": rulemap.root,
        "nodes": nodes,
        "metadata": dict(rulemap.metadata),
    }


def _need(doc: dict, key: str, types, path: str):
    if key not in doc:
        raise SchemaError(f"missing required key {key!r}", f"{path}/{key}")
    value = doc[key]
    if not isinstance(value, types):
        raise SchemaError(f"{key!r} has wrong type", f"{path}/{key}")
    return value


def from_canonical(doc: dict) -> RuleMap:
    """Rebuild a RuleMap from its canonical document.

    Schema violations raise SchemaError carrying the JSON-pointer-style path
    of the offending element.
    """
    if not isinstance(doc, dict):
        raise SchemaError("document must be an object", "")
    map_id = _need(doc, "id", str, "")
    version = _need(doc, "version", int, "")
    title = _need(doc, "title", str, "")
    root = _need(doc, "root", str, "")
    raw_nodes = _need(doc, "nodes", list, "")
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise SchemaError("'metadata' has wrong type", "/metadata")

    nodes: dict[str, Node] = {}
    for i, entry in enumerate(raw_nodes):
        path = f"/nodes/{i}"
        if not isinstance(entry, dict):
            raise SchemaError("node entry must be an object", path)
        nid = _need(entry, "id", str, path)
        if nid in nodes:
            raise SchemaError(f"duplicate node id {nid!r}", f"{path}/id")
        if "branch" in entry:
            branch = _need(entry, "branch", dict, path)
            op = _need(branch, "op", str, f"{path}/branch")
            if op not in ("all", "any", "one"):
                raise SchemaError(f"unknown operator {op!r}", f"{path}/branch/op")
            negated = _need(branch, "negated", bool, f"{path}/branch")
            children = _need(branch, "children", list, f"{path}/branch")
            for j, cid in enumerate(children):
                if not isinstance(cid, str):
                    raise SchemaError("child id must be a string",
                                      f"{path}/branch/children/{j}")
            label = entry.get("label", "")
            if not isinstance(label, str):
                raise SchemaError("'label' has wrong type", f"{path}/label")
            nodes[nid] = Node(nid, label,
                              Branch(Operator(op), negated, tuple(children)))
            continue
        question = _need(entry, "question", str, path)
        evaluator = _need(entry, "evaluator", dict, path)
        ev_kind = _need(evaluator, "kind", str, f"{path}/evaluator")
        if ev_kind == "llm":
            language = entry.get("answer_language") or "de"
            if language not in ("de", "en"):
                raise SchemaError(f"unknown answer language {language!r}",
                                  f"{path}/answer_language")
            binding = LlmBinding(answer_language=language)
        elif ev_kind == "symbolic":
            predicate = _need(evaluator, "predicate", str, f"{path}/evaluator")
            params = evaluator.get("params", [])
            if not isinstance(params, list) or any(
                    not isinstance(p, str) for p in params):
                raise SchemaError("'params' must be a list of strings",
                                  f"{path}/evaluator/params")
            binding = SymbolicBinding(predicate, tuple(params))
        else:
            raise SchemaError(f"unknown evaluator kind {ev_kind!r}",
                              f"{path}/evaluator/kind")
        context = entry.get("context", "")
        if not isinstance(context, str):
            raise SchemaError("'context' has wrong type", f"{path}/context")
        nodes[nid] = Node(nid, "", Leaf(question, binding, context))

    return RuleMap(id=map_id, version=version, title=title, root=root,
                   nodes=nodes, metadata={str(k): str(v)
                                          for k, v in metadata.items()})


def canonical_json(rulemap: RuleMap) -> str:
    return json.dumps(to_canonical(rulemap), ensure_ascii=False, indent=2) + "\n"


def load_rulemap(path: str | Path) -> RuleMap:
    """Load either DSL text (.rmap) or a canonical JSON document (.json)."""
    path = Path(path)
    if path.suffix == ".json":
        return from_canonical(json.loads(path.read_text(encoding="utf-8")))
    return parse_file(path)
