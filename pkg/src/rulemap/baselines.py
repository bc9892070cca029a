"""The two LLM-only comparison methods.

Zero-Context sends a fixed minimal instruction (bundled verbatim and pinned
by hash) plus the raw post; the reply must be a bare y/n. Long-Context sends
the full statutory materials and asks for a written legal assessment in
Gutachtenstil whose last line is ``ANTWORT: y`` or ``ANTWORT: n``. Neither
method ever consults a rule tree; the logical relations reach the model only
as natural-language instruction.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .client import ChatRequest, DecodingConfig
from .errors import AmbiguousAnswer, ConfigError

ZERO_CONTEXT_PROMPT_SHA256 = (
    "6db84247dfd48457c0149ccc55262099308f74bda7f933721caa9ab42980361a")

ZERO_CONTEXT = "zero_context"
LONG_CONTEXT = "long_context"


def zero_context_system_prompt() -> str:
    """The frozen instruction-only system prompt (German)."""
    text = (resources.files("rulemap") / "fixtures" /
            "zero_context_prompt.de.txt").read_text(encoding="utf-8")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if digest != ZERO_CONTEXT_PROMPT_SHA256:
        raise ConfigError("zero-context prompt fixture was modified "
                          f"(sha256 {digest})")
    return text


def build_zero_context_request(case, decoding: DecodingConfig) -> ChatRequest:
    if not case.text:
        raise ConfigError(f"case {case.id!r} has no text")
    return ChatRequest(system=zero_context_system_prompt(), user=case.text,
                       decoding=decoding)


_YN_RE = re.compile(r"^[yn]$")


def parse_zero_context_answer(text: str) -> bool:
    """The final non-empty line must be exactly y or n (case-insensitive,
    terminal punctuation ignored)."""
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    token = lines[-1].lower().rstrip(".!?,;:").strip() if lines else ""
    if not _YN_RE.match(token):
        raise AmbiguousAnswer(text)
    return token == "y"


# --------------------------------------------------------------------------
# Long-Context


@dataclass(frozen=True)
class StatutePack:
    """Everything the Long-Context prompt assembles, in fixed order."""

    statute_text: str
    element_definitions: tuple[tuple[str, str], ...]  # (name, definition)
    logic_prose: str
    style_instruction: str

    def ensure_complete(self) -> None:
        empty = [name for name, value in (
            ("statute_text", self.statute_text),
            ("element_definitions", self.element_definitions),
            ("logic_prose", self.logic_prose),
            ("style_instruction", self.style_instruction),
        ) if not value]
        if any(not name or not definition
               for name, definition in self.element_definitions):
            empty.append("element_definitions")
        if empty:
            raise ConfigError("statute pack incomplete: "
                              + ", ".join(sorted(set(empty))))

    def to_dict(self) -> dict:
        return {
            "statute_text": self.statute_text,
            "element_definitions": [
                {"name": n, "definition": d}
                for n, d in self.element_definitions],
            "logic_prose": self.logic_prose,
            "style_instruction": self.style_instruction,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StatutePack":
        return cls(
            statute_text=doc.get("statute_text", ""),
            element_definitions=tuple(
                (e.get("name", ""), e.get("definition", ""))
                for e in doc.get("element_definitions", [])),
            logic_prose=doc.get("logic_prose", ""),
            style_instruction=doc.get("style_instruction", ""),
        )


def load_statute_pack(path: str | Path) -> StatutePack:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return StatutePack.from_dict(doc)


def bundled_statute_pack() -> StatutePack:
    doc = json.loads((resources.files("rulemap") / "fixtures" /
                      "statute_pack_stgb130.json").read_text(encoding="utf-8"))
    return StatutePack.from_dict(doc)


ANSWER_DIRECTIVE = (
    "Du darfst vor deiner Entscheidung frei und ausführlich begründen. "
    "Die letzte Zeile deiner Antwort muss exakt lauten: "
    "\"ANTWORT: y\" (strafbar) oder \"ANTWORT: n\" (nicht strafbar)."
)


def build_long_context_request(case, pack: StatutePack,
                               decoding: DecodingConfig) -> ChatRequest:
    """System message order: style instruction, statute text, element
    definitions, logic prose, final-answer directive."""
    pack.ensure_complete()
    if not case.text:
        raise ConfigError(f"case {case.id!r} has no text")
    definitions = "\n".join(f"- {name}: {definition}"
                            for name, definition in pack.element_definitions)
    system = "\n\n".join([
        pack.style_instruction,
        pack.statute_text,
        "Definitionen der Tatbestandsmerkmale:\n" + definitions,
        pack.logic_prose,
        ANSWER_DIRECTIVE,
    ])
    return ChatRequest(system=system, user=case.text, decoding=decoding)


_MARKER_RE = re.compile(r"^\s*ANTWORT\s*:\s*([yn])\s*[.!]?\s*$", re.IGNORECASE)


def extract_final_label(text: str) -> bool:
    """Scan from the end for an ANTWORT line; the last marker wins. Falls
    back to the bare y/n convention on the final non-empty line."""
    for line in reversed(text.splitlines()):
        m = _MARKER_RE.match(line)
        if m:
            return m.group(1).lower() == "y"
    return parse_zero_context_answer(text)


@dataclass(frozen=True)
class BaselinePrediction:
    case_id: str
    label: bool
    raw_output: str
    method: str  # ZERO_CONTEXT | LONG_CONTEXT
