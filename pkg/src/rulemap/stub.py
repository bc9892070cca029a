"""A deterministic scripted stand-in model.

``stub_transport`` speaks the same wire shape as a chat-completions gateway
and can be injected into ChatClient for offline demos, unit tests, and for
recording the bundled replay fixtures. Replies are a pure function of the
request: scripted answers for the bundled worked-example case, pseudo-random
but seed-free (hash-derived) binary answers everywhere else.
"""

from __future__ import annotations

import hashlib
from importlib import resources


def _fixture_text(*parts: str) -> str:
    node = resources.files("rulemap") / "fixtures"
    for part in parts:
        node = node / part
    return node.read_text(encoding="utf-8")


def worked_example_text() -> str:
    """The translated social-media post used by the worked example."""
    return _fixture_text("cases", "german_potatoes.txt")


# Scripted per-element answers for the worked-example case, keyed by a
# distinctive substring of the leaf question. They reproduce the published
# analysis: attack present (via the call for violent measures), protected
# target present (twice over), suitability absent.
_WORKED_EXAMPLE_ANSWERS = (
    ("Stachelt die Äußerung zum Hass", "Nein."),
    ("Gewalt- oder Willkürmaßnahmen", "Ja."),
    ("öffentlichen Frieden", "Nein."),
    ("nationale, rassische, religiöse", "Ja."),
    ("Teile der Bevölkerung", "Ja."),
    ("Einzelperson", "Nein."),
)


def _positive(system: str, user: str) -> bool:
    digest = hashlib.sha256((system + "\x00" + user).encode("utf-8")).digest()
    return digest[0] % 4 == 0


def scripted_reply(system: str, user: str) -> str:
    """Deterministic reply for a (system, user) message pair."""
    # Worked-example case: scripted per-leaf answers (retries append a
    # reminder line to the user message, hence startswith).
    if user.startswith(worked_example_text()) and "Frage:" in system:
        for marker, answer in _WORKED_EXAMPLE_ANSWERS:
            if marker in system:
                return answer

    # One scripted ambiguous first reply to exercise the retry path.
    if "Beitrag 0007" in user and "Stachelt" in system:
        if user.rstrip().endswith("Antworte ausschließlich mit ja oder nein."):
            return "nein"
        return "Das kommt darauf an."

    positive = _positive(system, user)
    if "Antwortmöglichkeiten: y für yes" in system:
        # zero-context instruction: bare y/n expected
        if "Beitrag 0009" in user:
            return "vielleicht"
        return "y" if positive else "n"
    if "ANTWORT:" in system:
        verdict = "y" if positive else "n"
        return ("Kurzprüfung: Die Äußerung wurde anhand der genannten "
                "Tatbestandsmerkmale gewürdigt.\n"
                f"ANTWORT: {verdict}")
    if "Answer with yes or no" in system:
        return "yes" if positive else "no"
    return "ja" if positive else "nein"


def stub_transport(url: str, headers, payload: dict, timeout: float) -> dict:
    """Drop-in Transport for ChatClient: never touches the network."""
    messages = payload["messages"]
    system = messages[0]["content"]
    user = messages[1]["content"]
    answer = scripted_reply(system, user)
    return {
        "choices": [{"message": {"role": "assistant", "content": answer}}],
        "usage": {
            "prompt_tokens": (len(system) + len(user)) // 4,
            "completion_tokens": max(1, len(answer) // 4),
        },
    }
