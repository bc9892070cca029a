"""Report rendering: a grid with methods as column groups, P/R/Acc per
group, one row per model, per-method column maxima in bold, plus a
machine-readable document carrying full counts and metrics."""

from __future__ import annotations

from typing import Mapping

from .metrics import MetricsReport, round_half_up

METHOD_ORDER = ("rulemapping", "long_context", "zero_context")
METHOD_TITLES = {
    "rulemapping": "Rulemapping",
    "long_context": "Long-Context",
    "zero_context": "Zero-Context",
}
_COLUMNS = ("precision", "recall", "accuracy")
_COLUMN_TITLES = {"precision": "P", "recall": "R", "accuracy": "Acc"}


def render_report(results: Mapping[tuple[str, str], MetricsReport]) -> str:
    """``results`` maps (method id, model id) to a metrics report."""
    if not results:
        raise ValueError("nothing to report")
    methods = [m for m in METHOD_ORDER if any(k[0] == m for k in results)]
    models: list[str] = []
    for method, model in results:
        if model not in models:
            models.append(model)

    # rounded display values; None where the combination was not run
    cell: dict[tuple[str, str, str], float] = {}
    for (method, model), report in results.items():
        for column in _COLUMNS:
            cell[(method, model, column)] = round_half_up(report.value(column))

    maxima = {
        (method, column): max(
            (cell[(method, model, column)] for model in models
             if (method, model, column) in cell), default=None)
        for method in methods for column in _COLUMNS
    }

    def fmt(method: str, model: str, column: str) -> str:
        value = cell.get((method, model, column))
        if value is None:
            return "-"
        text = f"{value:.2f}"
        if value == maxima[(method, column)]:
            return f"**{text}**"
        return text

    group_row = [""] + [
        METHOD_TITLES[m] if i == 0 else ""
        for m in methods for i in range(len(_COLUMNS))
    ]
    head_row = ["LLM"] + [_COLUMN_TITLES[c] for _ in methods for c in _COLUMNS]
    rows = [
        [model] + [fmt(method, model, column)
                   for method in methods for column in _COLUMNS]
        for model in models
    ]

    widths = [max(len(str(line[i])) for line in [group_row, head_row] + rows)
              for i in range(len(head_row))]

    def line(cells) -> str:
        return "| " + " | ".join(str(c).ljust(w)
                                 for c, w in zip(cells, widths)) + " |"

    out = [
        line(group_row),
        line(head_row),
        "|" + "|".join("-" * (w + 2) for w in widths) + "|",
    ]
    out.extend(line(r) for r in rows)
    return "\n".join(out) + "\n"


def report_document(results: Mapping[tuple[str, str], MetricsReport]) -> dict:
    """Full-precision machine-readable companion to the rendered grid."""
    return {
        f"{method}/{model}": report.to_dict()
        for (method, model), report in sorted(results.items())
    }


def render_from_document(doc: Mapping[str, dict]) -> str:
    """Rebuild reports from a report.json document and render the grid."""
    from .metrics import CiBound, ConfusionCounts, MetricsReport

    results: dict[tuple[str, str], MetricsReport] = {}
    for key, entry in doc.items():
        method, _, model = key.partition("/")
        counts = ConfusionCounts(**entry["counts"])
        values = entry["metrics"]
        results[(method, model)] = MetricsReport(
            counts=counts,
            undefined_flags=tuple(entry.get("undefined_flags", ())),
            ci={name: CiBound(**bound)
                for name, bound in entry.get("ci", {}).items()},
            **{name: values[name] for name in
               ("precision", "recall", "accuracy", "f1", "f2",
                "balanced_accuracy", "kappa")},
        )
    return render_report(results)
