"""Dataset ingestion, reference construction, and the synthetic fixture.

The on-disk format is a UTF-8 CSV with header ``id,text,lay1,lay2,expert``;
labels are 0/1, the expert column may be empty. The real annotated corpus is
not redistributable, so a seeded generator produces a schema-compatible
stand-in engineered to the published marginal counts (1,000 rows, 132 lay
disagreements, 102 expert-labelled rows with 9 positives). The generated
texts are deliberately innocuous.
"""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

from ..errors import DuplicateId, SchemaError

log = logging.getLogger(__name__)

HEADER = ["id", "text", "lay1", "lay2", "expert"]


@dataclass(frozen=True)
class DatasetRow:
    id: str
    text: str
    lay1: bool
    lay2: bool
    expert: Optional[bool] = None


class ReferenceKind(Enum):
    LAY_CONSENSUS = "lay_consensus"
    EXPERT_SUBSET = "expert_subset"


@dataclass
class Reference:
    kind: ReferenceKind
    rows: tuple[str, ...]          # selected case ids, dataset order
    gold: dict[str, bool]          # id -> gold label

    def __len__(self) -> int:
        return len(self.rows)


def _parse_label(value: str, row_no: int, column: str) -> bool:
    if value == "0":
        return False
    if value == "1":
        return True
    raise SchemaError(f"label {column}={value!r} must be 0 or 1", f"row {row_no}")


def load_dataset(path: str | Path) -> list[DatasetRow]:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("missing header", "row 1")
        if header != HEADER:
            raise SchemaError(
                f"bad header {header!r}, expected {','.join(HEADER)}", "row 1")
        rows: list[DatasetRow] = []
        seen: dict[str, int] = {}
        for row_no, record in enumerate(reader, start=2):
            if len(record) != len(HEADER):
                raise SchemaError(
                    f"expected {len(HEADER)} columns, got {len(record)}",
                    f"row {row_no}")
            case_id, text, lay1, lay2, expert = record
            if not case_id:
                raise SchemaError("empty id", f"row {row_no}")
            if case_id in seen:
                raise DuplicateId(case_id,
                                  f"rows {seen[case_id]} and {row_no}")
            seen[case_id] = row_no
            rows.append(DatasetRow(
                id=case_id,
                text=text,
                lay1=_parse_label(lay1, row_no, "lay1"),
                lay2=_parse_label(lay2, row_no, "lay2"),
                expert=None if expert == "" else _parse_label(expert, row_no,
                                                              "expert"),
            ))
    return rows


def write_dataset_csv(rows: list[DatasetRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for row in rows:
            writer.writerow([
                row.id,
                row.text,
                int(row.lay1),
                int(row.lay2),
                "" if row.expert is None else int(row.expert),
            ])


def build_lay_consensus(rows: list[DatasetRow]) -> Reference:
    """Keep rows where both lay annotators agreed; gold is the shared label."""
    kept = [r for r in rows if r.lay1 == r.lay2]
    if not kept:
        log.warning("lay-consensus reference is empty (no agreeing rows)")
    return Reference(
        kind=ReferenceKind.LAY_CONSENSUS,
        rows=tuple(r.id for r in kept),
        gold={r.id: r.lay1 for r in kept},
    )


def build_expert_subset(rows: list[DatasetRow]) -> Reference:
    """Keep rows carrying an expert label; gold is that label."""
    kept = [r for r in rows if r.expert is not None]
    if not kept:
        log.warning("expert-subset reference is empty (no expert labels)")
    return Reference(
        kind=ReferenceKind.EXPERT_SUBSET,
        rows=tuple(r.id for r in kept),
        gold={r.id: bool(r.expert) for r in kept},
    )


def build_reference(kind: ReferenceKind, rows: list[DatasetRow]) -> Reference:
    if kind is ReferenceKind.LAY_CONSENSUS:
        return build_lay_consensus(rows)
    return build_expert_subset(rows)


# --------------------------------------------------------------------------
# Synthetic fixture generator

_TOPICS = [
    "den Ausbau der Straßenbahnlinie", "das Wetter am Wochenende",
    "die neue Kartoffelsorte auf dem Markt", "den Tag der offenen Tür",
    "die Öffnungszeiten der Stadtbibliothek", "das Vereinsheim des Gartenvereins",
    "den Fahrplanwechsel im Dezember", "die Sanierung der Schwimmhalle",
    "das Ergebnis des Regionalligaspiels", "die Ausstellung im Heimatmuseum",
    "den Flohmarkt am Samstag", "die Baustelle in der Innenstadt",
]

_OPENERS = [
    "Hat jemand etwas über {} gehört?", "Ich finde {} ziemlich gelungen.",
    "Gestern ging es wieder um {}.", "Warum redet niemand über {}?",
    "Kurze Frage zu {}.", "Meine Meinung zu {}: kann man so machen.",
    "Hier ein Update zu {}.", "Unfassbar, was bei {} wieder los war.",
]


def _synthetic_text(rng: random.Random, i: int) -> str:
    opener = rng.choice(_OPENERS)
    topic = rng.choice(_TOPICS)
    return f"Beitrag {i:04d}: " + opener.format(topic)


def generate_synthetic_dataset(
    n_rows: int = 1000,
    seed: int = 640,
    disagreements: int = 132,
    expert_rows: int = 102,
    expert_positives: int = 9,
    positive_rate: float = 0.09,
) -> list[DatasetRow]:
    """Deterministic stand-in dataset engineered to the reference marginals.

    Exactly ``disagreements`` rows have lay1 != lay2 (so the lay-consensus
    reference has n_rows - disagreements rows); exactly ``expert_rows`` rows
    carry an expert label, ``expert_positives`` of them positive. The expert
    subset is drawn stratified over the lay labels so it contains both
    classes regardless of the base rate.
    """
    if disagreements > n_rows or expert_rows > n_rows:
        raise ValueError("engineered counts exceed the row count")
    if expert_positives > expert_rows:
        raise ValueError("expert positives exceed expert rows")
    rng = random.Random(seed)
    base = [rng.random() < positive_rate for _ in range(n_rows)]

    indices = list(range(n_rows))
    disagree = set(rng.sample(indices, disagreements))

    # Stratify the expert pick: positives preferentially from lay-positive
    # rows so the subset is not starved of the rare class.
    positives_pool = [i for i in indices if base[i] and i not in disagree]
    negatives_pool = [i for i in indices if not base[i] and i not in disagree]
    if len(positives_pool) < expert_positives:
        raise ValueError("not enough positive rows for the expert stratum")
    expert_pos = rng.sample(positives_pool, expert_positives)
    expert_neg = rng.sample(negatives_pool, expert_rows - len(expert_pos))
    expert_labels: dict[int, bool] = {i: True for i in expert_pos}
    expert_labels.update({i: False for i in expert_neg})

    rows: list[DatasetRow] = []
    for i in indices:
        lay1 = base[i]
        lay2 = (not lay1) if i in disagree else lay1
        rows.append(DatasetRow(
            id=f"case-{i + 1:04d}",
            text=_synthetic_text(rng, i + 1),
            lay1=lay1,
            lay2=lay2,
            expert=expert_labels.get(i),
        ))
    return rows
