#!/usr/bin/env python3
"""Regenerate the committed fixtures that are derived artifacts:

- the golden canonical serialization of the bundled rule tree
- the 30-case mini dataset CSV
- the replay cache covering all three methods over the mini dataset plus
  the worked-example case (original and edited suitability context)

Run from the repository root: python tools/build_fixtures.py
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from rulemap.baselines import (  # noqa: E402
    build_long_context_request,
    build_zero_context_request,
    bundled_statute_pack,
)
from rulemap.client import ChatClient, DecodingConfig  # noqa: E402
from rulemap.core import Leaf, Mode, Node, RuleMap, evaluate  # noqa: E402
from rulemap.dsl import parse_file, serialize  # noqa: E402
from rulemap.bench.data import generate_synthetic_dataset, write_dataset_csv  # noqa: E402
from rulemap.leaves import CaseRecord, EvaluatorEnv, LeafPolicy  # noqa: E402
from rulemap.stub import stub_transport, worked_example_text  # noqa: E402

FIXTURES = ROOT / "src" / "rulemap" / "fixtures"
MODEL = "stub-model"

EDITED_SUITABILITY_CONTEXT = (
    "Aktualisierter Kontext: Maßgeblich ist eine Gesamtwürdigung von Inhalt, "
    "Reichweite und Begleitumständen; bei Angriffen auf Mehrheitsgruppen ist "
    "die Eignung zur Friedensstörung besonders sorgfältig zu prüfen."
)


def with_context(rulemap: RuleMap, node_id: str, context: str) -> RuleMap:
    node = rulemap.nodes[node_id]
    nodes = dict(rulemap.nodes)
    nodes[node_id] = Node(node.id, node.label,
                          Leaf(node.kind.question, node.kind.binding, context))
    return RuleMap(rulemap.id, rulemap.version, rulemap.title, rulemap.root,
                   nodes, rulemap.metadata)


def main() -> None:
    stgb130 = parse_file(FIXTURES / "stgb130.rmap")

    golden = FIXTURES / "stgb130.golden.rmap"
    golden.write_text(serialize(stgb130), encoding="utf-8")
    print(f"golden serialization -> {golden}")

    mini_dir = FIXTURES / "mini"
    mini_dir.mkdir(exist_ok=True)
    rows = generate_synthetic_dataset(
        n_rows=30, seed=640, disagreements=0, expert_rows=10,
        expert_positives=3, positive_rate=0.2)
    write_dataset_csv(rows, mini_dir / "dataset_30.csv")
    print(f"mini dataset ({len(rows)} rows) -> {mini_dir / 'dataset_30.csv'}")

    (FIXTURES / "cases" / "edited_suitability_context.txt").write_text(
        EDITED_SUITABILITY_CONTEXT, encoding="utf-8")

    cache_dir = mini_dir / "replay_cache"
    if cache_dir.exists():
        shutil.rmtree(cache_dir)
    client = ChatClient(mode="record", api_base="https://stub.invalid",
                        api_key="unused", cache_dir=cache_dir,
                        transport=stub_transport)
    decoding = DecodingConfig(model=MODEL)
    env = EvaluatorEnv(client=client, policy=LeafPolicy(decoding=decoding))
    pack = bundled_statute_pack()

    for row in rows:
        case = CaseRecord(id=row.id, text=row.text)
        client.complete(build_zero_context_request(case, decoding))
        client.complete(build_long_context_request(case, pack, decoding))
        evaluate(stgb130, case, env, Mode.FULL)

    potato = CaseRecord(id="german-potatoes", text=worked_example_text())
    evaluate(stgb130, potato, env, Mode.FULL)
    evaluate(with_context(stgb130, "suitability", EDITED_SUITABILITY_CONTEXT),
             potato, env, Mode.FULL)

    entries = len(list(cache_dir.glob("*.json"))) - 1  # minus index
    print(f"replay cache ({entries} entries) -> {cache_dir}")


if __name__ == "__main__":
    main()
