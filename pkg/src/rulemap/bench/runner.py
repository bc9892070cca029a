"""Benchmark orchestration: method x model runs over a reference dataset.

Each run produces one prediction per reference row plus a manifest. All
output files are deterministic for a given cache and config (predictions are
sorted by case id regardless of worker scheduling; the manifest hash covers
only timestamp-free content), so replay runs can be compared byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .. import baselines
from ..client import ChatClient, DecodingConfig, cache_key
from ..core import EvaluationTrace, Mode, ensure_valid, evaluate
from ..dsl import load_rulemap, slugify
from ..errors import AmbiguousAnswer, ConfigError
from ..leaves import (
    CaseRecord,
    EvaluatorEnv,
    FailurePolicy,
    LeafPolicy,
    load_template,
)
from .data import DatasetRow, ReferenceKind, build_reference, load_dataset
from .metrics import METRIC_IDS, MetricsReport, bootstrap_ci, confusion, metrics
from .report import render_report, report_document

log = logging.getLogger(__name__)


class Method(Enum):
    RULEMAPPING = "rulemapping"
    LONG_CONTEXT = "long_context"
    ZERO_CONTEXT = "zero_context"


@dataclass(frozen=True)
class BootstrapConfig:
    resamples: int = 10_000
    seed: int = 640
    level: float = 0.95


@dataclass
class RunConfig:
    method: Method
    model: str
    reference: ReferenceKind = ReferenceKind.LAY_CONSENSUS
    rulemap_path: Optional[str] = None
    statute_pack_path: Optional[str] = None
    decoding: Optional[DecodingConfig] = None
    mode: str = "replay"
    cache_dir: Optional[str] = None
    parallelism: int = 4
    failure_policy: str = "lenient"  # how per-case failures are absorbed
    output_dir: Optional[str] = None
    bootstrap: Optional[BootstrapConfig] = None
    template_id: str = "default"
    capabilities: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method is Method.RULEMAPPING and not self.rulemap_path:
            raise ConfigError("rulemapping runs need a rulemap path")
        if self.method is Method.LONG_CONTEXT and not self.statute_pack_path:
            raise ConfigError("long-context runs need a statute pack path")
        if self.failure_policy not in ("strict", "lenient"):
            raise ConfigError(f"unknown failure policy {self.failure_policy!r}")
        if self.decoding is None:
            self.decoding = DecodingConfig(model=self.model)

    @property
    def run_id(self) -> str:
        return f"{self.method.value}_{slugify(self.model)}"

    def snapshot(self) -> dict:
        return {
            "method": self.method.value,
            "model": self.model,
            "reference": self.reference.value,
            "rulemap_path": self.rulemap_path,
            "statute_pack_path": self.statute_pack_path,
            "decoding": {
                "model": self.decoding.model,
                "temperature": self.decoding.temperature,
                "top_p": self.decoding.top_p,
                "seed": self.decoding.seed,
            },
            "mode": self.mode,
            "parallelism": self.parallelism,
            "failure_policy": self.failure_policy,
            "template_id": self.template_id,
            "bootstrap": None if self.bootstrap is None else {
                "resamples": self.bootstrap.resamples,
                "seed": self.bootstrap.seed,
                "level": self.bootstrap.level,
            },
        }


@dataclass(frozen=True)
class Prediction:
    case_id: str
    label: bool
    method: str
    model: str
    trace_ref: str
    flags: tuple[str, ...] = ()

    def to_line(self) -> str:
        return json.dumps({
            "case_id": self.case_id,
            "label": int(self.label),
            "method": self.method,
            "model": self.model,
            "trace_ref": self.trace_ref,
            "flags": list(self.flags),
        }, ensure_ascii=False)


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _canonical(doc) -> str:
    return json.dumps(doc, ensure_ascii=False, sort_keys=True,
                      separators=(",", ":"))


def run_benchmark(config: RunConfig, rows: list[DatasetRow]
                  ) -> tuple[list[Prediction], dict, MetricsReport]:
    """Run one method x model configuration over the configured reference.

    Returns the sorted predictions, the run manifest, and the metrics report
    (with bootstrap CIs when configured). With output_dir set, writes
    predictions.jsonl, summary.json, manifest.json, and per-case traces.
    """
    started_at = datetime.now(timezone.utc).isoformat()
    reference = build_reference(config.reference, rows)
    by_id = {row.id: row for row in rows}
    client = ChatClient.from_env(mode=config.mode,
                                 cache_dir=config.cache_dir,
                                 capabilities=config.capabilities,
                                 parallelism=config.parallelism)

    input_hashes = {
        "dataset_sha256": _sha256_text(_canonical(
            [[r.id, r.text, r.lay1, r.lay2, r.expert] for r in rows])),
    }
    decoding = config.decoding
    traces: dict[str, EvaluationTrace] = {}

    if config.method is Method.RULEMAPPING:
        rulemap = load_rulemap(config.rulemap_path)
        ensure_valid(rulemap)
        input_hashes["rulemap_sha256"] = _sha256_file(config.rulemap_path)
        env = EvaluatorEnv(
            client=client,
            policy=LeafPolicy(decoding=decoding,
                              template=load_template(config.template_id)),
            failure_policy=(FailurePolicy.LENIENT
                            if config.failure_policy == "lenient"
                            else FailurePolicy.STRICT),
        )

        def predict(case: CaseRecord) -> Prediction:
            trace = evaluate(rulemap, case, env, Mode.FULL)
            traces[case.id] = trace
            flags = sorted({f for e in trace.entries for f in e.flags})
            return Prediction(case.id, trace.root_value, config.method.value,
                              config.model, f"traces/{case.id}.json",
                              tuple(flags))

    elif config.method is Method.LONG_CONTEXT:
        pack = baselines.load_statute_pack(config.statute_pack_path)
        pack.ensure_complete()
        input_hashes["statute_pack_sha256"] = _sha256_file(
            config.statute_pack_path)

        def predict(case: CaseRecord) -> Prediction:
            request = baselines.build_long_context_request(case, pack, decoding)
            response = client.complete(request)
            flags: tuple[str, ...] = ()
            try:
                label = baselines.extract_final_label(response.text)
            except AmbiguousAnswer:
                if config.failure_policy == "strict":
                    raise
                label, flags = False, ("ambiguous_defaulted",)
            return Prediction(case.id, label, config.method.value,
                              config.model, f"req:{cache_key(request)}", flags)

    else:
        input_hashes["zero_context_prompt_sha256"] = \
            baselines.ZERO_CONTEXT_PROMPT_SHA256

        def predict(case: CaseRecord) -> Prediction:
            request = baselines.build_zero_context_request(case, decoding)
            response = client.complete(request)
            flags = ()
            try:
                label = baselines.parse_zero_context_answer(response.text)
            except AmbiguousAnswer:
                if config.failure_policy == "strict":
                    raise
                label, flags = False, ("ambiguous_defaulted",)
            return Prediction(case.id, label, config.method.value,
                              config.model, f"req:{cache_key(request)}", flags)

    cases = [CaseRecord(id=cid, text=by_id[cid].text) for cid in reference.rows]
    results: dict[str, Prediction] = {}
    errors: dict[str, Exception] = {}

    def worker(case: CaseRecord) -> None:
        try:
            results[case.id] = predict(case)
        except Exception as exc:  # surfaced below in deterministic order
            errors[case.id] = exc

    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            list(pool.map(worker, cases))
    else:
        for case in cases:
            worker(case)
    if errors:
        raise errors[sorted(errors)[0]]

    predictions = [results[cid] for cid in sorted(results)]

    failure_counts: dict[str, int] = {}
    for prediction in predictions:
        for flag in prediction.flags:
            failure_counts[flag] = failure_counts.get(flag, 0) + 1

    counts = confusion({p.case_id: p.label for p in predictions},
                       reference.gold)
    report = metrics(counts)
    if config.bootstrap is not None:
        pred_map = {p.case_id: p.label for p in predictions}
        for metric_id in METRIC_IDS:
            report.ci[metric_id] = bootstrap_ci(
                pred_map, reference.gold, metric_id,
                resamples=config.bootstrap.resamples,
                seed=config.bootstrap.seed,
                level=config.bootstrap.level)

    config_hash = _sha256_text(_canonical(config.snapshot()))
    manifest_core = {
        "config_hash": config_hash,
        "inputs": input_hashes,
        "reference_size": len(reference),
        "predictions": len(predictions),
        "failure_policy_invocations": dict(sorted(failure_counts.items())),
    }
    manifest = dict(manifest_core)
    manifest["manifest_hash"] = _sha256_text(_canonical(manifest_core))
    manifest["config"] = config.snapshot()
    manifest["run_id"] = config.run_id
    manifest["started_at"] = started_at
    manifest["finished_at"] = datetime.now(timezone.utc).isoformat()

    summary = {
        "run_id": config.run_id,
        "method": config.method.value,
        "model": config.model,
        "reference": config.reference.value,
        "n": len(predictions),
        **report.to_dict(),
        "manifest_hash": manifest["manifest_hash"],
    }

    if config.output_dir:
        out = Path(config.output_dir) / config.run_id
        out.mkdir(parents=True, exist_ok=True)
        (out / "predictions.jsonl").write_text(
            "".join(p.to_line() + "\n" for p in predictions), encoding="utf-8")
        (out / "summary.json").write_text(
            json.dumps(summary, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8")
        (out / "manifest.json").write_text(
            json.dumps(manifest, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8")
        if traces:
            trace_dir = out / "traces"
            trace_dir.mkdir(exist_ok=True)
            for cid, trace in traces.items():
                (trace_dir / f"{cid}.json").write_text(
                    trace.to_json(indent=2) + "\n", encoding="utf-8")

    return predictions, manifest, report


# --------------------------------------------------------------------------
# Config-file driven orchestration


def load_bench_config(path: str | Path) -> tuple[list[RunConfig], dict]:
    """Parse a bench TOML file into per-run configs plus shared settings."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"bench config not found: {path}")
    with path.open("rb") as fh:
        doc = tomllib.load(fh)
    if "dataset" not in doc:
        raise ConfigError("bench config needs a 'dataset' path")
    if not doc.get("runs"):
        raise ConfigError("bench config needs at least one [[runs]] entry")

    base_dir = path.parent
    shared = {
        "dataset": str((base_dir / doc["dataset"])
                       if not Path(doc["dataset"]).is_absolute()
                       else Path(doc["dataset"])),
        "output_dir": doc.get("output_dir"),
    }
    if shared["output_dir"] and not Path(shared["output_dir"]).is_absolute():
        shared["output_dir"] = str(base_dir / shared["output_dir"])

    reference = ReferenceKind(doc.get("reference", "lay_consensus"))
    mode = doc.get("mode", "replay")
    cache_dir = doc.get("cache_dir")
    if cache_dir and not Path(cache_dir).is_absolute():
        cache_dir = str(base_dir / cache_dir)
    parallelism = int(doc.get("parallelism", 4))
    failure_policy = doc.get("failure_policy", "lenient")
    template_id = doc.get("template", "default")
    capabilities = {model: tuple(fields)
                    for model, fields in doc.get("capabilities", {}).items()}
    decoding_doc = doc.get("decoding", {})
    bootstrap = None
    if "bootstrap" in doc:
        b = doc["bootstrap"]
        bootstrap = BootstrapConfig(resamples=int(b.get("resamples", 10_000)),
                                    seed=int(b.get("seed", 640)),
                                    level=float(b.get("level", 0.95)))

    def resolve(p: Optional[str]) -> Optional[str]:
        if p is None:
            return None
        return str(base_dir / p) if not Path(p).is_absolute() else p

    configs = []
    for run in doc["runs"]:
        if "method" not in run or "model" not in run:
            raise ConfigError("each [[runs]] entry needs method and model")
        model = run["model"]
        configs.append(RunConfig(
            method=Method(run["method"]),
            model=model,
            reference=reference,
            rulemap_path=resolve(run.get("rulemap")),
            statute_pack_path=resolve(run.get("statute_pack")),
            decoding=DecodingConfig(
                model=model,
                temperature=float(decoding_doc.get("temperature", 0.0)),
                top_p=float(decoding_doc.get("top_p", 0.01)),
                seed=int(decoding_doc.get("seed", 640))),
            mode=mode,
            cache_dir=cache_dir,
            parallelism=parallelism,
            failure_policy=failure_policy,
            output_dir=shared["output_dir"],
            bootstrap=bootstrap,
            template_id=template_id,
            capabilities=capabilities,
        ))
    return configs, shared


def orchestrate(config_path: str | Path) -> dict[tuple[str, str], MetricsReport]:
    """Run every configured method x model pair and render the report."""
    configs, shared = load_bench_config(config_path)
    rows = load_dataset(shared["dataset"])
    results: dict[tuple[str, str], MetricsReport] = {}
    for config in configs:
        log.info("running %s", config.run_id)
        _, _, report = run_benchmark(config, rows)
        results[(config.method.value, config.model)] = report
    if shared["output_dir"]:
        out = Path(shared["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.md").write_text(render_report(results),
                                       encoding="utf-8")
        (out / "report.json").write_text(
            json.dumps(report_document(results), ensure_ascii=False, indent=2)
            + "\n", encoding="utf-8")
    return results
