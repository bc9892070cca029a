"""Benchmark harness: dataset ingestion, references, metrics, runs, reports."""

from .data import (
    DatasetRow,
    Reference,
    ReferenceKind,
    build_expert_subset,
    build_lay_consensus,
    generate_synthetic_dataset,
    load_dataset,
    write_dataset_csv,
)
from .metrics import (
    CiBound,
    ConfusionCounts,
    MetricsReport,
    bootstrap_ci,
    confusion,
    metrics,
    round_half_up,
)
from .report import render_report, report_document
from .runner import BootstrapConfig, Method, Prediction, RunConfig, orchestrate, run_benchmark
