"""Experiment orchestration: spec files, replica fan-out and result files."""

from .config import ExperimentSpec, SpecError, load_spec
from .experiment import (
    ComparisonReport,
    RunManifest,
    ValidationReport,
    compare_variants,
    load_manifest,
    rerun_from_manifest,
    run_experiment,
    validate,
)

__all__ = [
    "ExperimentSpec",
    "SpecError",
    "load_spec",
    "RunManifest",
    "ComparisonReport",
    "ValidationReport",
    "run_experiment",
    "compare_variants",
    "validate",
    "load_manifest",
    "rerun_from_manifest",
]
