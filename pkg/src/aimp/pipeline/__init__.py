"""Declarative pipelines: parsing, DAG planning, cached execution, provenance."""

from .dag import Dag, build_dag
from .lock import LOCK_NAME, LockFile, LockRecord
from .record import record_execution
from .runner import (
    RunReport,
    StageFingerprint,
    StageOutcome,
    StageStatus,
    fingerprint_stage,
    load_workspace,
    read_params,
    run_pipeline,
    status,
)
from .spec import ModelSection, PipelineSpec, StageSpec, Tool, load_params, parse_pipeline

__all__ = [
    "Dag",
    "LOCK_NAME",
    "LockFile",
    "LockRecord",
    "ModelSection",
    "PipelineSpec",
    "RunReport",
    "StageFingerprint",
    "StageOutcome",
    "StageSpec",
    "StageStatus",
    "Tool",
    "build_dag",
    "fingerprint_stage",
    "load_params",
    "load_workspace",
    "parse_pipeline",
    "read_params",
    "record_execution",
    "run_pipeline",
    "status",
]
