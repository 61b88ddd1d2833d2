"""AI Model Passport: assembly, identity, serialization and verification.

A passport bundles everything known about one trained model: the dataset
descriptors it was built from, the provenance graph of the pipeline run,
the lock file, a training record (hyperparameters, metrics, artifact) and
manually declared metadata. Its identity is the sha256 of the canonical
JSON body with volatile fields (timestamps, logs, cache status) removed,
so two bit-identical runs on different machines get the same identity.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterable
from urllib.parse import quote

import yaml

from . import __version__, rdf
from .canonical import canonical_bytes, canonical_hash, decimal_string
from .cas import ObjectRef, hash_path
from .dcat import DatasetDescriptor, descriptors_to_doc
from .errors import ConfigError, IncompleteLock, LoadError, ManualIncomplete, SelfInconsistent
from .pipeline.dag import Dag, build_dag
from .pipeline.lock import LockFile
from .pipeline.record import file_attributes, file_class, file_iri, record_execution
from .pipeline.runner import load_workspace, status
from .pipeline.spec import PipelineSpec, StageSpec
from .provgraph import NodeKind, ProvEdge, ProvGraph, ProvNode
from .rdf import AIMP, DCAT, DCT, IRI, MLS, PMLM, RDF_TYPE, Literal
from .turtle import TurtleDoc, emit_turtle

FORMAT_VERSION = "1"
IDENTITY_PREFIX = "aimp:sha256:"
MANUAL_NAME = "aimp-manual.yaml"

# -- manual metadata -------------------------------------------------------------

REQUIRED_FIELDS = ("intendedPurpose", "potentialThreats", "license", "owner")
LEARNING_TASKS = ("ImageSegmentation", "Classification", "Regression", "Detection")
LEARNING_APPROACHES = ("supervised", "unsupervised", "semi-supervised", "reinforcement")

_FIELD_HELP = {
    "intendedPurpose": "What the model is for, in which clinical setting, and for whom.",
    "potentialThreats": "Known risks: bias, misuse, failure modes, populations it was not validated on.",
    "license": "License under which the model may be used (SPDX id or URL).",
    "owner": "Person or organization accountable for the model.",
    "modelName": "Human-readable model name.",
    "modelVersion": "Model version label.",
    "description": "Free-text description.",
    "learningTask": "One of: " + ", ".join(LEARNING_TASKS) + ", or other:<text>.",
    "learningApproach": "One of: " + ", ".join(LEARNING_APPROACHES) + ", or other:<text>.",
    "algorithmFamily": "e.g. NeuralNetwork/U-Net.",
    "softwareFramework": "e.g. PyTorch 2.1.",
}


@dataclass(frozen=True)
class ManualMetadata:
    intendedPurpose: str = ""
    potentialThreats: str = ""
    license: str = ""
    owner: str = ""
    modelName: str = ""
    modelVersion: str = ""
    description: str = ""
    learningTask: str = ""
    learningApproach: str = ""
    algorithmFamily: str = ""
    softwareFramework: str = ""

    def __post_init__(self):
        for name in FIELD_NAMES:
            if not isinstance(getattr(self, name), str):
                raise ConfigError(f"manual metadata field {name!r} must be text")
        _check_vocab("learningTask", self.learningTask, LEARNING_TASKS)
        _check_vocab("learningApproach", self.learningApproach, LEARNING_APPROACHES)

    def to_json(self) -> dict:
        return {name: getattr(self, name) for name in FIELD_NAMES}

    @classmethod
    def from_json(cls, data: dict) -> "ManualMetadata":
        unknown = set(data) - set(FIELD_NAMES)
        if unknown:
            raise ConfigError(f"unknown manual metadata field(s): {', '.join(sorted(unknown))}")
        return cls(**{k: "" if v is None else v for k, v in data.items()})


FIELD_NAMES = tuple(f.name for f in fields(ManualMetadata))


def _check_vocab(name: str, value: str, allowed: tuple[str, ...]) -> None:
    v = value.strip()
    if not v or v in allowed:
        return
    if v.startswith("other:") and v[len("other:"):].strip():
        return
    raise ConfigError(f"{name} {value!r} is not one of {', '.join(allowed)} (or other:<text>)")


def validate_manual(manual: ManualMetadata) -> list[str]:
    """Required fields that are missing or blank, in declaration order."""
    return [f for f in REQUIRED_FIELDS if not getattr(manual, f).strip()]


def scaffold_manual_template() -> str:
    lines = [
        "# AI Model Passport: manually declared metadata.",
        "# Fields marked REQUIRED must be non-blank before `aimp passport build`.",
        "",
    ]
    for name in FIELD_NAMES:
        tag = "REQUIRED. " if name in REQUIRED_FIELDS else ""
        lines.append(f"# {tag}{_FIELD_HELP[name]}")
        lines.append(f'{name}: ""')
        lines.append("")
    return "\n".join(lines)


def parse_manual(text: str) -> ManualMetadata:
    """Read a manual-metadata file. Scalars keep their text exactly as
    written, so ``modelVersion: 1.10`` stays "1.10"."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"manual metadata: {exc}") from None
    if root is None:
        return ManualMetadata()
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("manual metadata must be a mapping of field: value")
    values: dict[str, str] = {}
    for k, v in root.value:
        if not isinstance(v, yaml.ScalarNode):
            raise ConfigError(f"manual metadata field {k.value!r} must be a single value")
        if k.value in values:
            raise ConfigError(f"manual metadata field {k.value!r} given twice")
        null = v.tag == "tag:yaml.org,2002:null" and v.style is None
        values[k.value] = "" if null else v.value
    return ManualMetadata.from_json(values)


# -- training record ----------------------------------------------------------------


@dataclass(frozen=True)
class Evaluation:
    metric: str
    value: str  # shortest round-trip decimal text
    dataset: Any = None  # dataset IRI (str), {"path", ObjectRef fields}, or None

    def __post_init__(self):
        try:
            ok = math.isfinite(Decimal(self.value))
        except ArithmeticError:
            ok = False
        if not ok:
            raise ConfigError(f"metric {self.metric!r}: {self.value!r} is not a finite decimal")

    def to_json(self) -> dict:
        return {"metric": self.metric, "value": self.value, "dataset": self.dataset}


@dataclass(frozen=True)
class TrainingRecord:
    model_path: str
    model_artifact: ObjectRef
    hyperparameters: dict[str, Literal] = field(default_factory=dict)
    evaluations: tuple[Evaluation, ...] = ()
    environment: tuple[tuple[str, str], ...] = ()
    implementation_path: str | None = None
    implementation: ObjectRef | None = None

    def to_json(self) -> dict:
        return {
            "modelPath": self.model_path,
            "modelArtifact": self.model_artifact.to_json(),
            "hyperparameters": {k: v.to_json() for k, v in sorted(self.hyperparameters.items())},
            "evaluations": [e.to_json() for e in sorted(self.evaluations, key=lambda e: e.metric)],
            "environment": [{"packageName": n, "version": v} for n, v in sorted(self.environment)],
            "implementation": (
                {"path": self.implementation_path, **self.implementation.to_json()}
                if self.implementation is not None
                else None
            ),
        }

    @classmethod
    def from_json(cls, d: dict) -> "TrainingRecord":
        impl = d.get("implementation")
        return cls(
            model_path=d["modelPath"],
            model_artifact=ObjectRef.from_json(d["modelArtifact"]),
            hyperparameters={k: Literal.from_json(v) for k, v in d.get("hyperparameters", {}).items()},
            evaluations=tuple(Evaluation(e["metric"], e["value"], e.get("dataset")) for e in d.get("evaluations", [])),
            environment=tuple((e["packageName"], e["version"]) for e in d.get("environment", [])),
            implementation_path=impl["path"] if impl else None,
            implementation=ObjectRef.from_json(impl) if impl else None,
        )


def flatten_metrics(data: Any, prefix: str = "") -> dict[str, str]:
    """Numeric leaves of a metrics document as dotted keys -> decimal text."""
    out: dict[str, str] = {}
    if isinstance(data, dict):
        for k, v in data.items():
            out.update(flatten_metrics(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(data, (int, float)) and not isinstance(data, bool) and prefix:
        if isinstance(data, float) and not math.isfinite(data):
            raise ConfigError(f"metric {prefix!r} is not finite")
        out[prefix] = decimal_string(data)
    return out


def _find_ref(lock: LockFile, path: str) -> ObjectRef | None:
    for rec in lock.records.values():
        if path in rec.outs:
            return rec.outs[path]
    for rec in lock.records.values():
        if path in rec.deps:
            return rec.deps[path]
    return None


def training_record(
    spec: PipelineSpec,
    lock: LockFile,
    workspace: str | os.PathLike,
    descriptors: Iterable[DatasetDescriptor] = (),
) -> TrainingRecord:
    """Training record of the stage named in the pipeline's ``model`` section."""
    if spec.model is None:
        raise ConfigError("the pipeline file has no 'model' section naming the stage and artifact")
    ws = Path(workspace)
    m = spec.model
    rec = lock.get(m.stage)
    if rec is None or not rec.succeeded:
        raise IncompleteLock(m.stage)
    stage = spec.stage(m.stage)

    artifact = rec.outs.get(m.artifact) or hash_path(ws / m.artifact)

    evaluations: list[Evaluation] = []
    if m.metrics:
        mpath = ws / m.metrics
        try:
            data = json.loads(mpath.read_bytes())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{m.metrics}: unreadable metrics file ({exc})") from exc
        descriptors = list(descriptors)
        dataset: Any = None
        if m.eval_data:
            ref = _find_ref(lock, m.eval_data) or hash_path(ws / m.eval_data)
            dataset = {"path": m.eval_data, **ref.to_json()}
        elif len(descriptors) == 1:
            dataset = descriptors[0].id
        for name, value in sorted(flatten_metrics(data).items()):
            evaluations.append(Evaluation(name, value, dataset))

    tools = {(r.tool.name, r.tool.version) for r in lock.records.values() if r.tool is not None}
    scripts = sorted(p for p in rec.deps if file_class(p, stage, spec) == "aimp:Script")
    impl = scripts[0] if scripts else None
    return TrainingRecord(
        model_path=m.artifact,
        model_artifact=artifact,
        hyperparameters=dict(rec.params),
        evaluations=tuple(evaluations),
        environment=tuple(sorted(tools)),
        implementation_path=impl,
        implementation=rec.deps[impl] if impl else None,
    )


# -- graph helpers ----------------------------------------------------------------------


def evaluation_graph(spec: PipelineSpec, lock: LockFile, training: TrainingRecord) -> ProvGraph:
    """A ModelEvaluation activity linking the model, the evaluation data and
    the metrics file, with one attribute per evaluation measure."""
    ws = spec.name
    m = spec.model
    g = ProvGraph.empty()
    if m is None or not training.evaluations:
        return g
    ev = f"aimp:{ws}/evaluation"
    attrs = {
        "aimp:EvaluationMeasure/" + quote(e.metric, safe="._-"): Literal.typed(e.value, "decimal")
        for e in training.evaluations
    }
    nodes = [ProvNode(ev, NodeKind.of("mls:ModelEvaluation"), attrs)]
    edges = []
    stage = spec.stage(m.stage)
    links = [("prov:used", m.artifact), ("mls:hasInput", m.eval_data), ("mls:hasOutput", m.metrics)]
    for pred, path in links:
        ref = _find_ref(lock, path) if path else None
        if ref is None:
            continue
        f = file_iri(ws, path, ref)
        nodes.append(ProvNode(f, NodeKind.of(file_class(path, stage, spec)), file_attributes(path, ref)))
        edges.append(ProvEdge(ev, pred, f))
    return g.add_nodes(nodes).add_edges(edges)


def dataset_graph(descriptors: Iterable[DatasetDescriptor]) -> ProvGraph:
    nodes = []
    for d in descriptors:
        attrs = {"dct:title": d.title, "dct:license": d.license, "dct:publisher": d.publisher}
        if d.version:
            attrs["aimp:version"] = d.version
        nodes.append(ProvNode(d.id, NodeKind.of("dcat:Dataset"), attrs))
    return ProvGraph.empty().add_nodes(nodes)


def lock_dag(lock: LockFile) -> Dag:
    """The stage DAG as recorded in the lock (deps/outs of each record)."""
    stages = tuple(
        StageSpec(name, rec.command, tuple(sorted(rec.deps)), tuple(sorted(rec.outs)))
        for name, rec in sorted(lock.records.items())
    )
    return build_dag(PipelineSpec(stages))


# -- the passport --------------------------------------------------------------------------


@dataclass
class ModelPassport:
    workspace: str
    datasets: list[DatasetDescriptor]
    provenance: ProvGraph
    lock: LockFile
    training: TrainingRecord
    manual: ManualMetadata
    created_at: str = ""
    tool_version: str = __version__
    format_version: str = FORMAT_VERSION
    identity: str = ""

    def pipeline_json(self) -> dict:
        dag = lock_dag(self.lock)
        return {"name": self.workspace, "order": list(dag.order), "edges": [list(e) for e in dag.edges]}

    def to_json(self) -> dict:
        return {
            "formatVersion": self.format_version,
            "identity": self.identity,
            "createdAt": self.created_at,
            "toolVersion": self.tool_version,
            "workspace": self.workspace,
            "manual": self.manual.to_json(),
            "datasets": sorted((d.to_json() for d in self.datasets), key=lambda d: d["id"]),
            "pipeline": self.pipeline_json(),
            "lock": self.lock.to_json(),
            "training": self.training.to_json(),
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ModelPassport":
        if str(d.get("formatVersion")) != FORMAT_VERSION:
            raise LoadError(f"unsupported passport format {d.get('formatVersion')!r}")
        return cls(
            workspace=d["workspace"],
            datasets=[DatasetDescriptor.from_json(x) for x in d.get("datasets", [])],
            provenance=ProvGraph.from_dict(d["provenance"]),
            lock=LockFile.from_json(d["lock"]),
            training=TrainingRecord.from_json(d["training"]),
            manual=ManualMetadata.from_json(d.get("manual", {})),
            created_at=d.get("createdAt", ""),
            tool_version=d.get("toolVersion", ""),
            format_version=str(d["formatVersion"]),
            identity=d.get("identity", ""),
        )

    @property
    def dag(self) -> Dag:
        return lock_dag(self.lock)


VOLATILE_GRAPH_ATTRIBUTES = (rdf.PROV + "startedAtTime", rdf.PROV + "endedAtTime")
VOLATILE_LOCK_FIELDS = ("startedAt", "endedAt", "stdout", "stderr", "status")


def identity_body(doc: dict) -> dict:
    """The passport JSON with every field excluded from identity removed."""
    body = copy.deepcopy(doc)
    body.pop("identity", None)
    body.pop("createdAt", None)
    for d in body.get("datasets", []):
        if d.get("source"):
            d["source"].pop("retrievedAt", None)
    for rec in body.get("lock", {}).get("stages", {}).values():
        for key in VOLATILE_LOCK_FIELDS:
            rec.pop(key, None)
    for node in body.get("provenance", {}).get("nodes", []):
        for key in VOLATILE_GRAPH_ATTRIBUTES:
            node.get("attributes", {}).pop(key, None)
    return body


def compute_identity(passport: ModelPassport | dict) -> str:
    doc = passport.to_json() if isinstance(passport, ModelPassport) else passport
    return IDENTITY_PREFIX + canonical_hash(identity_body(doc))


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def assemble(
    descriptors: Iterable[DatasetDescriptor],
    graph: ProvGraph,
    lock: LockFile,
    training: TrainingRecord,
    manual: ManualMetadata,
    workspace: str = "workspace",
) -> ModelPassport:
    missing = validate_manual(manual)
    if missing:
        raise ManualIncomplete(missing)
    graph.require_valid()
    if not lock.records:
        raise IncompleteLock("(none)")
    for name, rec in sorted(lock.records.items()):
        if not rec.succeeded:
            raise IncompleteLock(name)
    passport = ModelPassport(
        workspace=workspace,
        datasets=list(descriptors),
        provenance=graph.normalized(),
        lock=lock,
        training=training,
        manual=manual,
        created_at=_now(),
    )
    passport.identity = compute_identity(passport)
    return passport


def build_passport(
    workspace: str | os.PathLike,
    manual: ManualMetadata,
    descriptors: Iterable[DatasetDescriptor] = (),
) -> ModelPassport:
    """Assemble the passport of an up-to-date workspace."""
    missing = validate_manual(manual)
    if missing:
        raise ManualIncomplete(missing)
    spec, lock = load_workspace(workspace)
    stale = [s for s in status(spec, lock, workspace) if s.stale]
    if stale:
        detail = ", ".join(f"{s.stage} ({s.reason})" for s in stale)
        raise ConfigError(f"workspace is not up to date, run `aimp run` first: {detail}")
    descriptors = list(descriptors)
    training = training_record(spec, lock, workspace, descriptors)
    graph = record_execution(lock, spec, dataset_graph(descriptors))
    graph = graph.merge(evaluation_graph(spec, lock, training))
    return assemble(descriptors, graph, lock, training, manual, workspace=spec.name)


# -- serialization -----------------------------------------------------------------------------


def check_self_consistent(passport: ModelPassport) -> None:
    computed = compute_identity(passport)
    if passport.identity != computed:
        raise SelfInconsistent(passport.identity, computed)


def serialize(passport: ModelPassport, fmt: str = "canonical-json") -> bytes:
    check_self_consistent(passport)
    if fmt == "canonical-json":
        return canonical_bytes(passport.to_json())
    if fmt == "turtle":
        return emit_turtle(passport_turtle_doc(passport)).encode("utf-8")
    raise ConfigError(f"unknown passport format {fmt!r}")


def passport_iri(passport: ModelPassport) -> str:
    return f"{AIMP}{passport.workspace}/passport"


def passport_turtle_doc(passport: ModelPassport) -> TurtleDoc:
    prov_doc = passport.provenance.to_turtle_doc()
    ds_doc = descriptors_to_doc(passport.datasets)
    prefixes = {**ds_doc.prefixes, **prov_doc.prefixes}
    p = IRI(passport_iri(passport))
    t = passport.training
    model = IRI(rdf.expand(file_iri(passport.workspace, t.model_path, t.model_artifact), rdf.DEFAULT_PREFIXES))
    triples = [
        (p, IRI(RDF_TYPE), IRI(AIMP + "ModelPassport")),
        (p, IRI(AIMP + "identity"), Literal(passport.identity)),
        (p, IRI(DCT + "created"), Literal.typed(passport.created_at, "dateTime")),
        (p, IRI(AIMP + "toolVersion"), Literal(passport.tool_version)),
        (p, IRI(AIMP + "formatVersion"), Literal(passport.format_version)),
        (p, IRI(AIMP + "describesModel"), model),
        (p, IRI(AIMP + "modelSha256"), Literal(t.model_artifact.sha256)),
    ]
    for d in passport.datasets:
        triples.append((p, IRI(DCAT + "dataset"), IRI(d.id)))
    for name, value in passport.manual.to_json().items():
        if value:
            pred = {"learningTask": PMLM + "learningTask", "learningApproach": PMLM + "learningApproach"}.get(
                name, AIMP + name
            )
            triples.append((p, IRI(pred), Literal(value)))
    for e in t.evaluations:
        triples.append((p, IRI(MLS + "hasQuality"), Literal(f"{e.metric}={e.value}")))
    return TurtleDoc(prefixes, prov_doc.triples + ds_doc.triples + triples)


def load(data: bytes | str) -> ModelPassport:
    """Parse a canonical-JSON passport. Does not check the identity."""
    try:
        doc = json.loads(data)
        return ModelPassport.from_json(doc)
    except LoadError:
        raise
    except (ValueError, KeyError, TypeError, AttributeError, ConfigError) as exc:
        raise LoadError(f"not a readable passport: {exc}") from exc


def load_file(path: str | os.PathLike) -> ModelPassport:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise LoadError(f"{path}: {exc.strerror or exc}") from exc
    return load(data)


# -- verification ----------------------------------------------------------------------------------

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"
CHECKS = ("identity", "model-artifact", "workspace-artifacts", "provenance")


@dataclass(frozen=True)
class CheckResult:
    name: str
    outcome: str
    detail: str = ""

    def line(self) -> str:
        return f"{self.name}: {self.outcome}" + (f" ({self.detail})" if self.detail else "")

    def to_json(self) -> dict:
        return {"check": self.name, "outcome": self.outcome, "detail": self.detail}


@dataclass(frozen=True)
class VerificationReport:
    identity: str
    checks: tuple[CheckResult, ...]

    @property
    def ok(self) -> bool:
        return all(c.outcome != FAIL for c in self.checks)

    def check(self, name: str) -> CheckResult:
        return next(c for c in self.checks if c.name == name)

    def to_json(self) -> dict:
        return {"identity": self.identity, "ok": self.ok, "checks": [c.to_json() for c in self.checks]}


def _check_identity(passport: ModelPassport) -> CheckResult:
    computed = compute_identity(passport)
    if computed == passport.identity:
        return CheckResult("identity", PASS, computed)
    return CheckResult("identity", FAIL, f"expected {passport.identity}, got {computed}")


def _check_model(passport: ModelPassport, workspace: Path | None, model_file: Path | None) -> CheckResult:
    target = model_file
    if target is None and workspace is not None:
        candidate = workspace / passport.training.model_path
        target = candidate if candidate.exists() else None
    if target is None:
        return CheckResult("model-artifact", SKIP, "no model file given")
    expected = passport.training.model_artifact.sha256
    try:
        actual = hash_path(target).sha256
    except Exception as exc:  # unreadable model file is a failed check, not a crash
        return CheckResult("model-artifact", FAIL, f"{target}: {exc}")
    if actual == expected:
        return CheckResult("model-artifact", PASS, expected)
    return CheckResult("model-artifact", FAIL, f"expected {expected}, got {actual}")


def _check_workspace(passport: ModelPassport, workspace: Path | None) -> CheckResult:
    if workspace is None:
        return CheckResult("workspace-artifacts", SKIP, "no workspace given")
    recorded: dict[str, ObjectRef] = {}
    for rec in passport.lock.records.values():
        recorded.update(rec.deps)
    for rec in passport.lock.records.values():
        recorded.update(rec.outs)
    bad, verified, missing = [], 0, 0
    for path, ref in sorted(recorded.items()):
        p = workspace / path
        if not p.exists():
            missing += 1
            continue
        actual = hash_path(p).sha256
        if actual != ref.sha256:
            bad.append(f"{path}: expected {ref.sha256}, got {actual}")
        else:
            verified += 1
    if bad:
        return CheckResult("workspace-artifacts", FAIL, "; ".join(bad))
    if verified == 0:
        return CheckResult("workspace-artifacts", SKIP, f"none of {missing} recorded files present")
    note = f"{verified} verified" + (f", {missing} missing (skipped)" if missing else "")
    return CheckResult("workspace-artifacts", PASS, note)


def _check_provenance(passport: ModelPassport) -> CheckResult:
    problems = passport.provenance.validate()
    if problems:
        shown = "; ".join(str(v) for v in problems[:3])
        return CheckResult("provenance", FAIL, f"{len(problems)} violation(s): {shown}")
    return CheckResult(
        "provenance", PASS, f"{len(passport.provenance.nodes)} nodes, {len(passport.provenance.edges)} edges"
    )


def verify(
    passport: ModelPassport,
    workspace: str | os.PathLike | None = None,
    model_file: str | os.PathLike | None = None,
) -> VerificationReport:
    ws = Path(workspace) if workspace is not None else None
    mf = Path(model_file) if model_file is not None else None
    checks = (
        _check_identity(passport),
        _check_model(passport, ws, mf),
        _check_workspace(passport, ws),
        _check_provenance(passport),
    )
    return VerificationReport(passport.identity, checks)
