"""Provenance for a pipeline run: Study > Experiment > Pipeline > Stage,
one StageExecution per stage, and file entities for every dep and out."""

from __future__ import annotations

import posixpath
import shlex
from urllib.parse import quote

from ..cas import ObjectRef
from ..errors import IncompleteLock
from ..rdf import Literal
from ..provgraph import NodeKind, ProvEdge, ProvGraph, ProvNode
from .lock import LockFile, LockRecord
from .spec import PipelineSpec, StageSpec

SCRIPT_EXTENSIONS = {".py", ".sh", ".bash", ".r", ".jl", ".js", ".ipynb", ".m", ".pl"}
INTERPRETERS = {"python", "python3", "sh", "bash", "Rscript", "julia", "node", "perl", "ruby"}
HYPERPARAMETER = "aimp:HyperParameterSetting/"


def _iri(ws: str, *parts: str) -> str:
    return "aimp:" + "/".join([quote(ws, safe="._-")] + [quote(p, safe="/._-") for p in parts])


def workspace_iris(ws: str) -> dict[str, str]:
    return {
        "study": _iri(ws, "study"),
        "experiment": _iri(ws, "experiment"),
        "pipeline": _iri(ws, "pipeline"),
    }


def stage_iri(ws: str, stage: str) -> str:
    return _iri(ws, "stage", stage)


def execution_iri(ws: str, stage: str) -> str:
    return _iri(ws, "execution", stage)


def file_iri(ws: str, path: str, ref: ObjectRef) -> str:
    return _iri(ws, "file", ref.sha256[:12], path)


def tool_iri(ws: str, name: str, version: str) -> str:
    return _iri(ws, "tool", name, version or "unversioned")


def _invoked(path: str, command: str) -> bool:
    """True when ``path`` is the program of the command (``./run`` or
    ``python3 run``), not merely one of its arguments."""
    try:
        words = shlex.split(command)
    except ValueError:
        words = command.split()
    if not words:
        return False
    if posixpath.basename(words[0]) in INTERPRETERS:
        words = words[1:2]
    return bool(words) and posixpath.normpath(words[0]) == path


def file_class(path: str, stage: StageSpec, spec: PipelineSpec) -> str:
    if spec.model is not None and path == spec.model.artifact:
        return "mls:Model"
    if posixpath.splitext(path)[1].lower() in SCRIPT_EXTENSIONS or _invoked(path, stage.command):
        return "aimp:Script"
    return "dcat:Dataset"


def file_attributes(path: str, ref: ObjectRef) -> dict:
    attrs = {
        "aimp:path": path,
        "spdx:checksumValue": ref.md5,
        "aimp:sha256": ref.sha256,
        "aimp:byteSize": ref.size,
    }
    if ref.media_type:
        attrs["aimp:mediaType"] = ref.media_type
    return attrs


def execution_attributes(rec: LockRecord) -> dict:
    attrs: dict = {"aimp:fingerprint": rec.fingerprint, "aimp:exitCode": rec.exit_code}
    if rec.started_at:
        attrs["prov:startedAtTime"] = Literal.typed(rec.started_at, "dateTime")
    if rec.ended_at:
        attrs["prov:endedAtTime"] = Literal.typed(rec.ended_at, "dateTime")
    if rec.tool is not None:
        attrs["aimp:toolName"] = rec.tool.name
        attrs["aimp:toolVersion"] = rec.tool.version
    for key, lit in rec.params.items():
        attrs[HYPERPARAMETER + quote(key, safe="._-")] = lit
    return attrs


def record_execution(lock: LockFile, spec: PipelineSpec, graph: ProvGraph | None = None) -> ProvGraph:
    """Merge the provenance of the locked run of ``spec`` into ``graph``.

    Every stage needs a successful lock record; a file seen as an out of one
    stage and a dep of another becomes a single entity carrying both the
    hasOutput and the hasInput edge.
    """
    for stage in spec.stages:
        rec = lock.get(stage.name)
        if rec is None or not rec.succeeded:
            raise IncompleteLock(stage.name)

    ws = spec.name
    top = workspace_iris(ws)
    nodes: dict[str, ProvNode] = {
        top["study"]: ProvNode(top["study"], NodeKind.of("aimp:Study"), {"aimp:workspace": ws}),
        top["experiment"]: ProvNode(top["experiment"], NodeKind.of("aimp:Experiment")),
        top["pipeline"]: ProvNode(
            top["pipeline"], NodeKind.of("aimp:Pipeline"), {"aimp:paramsFile": spec.params_file}
        ),
    }
    edges: list[ProvEdge] = [
        ProvEdge(top["study"], "dct:hasPart", top["experiment"]),
        ProvEdge(top["experiment"], "dct:hasPart", top["pipeline"]),
    ]

    for stage in spec.stages:
        rec = lock.records[stage.name]
        s_iri = stage_iri(ws, stage.name)
        x_iri = execution_iri(ws, stage.name)
        nodes[s_iri] = ProvNode(
            s_iri, NodeKind.of("aimp:Stage"), {"aimp:name": stage.name, "aimp:command": stage.command}
        )
        nodes[x_iri] = ProvNode(x_iri, NodeKind.of("aimp:StageExecution"), execution_attributes(rec))
        edges += [
            ProvEdge(top["pipeline"], "dct:hasPart", s_iri),
            ProvEdge(x_iri, "aimp:executes", s_iri),
        ]
        if rec.tool is not None:
            t_iri = tool_iri(ws, rec.tool.name, rec.tool.version)
            nodes.setdefault(t_iri, ProvNode(
                t_iri, NodeKind.of("prov:SoftwareAgent"),
                {"aimp:toolName": rec.tool.name, "aimp:toolVersion": rec.tool.version},
            ))
            edges.append(ProvEdge(x_iri, "prov:wasAssociatedWith", t_iri))
        for path, ref in sorted(rec.deps.items()):
            f = file_iri(ws, path, ref)
            nodes.setdefault(f, ProvNode(f, NodeKind.of(file_class(path, stage, spec)), file_attributes(path, ref)))
            edges.append(ProvEdge(x_iri, "mls:hasInput", f))
        for path, ref in sorted(rec.outs.items()):
            f = file_iri(ws, path, ref)
            kind = NodeKind.of(file_class(path, stage, spec))
            if f in nodes and nodes[f].kind != kind:
                # first seen as a dep of an earlier-listed stage: the producer decides
                nodes[f] = ProvNode(f, kind, nodes[f].attributes)
            nodes.setdefault(f, ProvNode(f, kind, file_attributes(path, ref)))
            edges += [ProvEdge(x_iri, "mls:hasOutput", f), ProvEdge(f, "prov:wasGeneratedBy", x_iri)]

    run = ProvGraph.empty().add_nodes(nodes.values()).add_edges(dict.fromkeys(edges))
    return run if graph is None else graph.merge(run)
