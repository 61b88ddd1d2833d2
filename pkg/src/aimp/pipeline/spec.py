"""Pipeline file and params file parsing.

Pipeline file (``aimp-pipeline.yaml``)::

    name: demo                 # workspace id, used to mint provenance IRIs
    params: params.yaml        # optional, this is the default
    stages:
      Preprocess:
        cmd: python3 scripts/preprocess.py
        deps: [data/nifti, scripts/preprocess.py]
        outs: [data/preprocessed]
        params: [image_size, maskcrop]
        tool: {name: SimpleITK, version: "2.3.1"}
    model:                     # optional, what `passport build` packages
      stage: Train
      artifact: models/model.bin
      metrics: metrics.json
"""

from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass, field
from typing import Any

import yaml

from ..canonical import canonical_bytes, decimal_string
from ..errors import BadPath, DuplicateOut, DuplicateStage, MissingParam, PipelineSyntaxError
from ..rdf import Literal

STAGE_NAME = re.compile(r"[A-Za-z0-9_-]+\Z")
WORKSPACE_NAME = re.compile(r"[A-Za-z0-9_.-]+\Z")
_STAGE_KEYS = {"cmd", "deps", "outs", "params", "tool", "desc"}
_TOP_KEYS = {"name", "params", "stages", "model"}
_MODEL_KEYS = {"stage", "artifact", "metrics", "eval_data"}


@dataclass(frozen=True)
class Tool:
    name: str
    version: str

    def to_json(self) -> dict:
        return {"name": self.name, "version": self.version}


@dataclass(frozen=True)
class StageSpec:
    name: str
    command: str
    deps: tuple[str, ...] = ()
    outs: tuple[str, ...] = ()
    params: tuple[str, ...] = ()
    tool: Tool | None = None


@dataclass(frozen=True)
class ModelSection:
    stage: str
    artifact: str
    metrics: str | None = None
    eval_data: str | None = None


@dataclass(frozen=True)
class PipelineSpec:
    stages: tuple[StageSpec, ...] = ()
    params_file: str = "params.yaml"
    name: str = "workspace"
    model: ModelSection | None = None
    _by_name: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {s.name: s for s in self.stages})

    def stage(self, name: str) -> StageSpec:
        return self._by_name[name]

    @property
    def stage_names(self) -> list[str]:
        return [s.name for s in self.stages]


def normalize_path(path: Any) -> str:
    """Workspace-relative POSIX path; rejects absolute paths and '..'."""
    if not isinstance(path, str) or not path.strip():
        raise BadPath(str(path), "empty or not a string")
    if path.startswith("/") or re.match(r"[A-Za-z]:[\\/]", path) or "\\" in path:
        raise BadPath(path, "must be a relative POSIX path")
    if ".." in path.split("/"):
        raise BadPath(path, "'..' segments are not allowed")
    norm = posixpath.normpath(path)
    if norm in (".", ""):
        raise BadPath(path, "refers to the workspace root")
    return norm


def paths_overlap(a: str, b: str) -> bool:
    return a == b or a.startswith(b + "/") or b.startswith(a + "/")


# -- YAML helpers -------------------------------------------------------------


def _compose(text: str):
    try:
        return yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise PipelineSyntaxError(mark.line + 1 if mark else None, str(exc.problem or exc)) from None
    except yaml.YAMLError as exc:
        raise PipelineSyntaxError(None, str(exc)) from None


def _check_duplicates(node, stages_node=None) -> None:
    if isinstance(node, yaml.MappingNode):
        seen = {}
        for k, v in node.value:
            key = k.value if isinstance(k, yaml.ScalarNode) else None
            if key is not None and key in seen:
                if node is stages_node:
                    raise DuplicateStage(key)
                raise PipelineSyntaxError(k.start_mark.line + 1, f"duplicate key {key!r}")
            seen[key] = k
            _check_duplicates(v, stages_node)
    elif isinstance(node, yaml.SequenceNode):
        for v in node.value:
            _check_duplicates(v, stages_node)


def _get(node, key: str):
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            if isinstance(k, yaml.ScalarNode) and k.value == key:
                return k, v
    return None, None


def _line(node) -> int | None:
    return node.start_mark.line + 1 if node is not None else None


def _str_list(value, what: str, line) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [value]
    if not isinstance(value, list) or not all(isinstance(v, (str, int, float)) for v in value):
        raise PipelineSyntaxError(line, f"{what} must be a list of strings")
    return [str(v) for v in value]


def parse_pipeline(text: str) -> PipelineSpec:
    root = _compose(text)
    if root is None:
        return PipelineSpec()
    if not isinstance(root, yaml.MappingNode):
        raise PipelineSyntaxError(_line(root), "pipeline file must be a mapping")
    _, stages_node = _get(root, "stages")
    _check_duplicates(root, stages_node)
    data = yaml.safe_load(text) or {}

    unknown = set(data) - _TOP_KEYS
    if unknown:
        k, _ = _get(root, sorted(unknown)[0])
        raise PipelineSyntaxError(_line(k), f"unknown top-level key {sorted(unknown)[0]!r}")

    name = str(data.get("name", "workspace"))
    if not WORKSPACE_NAME.match(name):
        raise PipelineSyntaxError(_line(_get(root, "name")[1]), f"invalid workspace name {name!r}")
    params_file = normalize_path(data.get("params", "params.yaml"))

    raw_stages = data.get("stages") or {}
    if not isinstance(raw_stages, dict):
        raise PipelineSyntaxError(_line(stages_node), "'stages' must be a mapping of name -> stage")

    stages: list[StageSpec] = []
    producers: dict[str, str] = {}
    for sname, body in raw_stages.items():
        key_node, body_node = _get(stages_node, str(sname))
        line = _line(key_node)
        sname = str(sname)
        if not STAGE_NAME.match(sname):
            raise PipelineSyntaxError(line, f"invalid stage name {sname!r} (allowed: A-Z a-z 0-9 _ -)")
        if not isinstance(body, dict):
            raise PipelineSyntaxError(line, f"stage {sname!r} must be a mapping")
        extra = set(body) - _STAGE_KEYS
        if extra:
            raise PipelineSyntaxError(line, f"stage {sname!r}: unknown key {sorted(extra)[0]!r}")
        cmd = body.get("cmd")
        if isinstance(cmd, list) and cmd and all(isinstance(c, str) for c in cmd):
            cmd = " && ".join(cmd)
        if not isinstance(cmd, str) or not cmd.strip():
            raise PipelineSyntaxError(line, f"stage {sname!r}: 'cmd' is required")

        deps = list(dict.fromkeys(normalize_path(p) for p in _str_list(body.get("deps"), "deps", line)))
        outs = list(dict.fromkeys(normalize_path(p) for p in _str_list(body.get("outs"), "outs", line)))
        for d in deps:
            for o in outs:
                if paths_overlap(d, o):
                    raise BadPath(d, f"stage {sname!r} lists it as both dependency and output")
        for o in outs:
            for other_out, producer in producers.items():
                if paths_overlap(o, other_out):
                    raise DuplicateOut(o, producer, sname)
            for o2 in outs:
                if o2 != o and paths_overlap(o, o2):
                    raise DuplicateOut(o, sname, sname)
            producers[o] = sname

        params = _str_list(body.get("params"), "params", line)
        tool = None
        if body.get("tool") is not None:
            tool_node = _get(body_node, "tool")[1]
            tool = _parse_tool(body["tool"], tool_node, sname, line)
        stages.append(StageSpec(sname, cmd, tuple(deps), tuple(outs), tuple(params), tool))

    model = None
    if data.get("model") is not None:
        m = data["model"]
        mline = _line(_get(root, "model")[0])
        if not isinstance(m, dict) or set(m) - _MODEL_KEYS or "stage" not in m or "artifact" not in m:
            raise PipelineSyntaxError(mline, "'model' needs 'stage' and 'artifact' (optional: metrics, eval_data)")
        model = ModelSection(
            str(m["stage"]),
            normalize_path(m["artifact"]),
            normalize_path(m["metrics"]) if m.get("metrics") else None,
            normalize_path(m["eval_data"]) if m.get("eval_data") else None,
        )
        names = {s.name for s in stages}
        if model.stage not in names:
            raise PipelineSyntaxError(mline, f"model stage {model.stage!r} is not a declared stage")
        owner = next(s for s in stages if s.name == model.stage)
        for p in filter(None, (model.artifact, model.metrics)):
            if not any(paths_overlap(p, o) for o in owner.outs):
                raise PipelineSyntaxError(mline, f"{p!r} is not an output of stage {model.stage!r}")

    return PipelineSpec(tuple(stages), params_file, name, model)


def _parse_tool(value, node, stage: str, line) -> Tool:
    if isinstance(value, str) and "==" in value:
        n, v = value.split("==", 1)
        return Tool(n.strip(), v.strip())
    if not isinstance(value, dict) or "name" not in value:
        raise PipelineSyntaxError(line, f"stage {stage!r}: tool must be {{name, version}}")
    # keep the version exactly as written ("2.10" must not become 2.1)
    _, vnode = _get(node, "version")
    version = vnode.value if isinstance(vnode, yaml.ScalarNode) else str(value.get("version", ""))
    return Tool(str(value["name"]), "" if version in (None, "null", "~") else str(version))


# -- params ---------------------------------------------------------------------


def flatten_params(data: Any, prefix: str = "") -> dict[str, Any]:
    """Nested mapping -> flat ``dotted.key -> value``; lists are leaves."""
    out: dict[str, Any] = {}
    if isinstance(data, dict):
        for k, v in data.items():
            key = f"{prefix}.{k}" if prefix else str(k)
            if isinstance(v, dict) and v:
                out.update(flatten_params(v, key))
            else:
                out[key] = v
    elif prefix:
        out[prefix] = data
    return out


def load_params(text: str) -> dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise PipelineSyntaxError(mark.line + 1 if mark else None, f"params file: {exc.problem}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise PipelineSyntaxError(1, "params file must be a mapping")
    return flatten_params(data)


def _jsonable(value):
    if isinstance(value, float):
        return decimal_string(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def param_literal(value: Any) -> Literal:
    if isinstance(value, (bool, int, float, str)):
        return Literal.of(value)
    if value is None or isinstance(value, (list, tuple, dict)):
        return Literal(canonical_bytes(_jsonable(value)).decode())
    # dates and other YAML scalars
    return Literal(str(value))


def resolve_params(keys, params: dict[str, Any], stage: str | None = None) -> dict[str, Literal]:
    """Snapshot of the params a stage references. A key may name a section,
    selecting every key beneath it."""
    out: dict[str, Literal] = {}
    for key in keys:
        hits = {k: v for k, v in params.items() if k == key or k.startswith(key + ".")}
        if not hits:
            raise MissingParam(key, stage)
        for k, v in hits.items():
            out[k] = param_literal(v)
    return dict(sorted(out.items()))
