"""Stage fingerprinting, cached execution and staleness reporting."""

from __future__ import annotations

import logging
import os
import shutil
import subprocess
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from ..canonical import canonical_hash
from ..cas import ObjectRef, ObjectStore, hash_path
from ..errors import AimpError, ConfigError, ExecutionFailed, MissingDep, MissingOut, MissingParam
from ..rdf import Literal
from .dag import Dag, build_dag
from .lock import LOCK_NAME, LockFile, LockRecord
from .spec import PipelineSpec, StageSpec, load_params, resolve_params

log = logging.getLogger(__name__)

STORE_DIR = ".aimp"


@dataclass(frozen=True)
class StageFingerprint:
    digest: str
    deps: dict[str, ObjectRef]
    params: dict[str, Literal]


def fingerprint_payload(stage: StageSpec, deps: dict[str, ObjectRef], params: dict[str, Literal]) -> dict:
    return {
        "command": stage.command,
        "deps": [[p, deps[p].sha256] for p in sorted(deps)],
        "params": [[k, v.kind or v.datatype, v.lexical] for k, v in sorted(params.items())],
        "outs": sorted(stage.outs),
        "tool": stage.tool.to_json() if stage.tool else None,
    }


def fingerprint_stage(
    stage: StageSpec,
    params: dict[str, Any],
    workspace: str | os.PathLike,
    store: ObjectStore | None = None,
) -> StageFingerprint:
    """sha256 over the stage's command, dep hashes, referenced params, outs
    list and tool. Deps are also stored in ``store`` when one is given."""
    ws = Path(workspace)
    deps = {}
    for d in stage.deps:
        p = ws / d
        if not p.exists():
            raise MissingDep(d, stage.name)
        deps[d] = _hash(p, store)
    snap = resolve_params(stage.params, params, stage.name)
    return StageFingerprint(canonical_hash(fingerprint_payload(stage, deps, snap)), deps, snap)


def _hash(path: Path, store: ObjectStore | None) -> ObjectRef:
    ref = hash_path(path)
    if store is not None and not store.has(ref.sha256):
        ref = hash_path(path, store)
    return ref


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def read_params(spec: PipelineSpec, workspace: str | os.PathLike) -> dict[str, Any]:
    p = Path(workspace) / spec.params_file
    if not p.exists():
        return {}
    return load_params(p.read_text(encoding="utf-8"))


@dataclass
class StageOutcome:
    stage: str
    status: str  # fresh | cached | failed | skipped
    duration: float = 0.0
    error: AimpError | None = None


@dataclass
class RunReport:
    lock: LockFile
    outcomes: list[StageOutcome] = field(default_factory=list)
    executed: list[str] = field(default_factory=list)

    @property
    def failed(self) -> list[StageOutcome]:
        return [o for o in self.outcomes if o.status == "failed"]

    def outcome(self, stage: str) -> StageOutcome:
        return next(o for o in self.outcomes if o.stage == stage)


def _outs_intact(record: LockRecord, workspace: Path) -> bool:
    for path, ref in record.outs.items():
        p = workspace / path
        if not p.exists() or hash_path(p).sha256 != ref.sha256:
            return False
    return True


def _remove(path: Path) -> None:
    if path.is_dir() and not path.is_symlink():
        shutil.rmtree(path)
    elif path.exists() or path.is_symlink():
        path.unlink()


def _execute(
    stage: StageSpec,
    fp: StageFingerprint,
    workspace: Path,
    store: ObjectStore,
) -> tuple[LockRecord, AimpError | None]:
    for out in stage.outs:
        target = workspace / out
        _remove(target)
        target.parent.mkdir(parents=True, exist_ok=True)
    logdir = store.root / "tmp"
    logdir.mkdir(parents=True, exist_ok=True)
    out_log = logdir / f"{stage.name}.{os.getpid()}.stdout"
    err_log = logdir / f"{stage.name}.{os.getpid()}.stderr"
    env = dict(os.environ, AIMP_STAGE=stage.name)
    started = _now()
    with open(out_log, "wb") as so, open(err_log, "wb") as se:
        proc = subprocess.run(stage.command, shell=True, cwd=workspace, env=env, stdout=so, stderr=se)
    ended = _now()
    stdout_ref = store.put_file(out_log)
    stderr_ref = store.put_file(err_log)
    out_log.unlink(missing_ok=True)
    err_log.unlink(missing_ok=True)

    record = LockRecord(
        stage=stage.name,
        status="fresh",
        fingerprint=fp.digest,
        command=stage.command,
        deps=fp.deps,
        params=fp.params,
        tool=stage.tool,
        exit_code=proc.returncode,
        started_at=started,
        ended_at=ended,
        stdout=stdout_ref,
        stderr=stderr_ref,
    )
    if proc.returncode != 0:
        record.status = "failed"
        return record, ExecutionFailed(stage.name, proc.returncode)
    for out in stage.outs:
        p = workspace / out
        if not p.exists():
            record.status = "failed"
            record.outs = {}
            return record, MissingOut(stage.name, out)
        record.outs[out] = hash_path(p, store)
    return record, None


def run_pipeline(
    spec: PipelineSpec,
    workspace: str | os.PathLike,
    store: ObjectStore | None = None,
    force: bool = False,
    only_stage: str | None = None,
    jobs: int = 1,
    raise_on_failure: bool = True,
    on_outcome=None,
) -> RunReport:
    """Run stale stages in topological order and update the lock file.

    A stage is skipped as ``cached`` when its fingerprint matches the lock
    record and every recorded out still hashes to its recorded value.
    A failing stage prevents its descendants from running; unrelated
    stages still run. The lock file is written once, after the run.

    ``on_outcome`` is called with each StageOutcome as it settles.
    """
    ws = Path(workspace)
    store = store or ObjectStore(ws / STORE_DIR)
    dag = build_dag(spec)
    params = read_params(spec, ws)
    lock_path = ws / LOCK_NAME
    lock = LockFile.read(lock_path)
    report = RunReport(lock)

    if only_stage is not None:
        if only_stage not in spec.stage_names:
            raise ConfigError(f"no stage named {only_stage!r}")
        selected = [only_stage]
    else:
        selected = list(dag.order)
    position = {n: i for i, n in enumerate(dag.order)}
    preds = {n: [p for p in dag.predecessors(n) if p in selected] for n in selected}

    settled: dict[str, str] = {}
    running: dict[Future, tuple[str, float]] = {}
    fatal: AimpError | None = None

    def settle(outcome: StageOutcome) -> None:
        settled[outcome.stage] = outcome.status
        report.outcomes.append(outcome)
        if on_outcome:
            on_outcome(outcome)

    def attempt(name: str):
        stage = spec.stage(name)
        fp = fingerprint_stage(stage, params, ws, store)
        rec = lock.get(name)
        if (
            not force
            and rec is not None
            and rec.succeeded
            and rec.fingerprint == fp.digest
            and _outs_intact(rec, ws)
        ):
            for path, ref in rec.outs.items():
                if not store.has(ref.sha256):
                    hash_path(ws / path, store)
            return "cached", rec, None
        record, err = _execute(stage, fp, ws, store)
        return ("failed" if err else "fresh"), record, err

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        while len(settled) < len(selected):
            progressed = False
            for name in sorted((n for n in selected if n not in settled), key=position.get):
                if any(f_name == name for f_name, _ in running.values()):
                    continue
                states = [settled.get(p) for p in preds[name]]
                if any(s in ("failed", "skipped") for s in states):
                    settle(StageOutcome(name, "skipped"))
                    progressed = True
                    continue
                if fatal is None and all(s in ("fresh", "cached") for s in states) and len(running) < max(1, jobs):
                    running[pool.submit(attempt, name)] = (name, time.monotonic())
                    progressed = True
            if not running:
                if fatal is not None:
                    for n in selected:
                        if n not in settled:
                            settle(StageOutcome(n, "skipped"))
                    break
                if not progressed:
                    break
                continue
            done, _ = wait(list(running), return_when=FIRST_COMPLETED)
            for fut in sorted(done, key=lambda f: position[running[f][0]]):
                name, t0 = running.pop(fut)
                try:
                    status, record, err = fut.result()
                except AimpError as exc:
                    # configuration problems (missing dep/param) stop scheduling
                    fatal = fatal or exc
                    settle(StageOutcome(name, "failed", time.monotonic() - t0, exc))
                    continue
                if status == "cached":
                    record.status = "cached"
                else:
                    report.executed.append(name)
                lock.records[name] = record
                settle(StageOutcome(name, status, time.monotonic() - t0, err))

    lock.write(lock_path)
    if fatal is not None:
        fatal.report = report  # type: ignore[attr-defined]
        raise fatal
    if raise_on_failure:
        for o in report.outcomes:
            if o.status == "failed" and o.error is not None:
                o.error.report = report  # type: ignore[attr-defined]
                raise o.error
    return report


# -- status -------------------------------------------------------------------

REASONS = (
    "never-run",
    "failed",
    "command-changed",
    "param-changed",
    "dep-changed",
    "out-missing",
    "out-changed",
    "upstream-stale",
    "up-to-date",
)


@dataclass(frozen=True)
class StageStatus:
    stage: str
    reason: str
    detail: str = ""

    @property
    def stale(self) -> bool:
        return self.reason != "up-to-date"

    def to_json(self) -> dict:
        return {"stage": self.stage, "reason": self.reason, "detail": self.detail}


def _stage_reason(stage: StageSpec, rec: LockRecord | None, params: dict, ws: Path) -> tuple[str, str]:
    if rec is None:
        return "never-run", ""
    if not rec.succeeded:
        return "failed", f"exit code {rec.exit_code}"
    if rec.command != stage.command or rec.tool != stage.tool or sorted(rec.outs) != sorted(stage.outs):
        return "command-changed", ""
    try:
        snap = resolve_params(stage.params, params, stage.name)
    except MissingParam as exc:
        return "param-changed", f"{exc.key} missing"
    if snap != rec.params:
        changed = sorted(k for k in set(snap) | set(rec.params) if snap.get(k) != rec.params.get(k))
        return "param-changed", ", ".join(changed)
    if sorted(rec.deps) != sorted(stage.deps):
        return "dep-changed", "dependency list changed"
    deps = {}
    for d in stage.deps:
        p = ws / d
        if not p.exists():
            return "dep-changed", f"{d} missing"
        deps[d] = hash_path(p)
        if deps[d].sha256 != rec.deps[d].sha256:
            return "dep-changed", d
    for o, ref in sorted(rec.outs.items()):
        if not (ws / o).exists():
            return "out-missing", o
    for o, ref in sorted(rec.outs.items()):
        if hash_path(ws / o).sha256 != ref.sha256:
            return "out-changed", o
    if canonical_hash(fingerprint_payload(stage, deps, snap)) != rec.fingerprint:
        return "command-changed", "fingerprint differs"
    return "up-to-date", ""


def status(spec: PipelineSpec, lock: LockFile, workspace: str | os.PathLike) -> list[StageStatus]:
    """Why each stage would (or would not) run. Pure: hashes, never writes.

    Descendants of a stale stage report ``upstream-stale``; whether they
    actually rerun depends on whether the upstream outputs change.
    """
    ws = Path(workspace)
    dag = build_dag(spec)
    params = read_params(spec, ws)
    result: dict[str, StageStatus] = {}
    for name in dag.order:
        reason, detail = _stage_reason(spec.stage(name), lock.get(name), params, ws)
        if reason == "up-to-date":
            stale_up = [p for p in dag.predecessors(name) if result[p].stale]
            if stale_up:
                reason, detail = "upstream-stale", ", ".join(stale_up)
        result[name] = StageStatus(name, reason, detail)
    return [result[n] for n in dag.order]


def load_workspace(workspace: str | os.PathLike, pipeline_file: str = "aimp-pipeline.yaml"):
    """(spec, lock) for a workspace directory."""
    from .spec import parse_pipeline

    ws = Path(workspace)
    p = ws / pipeline_file
    if not p.exists():
        raise ConfigError(f"{p} not found (run `aimp init` first)")
    spec = parse_pipeline(p.read_text(encoding="utf-8"))
    return spec, LockFile.read(ws / LOCK_NAME)


def plan(spec: PipelineSpec) -> Dag:
    return build_dag(spec)
