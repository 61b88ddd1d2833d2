"""Command-line interface.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 stage execution failure, 4 network error, 5 internal or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .canonical import canonical_bytes
from .errors import AimpError, ConfigError, ExecutionError, IoError, LoadError

log = logging.getLogger("aimp")

PIPELINE_NAME = "aimp-pipeline.yaml"
DATASETS_NAME = "datasets.json"

PIPELINE_TEMPLATE = """\
# Pipeline definition. Each stage runs `cmd` in the workspace directory.
# Edges are derived: a stage depends on every stage producing one of its deps.
#
# stages:
#   Preprocess:
#     cmd: python3 scripts/preprocess.py
#     deps: [data/raw, scripts/preprocess.py]
#     outs: [data/preprocessed]
#     params: [image_size]
#     tool: {{name: SimpleITK, version: "2.3.1"}}
#
# model:            # what `aimp passport build` packages
#   stage: Train
#   artifact: models/model.bin
#   metrics: metrics.json
name: {name}
params: params.yaml
stages: {{}}
"""

PARAMS_TEMPLATE = """\
# Parameters referenced by stages (`params: [key, section.key]`).
# Changing a referenced value re-runs the stage and everything downstream.
"""


def _out(text: str = "") -> None:
    sys.stdout.write(text + "\n")


def _err(text: str) -> None:
    sys.stderr.write(text + "\n")


def _emit_json(obj) -> None:
    sys.stdout.buffer.write(canonical_bytes(obj) + b"\n")
    sys.stdout.flush()


def _workspace(args) -> Path:
    return Path(args.workspace).resolve()


def _write(path: Path, data: bytes) -> None:
    try:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from exc


def _read_text(path: Path, what: str) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{what} {path} not found") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{what} {path}: {exc}") from exc


def _token(var: str) -> str:
    value = os.environ.get(var, "")
    if not value:
        raise ConfigError(f"environment variable {var} is unset or empty")
    return value


# -- commands ------------------------------------------------------------------


def cmd_init(args) -> int:
    from .passport import MANUAL_NAME, scaffold_manual_template
    from .pipeline.runner import STORE_DIR

    ws = Path(args.dir).resolve()
    if not ws.is_dir():
        raise IoError(ws, "not a directory")
    name = "".join(c if c.isalnum() or c in "._-" else "-" for c in ws.name) or "workspace"
    files = {
        PIPELINE_NAME: PIPELINE_TEMPLATE.format(name=name),
        "params.yaml": PARAMS_TEMPLATE,
        MANUAL_NAME: scaffold_manual_template(),
    }
    try:
        store = ws / STORE_DIR / "objects"
        if not store.is_dir():
            store.mkdir(parents=True)
            _err(f"created {store.relative_to(ws)}/")
        for fname, text in files.items():
            p = ws / fname
            if p.exists():
                _err(f"kept {fname} (already exists)")
                continue
            with open(p, "x", encoding="utf-8") as fh:
                fh.write(text)
            _err(f"created {fname}")
    except OSError as exc:
        raise IoError(exc.filename or ws, exc.strerror or str(exc)) from exc
    return 0


def cmd_run(args) -> int:
    from .pipeline.runner import load_workspace, run_pipeline

    ws = _workspace(args)
    spec, _ = load_workspace(ws)

    def show(o):
        line = f"{o.stage:<20} {o.status:<8} {o.duration:6.2f}s"
        _out(line)
        if o.error is not None:
            _err(f"  {o.error}")

    report = run_pipeline(
        spec, ws, force=args.force, only_stage=args.stage, jobs=args.jobs,
        raise_on_failure=False, on_outcome=show,
    )
    if report.failed:
        _err(f"{len(report.failed)} stage(s) failed")
        return ExecutionError.exit_code
    return 0


def cmd_status(args) -> int:
    from .pipeline.runner import load_workspace, status

    ws = _workspace(args)
    spec, lock = load_workspace(ws)
    rows = status(spec, lock, ws)
    if args.json:
        _emit_json({"stages": [r.to_json() for r in rows]})
    else:
        for r in rows:
            _out(f"{r.stage:<20} {r.reason}" + (f" ({r.detail})" if r.detail else ""))
    return 0


def cmd_harvest(args) -> int:
    from .dcat import harvest, validate_descriptor

    descriptors = harvest(args.url, retries=args.retries)
    for d in descriptors:
        for problem in validate_descriptor(d):
            _err(f"warning: {d.id}: {problem}")
        for w in d.warnings:
            log.info("%s: %s", d.id, w)
    out = Path(args.out) if args.out else _workspace(args) / DATASETS_NAME
    data = canonical_bytes({"datasets": sorted((d.to_json() for d in descriptors), key=lambda d: d["id"])})
    _write(out, data)
    _err(f"harvested {len(descriptors)} dataset(s) into {out}")
    for d in descriptors:
        _out(f"{d.id}  {d.title}")
    return 0


def load_descriptors(path: Path):
    from .dcat import DatasetDescriptor

    try:
        doc = json.loads(path.read_bytes())
        items = doc["datasets"] if isinstance(doc, dict) else doc
        return [DatasetDescriptor.from_json(d) for d in items]
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise LoadError(f"{path}: not a descriptor file ({exc})") from exc


def _passport_stem(passport) -> str:
    return Path(passport.training.model_path).stem or "model"


def cmd_passport_build(args) -> int:
    from . import passport as pp

    ws = _workspace(args)
    manual_path = Path(args.manual) if args.manual else ws / pp.MANUAL_NAME
    manual = pp.parse_manual(_read_text(manual_path, "manual metadata file"))
    missing = pp.validate_manual(manual)
    if missing:
        _err("missing required manual metadata: " + ", ".join(missing))
        raise pp.ManualIncomplete(missing)
    ds_path = Path(args.datasets) if args.datasets else ws / DATASETS_NAME
    descriptors = load_descriptors(ds_path) if (args.datasets or ds_path.exists()) else []
    passport = pp.build_passport(ws, manual, descriptors)
    out = Path(args.out) if args.out else ws / f"{_passport_stem(passport)}.passport.json"
    _write(out, pp.serialize(passport, "canonical-json"))
    ttl = out.with_name(out.name[: -len(".json")] + ".ttl" if out.name.endswith(".json") else out.name + ".ttl")
    _write(ttl, pp.serialize(passport, "turtle"))
    _err(f"wrote {out} and {ttl}")
    _out(passport.identity)
    return 0


def cmd_passport_verify(args) -> int:
    from . import passport as pp

    path = Path(args.file)
    passport = pp.load_file(path)
    if args.no_workspace:
        ws = None
    elif args.workspace:
        ws = Path(args.workspace)
    else:
        ws = path.resolve().parent if (path.resolve().parent / "aimp.lock").exists() else None
    report = pp.verify(passport, ws, args.model)
    if args.json:
        _emit_json(report.to_json())
        for c in report.checks:
            _err(c.line())
    else:
        for c in report.checks:
            _out(c.line())
    return 0 if report.ok else 1


def cmd_report(args) -> int:
    from . import passport as pp
    from .report import RenderOptions, render

    path = Path(args.file)
    passport = pp.load_file(path)
    opts = RenderOptions(args.format, False if args.no_graph else None)
    text = render(passport, opts)
    ext = ".html" if args.format == "html" else ".md"
    if args.out:
        out = Path(args.out)
    else:
        base = path.name[: -len(".json")] if path.name.endswith(".json") else path.name
        out = path.with_name(base + ext)
    _write(out, text.encode("utf-8"))
    _err(f"wrote {out}")
    return 0


def _store(args):
    from .cas import ObjectStore
    from .pipeline.runner import STORE_DIR

    return ObjectStore(_workspace(args) / STORE_DIR)


def _print_transfer(report, verb: str) -> int:
    for sha, err in sorted(report.failed.items()):
        _err(f"{sha[:12]}: {err}")
    _out(f"{verb} {len(report.transferred)}, already present {len(report.skipped)}, failed {len(report.failed)}")
    err = report.first_error()
    if err is not None:
        raise err
    return 0


def cmd_push(args) -> int:
    from .remote import push

    token = _token(args.token_env)
    return _print_transfer(push(_store(args), args.remote, token, jobs=args.jobs), "pushed")


def _lock_digests(ws: Path) -> list[str]:
    from .pipeline.lock import LOCK_NAME, LockFile

    lock = LockFile.read(ws / LOCK_NAME)
    out = set()
    for rec in lock.records.values():
        for ref in (*rec.deps.values(), *rec.outs.values(), rec.stdout, rec.stderr):
            if ref is not None:
                out.add(ref.sha256)
    return sorted(out)


def cmd_pull(args) -> int:
    from .remote import pull

    token = _token(args.token_env)
    digests = args.digests or _lock_digests(_workspace(args))
    if not digests:
        raise ConfigError("nothing to pull: give digests or run in a workspace with a lock file")
    return _print_transfer(pull(_store(args), args.remote, token, digests, jobs=args.jobs), "pulled")


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False, parents=[verbose])
    common.add_argument("-C", "--workspace", default=".", metavar="DIR", help="workspace directory (default: .)")

    p = argparse.ArgumentParser(prog="aimp", description="Checksummed pipelines and model passports.")
    p.add_argument("--version", action="version", version=f"aimp {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("init", parents=[common], help="create workspace scaffolding")
    s.add_argument("dir", nargs="?", default=".")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("run", parents=[common], help="run stale pipeline stages")
    s.add_argument("--force", action="store_true", help="ignore the cache")
    s.add_argument("--stage", metavar="NAME", help="run only this stage")
    s.add_argument("--jobs", type=int, default=1, metavar="N", help="run up to N independent stages at once")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("status", parents=[common], help="explain which stages are stale")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_status)

    s = sub.add_parser("harvest", parents=[common], help="harvest dataset descriptors from a FAIR Data Point")
    s.add_argument("url")
    s.add_argument("--out", metavar="FILE", help=f"descriptor file (default: {DATASETS_NAME})")
    s.add_argument("--retries", type=int, default=0, metavar="N")
    s.set_defaults(func=cmd_harvest)

    pp = sub.add_parser("passport", help="build or verify model passports")
    psub = pp.add_subparsers(dest="passport_command", required=True, metavar="ACTION")
    s = psub.add_parser("build", parents=[common], help="assemble the passport of the workspace's model")
    s.add_argument("--manual", metavar="FILE", help="manual metadata (default: aimp-manual.yaml)")
    s.add_argument("--datasets", metavar="FILE", help=f"harvested descriptors (default: {DATASETS_NAME} if present)")
    s.add_argument("--out", metavar="FILE")
    s.set_defaults(func=cmd_passport_build)
    s = psub.add_parser("verify", parents=[verbose], help="re-verify a passport")
    s.add_argument("file")
    s.add_argument("--model", metavar="PATH", help="model file to check against the passport")
    s.add_argument("-C", "--workspace", metavar="DIR",
                   help="check lock-recorded files here (default: the passport's directory if it holds aimp.lock)")
    s.add_argument("--no-workspace", action="store_true", help="skip the workspace check")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_passport_verify)

    s = sub.add_parser("report", parents=[verbose], help="render a passport as HTML or Markdown")
    s.add_argument("file")
    s.add_argument("--format", choices=("html", "markdown"), default="html")
    s.add_argument("--out", metavar="FILE")
    s.add_argument("--no-graph", action="store_true", help="omit the pipeline SVG")
    s.set_defaults(func=cmd_report)

    for name, func, helptext in (("push", cmd_push, "upload store objects"), ("pull", cmd_pull, "download objects")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--remote", required=True, metavar="URL")
        s.add_argument("--token-env", required=True, metavar="VAR", help="environment variable holding the token")
        s.add_argument("--jobs", type=int, default=4, metavar="N")
        if name == "pull":
            s.add_argument("digests", nargs="*", help="sha256 digests (default: everything in aimp.lock)")
        s.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except AimpError as exc:
        _err(f"error: {exc}")
        return exc.exit_code
    except KeyboardInterrupt:
        _err("interrupted")
        return 130
    except Exception as exc:  # anything unexpected is an internal error
        log.debug("internal error", exc_info=True)
        _err(f"internal error: {type(exc).__name__}: {exc}")
        return 5


if __name__ == "__main__":
    sys.exit(main())
