"""Lock file: the last accepted execution of every stage."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from ..canonical import canonical_bytes
from ..cas import ObjectRef
from ..errors import IoError, LoadError
from ..rdf import Literal
from .spec import Tool

LOCK_NAME = "aimp.lock"
FORMAT_VERSION = "1"
STATUSES = ("fresh", "cached", "failed")


@dataclass
class LockRecord:
    stage: str
    status: str
    fingerprint: str
    command: str
    deps: dict[str, ObjectRef] = field(default_factory=dict)
    outs: dict[str, ObjectRef] = field(default_factory=dict)
    params: dict[str, Literal] = field(default_factory=dict)
    tool: Tool | None = None
    exit_code: int = 0
    started_at: str = ""
    ended_at: str = ""
    stdout: ObjectRef | None = None
    stderr: ObjectRef | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"bad status {self.status!r}")

    @property
    def succeeded(self) -> bool:
        return self.status in ("fresh", "cached") and self.exit_code == 0

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "fingerprint": self.fingerprint,
            "command": self.command,
            "deps": {p: r.to_json() for p, r in sorted(self.deps.items())},
            "outs": {p: r.to_json() for p, r in sorted(self.outs.items())},
            "params": {k: v.to_json() for k, v in sorted(self.params.items())},
            "tool": self.tool.to_json() if self.tool else None,
            "exitCode": self.exit_code,
            "startedAt": self.started_at,
            "endedAt": self.ended_at,
            "stdout": self.stdout.to_json() if self.stdout else None,
            "stderr": self.stderr.to_json() if self.stderr else None,
        }

    @classmethod
    def from_json(cls, stage: str, d: dict) -> "LockRecord":
        tool = d.get("tool")
        return cls(
            stage=stage,
            status=d["status"],
            fingerprint=d["fingerprint"],
            command=d["command"],
            deps={p: ObjectRef.from_json(r) for p, r in d.get("deps", {}).items()},
            outs={p: ObjectRef.from_json(r) for p, r in d.get("outs", {}).items()},
            params={k: Literal.from_json(v) for k, v in d.get("params", {}).items()},
            tool=Tool(tool["name"], tool["version"]) if tool else None,
            exit_code=int(d.get("exitCode", 0)),
            started_at=d.get("startedAt", ""),
            ended_at=d.get("endedAt", ""),
            stdout=ObjectRef.from_json(d["stdout"]) if d.get("stdout") else None,
            stderr=ObjectRef.from_json(d["stderr"]) if d.get("stderr") else None,
        )


@dataclass
class LockFile:
    records: dict[str, LockRecord] = field(default_factory=dict)

    def get(self, stage: str) -> LockRecord | None:
        return self.records.get(stage)

    def to_json(self) -> dict:
        return {
            "formatVersion": FORMAT_VERSION,
            "stages": {n: r.to_json() for n, r in sorted(self.records.items())},
        }

    def to_bytes(self) -> bytes:
        return canonical_bytes(self.to_json())

    @classmethod
    def from_json(cls, d: dict) -> "LockFile":
        if str(d.get("formatVersion")) != FORMAT_VERSION:
            raise LoadError(f"unsupported lock format {d.get('formatVersion')!r}")
        return cls({n: LockRecord.from_json(n, r) for n, r in d.get("stages", {}).items()})

    @classmethod
    def read(cls, path: str | os.PathLike) -> "LockFile":
        p = Path(path)
        if not p.exists():
            return cls()
        try:
            return cls.from_json(json.loads(p.read_bytes()))
        except (ValueError, KeyError, TypeError) as exc:
            raise LoadError(f"{p}: unreadable lock file ({exc})") from exc

    def write(self, path: str | os.PathLike) -> None:
        """Atomic replace: temp file in the same directory, then rename."""
        p = Path(path)
        try:
            fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=".aimp.lock-")
            with os.fdopen(fd, "wb") as fh:
                fh.write(self.to_bytes())
            os.replace(tmp, p)
        except OSError as exc:
            raise IoError(p, str(exc)) from exc
