"""Content-addressable artifact store.

Objects live under ``<root>/objects/sha256/<2 hex>/<62 hex>``. Every object
carries two digests: md5 (the checksum recorded in provenance) and sha256
(the address, and the only digest used for identity).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator

from .canonical import canonical_bytes
from .errors import CorruptObject, IoError, NotFound

log = logging.getLogger(__name__)

CHUNK = 1 << 20
DIR_MEDIA_TYPE = "application/vnd.aimp.dir-manifest+json"

_HEX = set("0123456789abcdef")


@dataclass(frozen=True)
class Checksum:
    algorithm: str
    digest: str

    def __post_init__(self):
        want = {"md5": 32, "sha256": 64}.get(self.algorithm)
        if want is None:
            raise ValueError(f"unsupported checksum algorithm {self.algorithm!r}")
        if len(self.digest) != want or not set(self.digest) <= _HEX:
            raise ValueError(f"bad {self.algorithm} digest {self.digest!r}")

    def __str__(self) -> str:
        return f"{self.algorithm}:{self.digest}"


@dataclass(frozen=True)
class ObjectRef:
    md5: str
    sha256: str
    size: int
    media_type: str | None = None

    def __post_init__(self):
        Checksum("md5", self.md5)
        Checksum("sha256", self.sha256)
        if self.size < 0:
            raise ValueError("negative size")

    @property
    def checksums(self) -> tuple[Checksum, Checksum]:
        return Checksum("md5", self.md5), Checksum("sha256", self.sha256)

    @property
    def is_directory(self) -> bool:
        return self.media_type == DIR_MEDIA_TYPE

    def to_json(self) -> dict:
        out = {"md5": self.md5, "sha256": self.sha256, "size": self.size}
        if self.media_type is not None:
            out["mediaType"] = self.media_type
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ObjectRef":
        return cls(data["md5"], data["sha256"], int(data["size"]), data.get("mediaType"))


class _Hasher:
    def __init__(self):
        self.md5 = hashlib.md5()
        self.sha256 = hashlib.sha256()
        self.size = 0

    def update(self, chunk: bytes) -> None:
        self.md5.update(chunk)
        self.sha256.update(chunk)
        self.size += len(chunk)

    def ref(self, media_type: str | None = None) -> ObjectRef:
        return ObjectRef(self.md5.hexdigest(), self.sha256.hexdigest(), self.size, media_type)


def hash_bytes(data: bytes, media_type: str | None = None) -> ObjectRef:
    h = _Hasher()
    h.update(bytes(data))
    return h.ref(media_type)


def hash_stream(fh: BinaryIO, sink: BinaryIO | None = None) -> ObjectRef:
    h = _Hasher()
    while True:
        chunk = fh.read(CHUNK)
        if not chunk:
            break
        h.update(chunk)
        if sink is not None:
            sink.write(chunk)
    return h.ref()


def hash_file(path: str | os.PathLike) -> ObjectRef:
    """Hash a regular file in fixed-size chunks (memory use independent of
    file size)."""
    p = Path(path)
    if not p.is_file():
        raise IoError(p, "not a regular file")
    try:
        with open(p, "rb") as fh:
            return hash_stream(fh)
    except OSError as exc:
        raise IoError(p, exc.strerror or str(exc)) from exc


def _walk_files(root: Path) -> list[Path]:
    files = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in filenames:
            files.append(Path(dirpath) / name)
    return files


def directory_manifest(path: str | os.PathLike, store: "ObjectStore | None" = None) -> bytes:
    """Canonical manifest of a directory tree: sorted (relative path, sha256,
    size) entries. Files are also put into ``store`` when given."""
    root = Path(path)
    entries = []
    for f in _walk_files(root):
        ref = store.put_file(f) if store is not None else hash_file(f)
        entries.append({"path": f.relative_to(root).as_posix(), "sha256": ref.sha256, "size": ref.size})
    entries.sort(key=lambda e: e["path"])
    return canonical_bytes({"type": "directory", "entries": entries})


def hash_path(path: str | os.PathLike, store: "ObjectStore | None" = None) -> ObjectRef:
    """ObjectRef of a file, or of a directory's manifest. With ``store`` the
    content (and manifest) is stored as well."""
    p = Path(path)
    if p.is_dir():
        manifest = directory_manifest(p, store)
        if store is not None:
            return store.put_bytes(manifest, DIR_MEDIA_TYPE)
        return hash_bytes(manifest, DIR_MEDIA_TYPE)
    if store is not None:
        return store.put_file(p)
    return hash_file(p)


class ObjectStore:
    """Local object store rooted at ``root`` (usually ``<workspace>/.aimp``).

    Safe for concurrent writers, threads or processes: objects are written
    to a temp file inside the store and renamed into place, so readers only
    ever see complete objects.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.objects = self.root / "objects" / "sha256"

    def path_for(self, sha256: str) -> Path:
        Checksum("sha256", sha256)
        return self.objects / sha256[:2] / sha256[2:]

    def has(self, sha256: str) -> bool:
        return self.path_for(sha256).is_file()

    def _admit(self, tmp: Path, ref: ObjectRef) -> ObjectRef:
        dest = self.path_for(ref.sha256)
        if dest.exists():
            tmp.unlink(missing_ok=True)
            return ref
        os.replace(tmp, dest)
        return ref

    def _tempfile(self, sha_hint: str | None = None):
        d = self.objects / sha_hint[:2] if sha_hint else self.root / "tmp"
        d.mkdir(parents=True, exist_ok=True)
        fd, name = tempfile.mkstemp(dir=d, prefix=".incoming-")
        return os.fdopen(fd, "wb"), Path(name)

    def put_bytes(self, data: bytes, media_type: str | None = None) -> ObjectRef:
        ref = hash_bytes(data, media_type)
        if self.has(ref.sha256):
            return ref
        try:
            fh, tmp = self._tempfile(ref.sha256)
            with fh:
                fh.write(data)
            return self._admit(tmp, ref)
        except OSError as exc:
            raise IoError(self.root, str(exc)) from exc

    def put_file(self, path: str | os.PathLike, media_type: str | None = None) -> ObjectRef:
        """Copy a file into the store, hashing while copying."""
        src = Path(path)
        if not src.is_file():
            raise IoError(src, "not a regular file")
        try:
            fh, tmp = self._tempfile()
            with fh, open(src, "rb") as inp:
                ref = hash_stream(inp, fh)
            if media_type:
                ref = ObjectRef(ref.md5, ref.sha256, ref.size, media_type)
            self.path_for(ref.sha256).parent.mkdir(parents=True, exist_ok=True)
            return self._admit(tmp, ref)
        except OSError as exc:
            raise IoError(src, str(exc)) from exc

    def put(self, data: bytes | str | os.PathLike) -> ObjectRef:
        """Store bytes, or the file at a path. Idempotent."""
        if isinstance(data, (bytes, bytearray, memoryview)):
            return self.put_bytes(bytes(data))
        return self.put_file(data)

    def open(self, sha256: str) -> BinaryIO:
        p = self.path_for(sha256)
        try:
            return open(p, "rb")
        except FileNotFoundError:
            raise NotFound(sha256) from None

    def get(self, sha256: str) -> bytes:
        with self.open(sha256) as fh:
            data = fh.read()
        actual = hashlib.sha256(data).hexdigest()
        if actual != sha256:
            raise CorruptObject(sha256, actual)
        return data

    def ref(self, sha256: str) -> ObjectRef:
        """Recompute the full ObjectRef of a stored object."""
        with self.open(sha256) as fh:
            ref = hash_stream(fh)
        if ref.sha256 != sha256:
            raise CorruptObject(sha256, ref.sha256)
        return ref

    def iter_digests(self) -> Iterator[str]:
        if not self.objects.is_dir():
            return
        for sub in sorted(self.objects.iterdir()):
            if not sub.is_dir() or len(sub.name) != 2:
                continue
            for f in sorted(sub.iterdir()):
                if f.name.startswith(".incoming-"):
                    continue
                yield sub.name + f.name

    def verify_store(self) -> list[CorruptObject]:
        """Re-hash every object; returns one finding per corrupt object."""
        findings = []
        for digest in self.iter_digests():
            try:
                with open(self.path_for(digest), "rb") as fh:
                    actual = hash_stream(fh).sha256
            except OSError as exc:
                raise IoError(self.path_for(digest), str(exc)) from exc
            if actual != digest:
                findings.append(CorruptObject(digest, actual))
        return findings

    def verify_object(self, sha256: str) -> bool:
        try:
            self.ref(sha256)
        except (CorruptObject, NotFound):
            return False
        return True

    def manifest_entries(self, ref_or_sha: ObjectRef | str) -> list[dict]:
        sha = ref_or_sha.sha256 if isinstance(ref_or_sha, ObjectRef) else ref_or_sha
        return json.loads(self.get(sha))["entries"]
