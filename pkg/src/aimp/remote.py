"""Object sync with a remote store over a minimal HTTP API.

    HEAD /objects/<sha256>   200 present, 404 absent
    GET  /objects/<sha256>   object bytes
    PUT  /objects/<sha256>   upload; the server re-hashes and answers 4xx
                             (400/409/422) when the body does not match

Every request carries ``Authorization: Bearer <token>``; 401/403 map to
Unauthorized. Downloads are hashed while streaming into the store and only
admitted when the sha256 matches the requested address.
"""

from __future__ import annotations

import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import requests

from .cas import ObjectStore, hash_stream
from .errors import AimpError, ConfigError, DigestMismatch, HttpStatus, NetworkError, Unauthorized

log = logging.getLogger(__name__)

TIMEOUT = 30
_MANIFEST_HEAD = b'{"entries":['


@dataclass
class TransferReport:
    transferred: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, AimpError] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failed

    def first_error(self) -> AimpError | None:
        if not self.failed:
            return None
        # auth problems explain everything else, report them first
        for err in self.failed.values():
            if isinstance(err, Unauthorized):
                return err
        return next(iter(self.failed.values()))


class _Client:
    def __init__(self, base_url: str, token: str):
        if not token:
            raise ConfigError("remote token is empty")
        if not base_url.startswith(("http://", "https://")):
            raise ConfigError(f"remote URL must be http(s): {base_url}")
        self.base = base_url.rstrip("/")
        self.headers = {"Authorization": f"Bearer {token}"}
        self._local = threading.local()

    @property
    def session(self) -> requests.Session:
        s = getattr(self._local, "session", None)
        if s is None:
            s = self._local.session = requests.Session()
            s.headers.update(self.headers)
        return s

    def url(self, sha256: str) -> str:
        return f"{self.base}/objects/{sha256}"

    def request(self, method: str, sha256: str, **kw) -> requests.Response:
        url = self.url(sha256)
        try:
            resp = self.session.request(method, url, timeout=TIMEOUT, **kw)
        except requests.RequestException as exc:
            raise NetworkError(f"{method} {url}: {exc}") from exc
        if resp.status_code in (401, 403):
            raise Unauthorized(resp.status_code, url)
        return resp


def push(
    store: ObjectStore,
    remote_url: str,
    token: str,
    digests: Iterable[str] | None = None,
    jobs: int = 4,
) -> TransferReport:
    """Upload objects the remote does not have yet (all local objects by
    default). Corrupt local objects are never uploaded."""
    client = _Client(remote_url, token)
    todo = sorted(set(digests if digests is not None else store.iter_digests()))
    report = TransferReport()
    lock = threading.Lock()

    def one(sha: str) -> None:
        try:
            if not store.verify_object(sha):
                raise DigestMismatch(sha, "local object missing or corrupt")
            head = client.request("HEAD", sha)
            if head.status_code == 200:
                with lock:
                    report.skipped.append(sha)
                return
            if head.status_code != 404:
                raise HttpStatus(head.status_code, client.url(sha))
            with store.open(sha) as fh:
                resp = client.request(
                    "PUT", sha, data=fh,
                    headers={"Content-Type": "application/octet-stream",
                             "Content-Length": str(os.fstat(fh.fileno()).st_size)},
                )
            if resp.status_code in (400, 409, 422):
                raise DigestMismatch(sha, f"rejected by remote ({resp.status_code})")
            if resp.status_code >= 300:
                raise HttpStatus(resp.status_code, client.url(sha))
            with lock:
                report.transferred.append(sha)
        except AimpError as exc:
            with lock:
                report.failed[sha] = exc

    _run(one, todo, jobs)
    report.transferred.sort()
    report.skipped.sort()
    return report


def pull(
    store: ObjectStore,
    remote_url: str,
    token: str,
    digests: Iterable[str],
    jobs: int = 4,
    expand_manifests: bool = True,
) -> TransferReport:
    """Download the named objects. Directory manifests pull their entries
    too. Objects already present locally (and intact) are skipped."""
    client = _Client(remote_url, token)
    report = TransferReport()
    lock = threading.Lock()
    seen: set[str] = set()
    pending = sorted(set(digests))

    def one(sha: str) -> list[str]:
        try:
            if store.verify_object(sha):
                with lock:
                    report.skipped.append(sha)
                return _manifest_children(store, sha) if expand_manifests else []
            _download(client, store, sha)
            with lock:
                report.transferred.append(sha)
            return _manifest_children(store, sha) if expand_manifests else []
        except AimpError as exc:
            with lock:
                report.failed[sha] = exc
            return []

    while pending:
        seen.update(pending)
        children = _run(one, pending, jobs)
        pending = sorted({c for kids in children for c in kids} - seen)
    report.transferred.sort()
    report.skipped.sort()
    return report


def _download(client: _Client, store: ObjectStore, sha: str) -> None:
    resp = client.request("GET", sha, stream=True)
    with resp:
        if resp.status_code >= 300:
            raise HttpStatus(resp.status_code, client.url(sha))
        fh, tmp = store._tempfile()
        try:
            with fh:
                ref = hash_stream(_RawReader(resp), fh)
            if ref.sha256 != sha:
                raise DigestMismatch(sha, ref.sha256)
            dest = store.path_for(sha)
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(tmp, dest)
        except requests.RequestException as exc:
            raise NetworkError(f"GET {client.url(sha)}: {exc}") from exc
        finally:
            Path(tmp).unlink(missing_ok=True)


class _RawReader:
    def __init__(self, resp: requests.Response):
        self._it = resp.iter_content(chunk_size=1 << 16)
        self._buf = b""

    def read(self, n: int) -> bytes:
        while len(self._buf) < n:
            try:
                self._buf += next(self._it)
            except StopIteration:
                break
        out, self._buf = self._buf[:n], self._buf[n:]
        return out


def _manifest_children(store: ObjectStore, sha: str) -> list[str]:
    with store.open(sha) as fh:
        if fh.read(len(_MANIFEST_HEAD)) != _MANIFEST_HEAD:
            return []
    try:
        return [e["sha256"] for e in store.manifest_entries(sha)]
    except (ValueError, KeyError, TypeError):
        return []


def _run(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
