"""Shared test helpers: demo workspace copies, CLI runner, mock HTTP servers."""

from __future__ import annotations

import os
import shutil
import subprocess
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
DEMO = ROOT / "demo"
FIXTURES = Path(__file__).resolve().parent / "fixtures"

DEMO_STAGES = ["DICOM2NIFTI", "Preprocess", "Prepare", "Train"]


def copy_demo(dest: Path) -> Path:
    shutil.copytree(
        DEMO, dest,
        ignore=shutil.ignore_patterns(".aimp", "aimp.lock", "nifti", "preprocessed", "prepared",
                                      "models", "metrics.json", "*.passport.*", "datasets.json"),
    )
    return dest


def invocations(ws: Path) -> list[str]:
    p = Path(os.environ["AIMP_DEMO_COUNTER"])
    if not p.exists():
        return []
    lines = p.read_text().split()
    p.unlink()
    return lines


def aimp(*args, cwd=None, env=None) -> subprocess.CompletedProcess:
    """Run the CLI in a subprocess (exit codes and stdout exactly as a user sees them)."""
    full_env = dict(os.environ)
    full_env["PYTHONPATH"] = str(ROOT / "src") + os.pathsep + full_env.get("PYTHONPATH", "")
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "aimp", *map(str, args)],
        cwd=cwd, env=full_env, capture_output=True, text=True, timeout=120,
    )


# -- tiny HTTP servers ------------------------------------------------------------


class _Server:
    def __init__(self, handler_cls):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler_cls)
        self.httpd.owner = self
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


class FdpHandler(BaseHTTPRequestHandler):
    """Serves ``owner.routes``: path -> (status, content type, body) or
    (301/302, location)."""

    def log_message(self, *a):
        pass

    def do_GET(self):
        owner = self.server.owner
        owner.requests.append((self.path, self.headers.get("Accept")))
        route = owner.routes.get(self.path)
        if route is None:
            self.send_response(404)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        if route[0] in (301, 302, 307):
            self.send_response(route[0])
            self.send_header("Location", route[1])
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        status, ctype, body = route
        data = body.encode() if isinstance(body, str) else body
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class MockFdp(_Server):
    def __init__(self):
        self.routes: dict = {}
        self.requests: list = []
        super().__init__(FdpHandler)


class RemoteHandler(BaseHTTPRequestHandler):
    def log_message(self, *a):
        pass

    def _auth(self) -> bool:
        owner = self.server.owner
        if self.headers.get("Authorization") != f"Bearer {owner.token}":
            self.send_response(401)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return False
        return True

    def _digest(self) -> str | None:
        parts = self.path.strip("/").split("/")
        return parts[1] if len(parts) == 2 and parts[0] == "objects" else None

    def _empty(self, code):
        self.send_response(code)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_HEAD(self):
        if not self._auth():
            return
        self._empty(200 if self._digest() in self.server.owner.objects else 404)

    def do_GET(self):
        if not self._auth():
            return
        owner = self.server.owner
        data = owner.objects.get(self._digest())
        if data is None:
            return self._empty(404)
        if owner.tamper:
            data = bytes([data[0] ^ 1]) + data[1:] if data else b"x"
        self.send_response(200)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_PUT(self):
        if not self._auth():
            return
        import hashlib

        owner = self.server.owner
        n = int(self.headers.get("Content-Length", "0"))
        data = self.rfile.read(n)
        digest = self._digest()
        if hashlib.sha256(data).hexdigest() != digest:
            return self._empty(422)
        owner.objects[digest] = data
        owner.puts.append(digest)
        self._empty(201)


class MockRemote(_Server):
    def __init__(self, token="s3cret"):
        self.token = token
        self.objects: dict[str, bytes] = {}
        self.puts: list[str] = []
        self.tamper = False
        super().__init__(RemoteHandler)


FDP_CATALOG = """\
@prefix dcat: <http://www.w3.org/ns/dcat#> .
@prefix dct: <http://purl.org/dc/terms/> .

<{base}/catalog/prostate> a dcat:Catalog ;
    dct:title "Prostate imaging catalog"@en ;
    dcat:dataset <{base}/dataset/procancer-i> , <{base}/dataset/pilot> .
"""

FDP_DATASET = """\
@prefix dcat: <http://www.w3.org/ns/dcat#> .
@prefix dct: <http://purl.org/dc/terms/> .
@prefix foaf: <http://xmlns.com/foaf/0.1/> .
@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .
@prefix spdx: <http://spdx.org/rdf/terms#> .
@prefix healthdcatap: <http://healthdataportal.eu/ns/health#> .
@prefix aimpx: <https://w3id.org/aimp/health-ext#> .

<{base}/dataset/procancer-i> a dcat:Dataset ;
    dct:title "Prostate MRI cohort"@en ;
    dct:description "Multi-centre bi-parametric prostate MRI with clinical attributes." ;
    dcat:version "2.1" ;
    dct:publisher <{base}/org/consortium> ;
    dct:license <https://creativecommons.org/licenses/by-nc/4.0/> ;
    dcat:keyword "prostate" , "MRI" ;
    aimpx:numberOfPatients 14300 ;
    aimpx:numberOfStudies "15000"^^xsd:integer ;
    aimpx:imagingModalities "MR" ;
    aimpx:vendors "Siemens" , "Philips" , "GE" ;
    healthdcatap:healthCategory "cancer imaging" ;
    dcat:distribution <{base}/distribution/procancer-i-nifti> .

<{base}/org/consortium> a foaf:Organization ;
    foaf:name "Imaging consortium" .

<{base}/distribution/procancer-i-nifti> a dcat:Distribution ;
    dcat:accessURL <{base}/download/procancer-i.tar> ;
    dcat:mediaType "application/x-tar" ;
    dcat:byteSize 123456 ;
    spdx:checksum _:c1 .

_:c1 spdx:algorithm spdx:checksumAlgorithm_md5 ;
    spdx:checksumValue "900150983cd24fb0d6963f7d28e17f72" .
"""

FDP_PILOT = """\
@prefix dcat: <http://www.w3.org/ns/dcat#> .
@prefix dct: <http://purl.org/dc/terms/> .
@prefix foaf: <http://xmlns.com/foaf/0.1/> .
@prefix aimpx: <https://w3id.org/aimp/health-ext#> .

<{base}/dataset/pilot> a dcat:Dataset ;
    dct:title "Pilot cohort" ;
    dct:publisher _:pub ;
    dct:license "CC-BY-4.0" ;
    aimpx:numberOfPatients 120 ;
    aimpx:useCase "UC1" .

_:pub a foaf:Person ;
    foaf:name "Site PI" .
"""


def serve_fdp(server: MockFdp) -> str:
    """Populate the mock FDP: one catalog linking two dataset documents."""
    base = server.url
    server.routes["/catalog/prostate"] = (200, "text/turtle", FDP_CATALOG.format(base=base))
    server.routes["/dataset/procancer-i"] = (200, "text/turtle", FDP_DATASET.format(base=base))
    server.routes["/dataset/pilot"] = (200, "text/turtle", FDP_PILOT.format(base=base))
    return base + "/catalog/prostate"


def build_demo(ws: Path, descriptors=()):
    """Run the demo pipeline in ``ws`` and assemble its passport."""
    from aimp.passport import build_passport, parse_manual
    from aimp.pipeline import load_workspace, run_pipeline

    spec, _ = load_workspace(ws)
    run_pipeline(spec, ws)
    manual = parse_manual((ws / "aimp-manual.yaml").read_text())
    return build_passport(ws, manual, descriptors)


def flip_byte(path: Path, offset: int = 0) -> None:
    data = bytearray(path.read_bytes())
    data[offset] ^= 0x01
    path.write_bytes(bytes(data))
