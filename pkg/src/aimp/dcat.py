"""DCAT-AP dataset descriptors and a FAIR Data Point harvester.

A descriptor is the dataset-level metadata a passport embeds: the DCAT-AP
core (title, publisher, license, distributions ...) plus an open map of
health extension fields (HealthDCAT-AP and project-specific ones such as
``numberOfPatients`` or ``imagingModalities``).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable

import requests

from .cas import Checksum
from .errors import HttpStatus, MissingMandatory, NetworkError, TurtleSyntaxError
from .rdf import AIMPX, DCAT, DCT, FOAF, HEALTHDCATAP, OWL, RDF_TYPE, SPDX, BNode, IRI, Literal
from .turtle import TurtleDoc, emit_turtle, parse_turtle

# re-exported so callers can treat this module as the Turtle entry point
__all__ = [
    "DatasetDescriptor",
    "Distribution",
    "HarvestSource",
    "TurtleDoc",
    "descriptor_from_triples",
    "descriptors_to_doc",
    "emit_turtle",
    "harvest",
    "parse_turtle",
    "validate_descriptor",
]

log = logging.getLogger(__name__)

EXTENSION_NAMESPACES = (HEALTHDCATAP, AIMPX)
RECOGNIZED_EXTENSIONS = (
    "numberOfPatients",
    "numberOfStudies",
    "imagingModalities",
    "sequenceTypes",
    "vendors",
    "clinicalProtocol",
    "useCase",
)
_COUNT_FIELDS = ("numberOfPatients", "numberOfStudies")

FDP_METADATA_CATALOG = "https://w3id.org/fdp/fdp-o#metadataCatalog"
_LINK_PREDICATES = (DCAT + "dataset", DCAT + "catalog", DCAT + "distribution", FDP_METADATA_CATALOG)

MAX_REDIRECTS = 5
TIMEOUT = 30
MAX_DOCUMENTS = 200


@dataclass(frozen=True)
class Distribution:
    access_url: str
    media_type: str = ""
    byte_size: int | None = None
    checksum: Checksum | None = None
    id: str | None = None

    def to_json(self) -> dict:
        out: dict = {"accessUrl": self.access_url, "mediaType": self.media_type}
        if self.byte_size is not None:
            out["byteSize"] = self.byte_size
        if self.checksum is not None:
            out["checksum"] = {"algorithm": self.checksum.algorithm, "digest": self.checksum.digest}
        if self.id is not None:
            out["id"] = self.id
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Distribution":
        cs = data.get("checksum")
        return cls(
            data["accessUrl"],
            data.get("mediaType", ""),
            data.get("byteSize"),
            Checksum(cs["algorithm"], cs["digest"]) if cs else None,
            data.get("id"),
        )


@dataclass(frozen=True)
class HarvestSource:
    url: str
    retrieved_at: str


@dataclass(frozen=True)
class DatasetDescriptor:
    id: str
    title: str
    publisher: str
    license: str
    description: str = ""
    version: str = ""
    publisher_kind: str = ""
    keywords: tuple[str, ...] = ()
    health_ext: dict[str, tuple[Literal, ...]] = field(default_factory=dict)
    distributions: tuple[Distribution, ...] = ()
    source: HarvestSource | None = None
    # predicates seen on the dataset but not mapped; not serialized
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def ext(self, key: str):
        """Python value of a single-valued extension field, or None."""
        values = self.health_ext.get(key)
        if not values:
            return None
        if len(values) == 1:
            return values[0].to_python()
        return [v.to_python() for v in values]

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "version": self.version,
            "publisher": {"name": self.publisher, "kind": self.publisher_kind},
            "license": self.license,
            "keywords": sorted(self.keywords),
            "healthExt": {k: [v.to_json() for v in vs] for k, vs in sorted(self.health_ext.items())},
            "distributions": sorted(
                (d.to_json() for d in self.distributions),
                key=lambda d: (d["accessUrl"], d.get("id", "")),
            ),
        }
        if self.source is not None:
            out["source"] = {"url": self.source.url, "retrievedAt": self.source.retrieved_at}
        return out

    @classmethod
    def from_json(cls, data: dict) -> "DatasetDescriptor":
        src = data.get("source")
        return cls(
            id=data["id"],
            title=data["title"],
            description=data.get("description", ""),
            version=data.get("version", ""),
            publisher=data["publisher"]["name"],
            publisher_kind=data["publisher"].get("kind", ""),
            license=data["license"],
            keywords=tuple(data.get("keywords", ())),
            health_ext={
                k: tuple(Literal.from_json(v) for v in vs) for k, vs in data.get("healthExt", {}).items()
            },
            distributions=tuple(Distribution.from_json(d) for d in data.get("distributions", ())),
            source=HarvestSource(src["url"], src["retrievedAt"]) if src else None,
        )


# -- triples -> descriptors -------------------------------------------------------


def _text(term) -> str:
    if isinstance(term, Literal):
        return term.lexical
    if isinstance(term, IRI):
        return term.value
    return str(term)


def _pick(values: list, lang_pref: str = "en") -> str:
    """Choose one value deterministically: untagged or English first."""
    if not values:
        return ""

    def key(v):
        lang = v.lang if isinstance(v, Literal) else None
        return (0 if lang in (None, lang_pref) else 1, _text(v))

    return _text(sorted(values, key=key)[0])


def _local_ext_key(iri: str) -> str | None:
    for ns in EXTENSION_NAMESPACES:
        if iri.startswith(ns) and len(iri) > len(ns):
            return iri[len(ns):]
    return None


_MAPPED = {
    RDF_TYPE,
    DCT + "title",
    DCT + "description",
    DCT + "publisher",
    DCT + "license",
    DCT + "identifier",
    DCAT + "keyword",
    DCAT + "distribution",
    DCAT + "version",
    DCT + "hasVersion",
    OWL + "versionInfo",
}


def _publisher(doc: TurtleDoc, term) -> tuple[str, str]:
    if isinstance(term, Literal):
        return term.lexical, ""
    names = doc.objects(term, FOAF + "name")
    types = [o.value for o in doc.objects(term, RDF_TYPE) if isinstance(o, IRI)]
    kind = ""
    for t in sorted(types):
        if t in (FOAF + "Organization", FOAF + "Person", FOAF + "Agent"):
            kind = t.rsplit("/", 1)[1]
            break
    name = _pick(names) if names else (term.value if isinstance(term, IRI) else "")
    return name, kind


def _checksum(doc: TurtleDoc, term) -> Checksum | None:
    algos = doc.objects(term, SPDX + "algorithm")
    values = doc.objects(term, SPDX + "checksumValue")
    if not algos or not values:
        return None
    algo = _text(algos[0]).rsplit("_", 1)[-1].lower()
    try:
        return Checksum(algo, _text(values[0]).lower())
    except ValueError:
        log.warning("ignoring unsupported checksum %s on %s", algo, term)
        return None


def _distribution(doc: TurtleDoc, term) -> Distribution | None:
    urls = doc.objects(term, DCAT + "accessURL") or doc.objects(term, DCAT + "downloadURL")
    if not urls:
        return None
    media = doc.objects(term, DCAT + "mediaType") or doc.objects(term, DCT + "format")
    size = doc.objects(term, DCAT + "byteSize")
    byte_size = None
    if size:
        try:
            byte_size = int(_text(size[0]))
        except ValueError:
            pass
    checksums = doc.objects(term, SPDX + "checksum")
    return Distribution(
        access_url=_text(sorted(urls, key=_text)[0]),
        media_type=_pick(media),
        byte_size=byte_size,
        checksum=_checksum(doc, checksums[0]) if checksums else None,
        id=term.value if isinstance(term, IRI) else None,
    )


def descriptor_from_triples(doc: TurtleDoc, sources: dict | None = None) -> list[DatasetDescriptor]:
    """One descriptor per subject typed dcat:Dataset, in subject order.

    Predicates under a recognized extension namespace land in ``health_ext``
    keyed by local name; other unmapped predicates are listed in
    ``warnings`` and otherwise ignored. Raises MissingMandatory when title,
    publisher or license is absent.
    """
    out = []
    datasets = sorted(set(doc.subjects_of_type(DCAT + "Dataset")), key=lambda s: (isinstance(s, BNode), str(s)))
    for subject in datasets:
        ds_id = subject.value if isinstance(subject, IRI) else str(subject)
        preds: dict[str, list] = {}
        for s, p, o in doc.triples:
            if s == subject:
                preds.setdefault(p.value, []).append(o)

        title = _pick(preds.get(DCT + "title", []))
        if not title:
            raise MissingMandatory(ds_id, "title")
        pub_terms = preds.get(DCT + "publisher", [])
        if not pub_terms:
            raise MissingMandatory(ds_id, "publisher")
        publisher, pub_kind = _publisher(doc, sorted(pub_terms, key=_text)[0])
        if not publisher:
            raise MissingMandatory(ds_id, "publisher")
        lic = preds.get(DCT + "license", [])
        if not lic:
            raise MissingMandatory(ds_id, "license")
        version = _pick(
            preds.get(DCAT + "version", []) or preds.get(OWL + "versionInfo", []) or preds.get(DCT + "hasVersion", [])
        )

        ext: dict[str, list[Literal]] = {}
        warnings = []
        for p, objs in preds.items():
            if p in _MAPPED:
                continue
            key = _local_ext_key(p)
            if key is None:
                warnings.append(p)
                continue
            for o in objs:
                ext.setdefault(key, []).append(o if isinstance(o, Literal) else Literal(_text(o)))
        for w in sorted(warnings):
            log.warning("dataset %s: ignoring predicate <%s>", ds_id, w)

        dists = []
        for d in sorted(preds.get(DCAT + "distribution", []), key=_text):
            dist = _distribution(doc, d)
            if dist is None:
                log.warning("dataset %s: distribution %s has no access URL, skipped", ds_id, d)
                continue
            dists.append(dist)

        src = (sources or {}).get(ds_id)
        out.append(DatasetDescriptor(
            id=ds_id,
            title=title,
            description=_pick(preds.get(DCT + "description", [])),
            version=version,
            publisher=publisher,
            publisher_kind=pub_kind,
            license=_pick(lic),
            keywords=tuple(sorted({_text(k) for k in preds.get(DCAT + "keyword", [])})),
            health_ext={k: tuple(sorted(v, key=lambda lit: (lit.lexical, lit.datatype))) for k, v in ext.items()},
            distributions=tuple(dists),
            source=src,
            warnings=tuple(sorted(warnings)),
        ))
    return out


def validate_descriptor(d: DatasetDescriptor) -> list[str]:
    problems = []
    if not d.id or ("://" not in d.id and not d.id.startswith("urn:")):
        problems.append(f"id: {d.id!r} is not an absolute IRI")
    for name in ("title", "publisher", "license"):
        if not getattr(d, name).strip():
            problems.append(f"{name}: missing")
    for key in _COUNT_FIELDS:
        for lit in d.health_ext.get(key, ()):
            try:
                n = int(lit.lexical)
            except ValueError:
                problems.append(f"{key}: {lit.lexical!r} is not an integer")
                continue
            if n < 0:
                problems.append(f"{key}: {n} is negative")
    for dist in d.distributions:
        if not dist.access_url:
            problems.append("distribution: empty accessUrl")
    return problems


def descriptors_to_doc(descriptors: Iterable[DatasetDescriptor]) -> TurtleDoc:
    """Turtle export of descriptors (publisher and checksum as blank nodes)."""
    prefixes = {"dcat": DCAT, "dct": DCT, "foaf": FOAF, "spdx": SPDX, "healthdcatap": HEALTHDCATAP, "aimpx": AIMPX}
    triples = []
    for n, d in enumerate(descriptors):
        s = IRI(d.id)
        triples.append((s, IRI(RDF_TYPE), IRI(DCAT + "Dataset")))
        triples.append((s, IRI(DCT + "title"), Literal(d.title)))
        if d.description:
            triples.append((s, IRI(DCT + "description"), Literal(d.description)))
        if d.version:
            triples.append((s, IRI(DCAT + "version"), Literal(d.version)))
        lic = IRI(d.license) if "://" in d.license else Literal(d.license)
        triples.append((s, IRI(DCT + "license"), lic))
        pub = BNode(f"publisher{n}")
        triples.append((s, IRI(DCT + "publisher"), pub))
        triples.append((pub, IRI(FOAF + "name"), Literal(d.publisher)))
        if d.publisher_kind:
            triples.append((pub, IRI(RDF_TYPE), IRI(FOAF + d.publisher_kind)))
        for k in d.keywords:
            triples.append((s, IRI(DCAT + "keyword"), Literal(k)))
        for key, values in d.health_ext.items():
            ns = HEALTHDCATAP if key not in RECOGNIZED_EXTENSIONS else AIMPX
            for v in values:
                triples.append((s, IRI(ns + key), v))
        for m, dist in enumerate(d.distributions):
            dn = IRI(dist.id) if dist.id else BNode(f"dist{n}_{m}")
            triples.append((s, IRI(DCAT + "distribution"), dn))
            triples.append((dn, IRI(RDF_TYPE), IRI(DCAT + "Distribution")))
            triples.append((dn, IRI(DCAT + "accessURL"), IRI(dist.access_url)))
            if dist.media_type:
                triples.append((dn, IRI(DCAT + "mediaType"), Literal(dist.media_type)))
            if dist.byte_size is not None:
                triples.append((dn, IRI(DCAT + "byteSize"), Literal.of(dist.byte_size)))
            if dist.checksum:
                cn = BNode(f"checksum{n}_{m}")
                triples.append((dn, IRI(SPDX + "checksum"), cn))
                triples.append((cn, IRI(SPDX + "algorithm"), IRI(SPDX + "checksumAlgorithm_" + dist.checksum.algorithm)))
                triples.append((cn, IRI(SPDX + "checksumValue"), Literal(dist.checksum.digest)))
    return TurtleDoc(prefixes, triples)


# -- harvesting ---------------------------------------------------------------


def _fetch(session: requests.Session, url: str, retries: int) -> tuple[str, bytes]:
    """GET ``url`` as Turtle; returns (final url, body)."""
    attempt = 0
    while True:
        try:
            resp = session.get(url, headers={"Accept": "text/turtle"}, timeout=TIMEOUT, allow_redirects=True)
        except requests.TooManyRedirects as exc:
            raise NetworkError(f"{url}: more than {MAX_REDIRECTS} redirects") from exc
        except requests.RequestException as exc:
            if attempt < retries:
                attempt += 1
                time.sleep(min(2 ** attempt, 10) * 0.1)
                continue
            raise NetworkError(f"{url}: {exc}") from exc
        if resp.status_code >= 500 and attempt < retries:
            attempt += 1
            continue
        if resp.status_code >= 400:
            raise HttpStatus(resp.status_code, url)
        return resp.url, resp.content


def harvest(
    fdp_url: str,
    retries: int = 0,
    follow_links: bool = True,
    session: requests.Session | None = None,
) -> list[DatasetDescriptor]:
    """Harvest dataset descriptors from a FAIR Data Point.

    The document at ``fdp_url`` is fetched with ``Accept: text/turtle``.
    With ``follow_links``, catalog/dataset/distribution IRIs referenced but
    not described in the fetched documents are fetched as well, the way an
    FDP splits its metadata over several resources. Each descriptor records
    the URL it was found at and the retrieval time (UTC).
    """
    if not fdp_url.startswith(("http://", "https://")):
        raise NetworkError(f"not an http(s) URL: {fdp_url}")
    sess = session or requests.Session()
    sess.max_redirects = MAX_REDIRECTS
    merged = TurtleDoc()
    seen_triples: set = set()
    found_at: dict[str, str] = {}
    queue = [fdp_url]
    fetched: set[str] = set()
    while queue and len(fetched) < MAX_DOCUMENTS:
        url = queue.pop(0)
        if url in fetched:
            continue
        fetched.add(url)
        try:
            final_url, body = _fetch(sess, url, retries)
            doc = parse_turtle(body, base=final_url)
        except (HttpStatus, TurtleSyntaxError) as exc:
            if url == fdp_url:
                raise
            # linked resources may be data rather than metadata
            log.warning("skipping linked resource %s: %s", url, exc)
            continue
        fetched.add(final_url)
        stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        for name, ns in doc.prefixes.items():
            merged.prefixes.setdefault(name, ns)
        for t in doc.triples:
            if t not in seen_triples:
                seen_triples.add(t)
                merged.triples.append(t)
        for s in doc.subjects_of_type(DCAT + "Dataset"):
            key = s.value if isinstance(s, IRI) else str(s)
            found_at.setdefault(key, HarvestSource(url, stamp))
        if not follow_links:
            continue
        described = {s for s, _, _ in merged.triples}
        for s, p, o in doc.triples:
            if p.value in _LINK_PREDICATES and isinstance(o, IRI) and o not in described:
                if o.value.startswith(("http://", "https://")) and o.value not in fetched:
                    queue.append(o.value.split("#", 1)[0])
    return descriptor_from_triples(merged, sources=found_at)


def strip_volatile(d: DatasetDescriptor) -> DatasetDescriptor:
    """Descriptor without its retrieval timestamp (for idempotence checks)."""
    if d.source is None:
        return d
    return replace(d, source=HarvestSource(d.source.url, ""))
