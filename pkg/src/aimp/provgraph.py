r"""Typed provenance graph.

Nodes are PROV entities, activities or agents drawn from a closed class
vocabulary; edges are binary relations with a fixed (domain, range) per
relation. Graph values are immutable: every operation returns a new graph.

    >>> g = ProvGraph.empty({"ex": "http://example.org/"})
    >>> g = g.add_node(ProvNode("ex:p1", NodeKind.of("aimp:PatientRecord")))
    >>> g = g.add_node(ProvNode("ex:act1", NodeKind.of("aimp:Anonymization")))
    >>> g = g.add_edge(ProvEdge("ex:act1", "prov:used", "ex:p1"))
    >>> print(g.to_turtle().split("\n\n")[1])
    ex:act1 a aimp:Anonymization ;
        prov:used ex:p1 .
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping

from . import rdf
from .canonical import canonical_bytes
from .errors import (
    AttributeConflict,
    DuplicateEdge,
    DuplicateId,
    InvalidGraph,
    PrefixConflict,
    RelationDomainViolation,
    UnknownNode,
    VocabularyError,
)
from .rdf import AIMP, DCAT, DCT, FOAF, MLS, PROV, IRI, Literal
from .turtle import TurtleDoc, emit_turtle

ENTITY, ACTIVITY, AGENT = "Entity", "Activity", "Agent"
BASES = (ENTITY, ACTIVITY, AGENT)

ENTITY_CLASSES = {
    AIMP + "PatientRecord",
    AIMP + "ClinicalAttributeValue",
    AIMP + "ImagingAttributeValue",
    AIMP + "ImageStudy",
    AIMP + "ImageSeries",
    DCAT + "Dataset",
    DCAT + "Distribution",
    AIMP + "Script",
    AIMP + "ParameterSet",
    MLS + "Model",
    AIMP + "SegmentationMask",
    AIMP + "LogFile",
    # workflow containers of the training/evaluation model
    AIMP + "Study",
    AIMP + "Experiment",
    AIMP + "Pipeline",
    AIMP + "Stage",
}
ACTIVITY_CLASSES = {
    AIMP + "DataCollection",
    AIMP + "Anonymization",
    AIMP + "DataUpload",
    AIMP + "DataCuration",
    AIMP + "StageExecution",
    MLS + "ModelEvaluation",
}
AGENT_CLASSES = {
    FOAF + "Person",
    FOAF + "Organization",
    PROV + "SoftwareAgent",
}
VOCABULARY = {ENTITY: ENTITY_CLASSES, ACTIVITY: ACTIVITY_CLASSES, AGENT: AGENT_CLASSES}
_CLASS_BASE = {c: base for base, classes in VOCABULARY.items() for c in classes}

# relation IRI -> (domain base, range base)
RELATIONS = {
    PROV + "used": (ACTIVITY, ENTITY),
    PROV + "generated": (ACTIVITY, ENTITY),
    PROV + "wasGeneratedBy": (ENTITY, ACTIVITY),
    PROV + "wasAssociatedWith": (ACTIVITY, AGENT),
    PROV + "wasPerformedBy": (ACTIVITY, AGENT),
    PROV + "wasAttributedTo": (ENTITY, AGENT),
    PROV + "wasDerivedFrom": (ENTITY, ENTITY),
    PROV + "wasRevisionOf": (ENTITY, ENTITY),
    PROV + "wasInvalidatedBy": (ENTITY, ACTIVITY),
    PROV + "actedOnBehalfOf": (AGENT, AGENT),
    MLS + "hasInput": (ACTIVITY, ENTITY),
    MLS + "hasOutput": (ACTIVITY, ENTITY),
    AIMP + "hasClinicalAttributeValue": (ENTITY, ENTITY),
    AIMP + "hasImageAttributeValue": (ENTITY, ENTITY),
    AIMP + "hasImageStudy": (ENTITY, ENTITY),
    AIMP + "hasImageSeries": (ENTITY, ENTITY),
    AIMP + "executes": (ACTIVITY, ENTITY),
    DCT + "hasPart": (ENTITY, ENTITY),
}


@dataclass(frozen=True)
class NodeKind:
    base: str
    class_iri: str

    @classmethod
    def of(cls, class_iri: str, prefixes: Mapping[str, str] | None = None) -> "NodeKind":
        """Look up the base (Entity/Activity/Agent) of a vocabulary class."""
        full = rdf.expand(class_iri, {**rdf.DEFAULT_PREFIXES, **(prefixes or {})})
        try:
            return cls(_CLASS_BASE[full], class_iri)
        except KeyError:
            raise VocabularyError(f"unknown class {class_iri}") from None


@dataclass(frozen=True)
class ProvNode:
    id: str
    kind: NodeKind
    attributes: Mapping[str, Literal] = field(default_factory=dict)

    def __post_init__(self):
        attrs = {k: Literal.of(v) for k, v in dict(self.attributes).items()}
        object.__setattr__(self, "attributes", MappingProxyType(attrs))

    def __hash__(self):
        return hash((self.id, self.kind))


@dataclass(frozen=True, order=True)
class ProvEdge:
    subject: str
    predicate: str
    object: str


@dataclass(frozen=True)
class Violation:
    kind: str
    iri: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.iri})" + (f": {self.detail}" if self.detail else "")


@dataclass(frozen=True)
class ProvGraph:
    prefixes: Mapping[str, str]
    nodes: tuple[ProvNode, ...] = ()
    edges: tuple[ProvEdge, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "prefixes", MappingProxyType(dict(self.prefixes)))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "_index", {n.id: n for n in self.nodes})
        object.__setattr__(self, "_edge_set", set(self.edges))

    @classmethod
    def empty(cls, prefixes: Mapping[str, str] | None = None) -> "ProvGraph":
        """An empty graph whose prefix table is the default namespaces plus
        ``prefixes``."""
        return cls({**rdf.DEFAULT_PREFIXES, **(prefixes or {})})

    # -- lookup ------------------------------------------------------------
    def node(self, iri: str) -> ProvNode:
        try:
            return self._index[iri]
        except KeyError:
            raise UnknownNode(iri) from None

    def __contains__(self, iri: str) -> bool:
        return iri in self._index

    def expand(self, name: str) -> str:
        return rdf.expand(name, self.prefixes)

    def nodes_of_class(self, class_iri: str) -> list[ProvNode]:
        want = self.expand(class_iri)
        return [n for n in self.nodes if self.expand(n.kind.class_iri) == want]

    def edges_from(self, subject: str, predicate: str | None = None) -> list[ProvEdge]:
        want = self.expand(predicate) if predicate else None
        return [
            e for e in self.edges
            if e.subject == subject and (want is None or self.expand(e.predicate) == want)
        ]

    # -- construction --------------------------------------------------------
    def add_node(self, node: ProvNode) -> "ProvGraph":
        if node.id in self._index:
            raise DuplicateId(node.id)
        self._check_node(node)
        return replace(self, nodes=self.nodes + (node,))

    def add_nodes(self, nodes: Iterable[ProvNode]) -> "ProvGraph":
        added = list(self.nodes)
        seen = set(self._index)
        for node in nodes:
            if node.id in seen:
                raise DuplicateId(node.id)
            self._check_node(node)
            seen.add(node.id)
            added.append(node)
        return replace(self, nodes=tuple(added))

    def _check_node(self, node: ProvNode) -> None:
        problems = _node_violations(node, self.prefixes)
        if problems:
            raise VocabularyError("; ".join(str(p) for p in problems))

    def add_edge(self, edge: ProvEdge) -> "ProvGraph":
        self._check_edge(edge, self._edge_set)
        return replace(self, edges=self.edges + (edge,))

    def add_edges(self, edges: Iterable[ProvEdge]) -> "ProvGraph":
        added = list(self.edges)
        seen = set(self._edge_set)
        for edge in edges:
            self._check_edge(edge, seen)
            seen.add(edge)
            added.append(edge)
        return replace(self, edges=tuple(added))

    def _check_edge(self, edge: ProvEdge, existing: set) -> None:
        for end in (edge.subject, edge.object):
            if end not in self._index:
                raise UnknownNode(end)
        if edge in existing:
            raise DuplicateEdge(edge.subject, edge.predicate, edge.object)
        try:
            pred = self.expand(edge.predicate)
        except (KeyError, ValueError):
            raise VocabularyError(f"unresolvable predicate {edge.predicate}") from None
        if pred not in RELATIONS:
            raise VocabularyError(f"unknown relation {edge.predicate}")
        domain, range_ = RELATIONS[pred]
        actual = self._index[edge.subject].kind.base
        if actual != domain:
            raise RelationDomainViolation(_short(pred), domain, actual)
        actual = self._index[edge.object].kind.base
        if actual != range_:
            raise RelationDomainViolation(_short(pred), range_, actual)

    # -- validation -----------------------------------------------------------
    def validate(self) -> list[Violation]:
        """Every problem in the graph; an empty list means valid."""
        out: list[Violation] = []
        for name, ns in self.prefixes.items():
            if "://" not in ns and not ns.startswith("urn:"):
                out.append(Violation("BadPrefix", name, f"<{ns}> is not absolute"))
        seen: dict[str, ProvNode] = {}
        for node in self.nodes:
            if node.id in seen:
                out.append(Violation("DuplicateId", node.id))
            seen[node.id] = node
            out.extend(_node_violations(node, self.prefixes))
        edge_seen = set()
        for e in self.edges:
            if e in edge_seen:
                out.append(Violation("DuplicateEdge", e.subject, f"{e.predicate} {e.object}"))
            edge_seen.add(e)
            for end in (e.subject, e.object):
                bad = _iri_problem(end, self.prefixes)
                if bad:
                    out.append(Violation("UnresolvedIri", end, bad))
                elif end not in seen:
                    out.append(Violation("UnknownNode", end))
            bad = _iri_problem(e.predicate, self.prefixes)
            if bad:
                out.append(Violation("UnresolvedIri", e.predicate, bad))
                continue
            pred = rdf.expand(e.predicate, self.prefixes)
            if pred not in RELATIONS:
                out.append(Violation("UnknownRelation", e.predicate))
                continue
            domain, range_ = RELATIONS[pred]
            for end, want in ((e.subject, domain), (e.object, range_)):
                if end in seen and seen[end].kind.base != want:
                    out.append(Violation(
                        "RelationDomainViolation", e.predicate,
                        f"{end} is {seen[end].kind.base}, expected {want}",
                    ))
        return out

    def require_valid(self) -> None:
        problems = self.validate()
        if problems:
            raise InvalidGraph(problems)

    # -- serialization ---------------------------------------------------------
    def triples(self) -> list[tuple]:
        """The graph as RDF triples with every IRI expanded."""
        x = self.expand
        out = []
        for n in self.nodes:
            s = IRI(x(n.id))
            out.append((s, IRI(rdf.RDF_TYPE), IRI(x(n.kind.class_iri))))
            for key, lit in n.attributes.items():
                out.append((s, IRI(x(key)), lit))
        for e in self.edges:
            out.append((IRI(x(e.subject)), IRI(x(e.predicate)), IRI(x(e.object))))
        return out

    def to_turtle_doc(self) -> TurtleDoc:
        self.require_valid()
        return TurtleDoc(dict(self.prefixes), self.triples())

    def to_turtle(self) -> str:
        return emit_turtle(self.to_turtle_doc())

    def to_dict(self) -> dict:
        """JSON-ready form with all IRIs expanded, nodes and edges sorted."""
        x = self.expand
        nodes = sorted(
            (
                {
                    "id": x(n.id),
                    "base": n.kind.base,
                    "class": x(n.kind.class_iri),
                    "attributes": {x(k): v.to_json() for k, v in n.attributes.items()},
                }
                for n in self.nodes
            ),
            key=lambda d: d["id"],
        )
        edges = sorted(
            (
                {"subject": x(e.subject), "predicate": x(e.predicate), "object": x(e.object)}
                for e in self.edges
            ),
            key=lambda d: (d["subject"], d["predicate"], d["object"]),
        )
        return {"prefixes": dict(self.prefixes), "nodes": nodes, "edges": edges}

    def to_canonical_json(self) -> bytes:
        self.require_valid()
        return canonical_bytes(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> "ProvGraph":
        """Inverse of ``to_dict``; IRIs stay in their expanded form."""
        nodes = [
            ProvNode(
                n["id"],
                NodeKind(n["base"], n["class"]),
                {k: Literal.from_json(v) for k, v in n.get("attributes", {}).items()},
            )
            for n in data.get("nodes", [])
        ]
        edges = [ProvEdge(e["subject"], e["predicate"], e["object"]) for e in data.get("edges", [])]
        return cls(data.get("prefixes", {}), nodes, edges)

    def normalized(self) -> "ProvGraph":
        """Same graph with every IRI expanded (what from_dict(to_dict()) yields)."""
        return ProvGraph.from_dict(self.to_dict())

    # -- merge -------------------------------------------------------------------
    def merge(self, other: "ProvGraph") -> "ProvGraph":
        prefixes = dict(self.prefixes)
        for name, ns in other.prefixes.items():
            if name in prefixes and prefixes[name] != ns:
                raise PrefixConflict(name, prefixes[name], ns)
            prefixes[name] = ns
        # names from either side resolve in the union table, so only the
        # comparison keys need expanding
        x = lambda name: rdf.expand(name, prefixes)  # noqa: E731

        nodes: dict[str, ProvNode] = {}
        for node in (*self.nodes, *other.nodes):
            key = x(node.id)
            prev = nodes.get(key)
            if prev is None:
                nodes[key] = node
                continue
            if x(prev.kind.class_iri) != x(node.kind.class_iri):
                raise AttributeConflict(node.id, "rdf:type")
            merged = dict(prev.attributes)
            have = {x(k): v for k, v in prev.attributes.items()}
            for k, v in node.attributes.items():
                if x(k) in have:
                    if have[x(k)] != v:
                        raise AttributeConflict(node.id, k)
                    continue
                merged[k] = v
            nodes[key] = ProvNode(prev.id, prev.kind, merged)

        edges: dict[tuple, ProvEdge] = {}
        for e in (*self.edges, *other.edges):
            edges.setdefault((x(e.subject), x(e.predicate), x(e.object)), e)
        return ProvGraph(prefixes, list(nodes.values()), list(edges.values()))


def _short(iri: str) -> str:
    for sep in ("#", "/"):
        if sep in iri:
            return iri.rsplit(sep, 1)[1]
    return iri


def _iri_problem(name: str, prefixes: Mapping[str, str]) -> str | None:
    if not name:
        return "empty IRI"
    try:
        rdf.expand(name, prefixes)
    except KeyError:
        return f"prefix of {name} is not declared"
    except ValueError as exc:
        return str(exc)
    return None


def _node_violations(node: ProvNode, prefixes: Mapping[str, str]) -> list[Violation]:
    out = []
    for name in (node.id, node.kind.class_iri, *node.attributes):
        bad = _iri_problem(name, prefixes)
        if bad:
            out.append(Violation("UnresolvedIri", name, bad))
    if node.kind.base not in BASES:
        out.append(Violation("UnknownBase", node.id, node.kind.base))
    if not _iri_problem(node.kind.class_iri, prefixes):
        cls = rdf.expand(node.kind.class_iri, prefixes)
        if cls not in _CLASS_BASE:
            out.append(Violation("UnknownClass", node.id, node.kind.class_iri))
        elif _CLASS_BASE[cls] != node.kind.base:
            out.append(Violation(
                "UnknownClass", node.id,
                f"{node.kind.class_iri} is a {_CLASS_BASE[cls]}, not {node.kind.base}",
            ))
    for key, lit in node.attributes.items():
        if lit.kind is None:
            out.append(Violation("InvalidLiteral", node.id, f"{key}: unsupported datatype {lit.datatype}"))
            continue
        bad = lit.lexical_error()
        if bad:
            out.append(Violation("InvalidLiteral", node.id, f"{key}: {bad}"))
    return out


def add_node(graph: ProvGraph, node: ProvNode) -> ProvGraph:
    return graph.add_node(node)


def add_edge(graph: ProvGraph, edge: ProvEdge) -> ProvGraph:
    return graph.add_edge(edge)


def validate(graph: ProvGraph) -> list[Violation]:
    return graph.validate()


def to_turtle(graph: ProvGraph) -> str:
    return graph.to_turtle()


def to_canonical_json(graph: ProvGraph) -> bytes:
    return graph.to_canonical_json()


def merge(a: ProvGraph, b: ProvGraph) -> ProvGraph:
    return a.merge(b)
