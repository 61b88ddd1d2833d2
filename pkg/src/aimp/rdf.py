"""RDF terms and the namespaces used across the package."""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime
from decimal import Decimal
from typing import Union

from .canonical import decimal_string

AIMP = "https://w3id.org/aimp/ns#"
PROV = "http://www.w3.org/ns/prov#"
MLS = "http://www.w3.org/ns/mls#"
PMLM = "https://w3id.org/pmlm#"
DCAT = "http://www.w3.org/ns/dcat#"
DCT = "http://purl.org/dc/terms/"
SPDX = "http://spdx.org/rdf/terms#"
FOAF = "http://xmlns.com/foaf/0.1/"
RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
XSD = "http://www.w3.org/2001/XMLSchema#"
OWL = "http://www.w3.org/2002/07/owl#"
HEALTHDCATAP = "http://healthdataportal.eu/ns/health#"
# project-specific dataset extension fields (patients, modalities, vendors ...)
AIMPX = "https://w3id.org/aimp/health-ext#"

RDF_TYPE = RDF + "type"
RDF_LANGSTRING = RDF + "langString"

DEFAULT_PREFIXES = {
    "aimp": AIMP,
    "aimpx": AIMPX,
    "dcat": DCAT,
    "dct": DCT,
    "foaf": FOAF,
    "mls": MLS,
    "pmlm": PMLM,
    "prov": PROV,
    "rdf": RDF,
    "spdx": SPDX,
    "xsd": XSD,
}

# short datatype names accepted by the provenance model
DATATYPES = {
    "string": XSD + "string",
    "integer": XSD + "integer",
    "decimal": XSD + "decimal",
    "boolean": XSD + "boolean",
    "dateTime": XSD + "dateTime",
}
DATATYPE_NAMES = {v: k for k, v in DATATYPES.items()}

_INTEGER = re.compile(r"[+-]?[0-9]+\Z")
_DECIMAL = re.compile(r"[+-]?([0-9]+(\.[0-9]*)?|\.[0-9]+)\Z")
_BOOLEAN = re.compile(r"(true|false|1|0)\Z")
_LANG = re.compile(r"[a-zA-Z]+(-[a-zA-Z0-9]+)*\Z")


@dataclass(frozen=True, order=True)
class IRI:
    value: str

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, order=True)
class BNode:
    label: str

    def __str__(self) -> str:
        return "_:" + self.label


@dataclass(frozen=True)
class Literal:
    """An RDF literal. ``datatype`` is a full IRI; language-tagged strings
    use rdf:langString."""

    lexical: str
    datatype: str = DATATYPES["string"]
    lang: str | None = None

    def __post_init__(self):
        if self.lang is not None:
            if self.datatype not in (RDF_LANGSTRING, DATATYPES["string"]):
                raise ValueError("language tag only allowed on string literals")
            if not _LANG.match(self.lang):
                raise ValueError(f"bad language tag {self.lang!r}")
            object.__setattr__(self, "datatype", RDF_LANGSTRING)

    @property
    def kind(self) -> str | None:
        """Short datatype name (``string``, ``integer`` ...) or None when
        the datatype is outside the provenance model's set."""
        if self.datatype == RDF_LANGSTRING:
            return "string"
        return DATATYPE_NAMES.get(self.datatype)

    @classmethod
    def of(cls, value: "LiteralValue", lang: str | None = None) -> "Literal":
        if isinstance(value, Literal):
            return value
        if isinstance(value, bool):
            return cls("true" if value else "false", DATATYPES["boolean"])
        if isinstance(value, int):
            return cls(str(value), DATATYPES["integer"])
        if isinstance(value, (float, Decimal)):
            return cls(decimal_string(value), DATATYPES["decimal"])
        if isinstance(value, datetime):
            return cls(value.isoformat(), DATATYPES["dateTime"])
        if isinstance(value, str):
            return cls(value, DATATYPES["string"], lang)
        raise TypeError(f"cannot make a literal from {type(value).__name__}")

    @classmethod
    def typed(cls, lexical: str, kind: str, lang: str | None = None) -> "Literal":
        if kind not in DATATYPES:
            raise ValueError(f"unknown datatype {kind!r}")
        return cls(lexical, DATATYPES[kind], lang)

    def lexical_error(self) -> str | None:
        """Why the lexical form is invalid for its datatype, or None."""
        kind = self.kind
        lex = self.lexical
        if kind == "integer" and not _INTEGER.match(lex):
            return f"{lex!r} is not an integer"
        if kind == "decimal" and not _DECIMAL.match(lex):
            return f"{lex!r} is not a decimal"
        if kind == "boolean" and not _BOOLEAN.match(lex):
            return f"{lex!r} is not a boolean"
        if kind == "dateTime":
            try:
                datetime.fromisoformat(lex.replace("Z", "+00:00"))
            except ValueError:
                return f"{lex!r} is not a dateTime"
        return None

    def to_python(self):
        kind = self.kind
        if kind == "integer":
            return int(self.lexical)
        if kind == "decimal":
            return Decimal(self.lexical)
        if kind == "boolean":
            return self.lexical in ("true", "1")
        return self.lexical

    def to_json(self) -> dict:
        out = {"value": self.lexical, "type": self.kind or self.datatype}
        if self.lang is not None:
            out["lang"] = self.lang
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Literal":
        t = data["type"]
        datatype = DATATYPES.get(t, t)
        return cls(data["value"], datatype, data.get("lang"))

    def __str__(self) -> str:
        if self.lang:
            return f'"{self.lexical}"@{self.lang}'
        if self.kind == "string":
            return f'"{self.lexical}"'
        return f'"{self.lexical}"^^{self.kind or self.datatype}'


LiteralValue = Union[Literal, str, int, float, bool, Decimal, datetime]
Term = Union[IRI, BNode, Literal]
Triple = tuple  # (IRI | BNode, IRI, Term)


def expand(name: str, prefixes: dict[str, str]) -> str:
    """Expand ``prefix:local`` through ``prefixes``; absolute IRIs pass through.

    Raises KeyError for an unbound prefix and ValueError for a malformed name.
    """
    if "://" in name or name.startswith("urn:"):
        if any(c.isspace() for c in name):
            raise ValueError(f"whitespace in IRI {name!r}")
        return name
    prefix, sep, local = name.partition(":")
    if not sep or not local or ":" in local:
        raise ValueError(f"malformed prefixed name {name!r}")
    return prefixes[prefix] + local
