"""Turtle subset: parser, deterministic emitter, and graph isomorphism.

Supported: ``@prefix``/``PREFIX`` and ``@base``/``BASE`` directives,
``<iri>`` and ``prefix:local`` terms, the ``a`` keyword, labeled blank
nodes ``_:x``, quoted literals with ``@lang`` or ``^^datatype``, bare
integers/decimals/doubles/booleans, ``;`` predicate lists, ``,`` object
lists and ``#`` comments.

Not supported (rejected with a positioned error): ``[ ... ]`` blank node
property lists, ``( ... )`` collections and triple-quoted strings.
"""

from __future__ import annotations

import bisect
import re
from collections import defaultdict
from dataclasses import dataclass, field
from urllib.parse import urljoin

from .errors import TurtleSyntaxError, UnknownPrefix
from .rdf import RDF_LANGSTRING, RDF_TYPE, XSD, BNode, IRI, Literal, Term

_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_LOCAL_ESCAPABLE = set("_~.-!$&'()*+,;=/?#@%")
_IRI_FORBIDDEN = set('<>"{}|^`\\')
_SAFE_LOCAL = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*\Z")
_LANG = re.compile(r"[a-zA-Z]+(-[a-zA-Z0-9]+)*")
_NUMBER = re.compile(r"[+-]?([0-9]+\.[0-9]*[eE][+-]?[0-9]+|\.?[0-9]+[eE][+-]?[0-9]+|[0-9]*\.[0-9]+|[0-9]+)")
_BNODE_LABEL = re.compile(r"[A-Za-z0-9_]([A-Za-z0-9_.-]*[A-Za-z0-9_-])?")


@dataclass
class TurtleDoc:
    prefixes: dict[str, str] = field(default_factory=dict)
    triples: list[tuple] = field(default_factory=list)

    def triple_set(self) -> set[tuple]:
        return set(self.triples)

    def subjects_of_type(self, cls: str) -> list:
        return [s for s, p, o in self.triples if p == IRI(RDF_TYPE) and o == IRI(cls)]

    def objects(self, subject, predicate: str) -> list[Term]:
        p = IRI(predicate)
        return [o for s, pp, o in self.triples if s == subject and pp == p]


def _pn_chars_base(c: str) -> bool:
    return c.isalpha() and c != "_"


def _pn_chars_u(c: str) -> bool:
    return c.isalpha() or c == "_"


def _pn_chars(c: str) -> bool:
    return _pn_chars_u(c) or c.isdigit() or c == "-" or c == "·"


class _Parser:
    def __init__(self, text: str, base: str | None):
        self.text = text
        self.pos = 0
        self.base = base
        self.prefixes: dict[str, str] = {}
        self.triples: list[tuple] = []
        self._seen: set[tuple] = set()
        self._line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    # -- position helpers ---------------------------------------------------
    def where(self, pos: int | None = None) -> tuple[int, int]:
        pos = self.pos if pos is None else pos
        line = bisect.bisect_right(self._line_starts, pos)
        return line, pos - self._line_starts[line - 1] + 1

    def error(self, message: str, pos: int | None = None) -> TurtleSyntaxError:
        line, col = self.where(pos)
        return TurtleSyntaxError(line, col, message)

    def peek(self, n: int = 1) -> str:
        return self.text[self.pos:self.pos + n]

    def skip_ws(self) -> None:
        text = self.text
        while self.pos < len(text):
            c = text[self.pos]
            if c in " \t\r\n":
                self.pos += 1
            elif c == "#":
                nl = text.find("\n", self.pos)
                self.pos = len(text) if nl < 0 else nl + 1
            else:
                break

    def expect(self, s: str) -> None:
        self.skip_ws()
        if not self.text.startswith(s, self.pos):
            found = self.peek() or "end of input"
            raise self.error(f"expected {s!r}, found {found!r}")
        self.pos += len(s)

    # -- grammar ------------------------------------------------------------
    def parse(self) -> TurtleDoc:
        while True:
            self.skip_ws()
            if self.pos >= len(self.text):
                break
            if self.text.startswith("@prefix", self.pos):
                self.pos += len("@prefix")
                self.prefix_directive(dot=True)
            elif self.text.startswith("@base", self.pos):
                self.pos += len("@base")
                self.base_directive(dot=True)
            elif self._keyword("PREFIX"):
                self.prefix_directive(dot=False)
            elif self._keyword("BASE"):
                self.base_directive(dot=False)
            else:
                self.triples_statement()
        return TurtleDoc(dict(self.prefixes), self.triples)

    def _keyword(self, word: str) -> bool:
        end = self.pos + len(word)
        if self.text[self.pos:end].upper() == word and end < len(self.text) and self.text[end] in " \t\r\n":
            self.pos = end
            return True
        return False

    def prefix_directive(self, dot: bool) -> None:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in ": \t\r\n":
            self.pos += 1
        name = self.text[start:self.pos]
        if name and not (_pn_chars_base(name[0]) and all(_pn_chars(c) or c == "." for c in name) and name[-1] != "."):
            raise self.error(f"invalid prefix name {name!r}", start)
        if self.peek() != ":":
            raise self.error("expected ':' after prefix name")
        self.pos += 1
        self.skip_ws()
        if self.peek() != "<":
            raise self.error("expected <iri> in prefix directive")
        iri = self.iriref()
        self.prefixes[name] = iri
        if dot:
            self.expect(".")

    def base_directive(self, dot: bool) -> None:
        self.skip_ws()
        if self.peek() != "<":
            raise self.error("expected <iri> in base directive")
        self.base = self.iriref()
        if dot:
            self.expect(".")

    def triples_statement(self) -> None:
        subject = self.subject()
        self.predicate_object_list(subject)
        self.expect(".")

    def subject(self):
        self.skip_ws()
        c = self.peek()
        if c == "[":
            raise self.error("blank node property lists '[ ... ]' are not supported")
        if c == "(":
            raise self.error("collections '( ... )' are not supported")
        if c == "<":
            return IRI(self.iriref())
        if self.text.startswith("_:", self.pos):
            return self.bnode()
        if c and (c == ":" or _pn_chars_base(c)):
            return IRI(self.pname())
        raise self.error(f"expected subject, found {c or 'end of input'!r}")

    def predicate_object_list(self, subject) -> None:
        while True:
            predicate = self.verb()
            self.object_list(subject, predicate)
            self.skip_ws()
            if self.peek() != ";":
                return
            # one or more ';' may be followed by nothing before '.'
            while self.peek() == ";":
                self.pos += 1
                self.skip_ws()
            if self.peek() in (".", "]", ""):
                return

    def verb(self) -> IRI:
        self.skip_ws()
        c = self.peek()
        if c == "a" and (self.pos + 1 >= len(self.text) or self.text[self.pos + 1] in " \t\r\n<\"'_#"):
            self.pos += 1
            return IRI(RDF_TYPE)
        if c == "<":
            return IRI(self.iriref())
        if c and (c == ":" or _pn_chars_base(c)):
            return IRI(self.pname())
        raise self.error(f"expected predicate, found {c or 'end of input'!r}")

    def object_list(self, subject, predicate) -> None:
        while True:
            obj = self.object()
            t = (subject, predicate, obj)
            if t not in self._seen:
                self._seen.add(t)
                self.triples.append(t)
            self.skip_ws()
            if self.peek() != ",":
                return
            self.pos += 1

    def object(self) -> Term:
        self.skip_ws()
        c = self.peek()
        if c == "[":
            raise self.error("blank node property lists '[ ... ]' are not supported")
        if c == "(":
            raise self.error("collections '( ... )' are not supported")
        if c == "<":
            return IRI(self.iriref())
        if self.text.startswith("_:", self.pos):
            return self.bnode()
        if c in ('"', "'"):
            return self.literal()
        if c and (c in "+-." or c.isdigit()):
            return self.number()
        for word in ("true", "false"):
            end = self.pos + len(word)
            if self.text.startswith(word, self.pos) and (end >= len(self.text) or not _pn_chars(self.text[end]) and self.text[end] != ":"):
                self.pos = end
                return Literal(word, XSD + "boolean")
        if c and (c == ":" or _pn_chars_base(c)):
            return IRI(self.pname())
        raise self.error(f"expected object, found {c or 'end of input'!r}")

    # -- terminals ----------------------------------------------------------
    def iriref(self) -> str:
        start = self.pos
        assert self.text[self.pos] == "<"
        self.pos += 1
        out = []
        while True:
            if self.pos >= len(self.text):
                raise self.error("unterminated IRI", start)
            c = self.text[self.pos]
            if c == ">":
                self.pos += 1
                break
            if c == "\\":
                out.append(self._uchar())
                continue
            if c in _IRI_FORBIDDEN or ord(c) <= 0x20:
                raise self.error(f"character {c!r} not allowed in IRI")
            out.append(c)
            self.pos += 1
        iri = "".join(out)
        if ":" not in iri:
            if self.base is None:
                raise self.error(f"relative IRI <{iri}> without a base", start)
            iri = urljoin(self.base, iri)
        return iri

    def _uchar(self) -> str:
        # at a backslash
        kind = self.text[self.pos + 1:self.pos + 2]
        n = {"u": 4, "U": 8}.get(kind)
        if n is None:
            raise self.error("bad escape in IRI")
        digits = self.text[self.pos + 2:self.pos + 2 + n]
        if len(digits) != n or not all(d in "0123456789abcdefABCDEF" for d in digits):
            raise self.error("bad unicode escape")
        self.pos += 2 + n
        return chr(int(digits, 16))

    def pname(self) -> str:
        start = self.pos
        text = self.text
        while self.pos < len(text) and text[self.pos] != ":" and (_pn_chars(text[self.pos]) or text[self.pos] == "."):
            self.pos += 1
        prefix = text[start:self.pos]
        if self.peek() != ":":
            raise self.error(f"expected prefixed name, found {text[start:self.pos + 1]!r}", start)
        if prefix.endswith("."):
            raise self.error("prefix name may not end with '.'", start)
        self.pos += 1
        local = []
        while self.pos < len(text):
            c = text[self.pos]
            if _pn_chars(c) or c in ".:" or (c.isdigit()):
                local.append(c)
                self.pos += 1
            elif c == "%":
                hexd = text[self.pos + 1:self.pos + 3]
                if len(hexd) != 2 or not all(d in "0123456789abcdefABCDEF" for d in hexd):
                    raise self.error("bad percent escape in local name")
                local.append(text[self.pos:self.pos + 3])
                self.pos += 3
            elif c == "\\" and text[self.pos + 1:self.pos + 2] in _LOCAL_ESCAPABLE and self.pos + 1 < len(text):
                local.append(text[self.pos + 1])
                self.pos += 2
            else:
                break
        # a trailing '.' terminates the statement, it is not part of the name
        while local and local[-1] == ".":
            local.pop()
            self.pos -= 1
        if local and local[0] in "-.":
            raise self.error("local name may not start with '-' or '.'", start)
        if prefix not in self.prefixes:
            line, col = self.where(start)
            raise UnknownPrefix(prefix, line, col)
        return self.prefixes[prefix] + "".join(local)

    def bnode(self) -> BNode:
        self.pos += 2
        m = _BNODE_LABEL.match(self.text, self.pos)
        if not m:
            raise self.error("bad blank node label")
        self.pos = m.end()
        return BNode(m.group())

    def literal(self) -> Literal:
        start = self.pos
        quote = self.text[self.pos]
        if self.text.startswith(quote * 3, self.pos):
            raise self.error("triple-quoted literals are not supported")
        self.pos += 1
        out = []
        text = self.text
        while True:
            if self.pos >= len(text):
                raise self.error("unterminated string literal", start)
            c = text[self.pos]
            if c == quote:
                self.pos += 1
                break
            if c in "\n\r":
                raise self.error("newline in string literal")
            if c == "\\":
                nxt = text[self.pos + 1:self.pos + 2]
                if nxt in _ESCAPES:
                    out.append(_ESCAPES[nxt])
                    self.pos += 2
                elif nxt in ("u", "U"):
                    out.append(self._uchar())
                else:
                    raise self.error(f"unknown escape '\\{nxt}'")
                continue
            out.append(c)
            self.pos += 1
        lexical = "".join(out)
        if self.peek() == "@":
            m = _LANG.match(text, self.pos + 1)
            if not m:
                raise self.error("bad language tag")
            self.pos = m.end()
            return Literal(lexical, RDF_LANGSTRING, m.group())
        if self.text.startswith("^^", self.pos):
            self.pos += 2
            if self.peek() == "<":
                dt = self.iriref()
            else:
                dt = self.pname()
            return Literal(lexical, dt)
        return Literal(lexical)

    def number(self) -> Literal:
        m = _NUMBER.match(self.text, self.pos)
        if not m:
            raise self.error("malformed number")
        lex = m.group()
        self.pos = m.end()
        if "e" in lex or "E" in lex:
            return Literal(lex, XSD + "double")
        if "." in lex:
            return Literal(lex, XSD + "decimal")
        return Literal(lex, XSD + "integer")


def parse_turtle(text: str, base: str | None = None) -> TurtleDoc:
    """Parse Turtle text (grammar subset, see module docstring).

    Raises TurtleSyntaxError with 1-based line/column, or UnknownPrefix.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TurtleSyntaxError(1, 1, f"input is not UTF-8: {exc}") from None
    if text.startswith("﻿"):
        text = text[1:]
    return _Parser(text, base).parse()


# -- emitter ----------------------------------------------------------------------


def _escape_string(s: str) -> str:
    out = []
    for c in s:
        if c == "\\":
            out.append("\\\\")
        elif c == '"':
            out.append('\\"')
        elif c == "\n":
            out.append("\\n")
        elif c == "\t":
            out.append("\\t")
        elif c == "\r":
            out.append("\\r")
        elif ord(c) < 0x20 or ord(c) == 0x7F:
            out.append(f"\\u{ord(c):04X}")
        else:
            out.append(c)
    return "".join(out)


def _escape_iri(iri: str) -> str:
    return "".join(
        f"\\u{ord(c):04X}" if (c in _IRI_FORBIDDEN or ord(c) <= 0x20) else c for c in iri
    )


class _Compactor:
    def __init__(self, prefixes: dict[str, str]):
        # longest namespace wins so nested namespaces compact to the tightest prefix
        self.items = sorted(prefixes.items(), key=lambda kv: (-len(kv[1]), kv[0]))

    def iri(self, iri: str) -> str:
        for name, ns in self.items:
            if ns and iri.startswith(ns):
                local = iri[len(ns):]
                if _SAFE_LOCAL.match(local):
                    return f"{name}:{local}"
        return f"<{_escape_iri(iri)}>"

    def term(self, t: Term) -> str:
        if isinstance(t, IRI):
            return self.iri(t.value)
        if isinstance(t, BNode):
            return f"_:{t.label}"
        lex = f'"{_escape_string(t.lexical)}"'
        if t.lang:
            return f"{lex}@{t.lang}"
        if t.datatype == XSD + "string":
            return lex
        return f"{lex}^^{self.iri(t.datatype)}"


def _subject_key(s) -> tuple:
    return (0, s.value) if isinstance(s, IRI) else (1, s.label)


def _object_key(o) -> tuple:
    if isinstance(o, IRI):
        return (0, o.value, "", "")
    if isinstance(o, BNode):
        return (1, o.label, "", "")
    return (2, o.lexical, o.datatype, o.lang or "")


def emit_turtle(doc: TurtleDoc) -> str:
    """Deterministic Turtle text for ``doc``.

    Prefixes sorted by name; subjects by expanded IRI (blank nodes last);
    ``a`` first in each group, remaining predicates sorted by IRI; objects
    sorted; ``;``/``,`` continuation; UTF-8-safe text.
    """
    lines = [f"@prefix {name}: <{_escape_iri(ns)}> ." for name, ns in sorted(doc.prefixes.items())]
    grouped: dict = defaultdict(lambda: defaultdict(set))
    for s, p, o in doc.triples:
        grouped[s][p].add(o)
    compact = _Compactor(doc.prefixes)
    blocks = []
    for s in sorted(grouped, key=_subject_key):
        preds = grouped[s]
        order = sorted(preds, key=lambda p: (p.value != RDF_TYPE, p.value))
        parts = []
        for p in order:
            verb = "a" if p.value == RDF_TYPE else compact.iri(p.value)
            objs = " , ".join(compact.term(o) for o in sorted(preds[p], key=_object_key))
            parts.append(f"{verb} {objs}")
        blocks.append(compact.term(s) + " " + " ;\n    ".join(parts) + " .")
    text = "\n".join(lines)
    if blocks:
        text += ("\n\n" if lines else "") + "\n\n".join(blocks)
    return text + "\n" if text else ""


# -- isomorphism ------------------------------------------------------------------


def isomorphic(a, b) -> bool:
    """True when two triple collections are equal up to a consistent
    renaming of blank nodes."""
    ta, tb = set(a), set(b)
    if len(ta) != len(tb):
        return False
    if ta == tb:
        return True

    def bnodes(ts):
        return {t for tr in ts for t in (tr[0], tr[2]) if isinstance(t, BNode)}

    ba, bb = sorted(bnodes(ta)), sorted(bnodes(tb))
    if len(ba) != len(bb):
        return False
    ground_a = {t for t in ta if not any(isinstance(x, BNode) for x in (t[0], t[2]))}
    ground_b = {t for t in tb if not any(isinstance(x, BNode) for x in (t[0], t[2]))}
    if ground_a != ground_b:
        return False

    def signature(node, ts):
        sig = []
        for s, p, o in ts:
            if s == node:
                sig.append(("out", p, o if not isinstance(o, BNode) else None))
            if o == node:
                sig.append(("in", p, s if not isinstance(s, BNode) else None))
        return tuple(sorted(sig, key=repr))

    sig_b = {n: signature(n, tb) for n in bb}
    candidates = {n: [m for m in bb if sig_b[m] == signature(n, ta)] for n in ba}
    if any(not c for c in candidates.values()):
        return False

    def rename(t, mapping):
        return tuple(mapping.get(x, x) if isinstance(x, BNode) else x for x in t)

    order = sorted(ba, key=lambda n: len(candidates[n]))

    def search(i, mapping, used):
        if i == len(order):
            return {rename(t, mapping) for t in ta} == tb
        n = order[i]
        for m in candidates[n]:
            if m not in used:
                mapping[n] = m
                used.add(m)
                if search(i + 1, mapping, used):
                    return True
                del mapping[n]
                used.discard(m)
        return False

    return search(0, {}, set())
