"""RDF terms, triples and triple patterns."""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass
from typing import NamedTuple, Optional

from hypercoord.errors import MalformedTerm

IRI_KIND = "iri"
LITERAL_KIND = "literal"
BNODE_KIND = "bnode"
VARIABLE_KIND = "variable"

_KINDS = (IRI_KIND, LITERAL_KIND, BNODE_KIND, VARIABLE_KIND)
_ABSOLUTE = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")

XSD = "http://www.w3.org/2001/XMLSchema#"
XSD_STRING = XSD + "string"


@functools.total_ordering
@dataclass(frozen=True)
class Term:
    kind: str
    value: str
    datatype: Optional[str] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise MalformedTerm(f"unknown term kind {self.kind!r}")
        if self.datatype is not None and self.kind != LITERAL_KIND:
            raise MalformedTerm("only literals carry a datatype")
        if self.kind == VARIABLE_KIND and not self.value:
            raise MalformedTerm("empty variable name")

    def _key(self):
        return (self.kind, self.value, self.datatype or "")

    def __lt__(self, other):
        if not isinstance(other, Term):
            return NotImplemented
        return self._key() < other._key()

    @property
    def is_iri(self):
        return self.kind == IRI_KIND

    @property
    def is_literal(self):
        return self.kind == LITERAL_KIND

    @property
    def is_bnode(self):
        return self.kind == BNODE_KIND

    @property
    def is_variable(self):
        return self.kind == VARIABLE_KIND

    def __str__(self):
        return self.value

    def __repr__(self):
        if self.kind == IRI_KIND:
            return f"<{self.value}>"
        if self.kind == BNODE_KIND:
            return f"_:{self.value}"
        if self.kind == VARIABLE_KIND:
            return f"?{self.value}"
        if self.datatype:
            return f'"{self.value}"^^<{self.datatype}>'
        return f'"{self.value}"'

    def python_value(self):
        """Best-effort conversion of a literal to a Python value."""
        if self.kind != LITERAL_KIND:
            return self.value
        dt = self.datatype or XSD_STRING
        if dt == XSD + "boolean":
            return self.value == "true"
        if dt == XSD + "integer":
            return int(self.value)
        if dt in (XSD + "decimal", XSD + "double", XSD + "float"):
            return float(self.value)
        return self.value


def IRI(value: str) -> Term:
    return Term(IRI_KIND, value)


def Literal(value, datatype: Optional[str] = None) -> Term:
    if isinstance(value, bool):
        return Term(LITERAL_KIND, "true" if value else "false", XSD + "boolean")
    if isinstance(value, int):
        return Term(LITERAL_KIND, str(value), datatype or XSD + "integer")
    if isinstance(value, float):
        return Term(LITERAL_KIND, repr(value), datatype or XSD + "decimal")
    if datatype == XSD_STRING:
        datatype = None
    return Term(LITERAL_KIND, str(value), datatype)


def BNode(label: str) -> Term:
    return Term(BNODE_KIND, label)


def Var(name: str) -> Term:
    return Term(VARIABLE_KIND, name.lstrip("?"))


def is_absolute_iri(value: str) -> bool:
    return bool(_ABSOLUTE.match(value))


class Triple(NamedTuple):
    subject: Term
    predicate: Term
    object: Term

    def validate(self):
        """Raise MalformedTerm unless this triple may be stored."""
        s, p, o = self
        for t in self:
            if not isinstance(t, Term):
                raise MalformedTerm(f"not a term: {t!r}")
            if t.is_variable:
                raise MalformedTerm(f"variable {t!r} in data triple")
            if t.is_iri and not is_absolute_iri(t.value):
                raise MalformedTerm(f"relative IRI {t.value!r}")
        if s.is_literal:
            raise MalformedTerm("literal in subject position")
        if not p.is_iri:
            raise MalformedTerm("predicate must be an IRI")
        return self


class TriplePattern(NamedTuple):
    subject: Term
    predicate: Term
    object: Term
    path_star: bool = False

    def variables(self):
        return [t.value for t in self[:3] if t.is_variable]


def pattern(s: Term, p: Term, o: Term, star: bool = False) -> TriplePattern:
    if star and not p.is_iri:
        raise MalformedTerm("a star path needs an IRI predicate")
    return TriplePattern(s, p, o, star)
