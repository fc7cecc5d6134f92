"""Parsing and serialization for N-Triples and a Turtle subset.

The Turtle subset covers ``@prefix``/``PREFIX`` directives, prefixed names
(including the empty prefix), ``a``, predicate lists (``;``), object lists
(``,``), blank node labels and ``[ ... ]`` property lists, quoted literals
with ``^^`` datatypes, and bare numbers and booleans.
"""

from __future__ import annotations

import re
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Optional

from hypercoord.errors import ParseError
from hypercoord.graph.terms import (
    XSD, XSD_STRING, BNode, IRI, Term, Triple, is_absolute_iri,
)

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"

NTRIPLES = "n-triples"
TURTLE = "turtle-subset"
FORMATS = (NTRIPLES, TURTLE)

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\s]*>)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<dtmark>\^\^)
  | (?P<lang>@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)
  | (?P<bnode>_:[A-Za-z0-9_](?:[A-Za-z0-9_\-.]*[A-Za-z0-9_\-])?)
  | (?P<number>[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.?\d+[eE][+-]?\d+|\d*\.\d+|\d+))
  | (?P<pname>(?:[A-Za-z][A-Za-z0-9_\-]*)?:(?:[A-Za-z0-9_\-](?:[A-Za-z0-9_\-.]*[A-Za-z0-9_\-])?)?)
  | (?P<word>[A-Za-z][A-Za-z0-9_\-]*)
  | (?P<punct>[.;,\[\]])
""", re.VERBOSE)

_ESCAPES = {"t": "\t", "n": "\n", "r": "\r", '"': '"', "'": "'", "\\": "\\",
            "b": "\b", "f": "\f"}


def _unescape(body: str, line: int) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        nxt = body[i + 1]
        if nxt in _ESCAPES:
            out.append(_ESCAPES[nxt])
            i += 2
        elif nxt in "uU":
            width = 4 if nxt == "u" else 8
            digits = body[i + 2:i + 2 + width]
            if len(digits) != width:
                raise ParseError("truncated unicode escape", line)
            out.append(chr(int(digits, 16)))
            i += 2 + width
        else:
            raise ParseError(f"bad escape \\{nxt}", line)
    return "".join(out)


def _tokenize(text: str):
    line = 1
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line)
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line += 1
        elif kind not in ("ws", "comment"):
            tokens.append((kind, value, line))
        pos = m.end()
    return tokens, line


class _Parser:
    def __init__(self, text: str, fmt: str, prefixes: Mapping[str, str], bnode_prefix: str):
        self.tokens, self.last_line = _tokenize(text)
        self.i = 0
        self.fmt = fmt
        self.prefixes = dict(prefixes)
        self.bnode_prefix = bnode_prefix
        self.anon = 0
        self.triples: List[Triple] = []

    # token helpers

    def peek(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i]
        return (None, None, self.last_line)

    def next(self):
        tok = self.peek()
        if tok[0] is None:
            raise ParseError("unexpected end of document", tok[2])
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, line = self.next()
        if val != value:
            raise ParseError(f"expected {value!r}, found {val!r}", line)

    def at(self, value):
        return self.peek()[1] == value

    # grammar

    def parse(self) -> List[Triple]:
        while self.peek()[0] is not None:
            kind, value, line = self.peek()
            if value in ("@prefix", "PREFIX", "prefix") or (kind == "lang" and value == "@prefix"):
                if self.fmt == NTRIPLES:
                    raise ParseError("directives are not allowed in N-Triples", line)
                self.directive()
                continue
            start = len(self.triples)
            subject = self.subject()
            self.predicate_object_list(subject)
            if self.fmt == NTRIPLES and len(self.triples) - start != 1:
                raise ParseError("N-Triples allows exactly one triple per statement", line)
            self.expect(".")
        return self.triples

    def directive(self):
        kind, value, line = self.next()
        pkind, pname, pline = self.next()
        if pkind != "pname" or not pname.endswith(":"):
            raise ParseError(f"bad prefix name {pname!r}", pline)
        ikind, iri, iline = self.next()
        if ikind != "iri":
            raise ParseError("prefix needs an IRI", iline)
        ns = iri[1:-1]
        if not is_absolute_iri(ns):
            raise ParseError(f"relative namespace IRI {ns!r}", iline)
        self.prefixes[pname[:-1]] = ns
        if value == "@prefix":
            self.expect(".")

    def subject(self) -> Term:
        kind, value, line = self.peek()
        if value == "[":
            if self.fmt == NTRIPLES:
                raise ParseError("property lists are not allowed in N-Triples", line)
            return self.blank_property_list()
        term = self.term()
        if term.is_literal:
            raise ParseError("literal in subject position", line)
        return term

    def predicate_object_list(self, subject: Term):
        while True:
            predicate = self.verb()
            self.object_list(subject, predicate)
            if not self.at(";"):
                return
            if self.fmt == NTRIPLES:
                raise ParseError("';' is not allowed in N-Triples", self.peek()[2])
            while self.at(";"):
                self.next()
            if self.at(".") or self.at("]"):
                return

    def verb(self) -> Term:
        kind, value, line = self.peek()
        if kind == "word" and value == "a":
            if self.fmt == NTRIPLES:
                raise ParseError("'a' is not allowed in N-Triples", line)
            self.next()
            return IRI(RDF_TYPE)
        term = self.term()
        if not term.is_iri:
            raise ParseError("predicate must be an IRI", line)
        return term

    def object_list(self, subject: Term, predicate: Term):
        while True:
            if self.at("["):
                obj = self.blank_property_list()
            else:
                obj = self.term()
            self.triples.append(Triple(subject, predicate, obj))
            if not self.at(","):
                return
            if self.fmt == NTRIPLES:
                raise ParseError("',' is not allowed in N-Triples", self.peek()[2])
            self.next()

    def blank_property_list(self) -> Term:
        self.expect("[")
        self.anon += 1
        node = BNode(f"{self.bnode_prefix}anon{self.anon}")
        if not self.at("]"):
            self.predicate_object_list(node)
        self.expect("]")
        return node

    def term(self) -> Term:
        kind, value, line = self.next()
        if kind == "iri":
            iri = value[1:-1]
            if not is_absolute_iri(iri):
                raise ParseError(f"relative IRI {iri!r}", line)
            return IRI(iri)
        if kind == "pname":
            if self.fmt == NTRIPLES:
                raise ParseError("prefixed names are not allowed in N-Triples", line)
            prefix, _, local = value.partition(":")
            if prefix not in self.prefixes:
                raise ParseError(f"undeclared prefix {prefix!r}", line)
            return IRI(self.prefixes[prefix] + local)
        if kind == "bnode":
            return BNode(self.bnode_prefix + value[2:])
        if kind == "string":
            lexical = _unescape(value[1:-1], line)
            if self.peek()[0] == "dtmark":
                self.next()
                dt = self.term()
                if not dt.is_iri:
                    raise ParseError("datatype must be an IRI", line)
                datatype = None if dt.value == XSD_STRING else dt.value
                return Term("literal", lexical, datatype)
            if self.peek()[0] == "lang":
                raise ParseError("language-tagged literals are not supported", line)
            return Term("literal", lexical)
        if self.fmt == TURTLE:
            if kind == "number":
                if "e" in value or "E" in value:
                    return Term("literal", value, XSD + "double")
                if "." in value:
                    return Term("literal", value, XSD + "decimal")
                return Term("literal", value, XSD + "integer")
            if kind == "word" and value in ("true", "false"):
                return Term("literal", value, XSD + "boolean")
        raise ParseError(f"unexpected token {value!r}", line)


def parse_document(text: str, format: str = TURTLE,
                   prefixes: Optional[Mapping[str, str]] = None,
                   bnode_prefix: str = "") -> List[Triple]:
    """Parse a document into triples with every prefixed name expanded.

    Prefixes default to the project's fixed table; documents may add their
    own. ``bnode_prefix`` is prepended to blank node labels, which lets a
    loader keep blank nodes from different documents apart.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}")
    if prefixes is None:
        from hypercoord.vocab import PREFIXES
        prefixes = PREFIXES
    return _Parser(text, format, prefixes, bnode_prefix).parse()


def read_prefixes(text: str) -> Dict[str, str]:
    """Only the prefix declarations of a Turtle document."""
    parser = _Parser(text, TURTLE, {}, "")
    parser.parse()
    return parser.prefixes


def _escape(value: str) -> str:
    return (value.replace("\\", "\\\\").replace('"', '\\"')
            .replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t"))


def term_to_nt(term: Term) -> str:
    if term.is_iri:
        return f"<{term.value}>"
    if term.is_bnode:
        return f"_:{term.value}"
    if term.is_literal:
        lit = f'"{_escape(term.value)}"'
        if term.datatype:
            lit += f"^^<{term.datatype}>"
        return lit
    raise ValueError(f"cannot serialize {term!r}")


def serialize_document(triples: Iterable[Triple]) -> str:
    """Canonical N-Triples: one statement per line, lines sorted."""
    lines = sorted({" ".join(term_to_nt(t) for t in triple) + " ." for triple in triples})
    return "".join(line + "\n" for line in lines)


def _compact(iri: str, prefixes: Mapping[str, str]) -> Optional[str]:
    best = None
    for prefix, ns in prefixes.items():
        if iri.startswith(ns) and (best is None or len(ns) > len(prefixes[best])):
            local = iri[len(ns):]
            if re.fullmatch(r"(?:[A-Za-z0-9_\-](?:[A-Za-z0-9_\-.]*[A-Za-z0-9_\-])?)?", local):
                best = prefix
    if best is None:
        return None
    return f"{best}:{iri[len(prefixes[best]):]}"


def serialize_turtle(triples: Iterable[Triple],
                     prefixes: Optional[Mapping[str, str]] = None) -> str:
    """Readable Turtle grouped by subject; parses back to the same set."""
    if prefixes is None:
        from hypercoord.vocab import PREFIXES
        prefixes = PREFIXES

    def fmt(term: Term, predicate=False) -> str:
        if predicate and term.value == RDF_TYPE:
            return "a"
        if term.is_iri:
            return _compact(term.value, prefixes) or term_to_nt(term)
        if term.is_literal and term.datatype:
            short = _compact(term.datatype, prefixes)
            if short:
                return f'"{_escape(term.value)}"^^{short}'
        return term_to_nt(term)

    grouped = defaultdict(lambda: defaultdict(list))
    for s, p, o in sorted(set(triples)):
        grouped[s][p].append(o)
    out = [f"@prefix {k}: <{v}> ." for k, v in sorted(prefixes.items())]
    for s in sorted(grouped):
        out.append("")
        preds = sorted(grouped[s], key=lambda p: (p.value != RDF_TYPE, p))
        parts = [f"{fmt(p, True)} {', '.join(fmt(o) for o in grouped[s][p])}" for p in preds]
        out.append(fmt(s) + " " + " ;\n    ".join(parts) + " .")
    return "\n".join(out) + "\n"
