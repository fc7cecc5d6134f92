"""JSON encoding of pattern queries and their results.

A query document looks like::

    {"select": ["comp", "rel", "dep"],
     "where": [[":agent-p", "elem:manages", "?subsystem"],
               ["?subsystem", "elem:hasComponent*", "?comp"],
               ["?comp", "?rel", "?dep"],
               ["?rel", "a", "elem:processRelation"]]}

Strings starting with ``?`` are variables, ``_:`` blank nodes, ``<...>`` or
prefixed names IRIs; a trailing ``*`` on a predicate makes it a
zero-or-more path. Literals are JSON numbers/booleans or
``{"literal": "4.0", "datatype": "xsd:decimal"}``.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from hypercoord import vocab
from hypercoord.graph.terms import BNode, IRI, Literal, Term, TriplePattern, Var, pattern


def decode_term(value) -> Term:
    if isinstance(value, bool) or isinstance(value, (int, float)):
        return Literal(value)
    if isinstance(value, dict):
        dt = value.get("datatype")
        return Literal(str(value["literal"]), vocab.expand(dt) if dt else None)
    if not isinstance(value, str) or not value:
        raise ValueError(f"cannot decode term {value!r}")
    if value.startswith("?"):
        return Var(value[1:])
    if value.startswith("_:"):
        return BNode(value[2:])
    if value.startswith("<") and value.endswith(">"):
        return IRI(value[1:-1])
    if value == "a":
        return vocab.RDF_TYPE
    return IRI(vocab.expand(value))


def encode_term(term: Term):
    if term.is_literal:
        out = {"literal": term.value}
        if term.datatype:
            out["datatype"] = term.datatype
        return out
    if term.is_bnode:
        return "_:" + term.value
    if term.is_variable:
        return "?" + term.value
    return term.value


def decode_query(doc: dict) -> Tuple[List[TriplePattern], Optional[List[str]]]:
    where = doc.get("where") if isinstance(doc, dict) else None
    if not where:
        raise ValueError("query needs a non-empty 'where' list")
    patterns = []
    for row in where:
        if len(row) != 3:
            raise ValueError(f"pattern must have three terms: {row!r}")
        s, p, o = row
        star = isinstance(p, str) and p.endswith("*") and len(p) > 1
        if star:
            p = p[:-1]
        patterns.append(pattern(decode_term(s), decode_term(p), decode_term(o), star))
    select = doc.get("select")
    if select is not None:
        select = [v.lstrip("?") for v in select]
    return patterns, select


def encode_bindings(rows: List[Dict[str, Term]], select: Optional[List[str]] = None) -> List[dict]:
    out = []
    seen = set()
    for row in rows:
        keys = select if select is not None else sorted(row)
        enc = {k: encode_term(row[k]) for k in keys if k in row}
        key = repr(sorted(enc.items(), key=lambda kv: kv[0]))
        if key not in seen:
            seen.add(key)
            out.append(enc)
    return out
