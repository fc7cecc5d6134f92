from hypercoord.graph.terms import (
    BNode, IRI, Literal, Term, Triple, TriplePattern, Var, pattern,
)
from hypercoord.graph.store import TripleStore, assert_triples, match_pattern
from hypercoord.graph.turtle import (
    NTRIPLES, TURTLE, parse_document, serialize_document, serialize_turtle,
)

__all__ = [
    "BNode", "IRI", "Literal", "Term", "Triple", "TriplePattern", "Var", "pattern",
    "TripleStore", "assert_triples", "match_pattern",
    "NTRIPLES", "TURTLE", "parse_document", "serialize_document", "serialize_turtle",
]
