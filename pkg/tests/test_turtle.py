import pytest

from hypercoord import vocab
from hypercoord.errors import ParseError
from hypercoord.graph import (
    IRI, Literal, NTRIPLES, TURTLE, Triple, parse_document, serialize_document, serialize_turtle,
)
from hypercoord.graph.turtle import read_prefixes

P = vocab.P


def test_empty_document():
    assert parse_document("") == []
    assert parse_document("", NTRIPLES) == []
    assert serialize_document([]) == ""


def test_comma_object_list_with_fixed_prefixes():
    triples = parse_document(":pump-1 a elem:Component, brick:Pump.")
    assert sorted(triples) == sorted([
        Triple(P["pump-1"], vocab.RDF_TYPE, vocab.COMPONENT),
        Triple(P["pump-1"], vocab.RDF_TYPE, vocab.PUMP),
    ])


def test_semicolon_predicate_lists_and_literals():
    text = """@prefix ex: <http://example.org/> .
    ex:a ex:p 1 ; ex:q "two" ; ex:r 2.5 , true ;
         ex:s "x"^^<http://example.org/dt> .
    """
    ex = "http://example.org/"
    got = set(parse_document(text, prefixes={}))
    assert got == {
        Triple(IRI(ex + "a"), IRI(ex + "p"), Literal(1)),
        Triple(IRI(ex + "a"), IRI(ex + "q"), Literal("two")),
        Triple(IRI(ex + "a"), IRI(ex + "r"), Literal(2.5)),
        Triple(IRI(ex + "a"), IRI(ex + "r"), Literal(True)),
        Triple(IRI(ex + "a"), IRI(ex + "s"), Literal("x", ex + "dt")),
    }


def test_truncated_statement_reports_line():
    with pytest.raises(ParseError) as err:
        parse_document("x y")
    assert err.value.line == 1
    assert "line 1" in str(err.value)


def test_error_line_numbers_count_newlines():
    with pytest.raises(ParseError) as err:
        parse_document(":a :b :c .\n\n:d :e")
    assert err.value.line == 3


def test_unknown_prefix_is_an_error():
    with pytest.raises(ParseError):
        parse_document("nope:a nope:b nope:c .", prefixes={})


def test_ntriples_mode_rejects_turtle_shortcuts():
    with pytest.raises(ParseError):
        parse_document(":a a :b .", NTRIPLES)


def test_string_escapes_round_trip():
    t = Triple(IRI("http://e.org/a"), IRI("http://e.org/p"), Literal('quote " and \\ and \n'))
    assert parse_document(serialize_document([t]), NTRIPLES) == [t]


def test_serialize_document_is_sorted_and_terminated():
    ts = [Triple(IRI("http://e.org/b"), IRI("http://e.org/p"), IRI("http://e.org/c")),
          Triple(IRI("http://e.org/a"), IRI("http://e.org/p"), IRI("http://e.org/c"))]
    text = serialize_document(ts)
    lines = text.splitlines()
    assert lines == sorted(lines)
    assert all(line.endswith(" .") for line in lines)
    assert serialize_document(ts[:1]).count("\n") == 1


def test_blank_nodes_are_scoped_per_document():
    text = "_:x <http://e.org/p> <http://e.org/o> ."
    first = parse_document(text, NTRIPLES, bnode_prefix="d1-")
    second = parse_document(text, NTRIPLES, bnode_prefix="d2-")
    assert first[0].subject != second[0].subject
    assert parse_document(text, NTRIPLES)[0].subject.value == "x"


def test_anonymous_property_lists():
    triples = parse_document(":a :p [ :q :b ] .")
    assert len(triples) == 2
    node = [t.object for t in triples if t.predicate == P["p"]][0]
    assert node.is_bnode


def test_read_prefixes():
    assert read_prefixes("@prefix ex: <http://e.org/> .\nPREFIX y: <http://y.org/>") == {
        "ex": "http://e.org/", "y": "http://y.org/"}


def test_fixture_round_trips(built_fixture):
    assert set(parse_document(serialize_document(built_fixture), NTRIPLES)) == set(built_fixture)
    assert set(parse_document(serialize_turtle(built_fixture))) == set(built_fixture)
