import threading

import pytest

from hypercoord.errors import MalformedTerm
from hypercoord.graph import (
    BNode, IRI, Literal, Triple, TripleStore, Var, assert_triples, match_pattern, pattern,
)
from hypercoord.graph.terms import XSD

EX = "http://example.org/"
a, b, c, d = (IRI(EX + n) for n in "abcd")
p, q = IRI(EX + "p"), IRI(EX + "q")


def test_literal_constructors_pick_datatypes():
    assert Literal(True).datatype == XSD + "boolean"
    assert Literal(3).datatype == XSD + "integer"
    assert Literal(2.5).datatype == XSD + "decimal"
    assert Literal("x", XSD + "string") == Literal("x")
    assert Literal(2.5).python_value() == 2.5
    assert Literal(False).python_value() is False


def test_var_strips_question_mark():
    assert Var("?x") == Var("x")


def test_terms_order_across_kinds_and_datatypes():
    terms = [Literal("1"), Literal(1), IRI(EX), BNode("z"), Literal("1", EX + "t")]
    assert sorted(terms) == sorted(reversed(terms))


def test_assert_triples_counts_new_triples():
    store = TripleStore()
    assert assert_triples(store, [Triple(a, p, b), Triple(b, p, c), Triple(c, p, d)]) == 3
    assert assert_triples(store, [Triple(a, p, b)]) == 0
    assert len(store) == 3


@pytest.mark.parametrize("bad", [
    Triple(Var("x"), p, b),
    Triple(a, p, Var("y")),
    Triple(IRI("relative/iri"), p, b),
    Triple(Literal(1), p, b),
    Triple(a, Literal("p"), b),
])
def test_assert_rejects_malformed_triples(bad):
    store = TripleStore()
    with pytest.raises(MalformedTerm):
        assert_triples(store, [bad])
    assert len(store) == 0


def test_star_pattern_requires_iri_predicate():
    with pytest.raises(MalformedTerm):
        pattern(a, Var("p"), Var("x"), star=True)


def test_remove_updates_indexes_and_nodes():
    store = TripleStore([Triple(a, p, b), Triple(b, p, c)])
    assert store.remove(Triple(a, p, b))
    assert not store.remove(Triple(a, p, b))
    assert a not in store.nodes()
    assert store.objects(a, p) == []
    assert store.subjects(p, c) == [b]


def test_empty_store_returns_no_bindings():
    assert match_pattern(TripleStore(), [pattern(Var("s"), Var("p"), Var("o"))]) == []
    assert match_pattern(TripleStore(), [pattern(a, p, Var("x"), star=True)]) == []


def test_match_requires_patterns():
    with pytest.raises(ValueError):
        match_pattern(TripleStore(), [])


def test_star_path_closure_example():
    store = TripleStore([Triple(a, p, b), Triple(b, p, c)])
    rows = match_pattern(store, [pattern(a, p, Var("x"), star=True)])
    assert {r["x"] for r in rows} == {a, b, c}


def test_star_path_backwards_from_bound_object():
    store = TripleStore([Triple(a, p, b), Triple(b, p, c)])
    rows = match_pattern(store, [pattern(Var("x"), p, c, star=True)])
    assert {r["x"] for r in rows} == {a, b, c}


def test_star_path_handles_cycles():
    store = TripleStore([Triple(a, p, b), Triple(b, p, a)])
    rows = match_pattern(store, [pattern(a, p, Var("x"), star=True)])
    assert {r["x"] for r in rows} == {a, b}


def test_join_binds_every_variable_and_deduplicates():
    store = TripleStore([Triple(a, p, b), Triple(b, q, c), Triple(b, q, d), Triple(a, q, b)])
    rows = match_pattern(store, [pattern(Var("x"), p, Var("y")),
                                 pattern(Var("y"), q, Var("z"))])
    assert rows == [{"x": a, "y": b, "z": c}, {"x": a, "y": b, "z": d}]
    for r in rows:
        assert set(r) == {"x", "y", "z"}


def test_repeated_variable_in_pattern():
    store = TripleStore([Triple(a, p, a), Triple(a, p, b)])
    assert match_pattern(store, [pattern(Var("x"), p, Var("x"))]) == [{"x": a}]


def test_predicate_variable():
    store = TripleStore([Triple(a, p, b), Triple(a, q, b)])
    rows = match_pattern(store, [pattern(a, Var("r"), b)])
    assert {r["r"] for r in rows} == {p, q}


def test_literals_compare_by_lexical_form_and_datatype():
    store = TripleStore([Triple(a, p, Literal(1)), Triple(a, p, Literal("1"))])
    assert match_pattern(store, [pattern(a, p, Literal(1))]) == [{}]
    assert len(match_pattern(store, [pattern(a, p, Var("v"))])) == 2
    assert match_pattern(store, [pattern(a, p, Literal(1.0))]) == []


def test_concurrent_writers_and_readers_see_consistent_store():
    store = TripleStore()
    errors = []

    def writer(k):
        for i in range(200):
            store.add(Triple(IRI(f"{EX}s{k}-{i}"), p, IRI(f"{EX}o{i}")))

    def reader():
        try:
            for _ in range(50):
                rows = match_pattern(store, [pattern(Var("s"), p, Var("o"))])
                assert len(rows) == len({(r["s"], r["o"]) for r in rows})
        except Exception as exc:  # pragma: no cover - reported below
            errors.append(exc)

    threads = [threading.Thread(target=writer, args=(k,)) for k in range(4)]
    threads += [threading.Thread(target=reader) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(store) == 800
