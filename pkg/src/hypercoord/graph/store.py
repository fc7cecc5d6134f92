"""In-memory triple store with basic graph pattern matching.

Queries are conjunctions of triple patterns. A pattern may mark its
predicate as a zero-or-more path (``p*``), evaluated as reflexive-transitive
closure over the nodes that occur in the store.
"""

from __future__ import annotations

import threading
from collections import defaultdict, deque
from typing import Dict, Iterable, Iterator, List, Optional, Sequence

from hypercoord.graph.terms import Term, Triple, TriplePattern

Binding = Dict[str, Term]


class TripleStore:
    def __init__(self, triples: Iterable[Triple] = ()):
        self._lock = threading.RLock()
        self._triples = set()
        self._spo = defaultdict(lambda: defaultdict(set))
        self._pos = defaultdict(lambda: defaultdict(set))
        self._osp = defaultdict(lambda: defaultdict(set))
        self._node_refs = defaultdict(int)
        if triples:
            self.add_all(triples)

    @property
    def lock(self):
        """Gate serializing mutations and queries."""
        return self._lock

    def __len__(self):
        return len(self._triples)

    def __contains__(self, triple):
        return triple in self._triples

    def __iter__(self) -> Iterator[Triple]:
        with self._lock:
            return iter(sorted(self._triples))

    def snapshot(self) -> frozenset:
        with self._lock:
            return frozenset(self._triples)

    def copy(self) -> "TripleStore":
        return TripleStore(self.snapshot())

    def add(self, triple: Triple) -> bool:
        triple = Triple(*triple).validate()
        with self._lock:
            if triple in self._triples:
                return False
            s, p, o = triple
            self._triples.add(triple)
            self._spo[s][p].add(o)
            self._pos[p][o].add(s)
            self._osp[o][s].add(p)
            self._node_refs[s] += 1
            self._node_refs[o] += 1
            return True

    def add_all(self, triples: Iterable[Triple]) -> int:
        triples = [Triple(*t).validate() for t in triples]
        with self._lock:
            return sum(self.add(t) for t in triples)

    def remove(self, triple: Triple) -> bool:
        with self._lock:
            if triple not in self._triples:
                return False
            s, p, o = triple
            self._triples.discard(triple)
            _discard(self._spo, s, p, o)
            _discard(self._pos, p, o, s)
            _discard(self._osp, o, s, p)
            for node in (s, o):
                self._node_refs[node] -= 1
                if not self._node_refs[node]:
                    del self._node_refs[node]
            return True

    def remove_all(self, triples: Iterable[Triple]) -> int:
        with self._lock:
            return sum(self.remove(t) for t in list(triples))

    def nodes(self) -> set:
        """Every term occurring as subject or object."""
        with self._lock:
            return set(self._node_refs)

    def triples(self, s: Optional[Term] = None, p: Optional[Term] = None,
                o: Optional[Term] = None) -> Iterator[Triple]:
        """Yield stored triples matching the given terms; None is a wildcard."""
        with self._lock:
            return iter(list(self._scan(s, p, o)))

    def _scan(self, s, p, o):
        if s is not None:
            by_p = self._spo.get(s, {})
            preds = [p] if p is not None else list(by_p)
            for pp in preds:
                for oo in list(by_p.get(pp, ())):
                    if o is None or oo == o:
                        yield Triple(s, pp, oo)
        elif p is not None:
            by_o = self._pos.get(p, {})
            objs = [o] if o is not None else list(by_o)
            for oo in objs:
                for ss in list(by_o.get(oo, ())):
                    yield Triple(ss, p, oo)
        elif o is not None:
            for ss, preds in list(self._osp.get(o, {}).items()):
                for pp in list(preds):
                    yield Triple(ss, pp, o)
        else:
            yield from sorted(self._triples)

    def objects(self, s: Term, p: Term) -> List[Term]:
        return sorted(t.object for t in self.triples(s, p, None))

    def subjects(self, p: Term, o: Term) -> List[Term]:
        return sorted(t.subject for t in self.triples(None, p, o))

    def value(self, s: Term, p: Term) -> Optional[Term]:
        objs = self.objects(s, p)
        return objs[0] if objs else None

    def closure(self, start: Term, p: Term, backward: bool = False) -> set:
        """Nodes reachable from ``start`` over zero or more ``p`` edges.

        The zero-hop case only yields ``start`` when it occurs in the store.
        """
        with self._lock:
            if start not in self._node_refs:
                return set()
            index = self._pos if backward else self._spo
            seen = {start}
            queue = deque([start])
            while queue:
                node = queue.popleft()
                if backward:
                    nxt = index.get(p, {}).get(node, ())
                else:
                    nxt = index.get(node, {}).get(p, ())
                for n in nxt:
                    if n not in seen:
                        seen.add(n)
                        queue.append(n)
            return seen

    def match(self, patterns: Sequence[TriplePattern]) -> List[Binding]:
        return match_pattern(self, patterns)


def _discard(index, a, b, c):
    inner = index[a]
    inner[b].discard(c)
    if not inner[b]:
        del inner[b]
    if not inner:
        del index[a]


def _resolve(term: Term, binding: Binding) -> Optional[Term]:
    if term.is_variable:
        return binding.get(term.value)
    return term


def _bind(binding: Binding, term: Term, value: Term) -> Optional[Binding]:
    if not term.is_variable:
        return binding if term == value else None
    bound = binding.get(term.value)
    if bound is None:
        out = dict(binding)
        out[term.value] = value
        return out
    return binding if bound == value else None


def _extend(store: TripleStore, pat: TriplePattern, binding: Binding) -> Iterator[Binding]:
    s = _resolve(pat.subject, binding)
    o = _resolve(pat.object, binding)
    if not pat.path_star:
        p = _resolve(pat.predicate, binding)
        for t in store.triples(s, p, o):
            b = _bind(binding, pat.subject, t.subject)
            if b is not None:
                b = _bind(b, pat.predicate, t.predicate)
            if b is not None:
                b = _bind(b, pat.object, t.object)
            if b is not None:
                yield b
        return

    p = pat.predicate
    if s is not None:
        for node in store.closure(s, p):
            b = _bind(binding, pat.object, node)
            if b is not None:
                yield b
    elif o is not None:
        for node in store.closure(o, p, backward=True):
            b = _bind(binding, pat.subject, node)
            if b is not None:
                yield b
    else:
        for start in store.nodes():
            b0 = _bind(binding, pat.subject, start)
            if b0 is None:
                continue
            for node in store.closure(start, p):
                b = _bind(b0, pat.object, node)
                if b is not None:
                    yield b


def _order(patterns: Sequence[TriplePattern]) -> List[TriplePattern]:
    """Greedy join order: most constrained pattern first."""
    remaining = list(patterns)
    known: set = set()
    ordered = []
    while remaining:
        def score(pat):
            bound = sum(1 for t in pat[:3] if not t.is_variable or t.value in known)
            return (-bound, pat.path_star)
        best = min(remaining, key=score)
        remaining.remove(best)
        ordered.append(best)
        known.update(best.variables())
    return ordered


def match_pattern(store: TripleStore, patterns: Sequence[TriplePattern]) -> List[Binding]:
    """All solutions of a conjunctive pattern query, duplicates removed."""
    if not patterns:
        raise ValueError("at least one pattern is required")
    with store.lock:
        solutions: List[Binding] = [{}]
        for pat in _order(patterns):
            solutions = [b for sol in solutions for b in _extend(store, pat, sol)]
            if not solutions:
                return []
    unique = {}
    for sol in solutions:
        unique.setdefault(tuple(sorted(sol.items())), sol)
    return [unique[k] for k in sorted(unique)]


def assert_triples(store: TripleStore, triples: Iterable[Triple]) -> int:
    """Add triples to the store; returns how many were new."""
    return store.add_all(triples)
