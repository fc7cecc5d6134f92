"""Coordination protocols: message specs, role binding and enactment.

A protocol is data. Each message names a sender role and a receiver role by
semantic type, the state predicates that must hold on either side, the
commitments the receiver undertakes and the semantic type of the affordance
that carries the request. Predicates come with declarative evaluators so an
enactment can check them by reading property affordances.
"""

from __future__ import annotations

import json
import operator
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

from hypercoord import vocab
from hypercoord.errors import (
    AffordanceMissing, NotFound, ObservationUnavailable, ProtocolSchemaError, RoleUnbound,
    TransportError,
)
from hypercoord.graph import IRI, Literal, Term, Triple, TripleStore, parse_document

SENDER, RECEIVER = "sender", "receiver"

COMMITTED = "committed"
PRECONDITION_FAILED = "precondition_failed"
COMMITMENT_TIMEOUT = "commitment_timeout"
TRANSPORT_ERROR = "transport_error"

DEFAULT_DEADLINE = 20

_OPS = {"=": None, ">=": operator.ge, "<=": operator.le}
_TOL = 1e-9

I = vocab.INTR
SAME_AS = I.sameAs
STATE_PREDICATE = I.StatePredicate


@dataclass(frozen=True)
class StatePredicate:
    id: str
    subject_role: str
    operator: str = "="
    property_type: Optional[str] = None
    threshold: Union[float, bool, str, None] = None
    threshold_from_payload: Optional[str] = None
    unit: Optional[str] = None
    probe: Optional[str] = None

    def __post_init__(self):
        if self.subject_role not in (SENDER, RECEIVER):
            raise ProtocolSchemaError(f"{self.id}: subject role must be sender or receiver")
        if self.operator not in _OPS:
            raise ProtocolSchemaError(f"{self.id}: unknown operator {self.operator!r}")
        if not self.property_type and not self.probe:
            raise ProtocolSchemaError(f"{self.id}: needs a property type or a probe")
        if self.threshold is None and self.threshold_from_payload is None and not self.probe:
            raise ProtocolSchemaError(f"{self.id}: needs a threshold")

    def threshold_for(self, payload: Optional[dict]):
        if self.threshold_from_payload is None:
            return self.threshold
        try:
            return (payload or {})[self.threshold_from_payload]
        except KeyError:
            raise ObservationUnavailable(
                f"{self.id}: payload has no field {self.threshold_from_payload!r}") from None

    def compare(self, value, threshold) -> bool:
        if self.operator == "=":
            if isinstance(threshold, bool) or isinstance(value, bool):
                return bool(value) == bool(threshold) and isinstance(value, bool)
            if isinstance(threshold, (int, float)):
                return abs(float(value) - float(threshold)) <= _TOL
            return value == threshold
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        if self.operator == ">=":
            return value >= threshold - _TOL
        return value <= threshold + _TOL

    def to_json(self) -> dict:
        doc = {"role": self.subject_role, "operator": self.operator}
        for key, value in (("propertyType", self.property_type), ("threshold", self.threshold),
                           ("thresholdFromPayload", self.threshold_from_payload),
                           ("unit", self.unit), ("probe", self.probe)):
            if value is not None:
                doc[key] = vocab.compact(value) if key == "propertyType" else value
        return doc

    @classmethod
    def from_json(cls, pid: str, doc: dict) -> "StatePredicate":
        try:
            ptype = doc.get("propertyType")
            return cls(vocab.expand(pid), doc["role"], doc.get("operator", "="),
                       vocab.expand(ptype) if ptype else None, doc.get("threshold"),
                       doc.get("thresholdFromPayload"), doc.get("unit"), doc.get("probe"))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ProtocolSchemaError(f"malformed predicate {pid}: {exc}") from exc


@dataclass(frozen=True)
class MessageSpec:
    id: str
    sender_role: str
    receiver_role: str
    affordance_type: str
    sender_preconditions: Tuple[str, ...] = ()
    desired_postconditions: Tuple[str, ...] = ()
    receiver_preconditions: Tuple[str, ...] = ()
    commitments: Tuple[str, ...] = ()
    payload_field: str = "value"
    payload_type: str = "number"
    payload_unit: Optional[str] = None
    sequence: int = 0
    sender_node: Optional[str] = None
    receiver_node: Optional[str] = None
    affordance_node: Optional[str] = None

    def __post_init__(self):
        # predicate lists are sets in the graph form; keep a canonical order
        for name in ("sender_preconditions", "desired_postconditions",
                     "receiver_preconditions", "commitments"):
            object.__setattr__(self, name, tuple(sorted(set(getattr(self, name)))))
        if not self.affordance_type:
            raise ProtocolSchemaError(f"{self.id}: affordance type missing")
        if self.sender_role == self.receiver_role:
            raise ProtocolSchemaError(f"{self.id}: sender and receiver play the same role")

    def predicates(self) -> List[str]:
        return list(self.sender_preconditions + self.desired_postconditions
                    + self.receiver_preconditions + self.commitments)

    def check_payload(self, payload: dict):
        if not isinstance(payload, dict) or self.payload_field not in payload:
            raise ProtocolSchemaError(f"{self.id}: payload needs field {self.payload_field!r}")
        value = payload[self.payload_field]
        ok = {"number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
              "boolean": lambda v: isinstance(v, bool),
              "string": lambda v: isinstance(v, str)}.get(self.payload_type, lambda v: True)
        if not ok(value):
            raise ProtocolSchemaError(f"{self.id}: {self.payload_field} must be a {self.payload_type}")


@dataclass
class CoordinationProtocol:
    messages: List[MessageSpec]
    predicates: Dict[str, StatePredicate]

    def __post_init__(self):
        self.messages = sorted(self.messages, key=lambda m: (m.sequence, m.id))

    def message(self, mid: str) -> MessageSpec:
        mid = vocab.expand(mid)
        for m in self.messages:
            if m.id == mid:
                return m
        raise KeyError(mid)

    def plan(self) -> List[MessageSpec]:
        return list(self.messages)


# -- parsing ------------------------------------------------------------------

class _Aliases:
    """Union-find over intr:sameAs so alternate node names collapse."""

    def __init__(self, store: TripleStore):
        self.parent: Dict[Term, Term] = {}
        for t in store.triples(None, SAME_AS, None):
            a, b = self.find(t.subject), self.find(t.object)
            if a != b:
                lo, hi = sorted((a, b))
                self.parent[hi] = lo

    def find(self, x: Term) -> Term:
        while x in self.parent:
            x = self.parent[x]
        return x

    def members(self, x: Term, store: TripleStore) -> List[Term]:
        root = self.find(x)
        return [n for n in store.nodes() if self.find(n) == root] or [x]


def _objects(store, aliases, node, predicate) -> List[Term]:
    out = set()
    for n in aliases.members(node, store):
        out.update(store.objects(n, predicate))
    return sorted(out)


def _one(store, aliases, node, predicate, where, required=True) -> Optional[Term]:
    vals = _objects(store, aliases, node, predicate)
    if len(vals) > 1:
        raise ProtocolSchemaError(f"{where}: several values for {vocab.compact(predicate.value)}")
    if not vals:
        if required:
            raise ProtocolSchemaError(f"{where}: missing {vocab.compact(predicate.value)}")
        return None
    return vals[0]


def _literal(term: Optional[Term]):
    return None if term is None else term.python_value()


def _role_type(store, aliases, node, where) -> str:
    types = [t for t in _objects(store, aliases, node, vocab.RDF_TYPE)]
    if len(types) != 1:
        raise ProtocolSchemaError(f"{where}: role node needs exactly one type, found {len(types)}")
    return types[0].value


def _predicate_from_graph(store, aliases, pid: Term) -> StatePredicate:
    where = vocab.compact(pid.value)
    if STATE_PREDICATE not in _objects(store, aliases, pid, vocab.RDF_TYPE):
        raise ProtocolSchemaError(f"predicate {where} has no evaluator")
    role = _literal(_one(store, aliases, pid, I.subjectRole, where))
    op = _literal(_one(store, aliases, pid, I.operator, where, required=False)) or "="
    ptype = _one(store, aliases, pid, I.propertyType, where, required=False)
    return StatePredicate(
        pid.value, role, op, ptype.value if ptype else None,
        _literal(_one(store, aliases, pid, I.threshold, where, required=False)),
        _literal(_one(store, aliases, pid, I.thresholdFromPayload, where, required=False)),
        _literal(_one(store, aliases, pid, I.unit, where, required=False)),
        _literal(_one(store, aliases, pid, I.probe, where, required=False)),
    )


def protocol_from_triples(triples: Iterable[Triple]) -> CoordinationProtocol:
    store = triples if isinstance(triples, TripleStore) else TripleStore(triples)
    aliases = _Aliases(store)
    messages, predicates = [], {}
    for msg in sorted(store.subjects(vocab.RDF_TYPE, vocab.MESSAGE)):
        where = vocab.compact(msg.value)
        sender = _one(store, aliases, msg, vocab.HAS_SENDER, where)
        receiver = _one(store, aliases, msg, vocab.HAS_RECEIVER, where)
        aff = _one(store, aliases, msg, vocab.HAS_AFFORDANCE, where)
        aff_types = _objects(store, aliases, aff, vocab.RDF_TYPE)
        if len(aff_types) != 1:
            raise ProtocolSchemaError(f"{where}: affordance node needs exactly one semantic type")

        def refs(node, pred):
            return tuple(t.value for t in _objects(store, aliases, node, pred))

        spec = MessageSpec(
            id=msg.value,
            sender_role=_role_type(store, aliases, sender, where + " sender"),
            receiver_role=_role_type(store, aliases, receiver, where + " receiver"),
            affordance_type=aff_types[0].value,
            sender_preconditions=refs(sender, vocab.PRECONDITION),
            desired_postconditions=refs(sender, vocab.DESIRED_POSTCONDITION),
            receiver_preconditions=refs(receiver, vocab.PRECONDITION),
            commitments=refs(receiver, vocab.COMMITMENT),
            payload_field=_literal(_one(store, aliases, msg, I.payloadField, where, False)) or "value",
            payload_type=_literal(_one(store, aliases, msg, I.payloadType, where, False)) or "number",
            payload_unit=_literal(_one(store, aliases, msg, I.payloadUnit, where, False)),
            sequence=_literal(_one(store, aliases, msg, I.sequence, where, False)) or 0,
            sender_node=sender.value, receiver_node=receiver.value, affordance_node=aff.value,
        )
        for pid in spec.predicates():
            if pid not in predicates:
                predicates[pid] = _predicate_from_graph(store, aliases, IRI(pid))
        messages.append(spec)
    if not messages:
        raise ProtocolSchemaError("no intr:Message in the document")
    return CoordinationProtocol(messages, predicates)


def protocol_to_triples(protocol: CoordinationProtocol) -> List[Triple]:
    T, out = Triple, []
    for m in protocol.messages:
        msg = IRI(m.id)
        s = IRI(m.sender_node or m.id + "_sender")
        r = IRI(m.receiver_node or m.id + "_receiver")
        a = IRI(m.affordance_node or m.id + "_affordance")
        out += [T(msg, vocab.RDF_TYPE, vocab.MESSAGE), T(msg, vocab.HAS_SENDER, s),
                T(msg, vocab.HAS_RECEIVER, r), T(msg, vocab.HAS_AFFORDANCE, a),
                T(s, vocab.RDF_TYPE, IRI(m.sender_role)), T(r, vocab.RDF_TYPE, IRI(m.receiver_role)),
                T(a, vocab.RDF_TYPE, IRI(m.affordance_type)),
                T(msg, I.sequence, Literal(m.sequence)),
                T(msg, I.payloadField, Literal(m.payload_field)),
                T(msg, I.payloadType, Literal(m.payload_type))]
        if m.payload_unit is not None:
            out.append(T(msg, I.payloadUnit, Literal(m.payload_unit)))
        out += [T(s, vocab.PRECONDITION, IRI(p)) for p in m.sender_preconditions]
        out += [T(s, vocab.DESIRED_POSTCONDITION, IRI(p)) for p in m.desired_postconditions]
        out += [T(r, vocab.PRECONDITION, IRI(p)) for p in m.receiver_preconditions]
        out += [T(r, vocab.COMMITMENT, IRI(p)) for p in m.commitments]
    for pid, p in protocol.predicates.items():
        node = IRI(pid)
        out += [T(node, vocab.RDF_TYPE, STATE_PREDICATE),
                T(node, I.subjectRole, Literal(p.subject_role)),
                T(node, I.operator, Literal(p.operator))]
        if p.property_type:
            out.append(T(node, I.propertyType, IRI(p.property_type)))
        for pred, value in ((I.threshold, p.threshold),
                            (I.thresholdFromPayload, p.threshold_from_payload),
                            (I.unit, p.unit), (I.probe, p.probe)):
            if value is not None:
                out.append(T(node, pred, Literal(value)))
    return sorted(set(out))


def protocol_to_json(protocol: CoordinationProtocol) -> dict:
    c = vocab.compact
    msgs = []
    for m in protocol.messages:
        msgs.append({
            "id": c(m.id),
            "sequence": m.sequence,
            "sender": {"node": c(m.sender_node) if m.sender_node else None,
                       "role": c(m.sender_role),
                       "preconditions": [c(p) for p in m.sender_preconditions],
                       "desiredPostconditions": [c(p) for p in m.desired_postconditions]},
            "receiver": {"node": c(m.receiver_node) if m.receiver_node else None,
                         "role": c(m.receiver_role),
                         "preconditions": [c(p) for p in m.receiver_preconditions],
                         "commitments": [c(p) for p in m.commitments]},
            "affordance": {"node": c(m.affordance_node) if m.affordance_node else None,
                           "type": c(m.affordance_type)},
            "payload": {"field": m.payload_field, "type": m.payload_type, "unit": m.payload_unit},
        })
    preds = {c(pid): p.to_json() for pid, p in sorted(protocol.predicates.items())}
    return {"messages": msgs, "predicates": preds}


def protocol_from_json(doc: dict) -> CoordinationProtocol:
    e = vocab.expand

    def opt(v):
        return e(v) if v else None

    try:
        predicates = {e(pid): StatePredicate.from_json(pid, p)
                      for pid, p in doc.get("predicates", {}).items()}
        messages = []
        for m in doc["messages"]:
            s, r, a, pl = m["sender"], m.get("receiver"), m["affordance"], m.get("payload", {})
            if not r:
                raise ProtocolSchemaError(f"{m.get('id')}: missing receiver")
            messages.append(MessageSpec(
                id=e(m["id"]), sender_role=e(s["role"]), receiver_role=e(r["role"]),
                affordance_type=e(a["type"]),
                sender_preconditions=tuple(e(p) for p in s.get("preconditions", [])),
                desired_postconditions=tuple(e(p) for p in s.get("desiredPostconditions", [])),
                receiver_preconditions=tuple(e(p) for p in r.get("preconditions", [])),
                commitments=tuple(e(p) for p in r.get("commitments", [])),
                payload_field=pl.get("field", "value"), payload_type=pl.get("type", "number"),
                payload_unit=pl.get("unit"), sequence=int(m.get("sequence", 0)),
                sender_node=opt(s.get("node")), receiver_node=opt(r.get("node")),
                affordance_node=opt(a.get("node")),
            ))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ProtocolSchemaError(f"malformed protocol document: {exc}") from exc
    for m in messages:
        for pid in m.predicates():
            if pid not in predicates:
                raise ProtocolSchemaError(f"predicate {vocab.compact(pid)} has no evaluator")
    if not messages:
        raise ProtocolSchemaError("no messages in the document")
    return CoordinationProtocol(messages, predicates)


def parse_protocol(doc) -> CoordinationProtocol:
    """Accepts Turtle text, a JSON string or dict, or an iterable of triples."""
    if isinstance(doc, dict):
        return protocol_from_json(doc)
    if isinstance(doc, (str, bytes)):
        text = doc.decode("utf-8") if isinstance(doc, bytes) else doc
        if text.lstrip().startswith("{"):
            try:
                return protocol_from_json(json.loads(text))
            except ValueError as exc:
                raise ProtocolSchemaError(f"not JSON: {exc}") from exc
        return protocol_from_triples(parse_document(text))
    return protocol_from_triples(doc)


def load_protocol(name: str = "request-flowrate-change") -> CoordinationProtocol:
    return parse_protocol(vocab.asset_text(f"protocols/{name}.ttl"))


# -- binding ------------------------------------------------------------------

@dataclass(frozen=True)
class RoleBinding:
    message: str
    sender: str
    receiver: str
    affordance: str
    form_href: str
    sender_td: str
    provider_td: str   # TD holding the affordance; differs from the receiver's after redirection
    hops: int = 0

    def to_json(self) -> dict:
        c = vocab.compact
        return {"message": c(self.message), "sender": c(self.sender), "receiver": c(self.receiver),
                "affordance": c(self.affordance), "form": self.form_href,
                "senderTD": self.sender_td, "providerTD": self.provider_td, "hops": self.hops}


def bind_roles(protocol: CoordinationProtocol, client, sender: Optional[Term] = None,
               hop_budget: int = 3, graph: Optional[TripleStore] = None) -> List[RoleBinding]:
    """Pairs of agents playing each message's roles, with the resolved affordance.

    Agents are found by semantic type in the knowledge graph; the affordance
    is looked up by semantic type in the receiver's TD, following TD links
    when the receiver does not offer it directly.
    """
    from hypercoord.env.client import has_action_of_type

    graph = graph if graph is not None else client.fetch_graph()
    out = []
    for m in protocol.plan():
        senders = sorted(graph.subjects(vocab.RDF_TYPE, IRI(m.sender_role)))
        if sender is not None:
            senders = [s for s in senders if s == sender]
        if not senders:
            raise RoleUnbound(m.sender_role)
        receivers = sorted(graph.subjects(vocab.RDF_TYPE, IRI(m.receiver_role)))
        if not receivers:
            raise RoleUnbound(m.receiver_role)
        for s in senders:
            for r in receivers:
                if s == r:
                    continue
                start = client.thing_url(r.value)
                try:
                    nav = client.navigate(start, has_action_of_type(m.affordance_type), hop_budget)
                except NotFound as exc:
                    raise AffordanceMissing(m.affordance_type) from exc
                action = nav.td.find_action(m.affordance_type)
                out.append(RoleBinding(m.id, s.value, r.value, action.id, nav.td.form_url(action),
                                       client.thing_url(s.value), nav.uri, nav.hops))
    return out


# -- evaluation ---------------------------------------------------------------

Probe = Callable[[StatePredicate, RoleBinding], object]


def evaluate_predicate(pred: StatePredicate, binding: RoleBinding, client,
                       payload: Optional[dict] = None,
                       probes: Optional[Dict[str, Probe]] = None) -> Tuple[bool, object]:
    """Observe the predicate's subject and compare; returns (holds, observed value)."""
    if pred.probe:
        fn = (probes or {}).get(pred.probe)
        if fn is None:
            raise ObservationUnavailable(f"{pred.id}: no probe {pred.probe!r}")
        value = fn(pred, binding)
    else:
        url = binding.sender_td if pred.subject_role == SENDER else binding.provider_td
        try:
            td = client.get_td(url)
        except NotFound as exc:
            raise ObservationUnavailable(f"{pred.id}: {exc}") from exc
        prop = td.find_property(pred.property_type)
        if prop is None:
            raise ObservationUnavailable(
                f"{pred.id}: {td.id} exposes no {vocab.compact(pred.property_type)} property")
        try:
            value = client.read_property(td, prop)
        except NotFound as exc:
            raise ObservationUnavailable(f"{pred.id}: {exc}") from exc
    return pred.compare(value, pred.threshold_for(payload)), value


@dataclass
class EnactmentRecord:
    message: str
    binding: RoleBinding
    payload: dict
    started: int
    outcome: Optional[str] = None
    failed_predicate: Optional[str] = None
    detail: Optional[str] = None
    invoked_at: Optional[int] = None
    finished: Optional[int] = None
    observations: List[Tuple[str, object, int]] = field(default_factory=list)
    preconditions: List[Tuple[str, str]] = field(default_factory=list)  # (predicate, subject agent)

    def to_json(self) -> dict:
        c = vocab.compact
        return {
            "message": c(self.message), "binding": self.binding.to_json(), "payload": self.payload,
            "outcome": self.outcome,
            "failedPredicate": c(self.failed_predicate) if self.failed_predicate else None,
            "detail": self.detail, "started": self.started, "invokedAt": self.invoked_at,
            "finished": self.finished,
            "observations": [[c(p), v, t] for p, v, t in self.observations],
            "preconditions": [[c(p), c(a)] for p, a in self.preconditions],
        }


class Enactment:
    """One message exchange, driven step by step.

    ``start`` checks the sender's and the receiver's preconditions and, only
    if all hold, invokes the affordance. ``poll`` is then called once per
    simulation step until every commitment is observed or the deadline
    passes.
    """

    def __init__(self, protocol: CoordinationProtocol, binding: RoleBinding, payload: dict,
                 client, clock: Callable[[], int] = lambda: 0, deadline: int = DEFAULT_DEADLINE,
                 probes: Optional[Dict[str, Probe]] = None):
        self.protocol = protocol
        self.spec = protocol.message(binding.message)
        self.spec.check_payload(payload)
        self.binding = binding
        self.client = client
        self.clock = clock
        self.deadline = deadline
        self.probes = probes
        self.record = EnactmentRecord(binding.message, binding, dict(payload), clock())

    @property
    def done(self) -> bool:
        return self.record.outcome is not None

    def _finish(self, outcome, predicate=None, detail=None):
        self.record.outcome = outcome
        self.record.failed_predicate = predicate
        self.record.detail = detail
        self.record.finished = self.clock()
        return self.record

    def _observe(self, pid: str) -> bool:
        pred = self.protocol.predicates[pid]
        holds, value = evaluate_predicate(pred, self.binding, self.client,
                                          self.record.payload, self.probes)
        self.record.observations.append((pid, value, self.clock()))
        return holds

    def start(self) -> EnactmentRecord:
        b = self.binding
        checks = [(p, b.sender) for p in self.spec.sender_preconditions]
        checks += [(p, b.receiver) for p in self.spec.receiver_preconditions]
        try:
            for pid, _agent in checks:
                try:
                    holds = self._observe(pid)
                except ObservationUnavailable as exc:
                    return self._finish(PRECONDITION_FAILED, pid, str(exc))
                if not holds:
                    return self._finish(PRECONDITION_FAILED, pid)
            self.record.preconditions = checks
            body = dict(self.record.payload, message=b.message, sender=b.sender)
            resp = self.client.network.request("POST", b.form_href, json_body=body)
        except TransportError as exc:
            return self._finish(TRANSPORT_ERROR, detail=str(exc))
        self.record.invoked_at = self.clock()
        if resp.status == 409:
            doc = resp.json() or {}
            return self._finish(PRECONDITION_FAILED, doc.get("predicate"), doc.get("error"))
        if not resp.ok:
            return self._finish(TRANSPORT_ERROR, detail=f"HTTP {resp.status}")
        return self.poll()

    def poll(self) -> EnactmentRecord:
        if self.done:
            return self.record
        try:
            if all(self._observe(pid) for pid in self.spec.commitments):
                for pid in self.spec.desired_postconditions:
                    self._observe(pid)
                return self._finish(COMMITTED)
        except TransportError as exc:
            return self._finish(TRANSPORT_ERROR, detail=str(exc))
        except ObservationUnavailable as exc:
            return self._finish(COMMITMENT_TIMEOUT, detail=str(exc))
        if self.clock() - self.record.invoked_at >= self.deadline:
            return self._finish(COMMITMENT_TIMEOUT, self.spec.commitments[0] if self.spec.commitments else None)
        return self.record


def enact_message(protocol: CoordinationProtocol, binding: RoleBinding, payload: dict, client,
                  deadline: int = DEFAULT_DEADLINE, clock: Optional[Callable[[], int]] = None,
                  tick: Optional[Callable[[], None]] = None,
                  probes: Optional[Dict[str, Probe]] = None) -> EnactmentRecord:
    """Run an enactment to completion, calling ``tick`` to advance time between polls."""
    steps = [0]
    clock = clock or (lambda: steps[0])
    enactment = Enactment(protocol, binding, payload, client, clock, deadline, probes)
    enactment.start()
    while not enactment.done:
        if tick is not None:
            tick()
        steps[0] += 1
        enactment.poll()
    return enactment.record
