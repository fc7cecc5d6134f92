"""Coordination responsibilities: who an agent must coordinate with, and why.

Process dependencies come from one graph query over the system description::

    SELECT ?comp ?rel ?dep WHERE {
      <agent> elem:manages ?subsystem .
      ?subsystem elem:hasComponent* ?comp .
      ?comp ?rel ?dep .
      ?rel a elem:processRelation . }

Dependencies whose peer the agent manages itself are dropped, then grouped
per (relation, variable) into responsibilities, which together with the
agent's Thing Description make up its profile.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple, Union

from hypercoord import vocab
from hypercoord.errors import InvalidProfile, InvalidTD, SchemaError, UnknownAgent
from hypercoord.graph import IRI, Term, Triple, TripleStore, Var, match_pattern, pattern
from hypercoord.td import ThingDescription, parse_td, serialize_td

DOWNSTREAM = "downstream"
UPSTREAM = "upstream"


class ProcessDependency(NamedTuple):
    component: Term
    relation: Term
    peer: Term
    variable: Term


@dataclass(frozen=True)
class CoordinationResponsibility:
    id: Term
    owner: Term
    direction: str
    relation: Term
    variable: Term
    peers: Tuple[Term, ...]
    peer_agents: frozenset = frozenset()

    def with_peer_agents(self, agents) -> "CoordinationResponsibility":
        return CoordinationResponsibility(self.id, self.owner, self.direction, self.relation,
                                          self.variable, self.peers, frozenset(agents))

    def to_json(self) -> dict:
        return {
            "id": self.id.value,
            "owner": self.owner.value,
            "direction": self.direction,
            "relation": self.relation.value,
            "variable": self.variable.value,
            "peers": [p.value for p in self.peers],
            "peerAgents": sorted(a.value for a in self.peer_agents),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CoordinationResponsibility":
        try:
            direction = doc["direction"]
            if direction not in (DOWNSTREAM, UPSTREAM):
                raise InvalidProfile(f"bad CR direction {direction!r}")
            peers = tuple(sorted(IRI(vocab.expand(p)) for p in doc["peers"]))
            if not peers:
                raise InvalidProfile("a CR needs at least one peer")
            return cls(
                id=IRI(vocab.expand(doc["id"])),
                owner=IRI(vocab.expand(doc["owner"])),
                direction=direction,
                relation=IRI(vocab.expand(doc["relation"])),
                variable=IRI(vocab.expand(doc["variable"])),
                peers=peers,
                peer_agents=frozenset(IRI(vocab.expand(a)) for a in doc.get("peerAgents", ())),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidProfile(f"malformed CR: {exc}") from exc

    def triples(self) -> List[Triple]:
        d = vocab.DOWNSTREAM if self.direction == DOWNSTREAM else vocab.UPSTREAM
        out = [
            Triple(self.id, vocab.RDF_TYPE, vocab.CR_CLASS),
            Triple(self.id, vocab.CR_OWNER, self.owner),
            Triple(self.id, vocab.CR_DIRECTION, d),
            Triple(self.id, vocab.CR_RELATION, self.relation),
            Triple(self.id, vocab.CR_VARIABLE, self.variable),
        ]
        out += [Triple(self.id, vocab.CR_PEER, p) for p in self.peers]
        return out


def _agent_known(store: TripleStore, agent: Term):
    if not store.objects(agent, vocab.MANAGES):
        raise UnknownAgent(f"{agent!r} manages nothing in the description")


def managed_components(store: TripleStore, agent: Term) -> set:
    """Everything reachable from the agent's subsystems over hasComponent*."""
    _agent_known(store, agent)
    rows = match_pattern(store, [
        pattern(agent, vocab.MANAGES, Var("subsystem")),
        pattern(Var("subsystem"), vocab.HAS_COMPONENT, Var("comp"), star=True),
    ])
    return {row["comp"] for row in rows}


def dependency_query(agent: Term):
    """The dependency query as a list of triple patterns."""
    return [
        pattern(agent, vocab.MANAGES, Var("subsystem")),
        pattern(Var("subsystem"), vocab.HAS_COMPONENT, Var("comp"), star=True),
        pattern(Var("comp"), Var("rel"), Var("dep")),
        pattern(Var("rel"), vocab.RDF_TYPE, vocab.PROCESS_RELATION),
    ]


def infer_process_dependencies(store: TripleStore, agent: Term) -> List[ProcessDependency]:
    with store.lock:
        own = managed_components(store, agent)
        deps = set()
        for row in match_pattern(store, dependency_query(agent)):
            if row["dep"] in own:
                continue
            variables = store.objects(row["comp"], vocab.AFFECTED_VARIABLE) or [vocab.UNKNOWN_VARIABLE]
            for var in variables:
                deps.add(ProcessDependency(row["comp"], row["rel"], row["dep"], var))
    return sorted(deps)


def direction_of(relation: Term) -> str:
    return UPSTREAM if relation == vocab.INFLUENCED_BY else DOWNSTREAM


def cr_id(owner: Term, direction: str, variable: Term) -> Term:
    return IRI(f"{owner.value}-cr-{direction}-{vocab.local_name(variable)}")


def derive_responsibilities(deps: Iterable[ProcessDependency],
                            owner: Term) -> List[CoordinationResponsibility]:
    """One responsibility per (relation, variable) group of dependencies."""
    groups: Dict[Tuple[Term, Term], set] = {}
    for dep in deps:
        groups.setdefault((dep.relation, dep.variable), set()).add(dep.peer)
    crs = []
    for (relation, variable), peers in sorted(groups.items()):
        direction = direction_of(relation)
        crs.append(CoordinationResponsibility(
            id=cr_id(owner, direction, variable),
            owner=owner,
            direction=direction,
            relation=relation,
            variable=variable,
            peers=tuple(sorted(peers)),
        ))
    return sorted(crs, key=lambda c: c.id)


def infer_responsibilities(store: TripleStore, agent: Term) -> List[CoordinationResponsibility]:
    return derive_responsibilities(infer_process_dependencies(store, agent), agent)


def profile_iri(agent: Term) -> Term:
    """``:agent-p`` -> ``:profile-p``; other names get a ``-profile`` suffix."""
    local = vocab.local_name(agent)
    ns = agent.value[: len(agent.value) - len(local)]
    if local.startswith("agent-"):
        return IRI(ns + "profile-" + local[len("agent-"):])
    return IRI(agent.value + "-profile")


@dataclass
class AgentProfile:
    agent: Term
    profile: Term
    crs: List[CoordinationResponsibility]
    td: ThingDescription
    desired_states: List[Tuple[Term, str]] = field(default_factory=list)
    inbox: Optional[str] = None

    def triples(self) -> List[Triple]:
        p = self.profile
        out = [Triple(p, vocab.RDF_TYPE, vocab.AGENT_PROFILE)]
        for cr in self.crs:
            out.append(Triple(p, vocab.HAS_CR, cr.id))
            out += cr.triples()
        if not self.td.is_empty:
            out.append(Triple(p, vocab.HAS_TD, IRI(self.td.id)))
        for a in self.td.actions.values():
            out.append(Triple(p, vocab.HAS_ACTION, IRI(a.id)))
        for prop in self.td.properties.values():
            out.append(Triple(p, vocab.HAS_PROPERTY, IRI(prop.id)))
        for variable, _target in self.desired_states:
            out.append(Triple(p, vocab.DESIRED_STATE, variable))
        return sorted(set(out))

    def to_document(self) -> dict:
        doc = {
            "agent": self.agent.value,
            "profile": self.profile.value,
            "crs": [cr.to_json() for cr in self.crs],
            "td": serialize_td(self.td),
            "desiredStates": [{"variable": v.value, "target": t} for v, t in self.desired_states],
        }
        if self.inbox:
            doc["inbox"] = self.inbox
        return doc

    def peer_components(self) -> set:
        return {p for cr in self.crs for p in cr.peers}


def build_agent_profile(agent: Term, crs: List[CoordinationResponsibility],
                        td: ThingDescription, desired_states=(), inbox=None,
                        profile: Optional[Term] = None):
    """Profile triples plus the JSON document submitted to the registry."""
    try:
        td = parse_td(serialize_td(td))
    except SchemaError as exc:
        raise InvalidTD(str(exc)) from exc
    prof = AgentProfile(agent, profile or profile_iri(agent), list(crs), td,
                        [(v, t) for v, t in desired_states], inbox)
    return prof.triples(), prof.to_document()


def parse_profile(doc: Union[str, bytes, dict]) -> AgentProfile:
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except ValueError as exc:
            raise InvalidProfile(f"not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidProfile("a profile document must be a JSON object")
    try:
        agent = IRI(vocab.expand(doc["agent"]))
        profile = IRI(vocab.expand(doc["profile"]))
        td_doc = doc.get("td") or {"@id": agent.value}
        crs = [CoordinationResponsibility.from_json(c) for c in doc.get("crs", [])]
        desired = [(IRI(vocab.expand(d["variable"])), d.get("target", ""))
                   for d in doc.get("desiredStates", [])]
    except (KeyError, TypeError, AttributeError) as exc:
        raise InvalidProfile(f"malformed profile: {exc}") from exc
    try:
        td = parse_td(td_doc)
    except SchemaError as exc:
        raise InvalidProfile(f"embedded TD: {exc}") from exc
    return AgentProfile(agent, profile, crs, td, desired, doc.get("inbox"))
