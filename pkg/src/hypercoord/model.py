"""Integrated system description of the chilled-water plant.

A pump agent manages the pump group; each chiller branch (one chiller plus
its isolation valve) is managed by its own chiller agent. Process relations
are stored in both directions::

    pump-1  influences    chlr-i      (and chlr-i influencedBy pump-1)
    vlv-i   influences    pump-1      (and pump-1 influencedBy vlv-i)
    vlv-i   influences    chlr-i      (and chlr-i influencedBy vlv-i)

The full description is a pure function of a PlantTopology, which is what
makes reconfiguration deltas exactly reversible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from hypercoord import vocab
from hypercoord.cr import build_agent_profile, infer_responsibilities, profile_iri
from hypercoord.errors import ConflictingIRI, ScenarioError, UnknownIRI
from hypercoord.graph import IRI, Term, Triple, TripleStore, parse_document, serialize_document
from hypercoord.td import ActionAffordance, Form, PropertyAffordance, ThingDescription

DEFAULT_BASE = "http://localhost:8080/"

FLOW_RATE = vocab.P["flow-rate"]
WATER_FLOW_RATE = vocab.P["variable_water-flow-rate"]
ENERGY_OUTPUT = vocab.P["variable_energy-output"]
VALVE_POSITION = vocab.P["valve-position"]
PUMP_PRIMING = vocab.P["pump-priming"]
VARIABLES = (FLOW_RATE, WATER_FLOW_RATE, ENERGY_OUTPUT, VALVE_POSITION, PUMP_PRIMING)

MIRROR = {vocab.INFLUENCES: vocab.INFLUENCED_BY, vocab.INFLUENCED_BY: vocab.INFLUENCES}


def agent_base(agent: Term, env_base: str = DEFAULT_BASE) -> str:
    return f"{env_base}agents/{vocab.local_name(agent)}/"


def _suffix(agent: Term) -> str:
    local = vocab.local_name(agent)
    return local[len("agent-"):] if local.startswith("agent-") else local


def pump_agent_td(agent: Term, env_base: str = DEFAULT_BASE) -> ThingDescription:
    return ThingDescription(
        id=agent.value,
        semantic_types=[vocab.AGENT.value, vocab.PUMP_MANAGER.value],
        base=agent_base(agent, env_base),
        properties={
            "current-flowrate": PropertyAffordance(
                "current-flowrate", vocab.HVAC.FlowRate.value, FLOW_RATE.value,
                [Form("properties/current-flowrate")], iri=vocab.P["current-flowrate"].value),
            "is-primed": PropertyAffordance(
                "is-primed", vocab.HVAC.PrimingState.value, PUMP_PRIMING.value,
                [Form("properties/is-primed")], value_type="boolean",
                iri=vocab.P["is-primed"].value),
        },
        actions={
            "change-flowrate": ActionAffordance(
                "change-flowrate", vocab.HVAC.FlowModulation.value, FLOW_RATE.value,
                [Form("actions/change-flowrate")], {"type": "number", "unit": "l/s"},
                iri=vocab.P["change-flowrate"].value),
        },
    )


def chiller_agent_td(agent: Term, env_base: str = DEFAULT_BASE) -> ThingDescription:
    sfx = _suffix(agent)

    def iri(name):
        return vocab.P[f"{name}-{sfx}"].value

    return ThingDescription(
        id=agent.value,
        semantic_types=[vocab.AGENT.value, vocab.CHILLER_MANAGER.value],
        base=agent_base(agent, env_base),
        properties={
            "present-output": PropertyAffordance(
                "present-output", vocab.HVAC.CoolingPower.value, ENERGY_OUTPUT.value,
                [Form("properties/present-output")], iri=iri("present-output")),
            "valve-position": PropertyAffordance(
                "valve-position", vocab.HVAC.ValvePosition.value, VALVE_POSITION.value,
                [Form("properties/valve-position")], iri=iri("valve-position")),
            "branch-flow": PropertyAffordance(
                "branch-flow", vocab.HVAC.BranchFlow.value, FLOW_RATE.value,
                [Form("properties/branch-flow")], iri=iri("branch-flow")),
        },
        actions={
            "provide-cooling": ActionAffordance(
                "provide-cooling", vocab.HVAC.CoolingProvision.value, ENERGY_OUTPUT.value,
                [Form("actions/provide-cooling")], iri=iri("provide-cooling")),
        },
    )


@dataclass
class PlantTopology:
    pumps: List[Term] = field(default_factory=list)
    chillers: List[Term] = field(default_factory=list)
    valves: List[Term] = field(default_factory=list)
    variables: List[Term] = field(default_factory=lambda: list(VARIABLES))
    agents: Dict[Term, Term] = field(default_factory=dict)        # agent -> subsystem
    members: Dict[Term, List[Term]] = field(default_factory=dict)  # subsystem -> components

    def agent_of(self, component: Term) -> Optional[Term]:
        for agent, sub in self.agents.items():
            if component in self.members.get(sub, ()):
                return agent
        return None

    def branches(self) -> List[Tuple[Term, Term, Term]]:
        """(chiller, valve, agent) per chiller branch."""
        out = []
        for agent, sub in self.agents.items():
            comps = self.members.get(sub, [])
            chillers = [c for c in comps if c in self.chillers]
            valves = [c for c in comps if c in self.valves]
            for ch, vl in zip(chillers, valves):
                out.append((ch, vl, agent))
        return sorted(out)

    def valve_of(self, chiller: Term) -> Optional[Term]:
        for ch, vl, _ in self.branches():
            if ch == chiller:
                return vl
        return None

    def pump_agents(self) -> List[Term]:
        return sorted({self.agent_of(p) for p in self.pumps} - {None})

    def role_of(self, agent: Term) -> Term:
        comps = self.members.get(self.agents[agent], [])
        if any(c in self.pumps for c in comps):
            return vocab.PUMP_MANAGER
        return vocab.CHILLER_MANAGER

    def all_iris(self) -> set:
        out = set(self.pumps) | set(self.chillers) | set(self.valves) | set(self.variables)
        out |= set(self.agents) | set(self.agents.values())
        out |= {profile_iri(a) for a in self.agents}
        return out

    def td_for(self, agent: Term, env_base: str = DEFAULT_BASE) -> ThingDescription:
        if self.role_of(agent) == vocab.PUMP_MANAGER:
            return pump_agent_td(agent, env_base)
        return chiller_agent_td(agent, env_base)

    @classmethod
    def from_store(cls, store: TripleStore) -> "PlantTopology":
        with store.lock:
            topo = cls(variables=store.subjects(vocab.RDF_TYPE, vocab.PROCESS_VARIABLE))
            topo.pumps = store.subjects(vocab.RDF_TYPE, vocab.PUMP)
            topo.chillers = store.subjects(vocab.RDF_TYPE, vocab.CHILLER)
            topo.valves = store.subjects(vocab.RDF_TYPE, vocab.VALVE)
            for agent in store.subjects(vocab.RDF_TYPE, vocab.AGENT):
                subs = store.objects(agent, vocab.MANAGES)
                if not subs:
                    continue
                sub = subs[0]
                topo.agents[agent] = sub
                topo.members[sub] = store.objects(sub, vocab.HAS_COMPONENT)
        return topo


def default_topology(n_chillers: int = 3) -> PlantTopology:
    """Pump group with pump-1 plus ``n_chillers`` branches chlr-i/vlv-i."""
    topo = PlantTopology(pumps=[vocab.P["pump-1"]])
    topo.agents[vocab.P["agent-p"]] = vocab.P["pump-group"]
    topo.members[vocab.P["pump-group"]] = [vocab.P["pump-1"]]
    for i in range(1, n_chillers + 1):
        _add_branch(topo, vocab.P[f"chlr-{i}"], vocab.P[f"vlv-{i}"], vocab.P[f"agent-c{i}"])
    return topo


def branch_subsystem(chiller: Term) -> Term:
    return IRI(chiller.value + "-branch")


def _add_branch(topo: PlantTopology, chiller: Term, valve: Term, agent: Term):
    sub = branch_subsystem(chiller)
    topo.chillers.append(chiller)
    topo.valves.append(valve)
    topo.agents[agent] = sub
    topo.members[sub] = [chiller, valve]


def topology_triples(topo: PlantTopology) -> List[Triple]:
    """Structural part of the description (no profiles)."""
    T = Triple
    out = list(vocab.vocabulary_triples())
    for v in topo.variables:
        out.append(T(v, vocab.RDF_TYPE, vocab.PROCESS_VARIABLE))
    if FLOW_RATE in topo.variables and WATER_FLOW_RATE in topo.variables:
        out.append(T(FLOW_RATE, vocab.SAME_VARIABLE, WATER_FLOW_RATE))
    for agent, sub in topo.agents.items():
        out += [
            T(agent, vocab.RDF_TYPE, vocab.AGENT),
            T(agent, vocab.RDF_TYPE, topo.role_of(agent)),
            T(agent, vocab.MANAGES, sub),
            T(agent, vocab.HAS_PROFILE, profile_iri(agent)),
            T(sub, vocab.RDF_TYPE, vocab.SUBSYSTEM),
        ]
        out += [T(sub, vocab.HAS_COMPONENT, c) for c in topo.members.get(sub, [])]
    for kind, comps in ((vocab.PUMP, topo.pumps), (vocab.CHILLER, topo.chillers),
                        (vocab.VALVE, topo.valves)):
        for c in comps:
            out += [
                T(c, vocab.RDF_TYPE, vocab.COMPONENT),
                T(c, vocab.RDF_TYPE, kind),
                T(c, vocab.AFFECTED_VARIABLE, FLOW_RATE),
            ]

    def relate(a, b):
        out.append(T(a, vocab.INFLUENCES, b))
        out.append(T(b, vocab.INFLUENCED_BY, a))

    for pump in topo.pumps:
        for chiller, valve, _agent in topo.branches():
            relate(pump, chiller)
            relate(valve, pump)
    for chiller, valve, _agent in topo.branches():
        relate(valve, chiller)
    return out


DESIRED_STATES = {
    vocab.PUMP_MANAGER: [(FLOW_RATE, "meet-demand")],
    vocab.CHILLER_MANAGER: [(FLOW_RATE, "input-flow")],
}


def agent_profile_triples(topo: PlantTopology, structure: TripleStore, agent: Term,
                          env_base: str = DEFAULT_BASE) -> List[Triple]:
    from hypercoord.td import td_to_triples

    td = topo.td_for(agent, env_base)
    crs = infer_responsibilities(structure, agent)
    triples, _doc = build_agent_profile(agent, crs, td, DESIRED_STATES[topo.role_of(agent)])
    return triples + td_to_triples(td)


def describe(topo: PlantTopology) -> List[Triple]:
    """The full description: structure, TDs and agent profiles."""
    structure = TripleStore(topology_triples(topo))
    out = set(structure.snapshot())
    for agent in sorted(topo.agents):
        out.update(agent_profile_triples(topo, structure, agent))
    return sorted(out)


def build_chilled_water_fixture() -> List[Triple]:
    return describe(default_topology())


def load_fixture_asset() -> List[Triple]:
    """The shipped ``assets/fixture.ttl``."""
    return parse_document(vocab.asset_text("fixture.ttl"))


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    subject: Term
    relation: Optional[Term] = None
    object: Optional[Term] = None

    def __str__(self):
        parts = [self.kind, vocab.compact(self.subject.value)]
        if self.relation is not None:
            parts += [vocab.compact(self.relation.value), vocab.compact(self.object.value)]
        return " ".join(parts)


def UnmanagedComponent(component):
    return Violation("UnmanagedComponent", component)


def MultiplyManaged(component):
    return Violation("MultiplyManaged", component)


def DanglingRelation(s, rel, o):
    return Violation("DanglingRelation", s, rel, o)


def MissingMirror(s, rel, o):
    return Violation("MissingMirror", s, rel, o)


def validate_topology(store: TripleStore) -> List[Violation]:
    """Structural problems in a description; an empty list means valid."""
    out = []
    with store.lock:
        components = set(store.subjects(vocab.RDF_TYPE, vocab.COMPONENT))
        managers: Dict[Term, set] = {c: set() for c in components}
        for t in store.triples(None, vocab.MANAGES, None):
            for comp in store.closure(t.object, vocab.HAS_COMPONENT):
                managers.setdefault(comp, set()).add(t.subject)
        for comp in sorted(components):
            if not managers[comp]:
                out.append(UnmanagedComponent(comp))
            elif len(managers[comp]) > 1:
                out.append(MultiplyManaged(comp))
        for rel in store.subjects(vocab.RDF_TYPE, vocab.PROCESS_RELATION):
            for s, _p, o in store.triples(None, rel, None):
                if s not in components or o not in components:
                    out.append(DanglingRelation(s, rel, o))
                    continue
                inverse = MIRROR.get(rel)
                if inverse is not None and Triple(o, inverse, s) not in store:
                    out.append(MissingMirror(s, rel, o))
    return sorted(out, key=lambda v: (v.kind, v.subject, v.relation or v.subject, v.object or v.subject))


# -- reconfiguration ----------------------------------------------------------

ADD_BRANCH = "add_branch"
REMOVE_BRANCH = "remove_branch"


@dataclass(frozen=True)
class ReconfigurationEvent:
    kind: str
    chiller: Term
    valve: Term
    agent: Term
    at_time: int = 0

    def reversed(self) -> "ReconfigurationEvent":
        kind = REMOVE_BRANCH if self.kind == ADD_BRANCH else ADD_BRANCH
        return replace(self, kind=kind)

    def to_json(self) -> dict:
        return {"kind": self.kind, "chiller": vocab.compact(self.chiller.value),
                "valve": vocab.compact(self.valve.value),
                "agent": vocab.compact(self.agent.value), "at_time": self.at_time}

    @classmethod
    def from_json(cls, doc: dict) -> "ReconfigurationEvent":
        try:
            kind = doc["kind"]
            if kind not in (ADD_BRANCH, REMOVE_BRANCH):
                raise ScenarioError(f"unknown reconfiguration kind {kind!r}")
            return cls(kind, IRI(vocab.expand(doc["chiller"])), IRI(vocab.expand(doc["valve"])),
                       IRI(vocab.expand(doc["agent"])), int(doc.get("at_time", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed reconfiguration event: {exc}") from exc


@dataclass
class ChangeDelta:
    added: List[Triple] = field(default_factory=list)
    removed: List[Triple] = field(default_factory=list)

    def __bool__(self):
        return bool(self.added or self.removed)

    def to_json(self) -> dict:
        return {"added": serialize_document(self.added),
                "removed": serialize_document(self.removed)}

    @classmethod
    def from_json(cls, doc: dict) -> "ChangeDelta":
        from hypercoord.graph import NTRIPLES
        return cls(parse_document(doc.get("added", ""), NTRIPLES),
                   parse_document(doc.get("removed", ""), NTRIPLES))


def apply_reconfiguration(store: TripleStore, event: ReconfigurationEvent) -> ChangeDelta:
    """Add or remove a chiller branch; the store is updated atomically."""
    with store.lock:
        topo = PlantTopology.from_store(store)
        new = PlantTopology(list(topo.pumps), list(topo.chillers), list(topo.valves),
                            list(topo.variables), dict(topo.agents),
                            {k: list(v) for k, v in topo.members.items()})
        if event.kind == ADD_BRANCH:
            nodes = store.nodes()
            fresh = [event.chiller, event.valve, event.agent,
                     branch_subsystem(event.chiller), profile_iri(event.agent)]
            taken = [x for x in fresh if x in nodes or x in topo.all_iris()]
            if taken or len(set(fresh)) != len(fresh):
                raise ConflictingIRI(f"already in use: {', '.join(map(repr, taken)) or 'duplicate IRIs'}")
            _add_branch(new, event.chiller, event.valve, event.agent)
        elif event.kind == REMOVE_BRANCH:
            if (event.chiller, event.valve, event.agent) not in topo.branches():
                raise UnknownIRI(f"no branch ({event.chiller!r}, {event.valve!r}, {event.agent!r})")
            sub = topo.agents[event.agent]
            new.chillers.remove(event.chiller)
            new.valves.remove(event.valve)
            del new.agents[event.agent]
            del new.members[sub]
        else:
            raise ValueError(f"unknown event kind {event.kind!r}")
        before = set(describe(topo))
        after = set(describe(new))
        delta = ChangeDelta(added=sorted(after - before), removed=sorted(before - after))
        store.remove_all(delta.removed)
        store.add_all(delta.added)
    return delta
