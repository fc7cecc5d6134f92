"""Fixed prefix table and the vocabulary IRIs used across the package."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from typing import Dict, List

from hypercoord.graph.terms import IRI, Term, Triple


def asset_text(name: str) -> str:
    return resources.files("hypercoord").joinpath("assets", name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def _prefix_table() -> Dict[str, str]:
    from hypercoord.graph.turtle import read_prefixes
    return read_prefixes(asset_text("vocab.ttl"))


PREFIXES: Dict[str, str] = _prefix_table()

RDF = PREFIXES["rdf"]
XSD = PREFIXES["xsd"]
PLANT = PREFIXES[""]


def expand(curie: str) -> str:
    """Expand ``prefix:local`` against the fixed table; absolute IRIs pass through."""
    prefix, sep, local = curie.partition(":")
    if sep and prefix in PREFIXES and not local.startswith("//"):
        return PREFIXES[prefix] + local
    return curie


def compact(iri: str) -> str:
    """Shortest ``prefix:local`` form of an IRI, or the IRI itself."""
    best = None
    for prefix, ns in PREFIXES.items():
        if iri.startswith(ns) and len(iri) > len(ns):
            if best is None or len(ns) > len(PREFIXES[best]):
                best = prefix
    if best is None:
        return iri
    return f"{best}:{iri[len(PREFIXES[best]):]}"


def local_name(iri) -> str:
    value = iri.value if isinstance(iri, Term) else iri
    for sep in ("#", "/", ":"):
        if sep in value:
            value = value.rsplit(sep, 1)[1]
    return value


def term(curie: str) -> Term:
    return IRI(expand(curie))


class _Namespace:
    def __init__(self, prefix: str):
        self._ns = PREFIXES[prefix]

    def __getattr__(self, name: str) -> Term:
        if name.startswith("__"):
            raise AttributeError(name)
        return IRI(self._ns + name)

    def __getitem__(self, name: str) -> Term:
        return IRI(self._ns + name)


ELEM = _Namespace("elem")
TD = _Namespace("td")
INTR = _Namespace("intr")
BRICK = _Namespace("brick")
HVAC = _Namespace("hvac")
HMAS = _Namespace("hmas")
P = _Namespace("")  # plant individuals

RDF_TYPE = IRI(RDF + "type")

# Vocabulary IRIs named in the system description.
MANAGES = ELEM.manages
HAS_COMPONENT = ELEM.hasComponent
COMPONENT = ELEM.Component
SUBSYSTEM = ELEM.Subsystem
PROCESS_RELATION = ELEM.processRelation
INFLUENCES = ELEM.influences
INFLUENCED_BY = ELEM.influencedBy
AFFECTED_VARIABLE = ELEM.affectedVariable
PROCESS_VARIABLE = ELEM.ProcessVariable
SAME_VARIABLE = ELEM.sameVariable
HAS_PROFILE = ELEM.hasProfile
HAS_CR = ELEM.hasCR
HAS_TD = ELEM.hasTD
DESIRED_STATE = ELEM.desiredState
MANIPULATES = ELEM.manipulates
OBSERVES = ELEM.observes
AGENT_PROFILE = ELEM.AgentProfile
CR_CLASS = ELEM.CoordinationResponsibility
CR_OWNER = ELEM.owner
CR_DIRECTION = ELEM.direction
CR_RELATION = ELEM.viaRelation
CR_VARIABLE = ELEM.onVariable
CR_PEER = ELEM.peer
DOWNSTREAM = ELEM.downstream
UPSTREAM = ELEM.upstream
UNKNOWN_VARIABLE = ELEM["unknown-variable"]

HAS_ACTION = TD.hasActionAffordance
HAS_PROPERTY = TD.hasPropertyAffordance
HAS_LINK = TD.hasLink
THING = TD.Thing

MESSAGE = INTR.Message
HAS_SENDER = INTR.hasSender
HAS_RECEIVER = INTR.hasReceiver
PRECONDITION = INTR.precondition
DESIRED_POSTCONDITION = INTR.desiredPostcondition
COMMITMENT = INTR.commitment
HAS_AFFORDANCE = INTR.hasAffordance

AGENT = HMAS.Agent
PUMP = BRICK.Pump
CHILLER = BRICK.Chiller
VALVE = BRICK.Valve
CHILLER_MANAGER = HVAC.ChillerManager
PUMP_MANAGER = HVAC.PumpManager


@lru_cache(maxsize=None)
def vocabulary_triples() -> List[Triple]:
    """The vocabulary graph shipped in ``assets/vocab.ttl``."""
    from hypercoord.graph.turtle import parse_document
    return parse_document(asset_text("vocab.ttl"), prefixes={})
