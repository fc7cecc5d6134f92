"""Thing Descriptions: data model, JSON mapping, triples and affordance matching.

TD documents use the compact JSON layout agents exchange in the
environment::

    {"@id": "urn:agent-c1", "@type": "hmas:Agent", "links": [...],
     "properties": {"present-output": {"@type": ..., "observes": ...,
                    "readOnly": true, "type": "number", "forms": [...]}},
     "actions": {"set-flowrate": {"@type": ..., "manipulates": ...,
                 "forms": [{"href": "/actions/set-flow"}]}}}

Compact IRIs (``hvac:FlowRate``, ``:variable_energy-output``) are expanded
against the fixed prefix table. Each affordance is identified by an IRI:
its own ``@id`` when given, otherwise the plant namespace plus its name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union
from urllib.parse import urljoin

from hypercoord import vocab
from hypercoord.errors import SchemaError, UnknownProfile
from hypercoord.graph import IRI, Term, Triple, TripleStore, Var, match_pattern, pattern

VALUE_TYPES = ("number", "boolean", "string")


@dataclass
class Form:
    href: str
    extra: Dict[str, Any] = field(default_factory=dict)

    def resolve(self, base: Optional[str]) -> str:
        return urljoin(base, self.href) if base else self.href


@dataclass
class PropertyAffordance:
    name: str
    semantic_type: str
    observes: str
    forms: List[Form] = field(default_factory=list)
    read_only: bool = True
    value_type: str = "number"
    iri: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def id(self) -> str:
        return self.iri or vocab.PLANT + self.name


@dataclass
class ActionAffordance:
    name: str
    semantic_type: str
    manipulates: str
    forms: List[Form] = field(default_factory=list)
    input_schema: Dict[str, Any] = field(default_factory=dict)
    iri: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def id(self) -> str:
        return self.iri or vocab.PLANT + self.name


@dataclass
class ThingDescription:
    id: str
    semantic_types: List[str] = field(default_factory=list)
    links: List[str] = field(default_factory=list)
    properties: Dict[str, PropertyAffordance] = field(default_factory=dict)
    actions: Dict[str, ActionAffordance] = field(default_factory=dict)
    base: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return not self.properties and not self.actions

    def affordances(self):
        return list(self.properties.values()) + list(self.actions.values())

    def find_action(self, semantic_type: str) -> Optional[ActionAffordance]:
        for name in sorted(self.actions):
            if self.actions[name].semantic_type == semantic_type:
                return self.actions[name]
        return None

    def find_property(self, semantic_type: str) -> Optional[PropertyAffordance]:
        for name in sorted(self.properties):
            if self.properties[name].semantic_type == semantic_type:
                return self.properties[name]
        return None

    def form_url(self, affordance) -> str:
        return affordance.forms[0].resolve(self.base)


def _iri(value: Any, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(f"{where}: expected an IRI string, got {value!r}")
    return vocab.expand(value)


def _types(value: Any, where: str) -> List[str]:
    if value is None:
        return []
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list):
        raise SchemaError(f"{where}: @type must be a string or list")
    return [_iri(v, where) for v in value]


def _forms(value: Any, where: str) -> List[Form]:
    if value is None:
        return []
    if not isinstance(value, list):
        raise SchemaError(f"{where}: forms must be a list")
    forms = []
    for f in value:
        if not isinstance(f, dict) or not isinstance(f.get("href"), str):
            raise SchemaError(f"{where}: every form needs an href")
        forms.append(Form(f["href"], {k: v for k, v in f.items() if k != "href"}))
    return forms


def _single_type(doc: dict, where: str) -> str:
    types = _types(doc.get("@type"), where)
    if len(types) != 1:
        raise SchemaError(f"{where}: affordances carry exactly one semantic type")
    return types[0]


_PROPERTY_KEYS = {"@id", "@type", "observes", "forms", "readOnly", "type"}
_ACTION_KEYS = {"@id", "@type", "manipulates", "forms", "input"}
_TD_KEYS = {"@id", "@type", "links", "properties", "actions", "base"}


def parse_td(doc: Union[str, bytes, dict]) -> ThingDescription:
    """Map a TD JSON document onto a ThingDescription; raises SchemaError."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except ValueError as exc:
            raise SchemaError(f"not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("a TD must be a JSON object")
    if "@id" not in doc:
        raise SchemaError("TD without @id")
    td = ThingDescription(
        id=_iri(doc["@id"], "@id"),
        semantic_types=_types(doc.get("@type"), "@type") or [vocab.THING.value],
        base=doc.get("base"),
        extra={k: v for k, v in doc.items() if k not in _TD_KEYS},
    )
    links = doc.get("links", [])
    if not isinstance(links, list):
        raise SchemaError("links must be a list")
    for link in links:
        if isinstance(link, dict):
            link = link.get("href")
        td.links.append(_iri(link, "links"))

    for name, p in (doc.get("properties") or {}).items():
        where = f"properties.{name}"
        if not isinstance(p, dict):
            raise SchemaError(f"{where}: must be an object")
        if "observes" not in p:
            raise SchemaError(f"{where}: missing observes")
        value_type = p.get("type", "number")
        if value_type not in VALUE_TYPES:
            raise SchemaError(f"{where}: unsupported type {value_type!r}")
        td.properties[name] = PropertyAffordance(
            name=name,
            semantic_type=_single_type(p, where),
            observes=_iri(p["observes"], where),
            forms=_forms(p.get("forms"), where),
            read_only=bool(p.get("readOnly", True)),
            value_type=value_type,
            iri=_iri(p["@id"], where) if "@id" in p else None,
            extra={k: v for k, v in p.items() if k not in _PROPERTY_KEYS},
        )

    for name, a in (doc.get("actions") or {}).items():
        where = f"actions.{name}"
        if not isinstance(a, dict):
            raise SchemaError(f"{where}: must be an object")
        if not a.get("manipulates"):
            raise SchemaError(f"{where}: missing manipulates")
        forms = _forms(a.get("forms"), where)
        if not forms:
            raise SchemaError(f"{where}: an action needs at least one form")
        td.actions[name] = ActionAffordance(
            name=name,
            semantic_type=_single_type(a, where),
            manipulates=_iri(a["manipulates"], where),
            forms=forms,
            input_schema=dict(a.get("input") or {}),
            iri=_iri(a["@id"], where) if "@id" in a else None,
            extra={k: v for k, v in a.items() if k not in _ACTION_KEYS},
        )
    return td


def _form_doc(form: Form) -> dict:
    return {"href": form.href, **form.extra}


def serialize_td(td: ThingDescription) -> dict:
    """Inverse of parse_td; keys come out sorted when dumped with sort_keys."""
    types = [vocab.compact(t) for t in td.semantic_types]
    doc: Dict[str, Any] = dict(td.extra)
    doc["@id"] = vocab.compact(td.id)
    doc["@type"] = types[0] if len(types) == 1 else types
    if td.base:
        doc["base"] = td.base
    if td.links:
        doc["links"] = [vocab.compact(link) for link in td.links]
    if td.properties:
        props = {}
        for name, p in td.properties.items():
            entry = dict(p.extra)
            entry.update({
                "@type": vocab.compact(p.semantic_type),
                "observes": vocab.compact(p.observes),
                "readOnly": p.read_only,
                "type": p.value_type,
                "forms": [_form_doc(f) for f in p.forms],
            })
            if p.iri:
                entry["@id"] = vocab.compact(p.iri)
            props[name] = entry
        doc["properties"] = props
    if td.actions:
        actions = {}
        for name, a in td.actions.items():
            entry = dict(a.extra)
            entry.update({
                "@type": vocab.compact(a.semantic_type),
                "manipulates": vocab.compact(a.manipulates),
                "forms": [_form_doc(f) for f in a.forms],
            })
            if a.input_schema:
                entry["input"] = dict(a.input_schema)
            if a.iri:
                entry["@id"] = vocab.compact(a.iri)
            actions[name] = entry
        doc["actions"] = actions
    return doc


def dumps_td(td: ThingDescription) -> str:
    return json.dumps(serialize_td(td), sort_keys=True, indent=2)


def td_to_triples(td: ThingDescription) -> List[Triple]:
    """Graph view of a TD: types, affordance edges and links."""
    node = IRI(td.id)
    out = [Triple(node, vocab.RDF_TYPE, IRI(t)) for t in td.semantic_types]
    for name in sorted(td.actions):
        a = td.actions[name]
        aff = IRI(a.id)
        out += [
            Triple(node, vocab.HAS_ACTION, aff),
            Triple(aff, vocab.MANIPULATES, IRI(a.manipulates)),
            Triple(aff, vocab.RDF_TYPE, IRI(a.semantic_type)),
        ]
    for name in sorted(td.properties):
        p = td.properties[name]
        aff = IRI(p.id)
        out += [
            Triple(node, vocab.HAS_PROPERTY, aff),
            Triple(aff, vocab.OBSERVES, IRI(p.observes)),
            Triple(aff, vocab.RDF_TYPE, IRI(p.semantic_type)),
        ]
    out += [Triple(node, vocab.HAS_LINK, IRI(link)) for link in td.links]
    return out


# -- matching -----------------------------------------------------------------

def _require_profile(store: TripleStore, profile: Term):
    if Triple(profile, vocab.RDF_TYPE, vocab.AGENT_PROFILE) not in store:
        raise UnknownProfile(f"no agent profile {profile!r}")


def _bridged(store: TripleStore, variables) -> set:
    out = set(variables)
    for v in variables:
        out.update(store.objects(v, vocab.SAME_VARIABLE))
        out.update(store.subjects(vocab.SAME_VARIABLE, v))
    return out


def match_affordances(store: TripleStore, requester_profile: Term,
                      provider_profile: Term) -> List[Term]:
    """Actions in the provider's TD manipulating a state the requester desires."""
    with store.lock:
        _require_profile(store, requester_profile)
        _require_profile(store, provider_profile)
        wanted = _bridged(store, store.objects(requester_profile, vocab.DESIRED_STATE))
        found = set()
        for td in store.objects(provider_profile, vocab.HAS_TD):
            for aff in store.objects(td, vocab.HAS_ACTION):
                if wanted.intersection(store.objects(aff, vocab.MANIPULATES)):
                    found.add(aff)
    return sorted(found)


def match_affordances_by_query(store: TripleStore, requester_profile: Term,
                               provider_profile: Term) -> List[Term]:
    """Same answer as match_affordances, computed with graph pattern queries."""
    _require_profile(store, requester_profile)
    _require_profile(store, provider_profile)
    state, td, aff, var = Var("process_state"), Var("td"), Var("affordance"), Var("v")
    head = [
        pattern(requester_profile, vocab.DESIRED_STATE, state),
        pattern(provider_profile, vocab.HAS_TD, td),
        pattern(td, vocab.HAS_ACTION, aff),
    ]
    queries = [
        head + [pattern(aff, vocab.MANIPULATES, state)],
        head + [pattern(state, vocab.SAME_VARIABLE, var), pattern(aff, vocab.MANIPULATES, var)],
        head + [pattern(var, vocab.SAME_VARIABLE, state), pattern(aff, vocab.MANIPULATES, var)],
    ]
    found = {b["affordance"] for q in queries for b in match_pattern(store, q)}
    return sorted(found)


def match_observations(store: TripleStore, requester_profile: Term,
                       provider_profile: Term) -> List[Term]:
    """Property affordances of the provider observing a variable on which the
    requester holds a downstream responsibility."""
    with store.lock:
        _require_profile(store, requester_profile)
        _require_profile(store, provider_profile)
        variables = set()
        for cr in store.objects(requester_profile, vocab.HAS_CR):
            if vocab.DOWNSTREAM in store.objects(cr, vocab.CR_DIRECTION):
                variables.update(store.objects(cr, vocab.CR_VARIABLE))
        wanted = _bridged(store, variables)
        found = set()
        for td in store.objects(provider_profile, vocab.HAS_TD):
            for aff in store.objects(td, vocab.HAS_PROPERTY):
                if wanted.intersection(store.objects(aff, vocab.OBSERVES)):
                    found.add(aff)
    return sorted(found)
