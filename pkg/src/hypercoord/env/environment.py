"""The hypermedia environment: resources, knowledge graph, registry, notifications.

One process hosts everything at a base URI::

    GET/PUT   things/{id}            Thing Descriptions (ETag, If-None-Match)
    GET/PUT   profiles/{id}          agent profile documents
    GET/PUT   protocols/{id}         coordination protocol documents (Turtle)
    GET       things                 index of registered TDs
    POST      registry/profiles      201 stored / 200 forwarded / 303 redirected
    POST      subscriptions          {topic, callback}
    DELETE    subscriptions/{id}
    GET       changes?since=N        pull fallback for notifications
    POST      changes                publish an externally observed change
    GET/POST  graph                  N-Triples dump / assert N-Triples
    GET/POST  graph/query            JSON pattern query
    POST      graph/reconfigure      apply a plant reconfiguration event
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
from collections import defaultdict
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from hypercoord import vocab
from hypercoord.cr import managed_components, parse_profile
from hypercoord.env.http import App, Network, Request, Response
from hypercoord.errors import (
    CallbackUnreachable, ConflictingIRI, HypercoordError, InvalidProfile, NotFound,
    ParseError, ScenarioError, SchemaError, TransportError, UnknownAgent, UnknownIRI, UnsupportedMedia,
)
from hypercoord.graph import (
    NTRIPLES, TURTLE, IRI, Term, Triple, TripleStore, Var, match_pattern, parse_document,
    pattern, serialize_document,
)
from hypercoord.graph.query_json import decode_query, encode_bindings
from hypercoord.model import DEFAULT_BASE, ChangeDelta, ReconfigurationEvent, apply_reconfiguration
from hypercoord.td import parse_td, td_to_triples
from hypercoord.trace import Recorder

log = logging.getLogger(__name__)

MEDIA_TYPES = {
    "td-json": "application/td+json",
    "profile-json": "application/profile+json",
    "rdf-triples": "application/n-triples",
    "turtle": "text/turtle",
}
_MEDIA_BY_CONTENT_TYPE = {v: k for k, v in MEDIA_TYPES.items()}
_DEFAULT_MEDIA = {"things": "td-json", "profiles": "profile-json",
                  "protocols": "turtle", "resources": "rdf-triples"}

STORED, FORWARDED, REDIRECTED = "stored", "forwarded", "redirected"


class NotModified(HypercoordError):
    def __init__(self, etag):
        self.etag = etag
        super().__init__(f"not modified (etag {etag})")


@dataclass
class Resource:
    uri: str
    media: str
    body: str
    etag: int


@dataclass
class RegistryDecision:
    kind: str
    location: Optional[str] = None
    recipients: List[str] = field(default_factory=list)
    profile: Optional[str] = None
    submitter: Optional[str] = None

    def to_json(self) -> dict:
        return {"kind": self.kind, "location": self.location, "recipients": list(self.recipients),
                "profile": self.profile, "submitter": self.submitter}

    @classmethod
    def from_json(cls, doc: dict) -> "RegistryDecision":
        return cls(doc["kind"], doc.get("location"), list(doc.get("recipients") or []),
                   doc.get("profile"), doc.get("submitter"))


@dataclass
class Subscription:
    id: str
    topic: Union[str, dict]
    callback: str
    created: int

    def to_json(self) -> dict:
        return {"id": self.id, "topic": self.topic, "callback": self.callback,
                "created": self.created}


def slug(iri) -> str:
    return vocab.local_name(iri)


class Environment(App):
    def __init__(self, base: str = DEFAULT_BASE, network: Optional[Network] = None,
                 deterministic: bool = True, recorder: Optional[Recorder] = None,
                 authority: Optional[Dict[Term, str]] = None):
        super().__init__()
        self.base = base if base.endswith("/") else base + "/"
        self.network = network or Network()
        self.deterministic = deterministic
        self.recorder = recorder or Recorder()
        self.authority = dict(authority or {})
        self.graph = TripleStore()
        self.resources: Dict[str, Resource] = {}
        self.subscriptions: Dict[str, Subscription] = {}
        self.changes: List[dict] = []
        self.inboxes: Dict[Term, str] = {}
        self._lock = threading.RLock()
        self._uri_locks: Dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._seq = itertools.count(1)
        self._sub_ids = itertools.count(1)
        self._pending: List[Future] = []
        self._executor = None if deterministic else ThreadPoolExecutor(max_workers=1)
        self.network.mount(self.base, self)
        self._install_routes()

    # -- addressing -----------------------------------------------------------

    def url(self, path_or_uri: str) -> str:
        if path_or_uri.startswith(("http://", "https://")):
            return path_or_uri
        return self.base + path_or_uri.lstrip("/")

    def thing_url(self, iri) -> str:
        return f"{self.base}things/{slug(iri)}"

    @property
    def graph_url(self) -> str:
        return self.base + "graph"

    # -- resources ------------------------------------------------------------

    def handle_put(self, uri: str, body, media: str) -> int:
        if media not in MEDIA_TYPES:
            raise UnsupportedMedia(f"unsupported media {media!r}")
        if isinstance(body, (bytes, bytearray)):
            body = body.decode("utf-8")
        if not isinstance(body, str):
            body = json.dumps(body, sort_keys=True)
        uri = self.url(uri)
        parsed = self._parse_body(body, media)
        with self._lock:
            lock = self._uri_locks[uri]
        with lock:
            old = self.resources.get(uri)
            etag = old.etag + 1 if old else 1
            if media == "td-json":
                self._replace_td_triples(old, parsed)
            self.resources[uri] = Resource(uri, media, body, etag)
        self.publish_change({"uri": uri, "etag": etag, "kind": "put", "media": media})
        return etag

    def _parse_body(self, body: str, media: str):
        if media == "td-json":
            try:
                return parse_td(body)
            except SchemaError as exc:
                raise ParseError(f"invalid TD: {exc}") from exc
        if media == "profile-json":
            try:
                return parse_profile(body)
            except InvalidProfile as exc:
                raise ParseError(f"invalid profile: {exc}") from exc
        if media == "rdf-triples":
            return parse_document(body, NTRIPLES)
        return parse_document(body, TURTLE)

    def handle_get(self, uri: str, if_none_match=None) -> Tuple[str, str, int]:
        res = self.resources.get(self.url(uri))
        if res is None:
            raise NotFound(f"no resource at {uri}")
        if if_none_match is not None and str(if_none_match).strip('"') == str(res.etag):
            raise NotModified(res.etag)
        return res.body, res.media, res.etag

    def _replace_td_triples(self, old: Optional[Resource], td):
        new = set(td_to_triples(td))
        with self.graph.lock:
            if old is not None:
                stale = set(td_to_triples(parse_td(old.body))) - new
                self.graph.remove_all(t for t in stale
                                      if not (t.subject.value == td.id and t.predicate == vocab.RDF_TYPE))
            self.graph.add_all(new)

    # -- graph ----------------------------------------------------------------

    def load_graph(self, triples) -> int:
        return self.graph.add_all(triples)

    def query(self, patterns):
        return match_pattern(self.graph, patterns)

    def apply_reconfiguration(self, event: ReconfigurationEvent) -> ChangeDelta:
        delta = apply_reconfiguration(self.graph, event)
        self.publish_change({"uri": self.graph_url, "kind": "reconfigure",
                             "event": event.to_json(), "delta": delta.to_json()})
        return delta

    # -- registry -------------------------------------------------------------

    def submit_profile(self, doc) -> RegistryDecision:
        profile = parse_profile(doc)
        agent = profile.agent
        subsystems = self.graph.objects(agent, vocab.MANAGES)
        if not subsystems:
            raise InvalidProfile(f"{agent!r} is not an agent of this system")

        for sub in subsystems:
            owner = self.authority.get(sub)
            if owner and owner.rstrip("/") != self.base.rstrip("/"):
                decision = RegistryDecision(REDIRECTED, location=owner.rstrip("/") + "/registry/profiles",
                                            submitter=agent.value)
                self.recorder.record("registry", registry=self.base, **decision.to_json())
                return decision

        doc = profile.to_document()
        td_url = self.thing_url(profile.td.id)
        if not profile.td.is_empty or td_url not in self.resources:
            self.handle_put(td_url, json.dumps(doc["td"], sort_keys=True), "td-json")
        profile_url = f"{self.base}profiles/{slug(profile.profile)}"
        self.handle_put(profile_url, json.dumps(doc, sort_keys=True), "profile-json")
        self._replace_profile_triples(profile.profile, profile.triples())
        if profile.inbox:
            self.inboxes[agent] = profile.inbox

        recipients = self.interested_agents(agent)
        decision = RegistryDecision(FORWARDED if recipients else STORED,
                                    recipients=[a.value for a in recipients],
                                    profile=profile_url, submitter=agent.value)
        self.recorder.record("registry", registry=self.base, **decision.to_json())
        for recipient in recipients:
            inbox = self.inboxes.get(recipient)
            if not inbox:
                continue
            msg = {"type": "profile", "agent": agent.value, "profile": profile_url,
                   "registry": self.base}
            try:
                self.network.request("POST", inbox, json_body=msg)
            except TransportError as exc:
                log.info("forward to %s failed: %s", inbox, exc)
        return decision

    def _replace_profile_triples(self, profile: Term, triples):
        with self.graph.lock:
            old = list(self.graph.triples(profile, None, None))
            for cr in self.graph.objects(profile, vocab.HAS_CR):
                old += list(self.graph.triples(cr, None, None))
            self.graph.remove_all(old)
            self.graph.add_all(triples)

    def interested_agents(self, submitter: Term) -> List[Term]:
        """Agents holding a responsibility toward a component the submitter manages."""
        with self.graph.lock:
            try:
                own = managed_components(self.graph, submitter)
            except UnknownAgent:
                return []
            rows = match_pattern(self.graph, [
                pattern(Var("agent"), vocab.HAS_PROFILE, Var("prof")),
                pattern(Var("prof"), vocab.HAS_CR, Var("cr")),
                pattern(Var("cr"), vocab.CR_PEER, Var("comp")),
            ])
        return sorted({r["agent"] for r in rows if r["comp"] in own and r["agent"] != submitter})

    # -- notifications --------------------------------------------------------

    def subscribe(self, topic, callback: str) -> Subscription:
        if isinstance(topic, str):
            topic = self.url(topic)
        elif not (isinstance(topic, dict) and topic.get("where")):
            raise ValueError("topic must be a URI prefix or a pattern query")
        sub = Subscription(f"sub-{next(self._sub_ids)}", topic, callback, self.recorder.clock())
        try:
            resp = self.network.request("POST", callback,
                                        json_body={"type": "probe", "subscription": sub.id})
        except TransportError as exc:
            raise CallbackUnreachable(str(exc)) from exc
        if not resp.ok:
            raise CallbackUnreachable(f"{callback} answered {resp.status}")
        with self._lock:
            self.subscriptions[sub.id] = sub
        return sub

    def unsubscribe(self, sub_id: str):
        with self._lock:
            if self.subscriptions.pop(sub_id, None) is None:
                raise NotFound(f"no subscription {sub_id}")

    def _matches(self, sub: Subscription, event: dict) -> bool:
        if isinstance(sub.topic, str):
            return event.get("uri", "").startswith(sub.topic)
        delta = event.get("delta")
        if not delta:
            return False
        d = ChangeDelta.from_json(delta)
        store = TripleStore(d.added + d.removed)
        patterns, _ = decode_query(sub.topic)
        return bool(match_pattern(store, patterns))

    def publish_change(self, event: dict) -> int:
        with self._lock:
            event = dict(event, seq=next(self._seq))
            self.changes.append(event)
            targets = [s for _, s in sorted(self.subscriptions.items()) if self._matches(s, event)]
        if self._executor is not None:
            for sub in targets:
                self._pending.append(self._executor.submit(self._deliver, sub, event))
            return len(targets)
        return sum(self._deliver(sub, event) for sub in targets)

    def _deliver(self, sub: Subscription, event: dict) -> bool:
        body = dict(event, subscription=sub.id)
        for attempt in (1, 2):
            try:
                resp = self.network.request("POST", sub.callback, json_body=body)
                if resp.ok:
                    self.recorder.record("notification", subscription=sub.id, uri=event.get("uri"),
                                         seq=event["seq"], callback=sub.callback, attempt=attempt)
                    return True
            except TransportError:
                pass
        self.recorder.record("notification-failed", subscription=sub.id, uri=event.get("uri"),
                             seq=event["seq"], callback=sub.callback)
        return False

    def flush(self, timeout: float = 5.0):
        """Wait for background deliveries (no-op in deterministic mode)."""
        pending, self._pending = self._pending, []
        for fut in pending:
            fut.result(timeout)

    def changes_since(self, since: int) -> List[dict]:
        with self._lock:
            return [e for e in self.changes if e["seq"] > since]

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
        self.network.unmount(self.base)

    # -- HTTP surface ---------------------------------------------------------

    def _install_routes(self):
        for coll in _DEFAULT_MEDIA:
            self.route("GET", f"{coll}/{{id}}", self._http_get)
            self.route("PUT", f"{coll}/{{id}}", self._http_put)
        self.route("GET", "things", self._http_index)
        self.route("POST", "registry/profiles", self._http_submit)
        self.route("POST", "subscriptions", self._http_subscribe)
        self.route("DELETE", "subscriptions/{id}", self._http_unsubscribe)
        self.route("GET", "changes", self._http_changes)
        self.route("POST", "changes", self._http_publish)
        self.route("GET", "graph", self._http_graph)
        self.route("POST", "graph", self._http_graph_add)
        self.route("GET", "graph/query", self._http_query)
        self.route("POST", "graph/query", self._http_query)
        self.route("POST", "graph/reconfigure", self._http_reconfigure)

    def handle(self, request: Request) -> Response:
        try:
            return super().handle(request)
        except NotModified as exc:
            return Response(304, b"", {"ETag": f'"{exc.etag}"'})
        except NotFound as exc:
            return Response.error(404, str(exc))
        except UnsupportedMedia as exc:
            return Response.error(415, str(exc))
        except (ParseError, SchemaError, ScenarioError, ValueError, KeyError) as exc:
            return Response.error(400, str(exc))
        except CallbackUnreachable as exc:
            return Response.error(422, str(exc))
        except ConflictingIRI as exc:
            return Response.error(409, str(exc))
        except UnknownIRI as exc:
            return Response.error(404, str(exc))

    def _http_get(self, req: Request) -> Response:
        body, media, etag = self.handle_get(req.url.split("?", 1)[0], req.header("If-None-Match"))
        return Response.of_text(body, MEDIA_TYPES[media], headers={"ETag": f'"{etag}"'})

    def _http_put(self, req: Request) -> Response:
        ctype = (req.header("Content-Type") or "").split(";")[0].strip()
        coll = req.path.strip("/").split("/")[0]
        if ctype in _MEDIA_BY_CONTENT_TYPE:
            media = _MEDIA_BY_CONTENT_TYPE[ctype]
        elif ctype in ("", "application/json"):
            media = _DEFAULT_MEDIA[coll]
        else:
            raise UnsupportedMedia(f"unsupported content type {ctype!r}")
        uri = req.url.split("?", 1)[0]
        existed = uri in self.resources
        etag = self.handle_put(uri, req.body, media)
        return Response.of_json({"etag": etag}, 200 if existed else 201, {"ETag": f'"{etag}"'})

    def _http_index(self, req: Request) -> Response:
        things = sorted(u for u, r in self.resources.items() if r.media == "td-json")
        return Response.of_json({"things": things})

    def _http_submit(self, req: Request) -> Response:
        try:
            decision = self.submit_profile(req.body)
        except InvalidProfile as exc:
            return Response.error(400, str(exc))
        if decision.kind == REDIRECTED:
            return Response.of_json(decision.to_json(), 303, {"Location": decision.location})
        status = 200 if decision.kind == FORWARDED else 201
        return Response.of_json(decision.to_json(), status, {"Location": decision.profile})

    def _http_subscribe(self, req: Request) -> Response:
        doc = req.json()
        sub = self.subscribe(doc["topic"], doc["callback"])
        return Response.of_json(sub.to_json(), 201,
                                {"Location": f"{self.base}subscriptions/{sub.id}"})

    def _http_unsubscribe(self, req: Request) -> Response:
        self.unsubscribe(req.params["id"])
        return Response(204)

    def _http_changes(self, req: Request) -> Response:
        since = int(req.query.get("since", 0))
        return Response.of_json({"changes": self.changes_since(since)})

    def _http_publish(self, req: Request) -> Response:
        event = req.json()
        if not isinstance(event, dict) or "uri" not in event:
            raise ValueError("a change event needs a uri")
        return Response.of_json({"deliveries": self.publish_change(event)})

    def _http_graph(self, req: Request) -> Response:
        return Response.of_text(serialize_document(self.graph.snapshot()), MEDIA_TYPES["rdf-triples"])

    def _http_graph_add(self, req: Request) -> Response:
        triples = parse_document(req.text, NTRIPLES)
        added = self.graph.add_all(triples)
        if added:
            delta = ChangeDelta(added=sorted(set(triples)))
            self.publish_change({"uri": self.graph_url, "kind": "assert", "delta": delta.to_json()})
        return Response.of_json({"added": added})

    def _http_query(self, req: Request) -> Response:
        if req.method == "GET":
            doc = json.loads(req.query.get("q", "{}"))
        else:
            doc = req.json()
        patterns, select = decode_query(doc)
        return Response.of_json({"bindings": encode_bindings(self.query(patterns), select)})

    def _http_reconfigure(self, req: Request) -> Response:
        event = ReconfigurationEvent.from_json(req.json())
        delta = self.apply_reconfiguration(event)
        return Response.of_json(delta.to_json())
