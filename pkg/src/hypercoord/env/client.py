"""Client side of the environment: TD retrieval, registry, queries and navigation."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional

from hypercoord import vocab
from hypercoord.env.environment import RegistryDecision
from hypercoord.errors import HopBudgetExhausted, HypercoordError, NotFound, TransportError
from hypercoord.graph import NTRIPLES, TripleStore, parse_document
from hypercoord.graph.query_json import encode_term
from hypercoord.td import ThingDescription, parse_td, serialize_td
from hypercoord.trace import Recorder

Goal = Callable[[ThingDescription], bool]


@dataclass
class NavigationResult:
    uri: str
    td: ThingDescription
    hops: int
    fetches: int
    visited: List[str] = field(default_factory=list)


def has_action_of_type(semantic_type: str, manipulates: Optional[str] = None) -> Goal:
    def goal(td: ThingDescription) -> bool:
        return any(a.semantic_type == semantic_type
                   and (manipulates is None or a.manipulates == manipulates)
                   for a in td.actions.values())
    return goal


class RequestFailed(HypercoordError):
    def __init__(self, status, message):
        self.status = status
        super().__init__(f"HTTP {status}: {message}")


class EnvironmentClient:
    def __init__(self, network, base: str, recorder: Optional[Recorder] = None,
                 requester: Optional[str] = None):
        self.network = network
        self.base = base if base.endswith("/") else base + "/"
        self.recorder = recorder
        self.requester = requester

    def _check(self, resp, url):
        if resp.status == 404:
            raise NotFound(f"{url} not found")
        if not resp.ok:
            raise RequestFailed(resp.status, resp.text)
        return resp

    def thing_url(self, link: str) -> str:
        """Where the TD of a link target lives.

        Web addresses are used as they are; entity IRIs (plant namespace or
        compact) resolve to the environment's ``things/`` collection.
        """
        namespaces = tuple(vocab.PREFIXES.values())
        if link.startswith(("http://", "https://")) and not link.startswith(namespaces):
            return link
        return f"{self.base}things/{vocab.local_name(vocab.expand(link))}"

    # -- resources ------------------------------------------------------------

    def get_td(self, url: str) -> ThingDescription:
        resp = self._check(self.network.request("GET", url), url)
        return parse_td(resp.text)

    def put_td(self, td: ThingDescription, url: Optional[str] = None) -> int:
        url = url or self.thing_url(td.id)
        body = json.dumps(serialize_td(td), sort_keys=True)
        resp = self.network.request("PUT", url, body, {"Content-Type": "application/td+json"})
        return self._check(resp, url).json()["etag"]

    def submit_profile(self, doc: dict, max_redirects: int = 3) -> RegistryDecision:
        url = self.base + "registry/profiles"
        for _ in range(max_redirects + 1):
            resp = self.network.request("POST", url, json_body=doc)
            if resp.status == 303:
                url = resp.header("Location")
                continue
            return RegistryDecision.from_json(self._check(resp, url).json())
        raise RequestFailed(303, "too many redirects")

    def query(self, doc: dict) -> List[dict]:
        url = self.base + "graph/query"
        return self._check(self.network.request("POST", url, json_body=doc), url).json()["bindings"]

    def query_patterns(self, patterns) -> List[dict]:
        where = []
        for p in patterns:
            pred = encode_term(p.predicate) + ("*" if p.path_star else "")
            where.append([self._enc(p.subject), pred, self._enc(p.object)])
        return self.query({"where": where})

    @staticmethod
    def _enc(t):
        v = encode_term(t)
        return v if isinstance(v, dict) or v.startswith(("?", "_:")) else f"<{v}>"

    def fetch_graph(self) -> TripleStore:
        url = self.base + "graph"
        resp = self._check(self.network.request("GET", url), url)
        return TripleStore(parse_document(resp.text, NTRIPLES))

    def subscribe(self, topic, callback: str) -> dict:
        url = self.base + "subscriptions"
        resp = self.network.request("POST", url, json_body={"topic": topic, "callback": callback})
        return self._check(resp, url).json()

    def unsubscribe(self, sub_id: str):
        url = f"{self.base}subscriptions/{sub_id}"
        self._check(self.network.request("DELETE", url), url)

    def changes(self, since: int = 0) -> List[dict]:
        url = f"{self.base}changes?since={since}"
        return self._check(self.network.request("GET", url), url).json()["changes"]

    # -- affordances ----------------------------------------------------------

    def read_property(self, td: ThingDescription, prop):
        url = td.form_url(prop)
        return self._check(self.network.request("GET", url), url).json()["value"]

    def invoke(self, td: ThingDescription, action, payload: dict):
        """POST to the action form; the raw response is returned (status matters)."""
        return self.network.request("POST", td.form_url(action), json_body=payload)

    # -- navigation -----------------------------------------------------------

    def navigate(self, start: str, goal: Goal, max_hops: int) -> NavigationResult:
        """Breadth-first walk over TD links from ``start``.

        Fetching ``start`` is free; every further TD fetch spends one hop.
        """
        if max_hops < 1:
            raise ValueError("max_hops must be at least 1")
        start = self.thing_url(start)
        visited = [start]
        frontier = deque([(start, 0)])
        fetches = hops_used = 0
        try:
            while frontier:
                uri, depth = frontier.popleft()
                if depth > 0:
                    if hops_used >= max_hops:
                        raise HopBudgetExhausted(
                            f"hop budget {max_hops} spent with {len(frontier) + 1} TDs unvisited")
                    hops_used += 1
                fetches += 1
                try:
                    td = self.get_td(uri)
                except (NotFound, TransportError):
                    continue
                if goal(td):
                    result = NavigationResult(uri, td, depth, fetches, list(visited))
                    self._record(start, result=result)
                    return result
                for link in td.links:
                    target = self.thing_url(link)
                    if target not in visited:
                        visited.append(target)
                        frontier.append((target, depth + 1))
        except HopBudgetExhausted as exc:
            self._record(start, fetches=fetches, visited=visited, error=str(exc))
            raise
        self._record(start, fetches=fetches, visited=visited, error="not found")
        raise NotFound(f"no TD reachable from {start} satisfies the goal "
                       f"({len(visited)} visited)")

    def _record(self, start, result=None, fetches=None, visited=None, error=None):
        if self.recorder is None:
            return
        if result is not None:
            self.recorder.record("navigation", requester=self.requester, start=start,
                                 found=result.uri, hops=result.hops, fetches=result.fetches)
        else:
            self.recorder.record("navigation", requester=self.requester, start=start,
                                 found=None, fetches=fetches, visited=len(visited), error=error)
