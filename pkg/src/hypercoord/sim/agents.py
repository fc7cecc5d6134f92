"""Pump and chiller agents.

Each agent is an HTTP app mounted under ``{env}agents/{name}/`` that serves
its TD's forms (``properties/{name}``, ``actions/{name}``) plus an ``inbox``
for forwarded profiles and a ``callback`` for change notifications. Agents
touch the physical plant only through a :class:`PlantHandle`.

On boot an agent publishes its TD, reads the knowledge graph, infers its
coordination responsibilities, submits its profile and subscribes to graph
changes. Nothing about partners is configured up front.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional

from hypercoord import vocab
from hypercoord.cr import build_agent_profile, infer_responsibilities
from hypercoord.env.client import EnvironmentClient
from hypercoord.env.http import App, Network, Request, Response
from hypercoord.errors import (
    AffordanceMissing, HypercoordError, NotFound, RoleUnbound, TransportError, UnknownAgent,
)
from hypercoord.graph import Term, TripleStore
from hypercoord.model import DESIRED_STATES, agent_base, chiller_agent_td, pump_agent_td
from hypercoord.protocol import (
    COMMITTED, CoordinationProtocol, Enactment, bind_roles, load_protocol,
)
from hypercoord.sim.physics import (
    FAULT, OFF, PRIMING, PRIMING_STEPS, RUNNING, STARTING, PlantParameters, PlantState,
)
from hypercoord.td import ThingDescription
from hypercoord.trace import Recorder

log = logging.getLogger(__name__)


class PlantHandle:
    """Sensor and actuator access to the plant state owned by the runner."""

    def __init__(self, state: PlantState, params: Optional[PlantParameters] = None):
        self.state = state
        self.params = params or PlantParameters()
        self.stuck_valves: set = set()

    def set_valve(self, valve: str, position: float) -> bool:
        if valve in self.stuck_valves:
            return False
        self.state.valves[valve] = max(0.0, min(1.0, float(position)))
        return True

    def set_chiller(self, chiller: str, fsm: str):
        ch = self.state.chillers[chiller]
        ch.fsm = fsm
        ch.hold_count = 0


class Agent(App):
    role: Term = None

    def __init__(self, iri: Term, env_base: str, network: Network, plant: PlantHandle,
                 recorder: Optional[Recorder] = None):
        super().__init__()
        self.iri = iri
        self.name = vocab.local_name(iri)
        self.env_base = env_base
        self.base = agent_base(iri, env_base)
        self.network = network
        self.plant = plant
        self.recorder = recorder or Recorder()
        self.client = EnvironmentClient(network, env_base, self.recorder, requester=iri.value)
        self.td: ThingDescription = self.make_td()
        self.crs = []
        self.subscription: Optional[dict] = None
        self.inbox: List[dict] = []
        self.route("GET", "properties/{name}", self._http_property)
        self.route("POST", "actions/{name}", self._http_action)
        self.route("POST", "inbox", self._http_inbox)
        self.route("POST", "callback", self._http_callback)
        network.mount(self.base, self)

    def make_td(self) -> ThingDescription:
        raise NotImplementedError

    @property
    def clock(self) -> int:
        return self.recorder.clock()

    # -- lifecycle ------------------------------------------------------------

    def boot(self):
        self.client.put_td(self.td)
        self.refresh(force=True)
        self.subscription = self.client.subscribe(self.env_base + "graph", self.base + "callback")

    def shutdown(self):
        if self.subscription:
            try:
                self.client.unsubscribe(self.subscription["id"])
            except HypercoordError:
                pass
        self.network.unmount(self.base)

    def infer(self, graph: TripleStore):
        crs = infer_responsibilities(graph, self.iri)
        out = []
        for cr in crs:
            agents = set()
            for peer in cr.peers:
                for sub in graph.subjects(vocab.HAS_COMPONENT, peer):
                    agents.update(graph.subjects(vocab.MANAGES, sub))
            out.append(cr.with_peer_agents(agents))
        return out

    def refresh(self, force: bool = False) -> bool:
        """Re-run CR inference on the current graph; resubmit the profile if it changed."""
        graph = self.client.fetch_graph()
        try:
            crs = self.infer(graph)
        except UnknownAgent:
            return False
        if crs == self.crs and not force:
            return False
        self.crs = crs
        self.recorder.record("responsibilities", agent=self.iri.value,
                             crs={cr.direction: len(cr.peers) for cr in crs})
        _triples, doc = build_agent_profile(self.iri, crs, self.td,
                                            DESIRED_STATES[self.role], inbox=self.base + "inbox")
        self.client.submit_profile(doc)
        return True

    def peers(self, direction: str) -> List[Term]:
        return sorted({p for cr in self.crs if cr.direction == direction for p in cr.peers})

    def act(self, step: int):
        """Called once per simulation step by the runner."""

    # -- HTTP -----------------------------------------------------------------

    def property_value(self, name: str):
        raise NotFound(name)

    def value_of_type(self, semantic_type: str):
        prop = self.td.find_property(semantic_type)
        if prop is None:
            raise NotFound(semantic_type)
        return self.property_value(prop.name)

    def _http_property(self, req: Request) -> Response:
        name = req.params["name"]
        if name not in self.td.properties:
            return Response.error(404, f"no property {name}")
        return Response.of_json({"value": self.property_value(name)})

    def _http_action(self, req: Request) -> Response:
        name = req.params["name"]
        if name not in self.td.actions:
            return Response.error(404, f"no action {name}")
        try:
            body = req.json() or {}
        except ValueError:
            return Response.error(400, "body must be JSON")
        return self.invoke(name, body)

    def invoke(self, name: str, body: dict) -> Response:
        return Response.error(404, f"no action {name}")

    def _http_inbox(self, req: Request) -> Response:
        msg = req.json() or {}
        self.inbox.append(msg)
        self.recorder.record("inbox", agent=self.iri.value, sender=msg.get("agent"),
                             profile=msg.get("profile"))
        return Response(204)

    def _http_callback(self, req: Request) -> Response:
        event = req.json() or {}
        if event.get("type") == "probe":
            return Response(204)
        if event.get("kind") in ("reconfigure", "assert"):
            self.refresh()
        return Response(204)


class PumpAgent(Agent):
    """Serves flow readings and sums flow demands from requesters into a setpoint."""

    role = vocab.PUMP_MANAGER

    def __init__(self, iri, env_base, network, plant, recorder=None,
                 protocol: Optional[CoordinationProtocol] = None, auto_prime: bool = True):
        self.protocol = protocol or load_protocol()
        self.auto_prime = auto_prime
        self.demands: Dict[str, float] = {}
        super().__init__(iri, env_base, network, plant, recorder)

    def make_td(self):
        return pump_agent_td(self.iri, self.env_base)

    def boot(self):
        super().boot()
        if self.auto_prime and self.plant.state.pump.fsm == OFF:
            self._start_priming()

    def _start_priming(self):
        pump = self.plant.state.pump
        pump.fsm = PRIMING
        pump.priming_left = PRIMING_STEPS

    def property_value(self, name):
        pump = self.plant.state.pump
        if name == "current-flowrate":
            return pump.delivered_flow
        if name == "is-primed":
            return pump.fsm == RUNNING
        raise NotFound(name)

    def invoke(self, name, body):
        if name != "change-flowrate":
            return super().invoke(name, body)
        flow = body.get("flow", body.get("value"))
        if isinstance(flow, bool) or not isinstance(flow, (int, float)) or flow < 0:
            return Response.error(400, "flow must be a non-negative number")
        rejected = self._recheck(body.get("message"))
        if rejected:
            return Response.error(409, "precondition_failed", predicate=rejected)
        pump = self.plant.state.pump
        if pump.fsm == PRIMING:
            return Response.error(409, "busy", predicate=None)
        self.demands[body.get("sender") or "direct"] = float(flow)
        pump.flow_setpoint = sum(self.demands.values())
        if pump.fsm == OFF:
            self._start_priming()
        self.recorder.record("flow-change", agent=self.iri.value, sender=body.get("sender"),
                             flow=float(flow), setpoint=pump.flow_setpoint)
        return Response.of_json({"setpoint": pump.flow_setpoint, "state": pump.fsm}, 202)

    def _recheck(self, message: Optional[str]) -> Optional[str]:
        """Receiver-side check of the message's receiver preconditions."""
        if not message:
            return None
        try:
            spec = self.protocol.message(message)
        except KeyError:
            return None
        for pid in spec.receiver_preconditions:
            pred = self.protocol.predicates[pid]
            try:
                value = self.value_of_type(pred.property_type)
            except NotFound:
                return vocab.compact(pid)
            if not pred.compare(value, pred.threshold):
                return vocab.compact(pid)
        return None


IDLE, OPENING, BINDING, ENACTING, STARTING_UP = "idle", "opening", "binding", "enacting", "starting"
ACHIEVED, FAILED, LOST = "achieved", "failed", "lost"


class ChillerAgent(Agent):
    """Turns a cooling goal into a coordinated start of its chiller.

    Goal progression: open the valve, bind the protocol roles, enact each
    message of the plan, then start the chiller once every commitment holds.
    """

    role = vocab.CHILLER_MANAGER

    def __init__(self, iri, env_base, network, plant, recorder=None,
                 protocol: Optional[CoordinationProtocol] = None,
                 chiller: str = "", valve: str = "", deadline: int = 20, hop_budget: int = 3):
        self.protocol = protocol or load_protocol()
        self.chiller = chiller
        self.valve = valve
        self.deadline = deadline
        self.hop_budget = hop_budget
        self.goals: List[dict] = []
        self.enactments: List[dict] = []
        self._queue = []
        self._enactment: Optional[Enactment] = None
        self._starting_since = 0
        super().__init__(iri, env_base, network, plant, recorder)

    def make_td(self):
        return chiller_agent_td(self.iri, self.env_base)

    @property
    def goal(self) -> Optional[dict]:
        return self.goals[-1] if self.goals else None

    def property_value(self, name):
        ch = self.plant.state.chillers.get(self.chiller)
        if name == "present-output":
            return ch.cooling_output if ch else 0.0
        if name == "branch-flow":
            return ch.branch_flow if ch else 0.0
        if name == "valve-position":
            return self.plant.state.valves.get(self.valve, 0.0)
        raise NotFound(name)

    def invoke(self, name, body):
        if name != "provide-cooling":
            return super().invoke(name, body)
        g = self.goal
        if g and g["status"] not in (ACHIEVED, FAILED, LOST):
            return Response.error(409, "busy")
        self.goals.append({"agent": self.iri.value, "requested_at": self.clock, "status": OPENING,
                           "finished_at": None, "reason": None})
        return Response.of_json({"status": OPENING}, 202)

    def _fail(self, reason: str):
        g = self.goal
        g.update(status=FAILED, finished_at=self.clock, reason=reason)
        self.plant.set_valve(self.valve, 0.0)
        self._enactment = None
        self._queue = []
        self.recorder.record("goal", **g)

    def _finish_enactment(self, record):
        doc = dict(record.to_json(), agent=self.iri.value)
        self.enactments.append(doc)
        self.recorder.record("enactment", **doc)
        self._enactment = None
        if record.outcome != COMMITTED:
            self._fail(record.outcome)
        elif self._queue:
            self._begin(self._queue.pop(0))
        else:
            self.plant.set_chiller(self.chiller, STARTING)
            self.goal["status"] = STARTING_UP
            self._starting_since = self.clock

    def _begin(self, binding):
        payload = {"flow": self.plant.params.q_max_branch}
        self._enactment = Enactment(self.protocol, binding, payload, self.client,
                                    lambda: self.clock, self.deadline)
        record = self._enactment.start()
        if self._enactment.done:
            self._finish_enactment(record)

    def act(self, step: int):
        g = self.goal
        if g is None:
            return
        status = g["status"]
        if status == OPENING:
            self.plant.set_valve(self.valve, 1.0)
            g["status"] = status = BINDING
        if status == BINDING:
            try:
                bindings = bind_roles(self.protocol, self.client, sender=self.iri,
                                      hop_budget=self.hop_budget)
            except (RoleUnbound, AffordanceMissing, TransportError, NotFound) as exc:
                self._fail(f"binding: {exc}")
                return
            per_message = {}
            for b in bindings:
                per_message.setdefault(b.message, b)
            self._queue = [per_message[m.id] for m in self.protocol.plan() if m.id in per_message]
            g["status"] = ENACTING
            self._begin(self._queue.pop(0))
        elif status == ENACTING and self._enactment is not None:
            record = self._enactment.poll()
            if self._enactment.done:
                self._finish_enactment(record)
        elif status == STARTING_UP:
            fsm = self.plant.state.chillers[self.chiller].fsm
            if fsm == RUNNING:
                g.update(status=ACHIEVED, finished_at=step)
                self.recorder.record("goal", **g)
            elif fsm == FAULT:
                self._fail("chiller fault during start")
            elif step - self._starting_since > self.deadline:
                self.plant.set_chiller(self.chiller, OFF)
                self._fail("chiller did not reach running")
        elif status == ACHIEVED:
            if self.plant.state.chillers[self.chiller].fsm == FAULT:
                g.update(status=LOST, finished_at=step, reason="chiller fault")
                self.recorder.record("goal", **g)


def spawn_agent(iri: Term, graph: TripleStore, env_base: str, network: Network,
                plant: PlantHandle, recorder: Recorder,
                protocol: Optional[CoordinationProtocol] = None) -> Agent:
    """Instantiate the agent class matching the role found in the graph."""
    types = set(graph.objects(iri, vocab.RDF_TYPE))
    if vocab.PUMP_MANAGER in types:
        return PumpAgent(iri, env_base, network, plant, recorder, protocol)
    if vocab.CHILLER_MANAGER in types:
        chiller = valve = ""
        for sub in graph.objects(iri, vocab.MANAGES):
            for comp in graph.objects(sub, vocab.HAS_COMPONENT):
                ctypes = graph.objects(comp, vocab.RDF_TYPE)
                if vocab.CHILLER in ctypes:
                    chiller = vocab.local_name(comp)
                elif vocab.VALVE in ctypes:
                    valve = vocab.local_name(comp)
        return ChillerAgent(iri, env_base, network, plant, recorder, protocol, chiller, valve)
    raise UnknownAgent(f"{iri!r} plays no known role")
