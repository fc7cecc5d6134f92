"""Scenario scripts, the step-synchronous runner and trace auditing.

Each step runs in a fixed order: scripted events, then every agent's
``act`` in IRI order, then a plant snapshot, then one physics step. In
deterministic mode all message handling for a step finishes inside that
step, so identical scripts give byte-identical traces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from hypercoord import vocab
from hypercoord.env.environment import Environment
from hypercoord.env.http import Network, serve_in_thread
from hypercoord.errors import HypercoordError, ScenarioError
from hypercoord.graph import IRI
from hypercoord.model import (
    ADD_BRANCH, DEFAULT_BASE, REMOVE_BRANCH, PlantTopology, ReconfigurationEvent,
    build_chilled_water_fixture,
)
from hypercoord.protocol import load_protocol, protocol_to_json, StatePredicate
from hypercoord.sim.agents import ChillerAgent, PlantHandle, PumpAgent, spawn_agent
from hypercoord.sim.physics import RUNNING, PlantParameters, initial_state, step
from hypercoord.trace import Recorder

EVENT_KINDS = ("goal", "reconfigure", "fault", "set-load")
FAULT_TYPES = ("pump-unreachable", "restore", "valve-stuck", "close-valve")
PROTOCOL_NAME = "request-flowrate-change"


@dataclass
class ScenarioEvent:
    at_step: int
    kind: str
    args: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"at_step": self.at_step, "kind": self.kind, "args": self.args}


@dataclass
class ScenarioScript:
    events: List[ScenarioEvent]
    duration: int
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if not isinstance(self.duration, int) or self.duration < 1:
            raise ScenarioError("duration must be a positive integer")
        last = -1
        for ev in self.events:
            if ev.kind not in EVENT_KINDS:
                raise ScenarioError(f"unknown event kind {ev.kind!r}")
            if not isinstance(ev.at_step, int) or not 0 <= ev.at_step < self.duration:
                raise ScenarioError(f"event step {ev.at_step!r} outside [0, {self.duration})")
            if ev.at_step < last:
                raise ScenarioError("events must be sorted by at_step")
            last = ev.at_step
            _check_args(ev)

    @classmethod
    def from_json(cls, doc) -> "ScenarioScript":
        if isinstance(doc, (str, bytes)):
            try:
                doc = json.loads(doc)
            except ValueError as exc:
                raise ScenarioError(f"not JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ScenarioError("a scenario must be a JSON object")
        try:
            events = [ScenarioEvent(e["at_step"], e["kind"], dict(e.get("args") or {}))
                      for e in doc.get("events", [])]
            return cls(events, doc["duration"], doc.get("seed", 0), doc.get("name", ""))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc

    def to_json(self) -> dict:
        return {"name": self.name, "duration": self.duration, "seed": self.seed,
                "events": [e.to_json() for e in self.events]}


def _check_args(ev: ScenarioEvent):
    need = {"goal": ("agent",), "reconfigure": ("action", "chiller", "valve", "agent"),
            "fault": ("type",), "set-load": ()}[ev.kind]
    missing = [k for k in need if k not in ev.args]
    if missing:
        raise ScenarioError(f"{ev.kind} event at step {ev.at_step} lacks {', '.join(missing)}")
    if ev.kind == "reconfigure" and ev.args["action"] not in ("add", "remove"):
        raise ScenarioError("reconfigure action must be add or remove")
    if ev.kind == "fault":
        if ev.args["type"] not in FAULT_TYPES:
            raise ScenarioError(f"unknown fault type {ev.args['type']!r}")
        if ev.args["type"] in ("valve-stuck", "close-valve") and "valve" not in ev.args:
            raise ScenarioError(f"{ev.args['type']} fault needs a valve")
    if ev.kind == "set-load" and not ({"supply", "return"} & set(ev.args)):
        raise ScenarioError("set-load needs supply and/or return")


def load_scenario(path_or_name: str) -> ScenarioScript:
    """A file path, or the name of a shipped script such as ``startup``."""
    import os
    if os.path.exists(path_or_name):
        with open(path_or_name, encoding="utf-8") as fh:
            return ScenarioScript.from_json(fh.read())
    name = path_or_name if path_or_name.endswith(".json") else path_or_name + ".json"
    return ScenarioScript.from_json(vocab.asset_text(f"scenarios/{name}"))


def shipped_scenarios() -> List[str]:
    from importlib import resources
    files = resources.files("hypercoord").joinpath("assets", "scenarios").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def _iri(name: str):
    return IRI(vocab.expand(name if ":" in name else ":" + name))


class Runner:
    def __init__(self, script: ScenarioScript, deterministic: bool = True,
                 base_uri: str = DEFAULT_BASE, params: Optional[PlantParameters] = None):
        self.script = script
        self.params = params or PlantParameters()
        self.t = 0
        self.recorder = Recorder(lambda: self.t)
        self.network = Network()
        self.env = Environment(base_uri, self.network, deterministic, self.recorder)
        self.env.load_graph(build_chilled_water_fixture())
        self.protocol = load_protocol(PROTOCOL_NAME)
        self.env.handle_put(f"{self.env.base}protocols/{PROTOCOL_NAME}",
                            vocab.asset_text(f"protocols/{PROTOCOL_NAME}.ttl"), "turtle")
        topo = PlantTopology.from_store(self.env.graph)
        branches = {vocab.local_name(c): vocab.local_name(v) for c, v, _ in topo.branches()}
        self.plant = PlantHandle(initial_state(branches), self.params)
        self.agents: Dict[str, object] = {}
        self.retired: Dict[str, object] = {}
        self.steps: List[dict] = []
        for agent in sorted(topo.agents):
            self._spawn(agent)

    def _spawn(self, iri):
        agent = spawn_agent(iri, self.env.graph, self.env.base, self.network, self.plant,
                            self.recorder, self.protocol)
        self.agents[iri.value] = agent
        agent.boot()
        return agent

    # -- events ---------------------------------------------------------------

    def apply(self, ev: ScenarioEvent):
        a = ev.args
        self.recorder.record("event", kind=ev.kind, args=a)
        if ev.kind == "goal":
            agent = self.agents.get(_iri(a["agent"]).value)
            if not isinstance(agent, ChillerAgent):
                raise ScenarioError(f"goal for unknown chiller agent {a['agent']!r}")
            action = agent.td.actions["provide-cooling"]
            self.network.request("POST", agent.td.form_url(action), json_body={})
        elif ev.kind == "reconfigure":
            self._reconfigure(a)
        elif ev.kind == "fault":
            self._fault(a)
        elif ev.kind == "set-load":
            if "return" in a:
                self.plant.state.loop.ret = float(a["return"])
            if "supply" in a:
                self.plant.state.loop.supply = float(a["supply"])

    def _reconfigure(self, a):
        kind = ADD_BRANCH if a["action"] == "add" else REMOVE_BRANCH
        event = ReconfigurationEvent(kind, _iri(a["chiller"]), _iri(a["valve"]), _iri(a["agent"]),
                                     self.t)
        chiller, valve = vocab.local_name(event.chiller), vocab.local_name(event.valve)
        if kind == REMOVE_BRANCH:
            agent = self.agents.pop(event.agent.value, None)
            if agent is not None:
                agent.shutdown()
                self.retired[event.agent.value] = agent
        self.env.apply_reconfiguration(event)
        if kind == ADD_BRANCH:
            self.plant.state.add_branch(chiller, valve)
        else:
            self.plant.state.remove_branch(chiller)
        # agents the description mentions but nobody runs yet
        topo = PlantTopology.from_store(self.env.graph)
        for iri in sorted(topo.agents):
            if iri.value not in self.agents:
                self._spawn(iri)

    def _fault(self, a):
        kind = a["type"]
        pumps = [ag for ag in self.agents.values() if isinstance(ag, PumpAgent)]
        if kind == "pump-unreachable":
            self.network.unreachable.update(p.base for p in pumps)
        elif kind == "restore":
            self.network.unreachable.clear()
            self.plant.stuck_valves.clear()
        elif kind == "valve-stuck":
            self.plant.state.valves[a["valve"]] = float(a.get("position", 0.0))
            self.plant.stuck_valves.add(a["valve"])
        elif kind == "close-valve":
            self.plant.state.valves[a["valve"]] = 0.0

    # -- main loop ------------------------------------------------------------

    def run(self) -> dict:
        events = list(self.script.events)
        for t in range(self.script.duration):
            self.t = t
            while events and events[0].at_step == t:
                self.apply(events.pop(0))
            for name in sorted(self.agents):
                self.agents[name].act(t)
            self.env.flush()
            self.steps.append(dict(self.plant.state.to_json(), time=t))
            self.plant.state = step(self.plant.state, self.params)
        self.t = self.script.duration
        return self.trace()

    def trace(self) -> dict:
        final = dict(self.plant.state.to_json(), time=self.t)
        everyone = {**self.retired, **self.agents}
        goals, enactments = [], []
        for name in sorted(everyone):
            ag = everyone[name]
            if isinstance(ag, ChillerAgent):
                goals += [dict(g) for g in ag.goals]
                enactments += ag.enactments
        enactments.sort(key=lambda e: (e["started"], e["agent"]))
        goals.sort(key=lambda g: (g["requested_at"], g["agent"]))
        agents = {}
        for name in sorted(everyone):
            ag = everyone[name]
            info = {"role": vocab.compact(ag.role.value),
                    "crs": {cr.direction: sorted(vocab.compact(p.value) for p in cr.peers)
                            for cr in ag.crs}}
            if isinstance(ag, ChillerAgent):
                info.update(chiller=ag.chiller, valve=ag.valve)
            agents[vocab.compact(name)] = info
        trace = {
            "scenario": self.script.to_json(),
            "parameters": {"q_max_branch": self.params.q_max_branch,
                           "q_min_start": self.params.q_min_start,
                           "hold_steps": self.params.hold_steps, "p_rated": self.params.p_rated,
                           "cp_rho": self.params.cp_rho, "dt": self.params.dt},
            "protocol": protocol_to_json(self.protocol),
            "agents": agents,
            "steps": self.steps,
            "final": final,
            "enactments": enactments,
            "goals": goals,
            "registry": [_strip(e) for e in self.recorder.of_type("registry")],
            "notifications": [_strip(e) for e in self.recorder.of_type("notification")],
            "navigations": [_strip(e) for e in self.recorder.of_type("navigation")],
            "log": [e for e in self.recorder.entries
                    if e["type"] not in ("registry", "notification", "navigation",
                                         "enactment", "goal")],
        }
        violations = audit_trace(trace)
        trace["summary"] = {
            "goals_requested": len(goals),
            "goals_achieved": sum(g["status"] == "achieved" for g in goals),
            "goals_failed": sum(g["status"] in ("failed", "lost") for g in goals),
            "chillers_running": sorted(k for k, c in final["chillers"].items()
                                       if c["fsm"] == RUNNING),
            "delivered_flow": final["pump"]["delivered_flow"],
            "invocations": sum(e["invokedAt"] is not None for e in enactments),
            "safety_violations": len(violations),
            "violations": violations,
        }
        return trace


def _strip(entry: dict) -> dict:
    return {k: v for k, v in entry.items() if k != "type"}


def run_scenario(script: ScenarioScript, deterministic: bool = True,
                 base_uri: str = DEFAULT_BASE, http_port: Optional[int] = None,
                 params: Optional[PlantParameters] = None) -> dict:
    runner = Runner(script, deterministic, base_uri, params)
    server = None
    if http_port is not None:
        server, _thread = serve_in_thread(runner.network, runner.env.base, port=http_port)
    try:
        return runner.run()
    finally:
        if server is not None:
            server.shutdown()
            server.server_close()
        runner.env.close()


def dumps_trace(trace: dict) -> str:
    return json.dumps(trace, sort_keys=True, indent=1) + "\n"


# -- auditing -----------------------------------------------------------------

def _probe(snapshot: dict, semantic_type: str, agent: dict):
    """What a property of the given semantic type reads in a plant snapshot."""
    local = vocab.local_name(semantic_type)
    if local == "ValvePosition":
        return snapshot["valves"].get(agent.get("valve"), 0.0)
    if local == "BranchFlow":
        return snapshot["chillers"].get(agent.get("chiller"), {}).get("branch_flow", 0.0)
    if local == "CoolingPower":
        return snapshot["chillers"].get(agent.get("chiller"), {}).get("cooling_output", 0.0)
    if local == "PrimingState":
        return snapshot["pump"]["fsm"] == RUNNING
    if local == "FlowRate":
        return snapshot["pump"]["delivered_flow"]
    raise KeyError(semantic_type)


def audit_trace(trace: dict) -> List[dict]:
    """Safety violations: invocations made while a precondition was false in
    the plant, and chillers running without flow for longer than allowed."""
    violations = []
    steps = {s["time"]: s for s in trace["steps"]}
    preds = trace["protocol"]["predicates"]
    agents = trace["agents"]
    for rec in trace["enactments"]:
        t = rec["invokedAt"]
        if t is None:
            continue
        snap = steps.get(t)
        msg = next(m for m in trace["protocol"]["messages"] if m["id"] == rec["message"])
        checks = [(p, rec["binding"]["sender"]) for p in msg["sender"]["preconditions"]]
        checks += [(p, rec["binding"]["receiver"]) for p in msg["receiver"]["preconditions"]]
        for pid, agent in checks:
            pred = StatePredicate.from_json(pid, preds[pid])
            value = _probe(snap, pred.property_type, agents.get(agent, {}))
            if not pred.compare(value, pred.threshold_for(rec["payload"])):
                violations.append({"kind": "precondition", "step": t, "predicate": pid,
                                   "agent": agent, "observed": value})
    hold = trace["parameters"]["hold_steps"]
    q_min = trace["parameters"]["q_min_start"]
    streak: Dict[str, int] = {}
    for snap in trace["steps"] + [trace["final"]]:
        for name, ch in snap["chillers"].items():
            valve = next((a["valve"] for a in agents.values() if a.get("chiller") == name), None)
            pos = snap["valves"].get(valve, 0.0)
            bad = ch["fsm"] == RUNNING and pos < 1.0 and ch["branch_flow"] < q_min
            streak[name] = streak.get(name, 0) + 1 if bad else 0
            if streak[name] > hold:
                violations.append({"kind": "interlock", "step": snap["time"], "chiller": name})
    return violations
