import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypercoord import vocab
from hypercoord.env import Environment, EnvironmentClient, Network
from hypercoord.errors import (
    AffordanceMissing, ObservationUnavailable, ProtocolSchemaError, RoleUnbound,
)
from hypercoord.graph import TURTLE, Triple, TripleStore, Var, match_pattern, parse_document, pattern
from hypercoord.model import pump_agent_td
from hypercoord.protocol import (
    COMMITMENT_TIMEOUT, COMMITTED, PRECONDITION_FAILED, TRANSPORT_ERROR, CoordinationProtocol,
    MessageSpec, StatePredicate, bind_roles, enact_message, evaluate_predicate, load_protocol,
    parse_protocol, protocol_from_json, protocol_from_triples, protocol_to_json,
    protocol_to_triples,
)
from hypercoord.sim.physics import OFF, RUNNING, step
from hypercoord.sim.scenario import Runner, ScenarioScript
from hypercoord.td import ThingDescription, dumps_td
from golden import GOLDEN, IS_PRIMED, VALVES_OPEN

P = vocab.P
TTL = vocab.asset_text("protocols/request-flowrate-change.ttl")


def test_shipped_protocol_matches_golden_parse():
    assert load_protocol() == GOLDEN
    assert parse_protocol(TTL) == GOLDEN
    assert parse_protocol(vocab.asset_text("protocols/request-flowrate-change.json")) == GOLDEN


def test_spelling_variants_are_merged():
    triples = parse_document(TTL, TURTLE)
    assert Triple(P["receiver"], vocab.INTR.sameAs, P["_reciever"]) in triples
    assert len(GOLDEN.messages) == 1


def test_round_trips():
    assert protocol_from_triples(protocol_to_triples(GOLDEN)) == GOLDEN
    assert protocol_from_json(json.loads(json.dumps(protocol_to_json(GOLDEN)))) == GOLDEN


def _without(predicate):
    return [t for t in parse_document(TTL, TURTLE) if t.predicate != predicate]


@pytest.mark.parametrize("dropped", ["hasReceiver", "hasSender", "hasAffordance", "evaluator"])
def test_missing_parts_rejected(dropped):
    if dropped == "evaluator":
        triples = [t for t in parse_document(TTL, TURTLE) if t.subject != P["_is_primed"]]
    else:
        triples = _without(vocab.INTR[dropped])
    with pytest.raises(ProtocolSchemaError):
        protocol_from_triples(triples)


def test_empty_document_rejected():
    with pytest.raises(ProtocolSchemaError):
        protocol_from_triples([])
    with pytest.raises(ProtocolSchemaError):
        parse_protocol({"messages": [], "predicates": {}})


def test_spec_invariants():
    with pytest.raises(ProtocolSchemaError):
        MessageSpec("m", "r", "r", "t")
    with pytest.raises(ProtocolSchemaError):
        MessageSpec("m", "a", "b", "")
    with pytest.raises(ProtocolSchemaError):
        StatePredicate("p", "sender", "!=", "t", 1)
    with pytest.raises(ProtocolSchemaError):
        StatePredicate("p", "observer", "=", "t", 1)
    with pytest.raises(ProtocolSchemaError):
        StatePredicate("p", "sender", "=", "t")


def test_compare_semantics():
    assert IS_PRIMED.compare(True, True) and not IS_PRIMED.compare(1, True)
    assert not IS_PRIMED.compare(False, True)
    assert VALVES_OPEN.compare(1.0 - 1e-12, 1.0) and not VALVES_OPEN.compare(0.99, 1.0)
    assert not VALVES_OPEN.compare("1.0", 1.0)
    le = StatePredicate("p", "sender", "<=", "t", 2.0)
    assert le.compare(2.0, 2.0) and not le.compare(2.1, 2.0)


names = st.text("abcdef", min_size=1, max_size=4)


@st.composite
def protocols(draw):
    preds = {}
    for name in draw(st.lists(names, min_size=1, max_size=4, unique=True)):
        pid = vocab.PLANT + "_p" + name
        if draw(st.booleans()):
            preds[pid] = StatePredicate(pid, draw(st.sampled_from(["sender", "receiver"])),
                                        draw(st.sampled_from(["=", ">=", "<="])),
                                        vocab.PREFIXES["hvac"] + "BranchFlow",
                                        draw(st.sampled_from([1.0, 2.5, True, 0.0])))
        else:
            preds[pid] = StatePredicate(pid, "sender", ">=", vocab.PREFIXES["hvac"] + "FlowRate",
                                        threshold_from_payload="flow", unit="l/s")
    ids = sorted(preds)
    messages = []
    for i, name in enumerate(draw(st.lists(names, min_size=1, max_size=3, unique=True))):
        pick = lambda: tuple(draw(st.lists(st.sampled_from(ids), max_size=2, unique=True)))
        messages.append(MessageSpec(
            vocab.PLANT + "msg-" + name, vocab.CHILLER_MANAGER.value, vocab.PUMP_MANAGER.value,
            vocab.PREFIXES["hvac"] + "FlowModulation", pick(), pick(), pick(), pick(),
            "flow", "number", draw(st.sampled_from([None, "l/s"])), i + 1,
            vocab.PLANT + f"_s{i}", vocab.PLANT + f"_r{i}", vocab.PLANT + f"_a{i}"))
    return CoordinationProtocol(messages, preds)


@settings(max_examples=60, deadline=None)
@given(protocols())
def test_random_protocol_round_trips(protocol):
    used = {p for m in protocol.messages for p in m.predicates()}
    protocol.predicates = {k: v for k, v in protocol.predicates.items() if k in used}
    assert protocol_from_triples(protocol_to_triples(protocol)) == protocol
    assert protocol_from_json(protocol_to_json(protocol)) == protocol


# -- binding and enactment against the simulated plant ----------------------------

class World:
    """The shipped plant with its agents booted, stepped by hand."""

    def __init__(self):
        self.runner = Runner(ScenarioScript([], duration=50, name="unit"))
        self.env = self.runner.env
        self.network = self.runner.network
        self.plant = self.runner.plant
        self.c1 = self.runner.agents[P["agent-c1"].value]
        self.pump = self.runner.agents[P["agent-p"].value]
        self.client = self.c1.client

    def tick(self):
        self.runner.t += 1
        self.plant.state = step(self.plant.state, self.plant.params)

    def run_until_primed(self):
        for _ in range(5):
            if self.plant.state.pump.fsm == RUNNING:
                return
            self.tick()
        raise AssertionError("pump never primed")

    def binding(self):
        return bind_roles(GOLDEN, self.client, sender=P["agent-c1"])[0]


@pytest.fixture
def world():
    w = World()
    yield w
    w.env.close()


def test_bind_roles_on_fixture(world):
    b = world.binding()
    assert (b.sender, b.receiver) == (P["agent-c1"].value, P["agent-p"].value)
    assert b.affordance == P["change-flowrate"].value and b.hops == 0
    assert b.form_href == world.pump.base + "actions/change-flowrate"
    rows = match_pattern(world.env.graph, [
        pattern(P["agent-p"], vocab.HAS_ACTION, Var("a")),
        pattern(Var("a"), vocab.RDF_TYPE, vocab.HVAC.FlowModulation)])
    assert [r["a"].value for r in rows] == [b.affordance]


def test_bind_roles_all_senders_sorted(world):
    bindings = bind_roles(GOLDEN, world.client)
    assert [b.sender for b in bindings] == sorted(P[f"agent-c{i}"].value for i in (1, 2, 3))


def test_role_unbound(world):
    graph = world.client.fetch_graph()
    graph.remove(Triple(P["agent-p"], vocab.RDF_TYPE, vocab.PUMP_MANAGER))
    with pytest.raises(RoleUnbound):
        bind_roles(GOLDEN, world.client, graph=graph)


def test_binding_follows_empty_td_redirect():
    network = Network()
    env = Environment("http://env.test/", network)
    graph = TripleStore([Triple(P["agent-c1"], vocab.RDF_TYPE, vocab.CHILLER_MANAGER),
                         Triple(P["agent-p"], vocab.RDF_TYPE, vocab.PUMP_MANAGER)])
    env.handle_put("things/agent-p", json.dumps(
        {"@id": ":agent-p", "@type": "hvac:PumpManager", "links": [":agent-q"]}), "td-json")
    env.handle_put("things/agent-q", dumps_td(pump_agent_td(P["agent-q"], env.base)), "td-json")
    client = EnvironmentClient(network, env.base)
    network.counter.clear()
    b = bind_roles(GOLDEN, client, graph=graph)[0]
    assert b.hops == 1 and b.provider_td == env.base + "things/agent-q"
    assert b.receiver == P["agent-p"].value
    assert network.count("GET", env.base + "things/agent-q") == 1
    env.handle_put("things/agent-p", json.dumps({"@id": ":agent-p"}), "td-json")
    with pytest.raises(AffordanceMissing):
        bind_roles(GOLDEN, client, graph=graph)


def test_evaluate_predicates(world):
    b = world.binding()
    world.plant.state.valves["vlv-1"] = 1.0
    assert evaluate_predicate(VALVES_OPEN, b, world.client) == (True, 1.0)
    world.plant.state.valves["vlv-1"] = 0.5
    assert evaluate_predicate(VALVES_OPEN, b, world.client) == (False, 0.5)
    world.plant.state.pump.fsm = OFF
    assert evaluate_predicate(IS_PRIMED, b, world.client) == (False, False)
    cooling = StatePredicate("p", "receiver", ">=", vocab.HVAC.CoolingPower.value, 1.0)
    with pytest.raises(ObservationUnavailable):
        evaluate_predicate(cooling, b, world.client)
    probe = StatePredicate("q", "sender", "=", probe="pump-fsm", threshold="Off")
    with pytest.raises(ObservationUnavailable):
        evaluate_predicate(probe, b, world.client)
    probes = {"pump-fsm": lambda pred, binding: world.plant.state.pump.fsm}
    assert evaluate_predicate(probe, b, world.client, probes=probes) == (True, OFF)


def test_enactment_commits(world):
    world.run_until_primed()
    world.plant.state.valves["vlv-1"] = 1.0
    record = enact_message(GOLDEN, world.binding(), {"flow": 4.0}, world.client,
                           tick=world.tick)
    assert record.outcome == COMMITTED
    assert world.plant.state.chillers["chlr-1"].branch_flow == 4.0
    observed = {vocab.compact(p) for p, _v, _t in record.observations}
    assert {":_valves_open", ":_is_primed", ":_flow_changed", ":_has_input_flow"} <= observed
    assert record.invoked_at is not None and record.finished <= record.invoked_at + 20


def test_closed_valve_never_invokes(world):
    world.run_until_primed()
    b = world.binding()
    record = enact_message(GOLDEN, b, {"flow": 4.0}, world.client)
    assert record.outcome == PRECONDITION_FAILED
    assert record.failed_predicate == P["_valves_open"].value
    assert world.network.count("POST", b.form_href) == 0
    assert record.invoked_at is None


def test_unprimed_pump_never_invoked(world):
    world.plant.state.pump.fsm = OFF
    world.plant.state.valves["vlv-1"] = 1.0
    b = world.binding()
    record = enact_message(GOLDEN, b, {"flow": 4.0}, world.client)
    assert (record.outcome, record.failed_predicate) == (PRECONDITION_FAILED, P["_is_primed"].value)
    assert world.network.count("POST", b.form_href) == 0


def test_unreachable_pump_gives_transport_error(world):
    world.run_until_primed()
    world.plant.state.valves["vlv-1"] = 1.0
    world.network.unreachable.add(world.pump.base)
    record = enact_message(GOLDEN, world.binding(), {"flow": 4.0}, world.client)
    assert record.outcome == TRANSPORT_ERROR


def test_commitment_timeout_when_flow_is_shared(world):
    world.run_until_primed()
    world.plant.state.valves["vlv-1"] = 1.0
    world.plant.state.valves["vlv-2"] = 1.0
    record = enact_message(GOLDEN, world.binding(), {"flow": 4.0}, world.client,
                           deadline=5, tick=world.tick)
    assert record.outcome == COMMITMENT_TIMEOUT
    assert record.finished - record.invoked_at == 5


def test_bad_payload_rejected(world):
    with pytest.raises(ProtocolSchemaError):
        enact_message(GOLDEN, world.binding(), {"flow": "lots"}, world.client)
    with pytest.raises(ProtocolSchemaError):
        enact_message(GOLDEN, world.binding(), {}, world.client)


def test_receiver_rechecks_preconditions(world):
    world.plant.state.pump.fsm = OFF
    resp = world.pump.invoke("change-flowrate", {"flow": 4.0, "message": ":request-flowrate-change",
                                                  "sender": P["agent-c1"].value})
    assert resp.status == 409 and resp.json()["predicate"] == ":_is_primed"
    assert world.plant.state.pump.flow_setpoint == 0.0
