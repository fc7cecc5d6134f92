import pytest

from hypercoord import vocab
from hypercoord.env import Environment, Network
from hypercoord.model import build_chilled_water_fixture
from hypercoord.sim.agents import ChillerAgent, PlantHandle, PumpAgent, spawn_agent
from hypercoord.sim.physics import OFF, PRIMING, RUNNING, initial_state, step
from hypercoord.sim.scenario import Runner, ScenarioEvent, ScenarioScript
from hypercoord.trace import Recorder
from hypercoord.errors import UnknownAgent

P = vocab.P
BASE = "http://env.test/"


@pytest.fixture
def pump_world():
    network = Network()
    env = Environment(BASE, network)
    env.load_graph(build_chilled_water_fixture())
    plant = PlantHandle(initial_state({"chlr-1": "vlv-1"}))
    pump = PumpAgent(P["agent-p"], BASE, network, plant, auto_prime=False)
    pump.boot()
    plant.state.valves["vlv-1"] = 1.0
    return network, plant, pump


def flow_form(pump):
    return pump.td.form_url(pump.td.actions["change-flowrate"])


def test_change_flowrate_from_off_primes_then_runs(pump_world):
    network, plant, pump = pump_world
    assert plant.state.pump.fsm == OFF
    r = network.request("POST", flow_form(pump), json_body={"flow": 4.0})
    assert r.status == 202 and plant.state.pump.fsm == PRIMING
    plant.state = step(plant.state)
    assert plant.state.pump.fsm == PRIMING
    plant.state = step(plant.state)
    assert plant.state.pump.fsm == RUNNING and plant.state.pump.flow_setpoint == 4.0


def test_busy_while_priming(pump_world):
    network, plant, pump = pump_world
    network.request("POST", flow_form(pump), json_body={"flow": 4.0})
    r = network.request("POST", flow_form(pump), json_body={"flow": 8.0, "sender": "x"})
    assert r.status == 409 and r.json()["error"] == "busy"
    assert plant.state.pump.flow_setpoint == 4.0


def test_demands_are_summed_per_sender(pump_world):
    network, plant, pump = pump_world
    plant.state.pump.fsm = RUNNING
    for sender, flow in (("a", 4.0), ("b", 4.0), ("a", 2.0)):
        network.request("POST", flow_form(pump), json_body={"flow": flow, "sender": sender})
    assert plant.state.pump.flow_setpoint == 6.0


@pytest.mark.parametrize("flow", [-1, "x", True, None])
def test_bad_flow_rejected(pump_world, flow):
    network, _plant, pump = pump_world
    assert network.request("POST", flow_form(pump), json_body={"flow": flow}).status == 400


def test_property_read_through(pump_world):
    network, plant, pump = pump_world
    plant.state.pump.fsm = RUNNING
    plant.state.pump.flow_setpoint = 3.0
    plant.state = step(plant.state)
    base = pump.base + "properties/"
    assert network.request("GET", base + "current-flowrate").json() == {"value": 3.0}
    assert network.request("GET", base + "is-primed").json() == {"value": True}
    assert network.request("GET", base + "nothing").status == 404
    assert network.request("POST", pump.base + "actions/nothing", json_body={}).status == 404


def test_spawn_picks_class_and_components():
    network = Network()
    graph = Environment(BASE, network).graph
    graph.add_all(build_chilled_water_fixture())
    plant = PlantHandle(initial_state({"chlr-2": "vlv-2"}))
    c2 = spawn_agent(P["agent-c2"], graph, BASE, network, plant, Recorder())
    assert isinstance(c2, ChillerAgent) and (c2.chiller, c2.valve) == ("chlr-2", "vlv-2")
    assert isinstance(spawn_agent(P["agent-p"], graph, BASE, network, plant, Recorder()), PumpAgent)
    with pytest.raises(UnknownAgent):
        spawn_agent(P["chlr-1"], graph, BASE, network, plant, Recorder())


def test_stuck_valve_ignores_commands():
    plant = PlantHandle(initial_state({"chlr-1": "vlv-1"}))
    plant.stuck_valves.add("vlv-1")
    assert plant.set_valve("vlv-1", 1.0) is False and plant.state.valves["vlv-1"] == 0.0
    plant.stuck_valves.clear()
    plant.set_valve("vlv-1", 3.0)
    assert plant.state.valves["vlv-1"] == 1.0


def goal_script(*agents, duration=25):
    return ScenarioScript([ScenarioEvent(3 + i, "goal", {"agent": a}) for i, a in enumerate(agents)],
                          duration, name="goal")


def test_chiller_goal_reaches_running_within_ten_steps():
    runner = Runner(goal_script("agent-c1"))
    trace = runner.run()
    goal = trace["goals"][0]
    assert goal["status"] == "achieved"
    assert goal["finished_at"] - goal["requested_at"] <= 10
    assert trace["final"]["valves"]["vlv-1"] == 1.0
    assert [e["outcome"] for e in trace["enactments"]] == ["committed"]
    runner.env.close()


def test_present_output_reads_through():
    runner = Runner(goal_script("agent-c1"))
    runner.run()
    c1 = runner.agents[P["agent-c1"].value]
    url = c1.td.form_url(c1.td.properties["present-output"])
    value = runner.network.request("GET", url).json()["value"]
    assert value == runner.plant.state.chillers["chlr-1"].cooling_output == 50.0
    runner.env.close()


def test_second_goal_while_active_is_busy():
    runner = Runner(goal_script("agent-c1"))
    c1 = runner.agents[P["agent-c1"].value]
    form = c1.td.form_url(c1.td.actions["provide-cooling"])
    assert runner.network.request("POST", form, json_body={}).status == 202
    assert runner.network.request("POST", form, json_body={}).status == 409
    runner.env.close()


def test_agents_register_profiles_at_boot():
    runner = Runner(ScenarioScript([], 1))
    for name in ("profile-p", "profile-c1", "profile-c2", "profile-c3"):
        assert f"{runner.env.base}profiles/{name}" in runner.env.resources
    pump = runner.agents[P["agent-p"].value]
    assert pump.peers("downstream") == [P[f"chlr-{i}"] for i in (1, 2, 3)]
    runner.env.close()
