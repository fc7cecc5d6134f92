import json
import socket

import pytest

from hypercoord import vocab
from hypercoord.env import Environment, EnvironmentClient, HttpClient, Network, serve_in_thread
from hypercoord.errors import HopBudgetExhausted, NotFound
from hypercoord.model import WATER_FLOW_RATE
from hypercoord.trace import Recorder

BASE = "http://env.test/"
SET_FLOW = {"set-flowrate": {"@type": "hvac:FlowRate", "manipulates": ":variable_water-flow-rate",
                             "forms": [{"href": "/actions/set-flow"}]}}


def manipulates_water_flow(td):
    return any(a.manipulates == WATER_FLOW_RATE.value for a in td.actions.values())


def publish(env, name, links=(), actions=None):
    doc = {"@id": f"urn:{name}", "@type": "hmas:Agent", "links": [f"urn:{l}" for l in links]}
    if actions:
        doc["actions"] = actions
    env.handle_put(f"things/{name}", json.dumps(doc), "td-json")


@pytest.fixture
def setup():
    network = Network()
    env = Environment(BASE, network)
    return env, network, EnvironmentClient(network, BASE, Recorder(), requester="tester")


def test_empty_td_redirects_in_one_hop(setup):
    env, network, client = setup
    publish(env, "agent-c1", links=["agent-c2"])
    publish(env, "agent-c2", actions=SET_FLOW)
    network.counter.clear()
    result = client.navigate("urn:agent-c1", manipulates_water_flow, max_hops=3)
    assert result.uri == BASE + "things/agent-c2"
    assert result.hops == 1 and result.fetches == 2
    assert network.count("GET", BASE + "things/agent-c2") == 1
    assert client.recorder.of_type("navigation")[0]["hops"] == 1


def test_start_satisfying_goal_costs_nothing(setup):
    env, network, client = setup
    publish(env, "agent-c2", actions=SET_FLOW)
    result = client.navigate("urn:agent-c2", manipulates_water_flow, max_hops=1)
    assert (result.hops, result.fetches) == (0, 1)


def test_cycle_terminates_visiting_each_node_once(setup):
    env, network, client = setup
    publish(env, "a", links=["b"])
    publish(env, "b", links=["a"])
    network.counter.clear()
    with pytest.raises(NotFound, match="2 visited") as info:
        client.navigate("urn:a", manipulates_water_flow, max_hops=10)
    assert not isinstance(info.value, HopBudgetExhausted)
    assert network.count("GET", BASE + "things/a") == 1
    assert network.count("GET", BASE + "things/b") == 1


def test_hop_budget_exhausted(setup):
    env, network, client = setup
    publish(env, "n0", links=["n1"])
    publish(env, "n1", links=["n2"])
    publish(env, "n2", links=["n3"])
    publish(env, "n3", actions=SET_FLOW)
    with pytest.raises(HopBudgetExhausted):
        client.navigate("urn:n0", manipulates_water_flow, max_hops=2)
    assert client.navigate("urn:n0", manipulates_water_flow, max_hops=3).hops == 3


def test_breadth_first_prefers_nearest(setup):
    env, network, client = setup
    publish(env, "root", links=["deep", "near"])
    publish(env, "deep", links=["deeper"])
    publish(env, "deeper", actions=SET_FLOW)
    publish(env, "near", actions=SET_FLOW)
    assert client.navigate("urn:root", manipulates_water_flow, 5).uri == BASE + "things/near"


def test_dangling_links_are_skipped(setup):
    env, network, client = setup
    publish(env, "a", links=["missing", "b"])
    publish(env, "b", actions=SET_FLOW)
    assert client.navigate("urn:a", manipulates_water_flow, 3).uri == BASE + "things/b"


def test_invalid_budget(setup):
    with pytest.raises(ValueError):
        setup[2].navigate("urn:a", manipulates_water_flow, 0)


def test_link_resolution(setup):
    client = setup[2]
    assert client.thing_url("urn:agent-c2") == BASE + "things/agent-c2"
    assert client.thing_url(":agent-c2") == BASE + "things/agent-c2"
    assert client.thing_url(vocab.P["agent-c2"].value) == BASE + "things/agent-c2"
    assert client.thing_url("http://elsewhere.test/td/x") == "http://elsewhere.test/td/x"


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_navigation_over_real_http():
    port = _free_port()
    base = f"http://127.0.0.1:{port}/"
    network = Network()
    env = Environment(base, network)
    server, thread = serve_in_thread(network, base, port=port)
    try:
        publish(env, "agent-c1", links=["agent-c2"])
        publish(env, "agent-c2", actions=SET_FLOW)
        http = HttpClient()
        client = EnvironmentClient(http, base)
        result = client.navigate("urn:agent-c1", manipulates_water_flow, 2)
        assert result.hops == 1
        r = http.request("GET", base + "things/agent-c2", headers={"If-None-Match": '"1"'})
        assert r.status == 304
        assert http.request("GET", base + "things/none").status == 404
    finally:
        server.shutdown()
        server.server_close()
