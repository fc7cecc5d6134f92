import json

import pytest

from hypercoord import vocab
from hypercoord.errors import ScenarioError
from hypercoord.sim.scenario import (
    Runner, ScenarioScript, audit_trace, dumps_trace, load_scenario, run_scenario,
    shipped_scenarios,
)

P = vocab.P


@pytest.fixture(scope="module")
def traces():
    return {name: run_scenario(load_scenario(name)) for name in shipped_scenarios()}


def test_suite_has_fault_injection(traces):
    assert len(traces) >= 5
    kinds = {e["args"].get("type") for t in traces.values() for e in t["scenario"]["events"]
             if e["kind"] == "fault"}
    assert {"pump-unreachable", "valve-stuck", "close-valve"} <= kinds


def test_every_trace_is_safe(traces):
    for name, trace in traces.items():
        assert trace["summary"]["safety_violations"] == 0, name
        assert audit_trace(trace) == []


def test_conservation_in_every_step(traces):
    for trace in traces.values():
        for snap in trace["steps"]:
            flows = sum(c["branch_flow"] for c in snap["chillers"].values())
            assert flows == pytest.approx(snap["pump"]["delivered_flow"], abs=1e-9)
            assert snap["pump"]["delivered_flow"] <= snap["pump"]["flow_setpoint"] + 1e-9


def test_idle_plant():
    trace = run_scenario(ScenarioScript([], 20, name="empty"))
    assert all(c["branch_flow"] == 0 for s in trace["steps"] for c in s["chillers"].values())
    assert trace["summary"]["delivered_flow"] == 0.0 and trace["enactments"] == []


def test_startup_outcome(traces):
    s = traces["startup"]["summary"]
    assert s["delivered_flow"] == 12.0
    assert s["chillers_running"] == ["chlr-1", "chlr-2", "chlr-3"]
    assert s["goals_achieved"] == 3 and s["invocations"] == 3


def test_reconfigure_adapts(traces):
    trace = traces["reconfigure"]
    assert trace["agents"][":agent-p"]["crs"]["downstream"] == [
        ":chlr-1", ":chlr-2", ":chlr-3", ":chlr-4"]
    c4 = [g for g in trace["goals"] if g["agent"] == P["agent-c4"].value]
    assert c4[0]["status"] == "achieved" and c4[0]["finished_at"] <= 80
    first = min(e["started"] for e in trace["enactments"] if e["agent"] == P["agent-c4"].value)
    discovered = [r for r in trace["registry"] if r["submitter"] == P["agent-c4"].value]
    discovered += [n for n in trace["navigations"] if n.get("requester") == P["agent-c4"].value]
    assert any(d["step"] <= first for d in discovered)


def test_pump_unreachable_fails_then_recovers(traces):
    goals = traces["pump-unreachable"]["goals"]
    assert goals[0]["status"] == "failed" and goals[0]["reason"] == "transport_error"
    assert goals[1]["status"] == "achieved"


def test_stuck_valve_blocks_invocation(traces):
    trace = traces["valve-stuck"]
    c2 = [e for e in trace["enactments"] if e["agent"] == P["agent-c2"].value]
    assert c2[0]["outcome"] == "precondition_failed" and c2[0]["invokedAt"] is None
    assert c2[0]["failedPredicate"] == ":_valves_open"


def test_closing_valve_loses_goal(traces):
    goals = traces["valve-closed-while-running"]["goals"]
    assert any(g["status"] == "lost" for g in goals)


def test_deterministic_traces_are_byte_identical():
    runs = {dumps_trace(run_scenario(load_scenario("startup"))) for _ in range(3)}
    assert len(runs) == 1


def test_concurrent_mode_reaches_same_outcome():
    trace = run_scenario(load_scenario("startup"), deterministic=False)
    assert trace["summary"]["delivered_flow"] == 12.0


def test_audit_detects_violations(traces):
    trace = json.loads(dumps_trace(traces["startup"]))
    rec = trace["enactments"][0]
    for snap in trace["steps"]:
        if snap["time"] == rec["invokedAt"]:
            snap["valves"] = {k: 0.0 for k in snap["valves"]}
    assert [v["kind"] for v in audit_trace(trace)] == ["precondition"]
    for snap in trace["steps"][-6:]:
        snap["valves"]["vlv-1"] = 0.0
        snap["chillers"]["chlr-1"]["branch_flow"] = 0.0
    assert "interlock" in {v["kind"] for v in audit_trace(trace)}


@pytest.mark.parametrize("doc", [
    "nope",
    {"events": []},
    {"duration": 0},
    {"duration": 10, "events": [{"at_step": 3, "kind": "explode"}]},
    {"duration": 10, "events": [{"at_step": 30, "kind": "goal", "args": {"agent": "agent-c1"}}]},
    {"duration": 10, "events": [{"at_step": 5, "kind": "goal", "args": {"agent": "agent-c1"}},
                                {"at_step": 2, "kind": "goal", "args": {"agent": "agent-c2"}}]},
    {"duration": 10, "events": [{"at_step": 1, "kind": "goal"}]},
    {"duration": 10, "events": [{"at_step": 1, "kind": "fault", "args": {"type": "flood"}}]},
    {"duration": 10, "events": [{"at_step": 1, "kind": "fault", "args": {"type": "valve-stuck"}}]},
    {"duration": 10, "events": [{"at_step": 1, "kind": "reconfigure",
                                 "args": {"action": "swap", "chiller": "c", "valve": "v",
                                          "agent": "a"}}]},
    {"duration": 10, "events": [{"at_step": 1, "kind": "set-load", "args": {}}]},
    {"duration": 10, "events": [{"kind": "goal"}]},
])
def test_malformed_scripts(doc):
    with pytest.raises(ScenarioError):
        ScenarioScript.from_json(doc if isinstance(doc, str) else json.dumps(doc))


def test_goal_for_unknown_agent():
    with pytest.raises(ScenarioError):
        run_scenario(ScenarioScript.from_json(
            {"duration": 5, "events": [{"at_step": 1, "kind": "goal", "args": {"agent": "agent-p"}}]}))


def test_script_round_trip():
    script = load_scenario("reconfigure")
    assert ScenarioScript.from_json(json.dumps(script.to_json())) == script


def test_remove_branch_retires_agent():
    script = ScenarioScript.from_json({"duration": 10, "events": [
        {"at_step": 2, "kind": "reconfigure",
         "args": {"action": "remove", "chiller": "chlr-3", "valve": "vlv-3", "agent": "agent-c3"}}]})
    runner = Runner(script)
    trace = runner.run()
    assert P["agent-c3"].value in runner.retired
    assert "chlr-3" not in trace["final"]["chillers"]
    assert trace["agents"][":agent-p"]["crs"]["downstream"] == [":chlr-1", ":chlr-2"]
    runner.env.close()
