"""Discrete-time chilled-water plant.

Hydraulics are a steady-state split: every open valve offers a branch
capacity ``position * q_max_branch`` and the running pump delivers
``min(setpoint, total capacity)``, shared in proportion to capacity.
Chillers sit on top as small state machines gated by their branch flow.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

OFF, PRIMING, RUNNING = "Off", "Priming", "Running"
STARTING, FAULT = "Starting", "Fault"

PRIMING_STEPS = 2


@dataclass(frozen=True)
class PlantParameters:
    q_max_branch: float = 4.0    # l/s
    q_min_start: float = 2.0     # l/s
    hold_steps: int = 3
    p_rated: float = 50.0        # kW per chiller
    cp_rho: float = 4.186        # kJ/(l K)
    dt: float = 1.0              # s per step

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class PumpState:
    fsm: str = OFF
    flow_setpoint: float = 0.0
    delivered_flow: float = 0.0
    priming_left: int = 0


@dataclass
class ChillerState:
    fsm: str = OFF
    branch_flow: float = 0.0
    cooling_output: float = 0.0
    hold_count: int = 0


@dataclass
class LoopTemps:
    supply: float = 6.0
    ret: float = 12.0


@dataclass
class PlantState:
    time: int = 0
    pump: PumpState = field(default_factory=PumpState)
    valves: Dict[str, float] = field(default_factory=dict)
    chillers: Dict[str, ChillerState] = field(default_factory=dict)
    branches: Dict[str, str] = field(default_factory=dict)  # chiller -> valve
    loop: LoopTemps = field(default_factory=LoopTemps)

    def copy(self) -> "PlantState":
        return copy.deepcopy(self)

    def add_branch(self, chiller: str, valve: str):
        self.chillers[chiller] = ChillerState()
        self.valves[valve] = 0.0
        self.branches[chiller] = valve

    def remove_branch(self, chiller: str):
        valve = self.branches.pop(chiller)
        del self.chillers[chiller]
        del self.valves[valve]

    def to_json(self) -> dict:
        return {
            "time": self.time,
            "pump": {"fsm": self.pump.fsm, "flow_setpoint": self.pump.flow_setpoint,
                     "delivered_flow": self.pump.delivered_flow},
            "valves": dict(sorted(self.valves.items())),
            "chillers": {k: {"fsm": c.fsm, "branch_flow": c.branch_flow,
                             "cooling_output": c.cooling_output}
                         for k, c in sorted(self.chillers.items())},
            "loop_temps": {"supply": self.loop.supply, "return": self.loop.ret},
        }


def initial_state(branches: Dict[str, str]) -> PlantState:
    state = PlantState()
    for chiller, valve in sorted(branches.items()):
        state.add_branch(chiller, valve)
    return state


def hydraulics(setpoint: float, pump_running: bool, positions: Dict[str, float],
               q_max_branch: float):
    """Delivered flow and per-valve branch flows."""
    capacity = {v: pos * q_max_branch for v, pos in positions.items()}
    total = sum(capacity.values())
    delivered = min(setpoint if pump_running else 0.0, total)
    if total <= 0:
        return 0.0, {v: 0.0 for v in positions}
    return delivered, {v: delivered * cap / total for v, cap in capacity.items()}


def step(state: PlantState, params: Optional[PlantParameters] = None) -> PlantState:
    """Advance the plant by one step; the input state is left untouched."""
    params = params or PlantParameters()
    new = state.copy()
    new.time = state.time + 1
    pump = new.pump

    if pump.fsm == PRIMING:
        pump.priming_left -= 1
        if pump.priming_left <= 0:
            pump.fsm = RUNNING
            pump.priming_left = 0

    delivered, flows = hydraulics(pump.flow_setpoint, pump.fsm == RUNNING,
                                  new.valves, params.q_max_branch)
    pump.delivered_flow = delivered
    delta_t = new.loop.ret - new.loop.supply

    for name in sorted(new.chillers):
        ch = new.chillers[name]
        ch.branch_flow = flows.get(new.branches.get(name), 0.0)
        enough = ch.branch_flow >= params.q_min_start
        if ch.fsm == STARTING:
            ch.hold_count = ch.hold_count + 1 if enough else 0
            if ch.hold_count >= params.hold_steps:
                ch.fsm = RUNNING
        elif ch.fsm == RUNNING and not enough:
            ch.fsm = FAULT
        if ch.fsm != STARTING:
            ch.hold_count = 0
        if ch.fsm == RUNNING:
            ch.cooling_output = max(0.0, min(params.p_rated,
                                            params.cp_rho * ch.branch_flow * delta_t))
        else:
            ch.cooling_output = 0.0
    return new
