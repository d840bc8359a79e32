"""Deterministic simulator of sink-direction tree formation in
self-organising sensor networks."""

from .engine import (
    InvariantError,
    LivelockError,
    RunResult,
    World,
    converged,
    init_world,
    run,
    step,
)
from .metrics import Histogram, PathStats, SweepTable, moving_average, sweep
from .oracle import OptimalTree, relaxation_check, shortest_path_tree
from .protocol import (
    Advertisement,
    NodeState,
    ProtocolConfig,
    accept_update,
    advertise_gate,
    neighbour_list_suppress,
    time_sync_release,
)
from .topology import (
    CostModelParams,
    ListenGraph,
    Point,
    build_listen_graph,
    link_cost,
    place_nodes,
    reachable_set,
)

__version__ = "0.1.0"

__all__ = [
    "Advertisement",
    "CostModelParams",
    "Histogram",
    "InvariantError",
    "ListenGraph",
    "LivelockError",
    "NodeState",
    "OptimalTree",
    "PathStats",
    "Point",
    "ProtocolConfig",
    "RunResult",
    "SweepTable",
    "World",
    "accept_update",
    "advertise_gate",
    "build_listen_graph",
    "converged",
    "init_world",
    "link_cost",
    "moving_average",
    "neighbour_list_suppress",
    "place_nodes",
    "reachable_set",
    "relaxation_check",
    "run",
    "shortest_path_tree",
    "step",
    "sweep",
    "time_sync_release",
]
