"""Per-node state machine of the sink direction protocol.

A node keeps a route-cost estimate (infinite until first contact) and a
pointer to the neighbour it would relay through. Receiving an advertisement
may improve the estimate; a separate gate decides whether the improvement is
worth advertising onward. The gate is where the protocol variants differ:

* baseline        - advertise every improvement over the last advertised value
* gated           - advertise only when the improvement clears a factor f
* neighbour_list  - baseline plus suppression when a cheaper two-hop relay
                    around the sender is known from gathered neighbour lists
* time_sync       - no gate; synchronised clocks release each node's single
                    advertisement once v * t exceeds its estimate
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .topology import ListenGraph

INF = math.inf

VARIANT_BASELINE = "baseline"
VARIANT_GATED = "gated"
VARIANT_NEIGHBOUR_LIST = "neighbour_list"
VARIANT_TIME_SYNC = "time_sync"
VARIANTS = (
    VARIANT_BASELINE,
    VARIANT_GATED,
    VARIANT_NEIGHBOUR_LIST,
    VARIANT_TIME_SYNC,
)

GATE_SIGNIFICANT = "significant_improvement"
GATE_LITERAL = "literal_eq3"
GATE_MODES = (GATE_SIGNIFICANT, GATE_LITERAL)


class Advertisement(NamedTuple):
    """The only wire message: a sender broadcasting its route cost."""

    sender: int
    value: float
    sent_at: int


@dataclass(slots=True)
class NodeState:
    estimate: float = INF
    pointer: int | None = None
    last_advertised: float = INF
    pending_tx: int | None = None
    messages_sent: int = 0
    suppressed_by: int | None = None


@dataclass(frozen=True)
class ProtocolConfig:
    """Variant selection and gate/delay parameters for a run.

    f is the advertisement threshold (>= 1); delays are uniform integers in
    [delay_min, delay_max] steps; v is the time_sync release velocity in cost
    units per step (None selects a conservative default from the graph).
    """

    variant: str = VARIANT_GATED
    f: float = 1.0
    gate_mode: str = GATE_SIGNIFICANT
    delay_min: int = 1
    delay_max: int = 100
    v: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.gate_mode not in GATE_MODES:
            raise ValueError(f"unknown gate mode {self.gate_mode!r}")
        if self.f < 1.0:
            raise ValueError(f"f must be >= 1, got {self.f}")
        if not 1 <= self.delay_min <= self.delay_max:
            raise ValueError(
                f"need 1 <= delay_min <= delay_max, got "
                f"[{self.delay_min}, {self.delay_max}]"
            )
        if self.variant == VARIANT_TIME_SYNC and self.v is not None and self.v <= 0:
            raise ValueError(f"time_sync velocity must be > 0, got {self.v}")

    @property
    def effective_f(self) -> float:
        return 1.0 if self.variant == VARIANT_BASELINE else self.f


def accept_update(
    state: NodeState, adv: Advertisement, link: float
) -> tuple[NodeState, float]:
    """Apply one received advertisement to a node's state.

    The candidate route cost is link + advertised value; the estimate and
    pointer move only on a strict improvement. Returns the (possibly updated)
    state and the candidate, which the caller feeds to the gate.
    """
    candidate = link + adv.value
    if candidate < state.estimate:
        state.estimate = candidate
        state.pointer = adv.sender
    return state, candidate


def advertise_gate(candidate: float, state: NodeState, cfg: ProtocolConfig) -> bool:
    """Decide whether the candidate justifies advertising.

    Evaluated against the state as it was before the update is applied.
    significant_improvement fires when candidate * f undercuts the last
    advertised value; literal_eq3 fires when candidate < f * estimate, which
    for f > 1 also fires on non-improving candidates (and can livelock).
    """
    f = cfg.effective_f
    if cfg.gate_mode == GATE_LITERAL:
        return candidate < f * state.estimate
    return candidate * f < state.last_advertised


def gather_neighbour_lists(graph: ListenGraph) -> list[dict[int, float]]:
    """One-step neighbour tables: node -> {neighbour: link cost}.

    Models the setup phase where every node broadcasts its listen list once;
    the engine counts those n messages separately from protocol traffic.
    """
    return [dict(entries) for entries in graph.listen]


def suppression_witness(
    x: int,
    sender: int,
    two_hop: list[dict[int, float]],
    graph: ListenGraph,
) -> int | None:
    """The neighbour z of x proving a cheaper two-hop route around sender,
    or None. Picks the cheapest detour, ties toward the smaller id."""
    direct = two_hop[x].get(sender)
    if direct is None:
        return None
    best = None
    best_v = direct
    for z, c_xz in graph.listen[x]:
        if z == sender:
            continue
        c_zs = two_hop[z].get(sender)
        if c_zs is None:
            continue
        v = c_xz + c_zs
        if v < best_v or (v == best_v and best is not None and z < best):
            best_v = v
            best = z
    return best


def neighbour_list_suppress(
    x: int,
    sender: int,
    candidate_via_sender: float,
    two_hop: list[dict[int, float]],
    graph: ListenGraph,
) -> bool:
    """True iff x should hold its advertisement because some neighbour z can
    relay sender's estimate more cheaply (c(x,z) + c(z,sender) < c(x,sender)),
    so a strictly better candidate than candidate_via_sender is on its way."""
    return suppression_witness(x, sender, two_hop, graph) is not None


def time_sync_release(state: NodeState, t: int, v: float) -> bool:
    """True once a node with a finite estimate may send its single message:
    strictly after the cost front v * t has passed its estimate."""
    return (
        state.messages_sent == 0
        and not math.isinf(state.estimate)
        and v * t > state.estimate
    )


def conservative_velocity(min_link_cost: float, delay_max: int) -> float:
    """Release velocity small enough that no node hears a better estimate
    after it has advertised. Falls back to 1.0 on edgeless graphs."""
    if math.isinf(min_link_cost) or min_link_cost <= 0:
        return 1.0
    return min_link_cost / (delay_max + 1)
