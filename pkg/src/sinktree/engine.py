"""Discrete-time event loop: delivers advertisements to listeners, applies
protocol transitions, schedules delayed broadcasts, and detects quiescence."""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .protocol import (
    VARIANT_NEIGHBOUR_LIST,
    VARIANT_TIME_SYNC,
    Advertisement,
    NodeState,
    ProtocolConfig,
    accept_update,
    advertise_gate,
    conservative_velocity,
    gather_neighbour_lists,
    suppression_witness,
    time_sync_release,
)
from .topology import ListenGraph

DEFAULT_HORIZON = 10_000_000


class LivelockError(RuntimeError):
    """Raised when a run exceeds its safety horizon without quiescing.

    Carries the partial result so callers can still report traffic counts
    (the literal_eq3 gate with f > 1 livelocks by construction)."""

    def __init__(self, message: str, partial: "RunResult"):
        super().__init__(message)
        self.partial = partial


class InvariantError(RuntimeError):
    """A structural invariant of a finished run does not hold."""


@dataclass
class World:
    """Full mutable simulation state for one run."""

    graph: ListenGraph
    cfg: ProtocolConfig
    states: list[NodeState]
    rng: np.random.Generator
    clock: int = 0
    pending: list[tuple[int, int]] = field(default_factory=list)
    tx_log: list[Advertisement] = field(default_factory=list)
    per_step_tx: list[int] = field(default_factory=list)
    velocity: float = 0.0
    two_hop: list[dict[int, float]] | None = None
    suppress_cache: dict[tuple[int, int], int | None] = field(default_factory=dict)
    setup_messages: int = 0


@dataclass
class RunResult:
    """Converged (or aborted) run: final per-node state plus traffic series."""

    sink: int
    estimates: list[float]
    pointers: list[int | None]
    messages_sent: list[int]
    per_step_tx: list[int]
    converged_at: int
    total_messages: int
    setup_messages: int
    tx_log: list[Advertisement]
    aborted: bool = False


def init_world(graph: ListenGraph, cfg: ProtocolConfig, seed: int) -> World:
    """Fresh world with the sink bootstrapped to broadcast value 0 at step 0."""
    states = [NodeState() for _ in range(graph.n)]
    sink_state = states[graph.sink]
    sink_state.estimate = 0.0
    sink_state.pending_tx = 0
    world = World(
        graph=graph,
        cfg=cfg,
        states=states,
        rng=np.random.default_rng(seed),
        pending=[(0, graph.sink)],
    )
    if cfg.variant == VARIANT_TIME_SYNC:
        world.velocity = (
            cfg.v
            if cfg.v is not None
            else conservative_velocity(graph.min_positive_cost(), cfg.delay_max)
        )
    elif cfg.variant == VARIANT_NEIGHBOUR_LIST:
        world.two_hop = gather_neighbour_lists(graph)
        world.setup_messages = graph.n
    return world


def _maybe_schedule(world: World, receiver: int, state: NodeState, sender: int) -> None:
    # A node holds at most one pending transmission; a gate firing during the
    # delay window is absorbed into the slot, which airs the estimate current
    # at fire time.
    if state.pending_tx is not None:
        return
    if world.two_hop is not None:
        key = (receiver, sender)
        try:
            witness = world.suppress_cache[key]
        except KeyError:
            witness = suppression_witness(receiver, sender, world.two_hop, world.graph)
            world.suppress_cache[key] = witness
        if witness is not None:
            state.suppressed_by = witness
            return
        state.suppressed_by = None
    delay = int(world.rng.integers(world.cfg.delay_min, world.cfg.delay_max + 1))
    fire_at = world.clock + delay
    state.pending_tx = fire_at
    heapq.heappush(world.pending, (fire_at, receiver))


def _send(world: World, sender: int, t: int) -> Advertisement:
    # Putting a message on the air: consumes the slot, freezes the value.
    st = world.states[sender]
    st.pending_tx = None
    adv = Advertisement(sender, st.estimate, t)
    world.tx_log.append(adv)
    st.messages_sent += 1
    st.last_advertised = adv.value
    return adv


def _deliver(world: World, adv: Advertisement) -> None:
    states = world.states
    cfg = world.cfg
    time_sync = cfg.variant == VARIANT_TIME_SYNC
    value = adv.value
    sender = adv.sender
    for receiver, link in world.graph.hearers[sender]:
        rst = states[receiver]
        if time_sync or rst.pending_tx is not None:
            accept_update(rst, adv, link)
            continue
        # Gate first: it compares against the pre-update estimate.
        candidate = link + value
        fire = advertise_gate(candidate, rst, cfg)
        accept_update(rst, adv, link)
        if fire:
            _maybe_schedule(world, receiver, rst, sender)


def step(world: World) -> World:
    """Advance one time step.

    All broadcasts due this step go on the air simultaneously, carrying the
    estimates as of the step start; their deliveries are then processed in
    ascending sender id, each to listeners in ascending id. A delivery that
    improves a node which already fired this step finds its slot empty and
    can schedule the node again, so no improvement is ever lost.
    """
    t = world.clock
    pending = world.pending
    sent: list[Advertisement] = []
    while pending and pending[0][0] == t:
        _, sender = heapq.heappop(pending)
        sent.append(_send(world, sender, t))
    for adv in sent:
        _deliver(world, adv)
    fired = len(sent)
    if world.cfg.variant == VARIANT_TIME_SYNC:
        v = world.velocity
        for node, st in enumerate(world.states):
            if time_sync_release(st, t, v):
                _deliver(world, _send(world, node, t))
                fired += 1
    world.per_step_tx.append(fired)
    world.clock = t + 1
    return world


def converged(world: World) -> bool:
    """Quiescence: nothing pending, and for time_sync no reached node still
    awaits its release step."""
    if world.pending:
        return False
    if world.cfg.variant == VARIANT_TIME_SYNC:
        for st in world.states:
            if st.messages_sent == 0 and not math.isinf(st.estimate):
                return False
    return True


def _fast_forward(world: World) -> None:
    # Nothing can happen between now and the next scheduled event, so skip
    # the idle steps while keeping the per-step series exact.
    nxt = world.pending[0][0] if world.pending else None
    if world.cfg.variant == VARIANT_TIME_SYNC:
        v = world.velocity
        for st in world.states:
            if st.messages_sent == 0 and not math.isinf(st.estimate):
                release = max(world.clock, math.floor(st.estimate / v) + 1)
                nxt = release if nxt is None else min(nxt, release)
    if nxt is not None and nxt > world.clock:
        world.per_step_tx.extend([0] * (nxt - world.clock))
        world.clock = nxt


def _collect(world: World, aborted: bool) -> RunResult:
    return RunResult(
        sink=world.graph.sink,
        estimates=[st.estimate for st in world.states],
        pointers=[st.pointer for st in world.states],
        messages_sent=[st.messages_sent for st in world.states],
        per_step_tx=list(world.per_step_tx),
        converged_at=world.clock,
        total_messages=len(world.tx_log),
        setup_messages=world.setup_messages,
        tx_log=list(world.tx_log),
        aborted=aborted,
    )


def pointer_chain_lengths(pointers: list[int | None], sink: int) -> list[int | None]:
    """Hop count along pointers from each node to the sink; None where there
    is no pointer. Raises InvariantError on a cycle or a dead-end chain."""
    n = len(pointers)
    lengths: list[int | None] = [None] * n
    lengths[sink] = 0
    for start in range(n):
        if lengths[start] is not None or pointers[start] is None:
            continue
        path = []
        node = start
        while lengths[node] is None:
            nxt = pointers[node]
            if nxt is None:
                raise InvariantError(
                    f"pointer chain from {start} dead-ends at {node}"
                )
            path.append(node)
            node = nxt
            if len(path) > n:
                raise InvariantError(f"pointer cycle reachable from {start}")
        base = lengths[node]
        for back, member in enumerate(reversed(path), start=1):
            lengths[member] = base + back
    return lengths


def _check_invariants(world: World, result: RunResult) -> None:
    if result.total_messages != sum(result.messages_sent):
        raise InvariantError("tx log length disagrees with per-node counters")
    if result.total_messages != sum(result.per_step_tx):
        raise InvariantError("tx log length disagrees with per-step series")
    if len(result.per_step_tx) != result.converged_at:
        raise InvariantError("per-step series does not cover the full clock")
    for x, (est, ptr) in enumerate(zip(result.estimates, result.pointers)):
        if x == result.sink:
            continue
        if math.isinf(est) != (ptr is None):
            raise InvariantError(f"node {x}: pointer/estimate mismatch")
    pointer_chain_lengths(result.pointers, result.sink)


def run(
    graph: ListenGraph,
    cfg: ProtocolConfig,
    seed: int,
    horizon: int = DEFAULT_HORIZON,
) -> RunResult:
    """Execute one full run to quiescence. Deterministic in (graph, cfg, seed).

    Raises LivelockError (with the partial result attached) if the clock
    passes `horizon` steps, which only happens under literal_eq3 with f > 1.
    """
    world = init_world(graph, cfg, seed)
    while not converged(world):
        if world.clock > horizon:
            raise LivelockError(
                f"no quiescence after {horizon} steps "
                f"(variant={cfg.variant}, gate_mode={cfg.gate_mode}, f={cfg.f})",
                partial=_collect(world, aborted=True),
            )
        _fast_forward(world)
        step(world)
    result = _collect(world, aborted=False)
    _check_invariants(world, result)
    return result


def write_event_log(path, tx_log: list[Advertisement]) -> None:
    """Event log CSV: time,sender,value (full precision)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "sender", "value"])
        for adv in tx_log:
            w.writerow([adv.sent_at, adv.sender, repr(adv.value)])


def write_per_step(path, per_step_tx: list[int]) -> None:
    """Per-step series CSV: time,tx_count."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "tx_count"])
        for t, c in enumerate(per_step_tx):
            w.writerow([t, c])


def write_final_state(path, result: RunResult) -> None:
    """Final state CSV: id,estimate,pointer,messages_sent; unreached nodes
    get empty estimate/pointer fields."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "estimate", "pointer", "messages_sent"])
        for i in range(len(result.estimates)):
            est = result.estimates[i]
            ptr = result.pointers[i]
            w.writerow([
                i,
                "" if math.isinf(est) else repr(est),
                "" if ptr is None else ptr,
                result.messages_sent[i],
            ])
