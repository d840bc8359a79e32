"""Acceptance suite: every exit criterion at its stated tolerance, one
pass/fail line each. The expensive reference runs (4000 nodes) are cached and
shared across criteria."""

import math
import time

import numpy as np
import pytest

from sinktree import engine, metrics, topology
from sinktree.engine import run, write_event_log, write_final_state, write_per_step
from sinktree.metrics import (
    RAPID_MEAN_BAND,
    RAPID_MODE_SET,
    cost_ratios,
    gate_mode_arbitration,
    message_histogram,
    path_stats,
)
from sinktree.oracle import shortest_path_tree
from sinktree.protocol import ProtocolConfig
from sinktree.topology import build_listen_graph, place_nodes

N = 4000
SIDE = 4000.0
RANGE_M = 300.0
SINK_XY = (200.0, 200.0)
SEEDS = (1, 2, 3)


class RunCache:
    """Lazily built layouts, graphs, runs and optimal trees on paper defaults."""

    def __init__(self):
        self._layouts = {}
        self._graphs = {}
        self._trees = {}
        self._runs = {}
        self.protocol_seconds = {}

    def layout(self, seed):
        if seed not in self._layouts:
            pos = place_nodes(N, SIDE, seed)
            sink = topology.nearest_node(pos, *SINK_XY)
            self._layouts[seed] = (pos, sink)
        return self._layouts[seed]

    def graph(self, seed, k):
        key = (seed, k)
        if key not in self._graphs:
            pos, sink = self.layout(seed)
            self._graphs[key] = build_listen_graph(pos, RANGE_M, k, sink=sink)
        return self._graphs[key]

    def tree(self, seed, k):
        key = (seed, k)
        if key not in self._trees:
            self._trees[key] = shortest_path_tree(self.graph(seed, k))
        return self._trees[key]

    def run(self, f, k, seed):
        key = (f, k, seed)
        if key not in self._runs:
            cfg = ProtocolConfig(variant="gated", f=f)
            graph = self.graph(seed, k)
            t0 = time.perf_counter()
            self._runs[key] = run(graph, cfg, seed)
            self.protocol_seconds[key] = time.perf_counter() - t0
        return self._runs[key]

    def all_runs(self):
        return dict(self._runs)


@pytest.fixture(scope="module")
def cache():
    return RunCache()


def report(ok, label):
    print(f"[{'PASS' if ok else 'FAIL'}] {label}")
    assert ok, label


def close_or_both_inf(a, b, rel=1e-12):
    if math.isinf(b):
        return math.isinf(a)
    if b == 0.0:
        return a == 0.0
    return abs(a - b) <= rel * abs(b)


def test_criterion_1_oracle_equivalence():
    sides = {50: 700.0, 200: 1400.0, 500: 2200.0}
    t0 = time.perf_counter()
    checked = 0
    for i in range(20):
        n = (50, 200, 500)[i % 3]
        k = (8, 16)[i % 2]
        pos = place_nodes(n, sides[n], seed=100 + i)
        graph = build_listen_graph(pos, RANGE_M, k, sink=0)
        tree = shortest_path_tree(graph)
        for engine_seed in (0, 1, 2):
            result = run(graph, ProtocolConfig(variant="baseline"), engine_seed)
            assert all(
                close_or_both_inf(a, b)
                for a, b in zip(result.estimates, tree.costs)
            ), f"instance {i} seed {engine_seed} diverges from the optimal tree"
            checked += 1
    elapsed = time.perf_counter() - t0
    report(
        elapsed < 10.0,
        f"criterion 1: baseline equals the exact tree on {checked} runs "
        f"(rel 1e-12) in {elapsed:.2f} s (< 10 s)",
    )


def test_criterion_2_interior_degree():
    means = []
    for seed in range(1, 6):
        pos = place_nodes(N, SIDE, seed)
        deg = topology.in_range_degrees(pos, RANGE_M)
        interior = topology.interior_mask(pos, SIDE, RANGE_M)
        means.append(float(np.mean(deg[interior])))
    ok = all(63.0 <= m <= 77.0 for m in means)
    report(
        ok,
        "criterion 2: interior in-range degree 70 +/- 7 across 5 seeds "
        f"(measured {', '.join(f'{m:.2f}' for m in means)}; analytic 70.69)",
    )


def test_criterion_3_rapid_traffic(cache):
    # Statistics pooled across the three default seeds: per-seed means move
    # by a few tenths with the delay draws, the pooled numbers are stable.
    means = []
    pooled = None
    for seed in SEEDS:
        result = cache.run(1.1, 8, seed)
        means.append(result.total_messages / N)
        counts = result.messages_sent
        pooled = counts if pooled is None else pooled + counts
    mean = float(np.mean(means))
    mode = int(message_histogram(
        type("R", (), {"messages_sent": pooled})(), None
    ).mode_bin())
    ok = RAPID_MEAN_BAND[0] <= mean <= RAPID_MEAN_BAND[1] and mode in RAPID_MODE_SET
    report(
        ok,
        f"criterion 3: rapid method (f=1.1, k=8) mean messages/node "
        f"{mean:.2f} in [2, 4.5] and pooled histogram mode {mode} in "
        f"{{2,3,4}} across 3 seeds "
        f"(per-seed means {', '.join(f'{m:.2f}' for m in means)})",
    )


def test_criterion_4_comprehensive_traffic(cache):
    result = cache.run(1.0, 32, 1)
    mean = result.total_messages / N
    report(
        abs(mean - 30.0) <= 9.0,
        f"criterion 4: comprehensive method (f=1.0, k=32) mean messages/node "
        f"= 30 +/- 30% (measured {mean:.2f})",
    )


def test_criterion_5_threshold_trend(cache):
    low = cache.run(1.2, 8, 1).total_messages / N
    base = cache.run(1.0, 8, 1).total_messages / N
    report(
        low <= 3.0 and low <= base / 2,
        f"criterion 5: at k=8 mean messages/node {low:.2f} at f=1.2 "
        f"(<= 3 and <= half of {base:.2f} at f=1.0)",
    )


def test_criterion_6_suboptimality_direction(cache):
    all_sound = True
    for (f, k, seed), result in cache.all_runs().items():
        ratios = cost_ratios(result, cache.tree(seed, k))
        all_sound &= bool(np.all(ratios >= 1 - 1e-12))
    rapid = float(np.mean(cost_ratios(cache.run(1.1, 8, 1), cache.tree(1, 8))))
    exact = float(np.mean(cost_ratios(cache.run(1.0, 8, 1), cache.tree(1, 8))))
    report(
        all_sound and rapid > exact,
        "criterion 6: protocol/optimal cost ratio >= 1 - 1e-12 everywhere; "
        f"mean ratio {rapid:.6f} (f=1.1) > {exact:.6f} (f=1.0) at k=8",
    )


def test_criterion_7_hop_comparison(cache):
    wins = 0
    pairs = []
    for seed in SEEDS:
        rapid = path_stats(cache.run(1.1, 8, seed), cache.graph(seed, 8))
        comp = path_stats(cache.run(1.0, 32, seed), cache.graph(seed, 32))
        pairs.append((rapid.mean_hops(), comp.mean_hops()))
        if rapid.mean_hops() <= comp.mean_hops():
            wins += 1
    report(
        wins >= 2,
        f"criterion 7: rapid mean chain length <= comprehensive on {wins}/3 "
        f"seeds ({'; '.join(f'{a:.1f} vs {b:.1f}' for a, b in pairs)})",
    )


def test_criterion_8_time_sync_single_message():
    sides = {80: 900.0, 140: 1200.0, 200: 1400.0}
    checked = 0
    for i in range(10):
        n = (80, 140, 200)[i % 3]
        pos = place_nodes(n, sides[n], seed=200 + i)
        graph = build_listen_graph(pos, RANGE_M, 8, sink=0)
        tree = shortest_path_tree(graph)
        result = run(graph, ProtocolConfig(variant="time_sync"), 300 + i)
        for x, est in enumerate(result.estimates):
            if math.isinf(est):
                assert result.messages_sent[x] == 0
            else:
                assert result.messages_sent[x] == 1, f"node {x} sent more than once"
                assert close_or_both_inf(est, tree.costs[x])
        checked += 1
    report(
        checked == 10,
        "criterion 8: time_sync sends exactly one message per reached node "
        f"and matches the exact tree on {checked} instances",
    )


def test_criterion_9_determinism(cache, tmp_path):
    graph = cache.graph(1, 8)
    cfg = ProtocolConfig(variant="gated", f=1.1)
    r1 = run(graph, cfg, 1)
    r2 = run(graph, cfg, 1)
    byte_equal = True
    for name, writer, payload in (
        ("event_log", write_event_log, lambda r: r.tx_log),
        ("per_step", write_per_step, lambda r: r.per_step_tx),
        ("final_state", write_final_state, lambda r: r),
    ):
        p1 = tmp_path / f"{name}_1.csv"
        p2 = tmp_path / f"{name}_2.csv"
        writer(p1, payload(r1))
        writer(p2, payload(r2))
        byte_equal &= p1.read_bytes() == p2.read_bytes()
    report(
        r1.tx_log == r2.tx_log and byte_equal,
        "criterion 9: identical config+seed give byte-identical event logs "
        "and CSV outputs",
    )


def test_criterion_10_performance():
    t0 = time.perf_counter()
    pos = place_nodes(N, SIDE, 42)
    sink = topology.nearest_node(pos, *SINK_XY)
    t1 = time.perf_counter()
    graph = build_listen_graph(pos, RANGE_M, 8, sink=sink)
    t2 = time.perf_counter()
    result = run(graph, ProtocolConfig(variant="gated", f=1.1), 42)
    t3 = time.perf_counter()
    stats = path_stats(result, graph)
    message_histogram(result)
    metrics.moving_average(result.per_step_tx, 200)
    t4 = time.perf_counter()
    total = t4 - t0
    protocol = t3 - t2
    note = "met" if protocol < 4.0 else "missed"
    report(
        total < 60.0,
        f"criterion 10: full rapid run in {total:.2f} s (< 60 s hard limit); "
        f"protocol phase {protocol:.2f} s ({note} the 4 s target; placement "
        f"{t1 - t0:.2f} s, graph {t2 - t1:.2f} s, metrics {t4 - t3:.2f} s)",
    )
    assert len(stats.reached) > 0.99 * N


def test_criterion_11_gate_mode_arbitration(cache):
    graph = cache.graph(1, 8)
    arb = gate_mode_arbitration(
        graph,
        ProtocolConfig(variant="gated", f=1.1),
        seed=1,
        literal_horizon=3000,
    )
    lines = []
    for mode, info in arb.items():
        state = "livelock abort" if info["aborted"] else "converged"
        lines.append(
            f"{mode}: {state}, mean {info['mean_messages']:.2f}, "
            f"{'in' if info['in_band'] else 'out of'} band"
        )
    in_band = [m for m, info in arb.items() if info["in_band"]]
    report(
        len(arb) == 2,
        "criterion 11: gate-mode arbitration ran under both readings "
        f"({'; '.join(lines)}); band reproduced by: "
        + (", ".join(in_band) if in_band else "neither"),
    )
