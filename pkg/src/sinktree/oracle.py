"""Exact shortest-path tree on the listening graph, used as ground truth
for what the distributed protocol should converge to."""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass

from .topology import ListenGraph

INF = math.inf


@dataclass
class OptimalTree:
    """Minimum relay cost to the sink per node, with witnessing parents.

    costs[x] is infinity for unreachable nodes; parents[x] is None for the
    sink and for unreachable nodes, otherwise a member of x's listen list.
    """

    sink: int
    costs: list[float]
    parents: list[int | None]


def shortest_path_tree(graph: ListenGraph) -> OptimalTree:
    """Priority-first search from the sink over reversed listen edges.

    A hop x -> n costs the link cost x pays to reach n, so the search relaxes
    along hearer edges outward from the sink. Equal-cost parents resolve to
    the smaller node id.
    """
    n = graph.n
    costs = [INF] * n
    costs[graph.sink] = 0.0
    done = [False] * n
    heap: list[tuple[float, int]] = [(0.0, graph.sink)]
    while heap:
        c, node = heapq.heappop(heap)
        if done[node]:
            continue
        done[node] = True
        for x, link in graph.hearers[node]:
            cand = link + c
            if cand < costs[x]:
                costs[x] = cand
                heapq.heappush(heap, (cand, x))

    parents: list[int | None] = [None] * n
    for x in range(n):
        if x == graph.sink or math.isinf(costs[x]):
            continue
        best = None
        best_v = INF
        for nbr, link in graph.listen[x]:
            v = link + costs[nbr]
            if v < best_v or (v == best_v and best is not None and nbr < best):
                best_v = v
                best = nbr
        parents[x] = best
    return OptimalTree(sink=graph.sink, costs=costs, parents=parents)


def relaxation_check(graph: ListenGraph, tree: OptimalTree) -> bool:
    """True iff no listen edge can relax any cost and every finite cost is
    witnessed exactly by its parent edge. Runs in O(n * k)."""
    costs = tree.costs
    if costs[tree.sink] != 0.0 or tree.parents[tree.sink] is not None:
        return False
    for x in range(graph.n):
        cx = costs[x]
        for nbr, link in graph.listen[x]:
            if link + costs[nbr] < cx:
                return False
        if x == tree.sink:
            continue
        parent = tree.parents[x]
        if math.isinf(cx):
            if parent is not None:
                return False
            continue
        if parent is None:
            return False
        link = next((c for nb, c in graph.listen[x] if nb == parent), None)
        if link is None or link + costs[parent] != cx:
            return False
    return True


def save_tree(path, tree: OptimalTree) -> None:
    """Write id,cost,parent rows; unreachable/none become empty fields."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "cost", "parent"])
        for i, (c, p) in enumerate(zip(tree.costs, tree.parents)):
            w.writerow([
                i,
                "" if math.isinf(c) else repr(c),
                "" if p is None else p,
            ])
