"""Node placement, the range-dependent transmission cost model, and the
directed k-restricted listening graph that every other module runs on."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class CostModelParams:
    """Parameters of the transmission cost (r/a)^gamma * exp(r/b)."""

    a: float = 100.0
    b: float = 100.0
    gamma: float = 1.5

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.gamma <= 0:
            raise ValueError(
                f"cost model parameters must be positive, "
                f"got a={self.a}, b={self.b}, gamma={self.gamma}"
            )


DEFAULT_PARAMS = CostModelParams()


def cost_of_distance(r, params: CostModelParams = DEFAULT_PARAMS):
    """Transmission cost for hop length r (scalar or array). Zero at r = 0."""
    arr = np.asarray(r, dtype=float)
    # Scalars go through the same contiguous-1d code path as the graph build,
    # so the same distance always yields the bit-identical cost.
    flat = np.ascontiguousarray(arr.reshape(-1))
    out = (flat / params.a) ** params.gamma * np.exp(flat / params.b)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def link_cost(p, q, params: CostModelParams = DEFAULT_PARAMS) -> float:
    """Cost to transmit between positions p and q (any (x, y) pairs)."""
    # np.hypot keeps this bit-identical to the vectorized graph build.
    r = float(np.hypot(p[0] - q[0], p[1] - q[1]))
    return float(cost_of_distance(r, params))


def place_nodes(n: int, side: float, seed: int) -> np.ndarray:
    """Draw n uniform random positions in the [0, side] square.

    Returns an (n, 2) float array; rows are points. Identical (n, side, seed)
    give bit-identical output.
    """
    if n < 0:
        raise ValueError(f"node count must be >= 0, got {n}")
    if side <= 0:
        raise ValueError(f"side must be > 0, got {side}")
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, side, size=(n, 2))


def nearest_node(positions, x: float, y: float) -> int:
    """Index of the node closest to (x, y); ties go to the smaller index."""
    pos = np.asarray(positions, dtype=float)
    if len(pos) == 0:
        raise ValueError("no nodes to choose a sink from")
    d2 = (pos[:, 0] - x) ** 2 + (pos[:, 1] - y) ** 2
    return int(np.argmin(d2))


@dataclass
class ListenGraph:
    """Directed listening graph after range and k-nearest restriction.

    listen[x] holds the (neighbour, link cost) pairs x listens to, ascending
    by cost; hearers[x] is the inverse index (who receives x's broadcasts),
    ascending by listener id. Edges are directed: n in listen[x] does not
    imply x in listen[n].
    """

    n: int
    sink: int
    listen: list[list[tuple[int, float]]]
    hearers: list[list[tuple[int, float]]] = field(repr=False)
    range_m: float = 0.0
    k: int = 0

    def min_positive_cost(self) -> float:
        best = math.inf
        for entries in self.listen:
            for _, c in entries:
                if 0.0 < c < best:
                    best = c
        return best


def build_listen_graph(
    positions,
    range_m: float,
    k: int,
    params: CostModelParams = DEFAULT_PARAMS,
    sink: int = 0,
) -> ListenGraph:
    """Build the listening graph: each node keeps its k cheapest in-range
    neighbours (all of them when fewer than k are in range).

    Ties on cost break toward the smaller node id. k = 0 is rejected since no
    node could ever learn a route.
    """
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if range_m <= 0:
        raise ValueError(f"range must be > 0, got {range_m}")
    if not 0 <= sink < n:
        raise ValueError(f"sink id {sink} out of range for {n} nodes")

    tree = cKDTree(pos)
    in_range = tree.query_ball_point(pos, r=range_m)

    listen: list[list[tuple[int, float]]] = []
    coincident = 0
    for x in range(n):
        ids = np.array([j for j in in_range[x] if j != x], dtype=int)
        if ids.size == 0:
            listen.append([])
            continue
        d = np.hypot(pos[ids, 0] - pos[x, 0], pos[ids, 1] - pos[x, 1])
        c = cost_of_distance(d, params)
        coincident += int(np.count_nonzero(c == 0.0))
        order = np.lexsort((ids, c))[:k]
        listen.append([(int(ids[i]), float(c[i])) for i in order])

    if coincident:
        warnings.warn(
            f"{coincident} zero-cost link(s) from coincident nodes; "
            "strict positivity of link costs does not hold",
            stacklevel=2,
        )

    hearers: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for x in range(n):
        for nbr, c in listen[x]:
            hearers[nbr].append((x, c))

    return ListenGraph(
        n=n, sink=sink, listen=listen, hearers=hearers, range_m=range_m, k=k
    )


def reachable_set(graph: ListenGraph) -> set[int]:
    """Nodes with a directed relay path to the sink (a hop x -> n is legal
    iff n is in x's listen list). Always contains the sink."""
    seen = {graph.sink}
    stack = [graph.sink]
    while stack:
        node = stack.pop()
        for x, _ in graph.hearers[node]:
            if x not in seen:
                seen.add(x)
                stack.append(x)
    return seen


def in_range_degrees(positions, range_m: float) -> np.ndarray:
    """Number of in-range neighbours per node, before any k restriction."""
    pos = np.asarray(positions, dtype=float)
    tree = cKDTree(pos)
    return np.array(
        [len(hits) - 1 for hits in tree.query_ball_point(pos, r=range_m)]
    )


def interior_mask(positions, side: float, margin: float) -> np.ndarray:
    """Boolean mask of nodes farther than margin from every border."""
    pos = np.asarray(positions, dtype=float)
    return (
        (pos[:, 0] > margin)
        & (pos[:, 0] < side - margin)
        & (pos[:, 1] > margin)
        & (pos[:, 1] < side - margin)
    )


def save_layout(path, positions) -> None:
    """Write a layout CSV with header id,x,y (full float precision)."""
    pos = np.asarray(positions, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y"])
        for i, (x, y) in enumerate(pos):
            w.writerow([i, repr(float(x)), repr(float(y))])


def load_layout(path) -> np.ndarray:
    """Read a layout CSV written by save_layout; rows must be id-ordered."""
    xs = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:3] != ["id", "x", "y"]:
            raise ValueError(f"unexpected layout header {header!r} in {path}")
        for i, row in enumerate(r):
            if int(row[0]) != i:
                raise ValueError(f"layout ids must be dense, row {i} has id {row[0]}")
            xs.append((float(row[1]), float(row[2])))
    return np.array(xs, dtype=float).reshape(-1, 2)
