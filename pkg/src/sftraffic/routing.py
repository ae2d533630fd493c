"""Next-hop selection: frozen shortest-path tables and degree-biased local search."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import UnreachableError
from .graph import Graph


@dataclass(frozen=True)
class ShortestPathTable:
    dist: np.ndarray
    next_hop: np.ndarray
    tie_seed: int


@dataclass(frozen=True)
class LocalRoutingParams:
    alpha: float = 0.0


@numba.njit(cache=True)
def _bfs(indptr, indices, src, dist_row):
    n = len(indptr) - 1
    queue = np.empty(n, dtype=np.int64)
    for i in range(n):
        dist_row[i] = -1
    dist_row[src] = 0
    queue[0] = src
    lo, hi = 0, 1
    while lo < hi:
        u = queue[lo]
        lo += 1
        du = dist_row[u]
        for p in range(indptr[u], indptr[u + 1]):
            w = indices[p]
            if dist_row[w] < 0:
                dist_row[w] = du + 1
                queue[hi] = w
                hi += 1
    return hi


@numba.njit(cache=True)
def _all_pairs(indptr, indices, rng):
    n = len(indptr) - 1
    dist = np.empty((n, n), dtype=np.int32)
    nxt = np.full((n, n), -1, dtype=np.int32)
    row = np.empty(n, dtype=np.int64)
    for dest in range(n):
        reached = _bfs(indptr, indices, dest, row)
        if reached < n:
            return dist, nxt, False
        for u in range(n):
            dist[u, dest] = row[u]
        for u in range(n):
            if u == dest:
                continue
            # reservoir pick among neighbours one hop closer to dest
            seen = 0
            want = row[u] - 1
            for p in range(indptr[u], indptr[u + 1]):
                w = indices[p]
                if row[w] == want:
                    seen += 1
                    if seen == 1 or rng.integers(0, seen) == 0:
                        nxt[u, dest] = w
    return dist, nxt, True


def build_shortest_path_table(graph: Graph, tie_seed: int = 0) -> ShortestPathTable:
    """All-pairs hop distances plus one frozen next hop per (node, destination).

    Ties between equally short next hops are broken uniformly at random
    with a generator seeded from ``tie_seed``.
    """
    rng = np.random.default_rng(tie_seed)
    dist, nxt, ok = _all_pairs(graph.indptr, graph.indices, rng)
    if not ok:
        raise UnreachableError("graph is disconnected; some pairs have no route")
    dist.setflags(write=False)
    nxt.setflags(write=False)
    return ShortestPathTable(dist, nxt, tie_seed)


def next_hop_shortest(table: ShortestPathTable, current: int, dest: int) -> int:
    n = table.next_hop.shape[0]
    if not (0 <= current < n and 0 <= dest < n):
        raise IndexError(f"node index out of range for {n} nodes")
    if current == dest:
        raise ValueError("packet is already at its destination")
    return int(table.next_hop[current, dest])


@dataclass(frozen=True)
class LocalTables:
    """Per-node sampling tables for degree-biased forwarding.

    ``prob``/``alias`` are Walker alias tables laid out like ``graph.indices``:
    slot ``p`` of node ``u`` keeps neighbour ``indices[p]`` with probability
    ``prob[p]`` and otherwise switches to neighbour ``indices[alias[p]]``.
    ``adj_bits`` is a packed adjacency bitset for O(1) neighbour tests.
    """

    alpha: float
    prob: np.ndarray
    alias: np.ndarray
    adj_bits: np.ndarray


def _alias_table(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = len(w)
    scaled = w * (k / w.sum())
    prob = np.ones(k)
    alias = np.arange(k)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s, big = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = big
        scaled[big] -= 1.0 - scaled[s]
        (small if scaled[big] < 1.0 else large).append(big)
    return prob, alias


def adjacency_bits(graph: Graph) -> np.ndarray:
    bits = np.zeros((graph.n, (graph.n + 7) // 8), dtype=np.uint8)
    rows = np.repeat(np.arange(graph.n), graph.degrees)
    np.bitwise_or.at(bits, (rows, graph.indices >> 3), (1 << (graph.indices & 7)).astype(np.uint8))
    return bits


def local_tables(graph: Graph, alpha: float) -> LocalTables:
    logk = np.log(graph.degrees.astype(np.float64))
    prob = np.empty(len(graph.indices), dtype=np.float64)
    alias = np.empty(len(graph.indices), dtype=np.int64)
    for u in range(graph.n):
        lo, hi = graph.indptr[u], graph.indptr[u + 1]
        lw = alpha * logk[graph.indices[lo:hi]]
        p, a = _alias_table(np.exp(lw - lw.max()))
        prob[lo:hi] = p
        alias[lo:hi] = lo + a
    bits = adjacency_bits(graph)
    for arr in (prob, alias, bits):
        arr.setflags(write=False)
    return LocalTables(float(alpha), prob, alias, bits)


def forwarding_probabilities(graph: Graph, tables: LocalTables, node: int) -> np.ndarray:
    """Exact neighbour distribution encoded by the alias table of ``node``."""
    lo, hi = graph.indptr[node], graph.indptr[node + 1]
    k = hi - lo
    out = tables.prob[lo:hi] / k
    np.add.at(out, tables.alias[lo:hi] - lo, (1.0 - tables.prob[lo:hi]) / k)
    return out


@numba.njit(cache=True)
def _is_neighbor(adj_bits, u, v):
    return (adj_bits[u, v >> 3] >> (v & 7)) & 1 == 1


@numba.njit(cache=True)
def _alias_pick(indptr, indices, prob, alias, current, x):
    """Map a uniform ``x`` in [0, 1) to a neighbour of ``current``."""
    lo = indptr[current]
    u = x * (indptr[current + 1] - lo)
    j = int(u)
    p = lo + j
    if u - j >= prob[p]:
        p = alias[p]
    return indices[p]


@numba.njit(cache=True)
def _local_hop(indptr, indices, prob, alias, adj_bits, current, dest, rng):
    if _is_neighbor(adj_bits, current, dest):
        return dest
    return _alias_pick(indptr, indices, prob, alias, current, rng.random())


def next_hop_local(
    graph: Graph,
    current: int,
    dest: int,
    params: LocalRoutingParams,
    rng: np.random.Generator,
    tables: LocalTables | None = None,
) -> int:
    """Deliver straight to ``dest`` if it is a neighbour, else pick neighbour i w.p. k_i^a / sum k_j^a.

    ``tables`` may carry precomputed :func:`local_tables` for the same alpha.
    """
    if current == dest:
        raise ValueError("packet is already at its destination")
    if graph.degrees[current] == 0:
        raise ValueError(f"node {current} has no neighbours")
    if tables is None:
        tables = local_tables(graph, params.alpha)
    return int(
        _local_hop(graph.indptr, graph.indices, tables.prob, tables.alias, tables.adj_bits, current, dest, rng)
    )
