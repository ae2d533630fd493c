"""Barabási–Albert scale-free graphs and a compact read-only graph type."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError, GraphFormatError


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph stored as CSR arrays.

    ``indices[indptr[i]:indptr[i+1]]`` holds the sorted neighbours of node ``i``.
    Arrays are flagged read-only after construction.
    """

    indptr: np.ndarray
    indices: np.ndarray
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return len(self.degrees)

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def degree(self, node: int) -> int:
        return degree(self, node)

    def edges(self) -> list[tuple[int, int]]:
        """Canonical edge list: (u, v) with u < v, sorted lexicographically."""
        out = []
        for u in range(self.n):
            for v in self.neighbors(u):
                if u < v:
                    out.append((u, int(v)))
        return out

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = np.zeros(self.n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            u = stack.pop()
            for v in self.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        return bool(seen.all())

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        adj: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise GraphFormatError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"edge ({u}, {v}) out of range for {n} nodes")
            if v in adj[u]:
                raise GraphFormatError(f"duplicate edge ({min(u, v)}, {max(u, v)})")
            adj[u].add(v)
            adj[v].add(u)
        degrees = np.array([len(a) for a in adj], dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(degrees, out=indptr[1:])
        indices = np.empty(indptr[-1], dtype=np.int64)
        for u, a in enumerate(adj):
            indices[indptr[u]:indptr[u + 1]] = sorted(a)
        for arr in (indptr, indices, degrees):
            arr.setflags(write=False)
        return cls(indptr, indices, degrees)


@dataclass(frozen=True)
class BaParams:
    n: int
    m0: int
    m: int
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        if self.m < 2:
            out.append(f"m={self.m}: need m >= 2")
        if self.m > self.m0:
            out.append(f"m={self.m} exceeds m0={self.m0}")
        if self.n <= self.m0:
            out.append(f"n={self.n} must exceed m0={self.m0}")
        return out


def generate_ba(params: BaParams) -> Graph:
    """Grow a BA graph from a fully connected seed of ``m0`` nodes.

    Each new node links to ``m`` distinct existing nodes drawn with
    probability proportional to their current degree. Draws come from a pool
    holding every edge endpoint, so a uniform pick from the pool is a
    degree-proportional pick; repeated targets are redrawn.
    """
    problems = params.problems()
    if problems:
        raise ConfigError("; ".join(problems))
    n, m0, m = params.n, params.m0, params.m
    rng = np.random.default_rng(params.seed)

    edges = [(u, v) for u in range(m0) for v in range(u + 1, m0)]
    pool = np.empty(2 * (len(edges) + (n - m0) * m), dtype=np.int64)
    size = 0
    for u, v in edges:
        pool[size] = u
        pool[size + 1] = v
        size += 2

    for new in range(m0, n):
        targets: list[int] = []
        while len(targets) < m:
            t = int(pool[rng.integers(size)])
            if t not in targets:
                targets.append(t)
        for t in targets:
            edges.append((t, new))
            pool[size] = t
            pool[size + 1] = new
            size += 2
    return Graph.from_edges(n, edges)


def degree(graph: Graph, node: int) -> int:
    if not 0 <= node < graph.n:
        raise IndexError(f"node {node} out of range for graph of {graph.n} nodes")
    return int(graph.degrees[node])


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(u, v) for u in range(n) for v in range(u + 1, n)])


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def star_graph(leaves: int) -> Graph:
    """Hub 0 joined to nodes 1..leaves."""
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def load_edge_list(text: str) -> Graph:
    """Parse whitespace-separated ``u v`` pairs (0-based).

    The node count is one more than the largest index seen. A disconnected
    result only warns, since analysis of such a graph can still make sense.
    """
    tokens = text.split()
    if len(tokens) % 2:
        raise GraphFormatError("odd number of endpoints in edge list")
    try:
        ends = [int(t) for t in tokens]
    except ValueError as exc:
        raise GraphFormatError(str(exc)) from None
    if any(e < 0 for e in ends):
        raise GraphFormatError("negative node index")
    pairs = list(zip(ends[::2], ends[1::2]))
    n = max(ends) + 1 if ends else 0
    graph = Graph.from_edges(n, pairs)
    if not graph.is_connected():
        warnings.warn("edge list describes a disconnected graph", stacklevel=2)
    return graph


def save_edge_list(graph: Graph) -> str:
    return "".join(f"{u} {v}\n" for u, v in graph.edges())
