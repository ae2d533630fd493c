import numpy as np
import pytest

from sftraffic.graph import BaParams, Graph, generate_ba


@pytest.fixture(scope="session")
def ba1000() -> Graph:
    return generate_ba(BaParams(1000, 3, 3, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_connected_graph(n: int, extra: int, seed: int) -> Graph:
    """Random spanning tree plus ``extra`` random chords (capped at the complete graph)."""
    r = np.random.default_rng(seed)
    extra = min(extra, n * (n - 1) // 2 - (n - 1))
    edges = set()
    for v in range(1, n):
        u = int(r.integers(v))
        edges.add((u, v))
    while len(edges) < n - 1 + extra:
        u, v = sorted(int(x) for x in r.choice(n, 2, replace=False))
        edges.add((u, v))
    return Graph.from_edges(n, sorted(edges))


def brute_force_betweenness(graph: Graph) -> np.ndarray:
    """g(v) by listing every shortest path between every ordered pair."""
    n = graph.n
    adj = [graph.neighbors(u).tolist() for u in range(n)]
    g = np.zeros(n)
    for s in range(n):
        dist = [-1] * n
        dist[s] = 0
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for w in adj[u]:
                    if dist[w] < 0:
                        dist[w] = dist[u] + 1
                        nxt.append(w)
            frontier = nxt
        for t in range(n):
            if t == s:
                continue
            paths = []

            def walk(path):
                u = path[-1]
                if u == t:
                    paths.append(path)
                    return
                for w in adj[u]:
                    if dist[w] == dist[u] + 1 and len(path) <= dist[t]:
                        walk(path + [w])

            walk([s])
            paths = [p for p in paths if len(p) == dist[t] + 1]
            for p in paths:
                for v in p[1:-1]:
                    g[v] += 1.0 / len(paths)
    return g


_REPORT: list[str] = []


@pytest.fixture(scope="session")
def report():
    return _REPORT.append


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
