import numpy as np
import pytest

from sftraffic.capacity import CapacityAllocation, allocate
from sftraffic.engine import LOCAL, SHORTEST, Policy, SimConfig, SimState, advance, run, step
from sftraffic.errors import ConfigError
from sftraffic.graph import BaParams, complete_graph, generate_ba, path_graph, star_graph
from sftraffic.metrics import order_parameter
from sftraffic.routing import build_shortest_path_table


@pytest.fixture(scope="module")
def ba300():
    return generate_ba(BaParams(300, 3, 3, 8))


@pytest.fixture(scope="module")
def sp300(ba300):
    return Policy.shortest(build_shortest_path_table(ba300, 2))


def _policies(graph, table):
    return [Policy.shortest(table), Policy.local(graph, 0.0), Policy.local(graph, 1.0)]


def test_conservation_and_quota_every_step(ba300, sp300):
    alloc = allocate(ba300, 1.5, 0.8)
    for policy in (sp300, Policy.local(ba300, 0.5)):
        state = SimState.empty(ba300.n)
        rng = np.random.default_rng(1)
        for t in range(300):
            before = state.qlen.copy()
            step(state, ba300, alloc, policy, 30, rng)
            assert state.clock == t + 1
            assert state.generated == 30 * (t + 1)
            assert state.generated - state.delivered == state.n_packets == state.qlen.sum()
            assert np.all(state.sent <= state.quota)
            # quota is a floor/ceil of the node's capacity
            assert np.all(state.quota >= np.floor(alloc.capacity))
            assert np.all(state.quota <= np.ceil(alloc.capacity))
            # only packets present after generation can leave
            assert np.all(state.sent <= before + 30)
        assert state.fifo_violations == 0


def test_queued_packets_are_well_formed(ba300, sp300):
    state = SimState.empty(ba300.n)
    advance(state, ba300, allocate(ba300, 0.5, 1.0), sp300, 50, np.random.default_rng(2), 100)
    ids = []
    for node in range(ba300.n):
        for pkt in state.queue(node):
            assert pkt.source != pkt.dest
            assert pkt.dest != node
            ids.append(pkt.id)
    assert len(ids) == state.n_packets == len(set(ids))


def test_shortest_hops_equal_distance(ba300):
    table = build_shortest_path_table(ba300, 4)
    state = SimState.empty(ba300.n, log_deliveries=True)
    advance(state, ba300, allocate(ba300, 2.0, 1.0), Policy.shortest(table), 40, np.random.default_rng(3), 500)
    log = state.log
    assert len(log.hops) == state.delivered > 1000
    assert np.array_equal(log.hops, table.dist[log.source, log.dest])
    # one hop per step at most, and a packet can hop the step it is born
    assert np.all(log.done - log.birth >= log.hops - 1)


def test_one_hop_per_step():
    g = path_graph(3)
    alloc = CapacityAllocation(np.full(3, 50.0), 0.0, 50.0)
    state = SimState.empty(3, log_deliveries=True)
    advance(state, g, alloc, Policy.shortest(build_shortest_path_table(g)), 1, np.random.default_rng(0), 400)
    log = state.log
    # with ample capacity every packet moves exactly once per step
    assert np.all(log.done - log.birth == log.hops - 1)
    assert set(np.unique(log.hops)) == {1, 2}


def test_reverse_node_order_is_identical_for_shortest(ba300, sp300):
    alloc = allocate(ba300, 1.0, 1.2)
    out = []
    for reverse in (False, True):
        state = SimState.empty(ba300.n, log_deliveries=True)
        series = advance(state, ba300, alloc, sp300, 35, np.random.default_rng(5), 400, reverse_order=reverse)
        out.append((series, state.qlen.copy(), state.log))
    (a, qa, la), (b, qb, lb) = out
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    assert np.array_equal(qa, qb)
    order_a, order_b = np.argsort(la.id), np.argsort(lb.id)
    assert np.array_equal(la.done[order_a], lb.done[order_b])


def test_two_node_path_delivers_same_step():
    g = path_graph(2)
    cfg = SimConfig(rate=1, phi=0.0, mean_capacity=1.0, max_steps=50, warmup=10, window=10, seed=1)
    rec = run(cfg, g)
    assert np.all(rec.n_packets == 0)
    assert np.array_equal(rec.delivered, np.arange(1, 51))


def test_zero_capacity_piles_up():
    g = complete_graph(4)
    alloc = CapacityAllocation(np.zeros(4), 0.0, 0.0)
    state = SimState.empty(4)
    n_p, delivered, _ = advance(state, g, alloc, Policy.shortest(build_shortest_path_table(g)), 1,
                                np.random.default_rng(0), 200)
    assert np.array_equal(n_p, np.arange(1, 201))
    assert delivered[-1] == 0


def test_starved_leaves_pile_up():
    # star: huge phi leaves leaf capacity ~0, so only packets born at the hub get out
    g = star_graph(3)
    cfg = SimConfig(rate=1, phi=80.0, mean_capacity=1.0, max_steps=4000, warmup=1000, window=1000, seed=3)
    rec = run(cfg, g)
    est = order_parameter(rec.n_packets, 1, 1000, 1000)
    assert est.eta == pytest.approx(0.75, abs=0.05)


def test_zero_rate_stays_empty(ba300, sp300):
    state = SimState.empty(ba300.n)
    n_p, delivered, generated = advance(state, ba300, allocate(ba300, 3.0, 0.0), sp300, 0,
                                        np.random.default_rng(0), 100)
    assert not n_p.any() and not delivered.any() and not generated.any()
    assert state.clock == 100


@pytest.fixture(scope="module")
def ba1000():
    return generate_ba(BaParams(1000, 3, 3, 21))


@pytest.fixture(scope="module")
def ba1000_sp(ba1000):
    return Policy.shortest(build_shortest_path_table(ba1000, 0))


def test_free_flow_well_below_critical(ba1000, ba1000_sp):
    cfg = SimConfig(rate=10, seed=4)
    rec = run(cfg, ba1000, ba1000_sp)
    est = order_parameter(rec.n_packets, 10, cfg.warmup, cfg.window)
    assert abs(est.eta) < 0.005
    assert rec.n_packets[-1] < 1000


def test_congested_well_above_critical(ba1000, ba1000_sp):
    cfg = SimConfig(rate=40, seed=4)
    rec = run(cfg, ba1000, ba1000_sp)
    assert order_parameter(rec.n_packets, 40, cfg.warmup, cfg.window).eta > 0.1


def test_run_is_deterministic(ba300):
    cfg = SimConfig(rate=20, strategy=LOCAL, alpha=0.5, phi=1.0, mean_capacity=4.0,
                    max_steps=600, warmup=200, window=100, seed=99, snapshot_every=50)
    a, b = run(cfg, ba300), run(cfg, ba300)
    assert a.series_csv() == b.series_csv()
    assert a.snapshots_csv() == b.snapshots_csv()
    c = run(SimConfig(**{**cfg.__dict__, "seed": 100}), ba300)
    assert c.series_csv() != a.series_csv()


def test_snapshots_sum_to_packets(ba300):
    cfg = SimConfig(rate=25, strategy=LOCAL, alpha=0.0, mean_capacity=4.0, max_steps=500,
                    warmup=100, window=100, seed=1, snapshot_every=100)
    rec = run(cfg, ba300)
    assert list(rec.snapshot_steps) == [100, 200, 300, 400, 500]
    assert np.array_equal(rec.queue_totals.sum(axis=1), rec.n_packets[rec.snapshot_steps - 1])
    assert rec.class_sizes.sum() == ba300.n
    lines = rec.snapshots_csv().splitlines()
    assert lines[0] == "step,degree,queue_total"
    assert len(lines) == 1 + 5 * len(rec.degree_classes)
    series = rec.series_csv().splitlines()
    assert series[0] == "step,n_packets,delivered_cum,generated_cum"
    assert series[1].startswith("1,")


def test_pool_growth_keeps_packets(ba300, sp300):
    state = SimState.empty(ba300.n, slots=4)
    advance(state, ba300, allocate(ba300, 0.2, 0.0), sp300, 60, np.random.default_rng(0), 200)
    assert state.generated - state.delivered == state.n_packets
    assert sum(len(state.queue(v)) for v in range(ba300.n)) == state.n_packets


@pytest.mark.parametrize(
    "kwargs",
    [dict(rate=-1), dict(rate=1, strategy="flood"), dict(rate=1, mean_capacity=0.0),
     dict(rate=1, warmup=6500, window=1000)],
)
def test_config_rejected(kwargs):
    with pytest.raises(ConfigError):
        run(SimConfig(**kwargs), path_graph(3))
