import numpy as np
import pytest

from conftest import brute_force_betweenness, random_connected_graph
from sftraffic.engine import LOCAL, SHORTEST, SimConfig, run
from sftraffic.errors import ConfigError, RangeError, ValidityError
from sftraffic.graph import BaParams, complete_graph, cycle_graph, generate_ba, path_graph, star_graph
from sftraffic.metrics import (
    CriticalRate,
    Scenario,
    betweenness,
    betweenness_fit_range,
    binned_means,
    bisect_rc,
    find_rc,
    fit_power_law,
    optimal_phi,
    order_parameter,
    queue_exponent,
    search_rc,
)
from sftraffic.store import CellStore


def test_eta_constant_series():
    est = order_parameter(np.full(400, 37.0), 5, 100, 100)
    assert est.eta == 0.0 and est.eta_clamped == 0.0


def test_eta_linear_growth():
    t = np.arange(1, 401, dtype=float)
    est = order_parameter(5 * t, 10, 100, 100)
    assert est.eta == pytest.approx(0.5, abs=1e-12)
    assert est.slope == pytest.approx(5.0, abs=1e-12)


def test_eta_offset_invariant_and_clamped():
    rng = np.random.default_rng(0)
    series = 3.0 - 0.2 * np.arange(500) + rng.normal(0, 1, 500)
    a = order_parameter(series, 4, 100, 100)
    b = order_parameter(series + 1000.0, 4, 100, 100)
    assert a.eta == pytest.approx(b.eta, abs=1e-12)
    assert a.eta < 0 and a.eta_clamped == 0.0


def test_eta_needs_two_windows():
    with pytest.raises(ValueError):
        order_parameter(np.zeros(299), 1, 100, 100)


def _step_eta(rc):
    return lambda r: 0.0 if r < rc else 0.02 * (r - rc + 1)


@pytest.mark.parametrize("rc", [1, 2, 7, 18, 47, 300])
def test_bisect_and_search_find_threshold(rc):
    cr = bisect_rc(_step_eta(rc), 0, 1000)
    assert cr.rc == rc
    assert cr.eta_below < 0.01 <= cr.eta_at
    for guess in (1, rc, 3 * rc + 5):
        cr = search_rc(_step_eta(rc), guess)
        assert cr.rc == rc
        assert isinstance(cr, CriticalRate)


def test_bisect_uses_few_evaluations():
    calls = []

    def eta(r):
        calls.append(r)
        return _step_eta(123)(r)

    bisect_rc(eta, 0, 1024)
    assert len(calls) <= 12


def test_bisect_without_bracket():
    with pytest.raises(RangeError):
        bisect_rc(lambda r: 0.0, 0, 50)
    with pytest.raises(RangeError):
        bisect_rc(lambda r: 1.0, 5, 50)
    with pytest.raises(RangeError):
        search_rc(lambda r: 0.0, 4, r_max=200)
    with pytest.raises(ConfigError):
        bisect_rc(lambda r: 1.0, 10, 10)


def test_path_betweenness():
    assert list(betweenness(path_graph(3), fit=False).g) == [0.0, 2.0, 0.0]


@pytest.mark.parametrize("leaves", [2, 5, 9])
def test_star_betweenness(leaves):
    g = betweenness(star_graph(leaves), fit=False).g
    assert g[0] == leaves * (leaves - 1)
    assert not g[1:].any()


def test_cycle_and_complete_betweenness():
    # even cycle C6: per node, pairs at distance 2 contribute 1 each way, distance 3 contribute 1/2
    g = betweenness(cycle_graph(6), fit=False).g
    assert g == pytest.approx([2 * (1 + 0.5 + 0.5)] * 6, abs=1e-12)
    assert not betweenness(complete_graph(5), fit=False).g.any()


@pytest.mark.parametrize("seed", range(12))
def test_betweenness_matches_enumeration(seed):
    n = 6 + seed % 9
    g = random_connected_graph(n, seed % 7, seed)
    got = betweenness(g, fit=False).g
    assert np.allclose(got, brute_force_betweenness(g), rtol=0, atol=1e-12)
    # total load equals the mean number of intermediate nodes summed over ordered pairs
    from sftraffic.routing import build_shortest_path_table

    d = build_shortest_path_table(g).dist
    assert got.sum() == pytest.approx((d - 1)[d > 0].sum(), abs=1e-9)


def test_betweenness_fit_on_ba():
    res = betweenness(generate_ba(BaParams(1000, 3, 3, 31)))
    assert res.fit_range[0] == 3
    assert 1.0 < res.mu < 1.6
    assert res.residual < 0.5
    ex = betweenness(generate_ba(BaParams(1000, 3, 3, 31)), fit_endpoints=False)
    assert np.array_equal(ex.g, res.g)
    assert ex.mu > res.mu


def test_fit_range_rule():
    assert betweenness_fit_range(np.array([3, 3, 4, 4, 5, 9, 9, 40])) == (3, 9)
    with pytest.raises(ValidityError):
        betweenness_fit_range(np.array([1, 2, 3]))


def test_binned_means():
    ks, ybar, counts = binned_means(np.array([3, 5, 3, 5, 7]), np.array([1.0, 2.0, 3.0, 6.0, 7.0]))
    assert list(ks) == [3, 5, 7] and list(ybar) == [2.0, 4.0, 7.0] and list(counts) == [2, 2, 1]


def test_power_law_exact():
    k = np.arange(2, 40)
    assert fit_power_law(k, k.astype(float) ** 2) == pytest.approx(2.0, abs=1e-9)


def test_power_law_noisy():
    rng = np.random.default_rng(4)
    k = np.repeat(np.arange(3, 60), 10)
    y = 7 * k**1.33 * rng.lognormal(0, 0.05, len(k))
    assert fit_power_law(k, y) == pytest.approx(1.33, abs=0.05)


def test_power_law_rejections():
    with pytest.raises(ValidityError):
        fit_power_law([3, 3, 4, 4], [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ValidityError):
        fit_power_law([1, 2, 3], [1.0, 0.0, 2.0])
    with pytest.raises(ValidityError):
        fit_power_law([1, 2, 3, 50], [1.0, 2.0, 3.0, 4.0], fit_range=(2, 10))


@pytest.fixture(scope="module")
def small_ba():
    return generate_ba(BaParams(300, 3, 3, 12))


def test_scenario_caches_and_store(tmp_path, small_ba):
    store = CellStore(tmp_path)
    sc = Scenario(small_ba, SHORTEST, n_seeds=3, warmup=300, window=100, store=store)
    first = sc.etas(15, 1.0)
    assert sc.runs == 3
    assert sc.etas(15, 1.0) == first and sc.runs == 3
    assert store.count() == 1
    again = Scenario(small_ba, SHORTEST, n_seeds=3, warmup=300, window=100, store=store)
    assert again.etas(15, 1.0) == first and again.runs == 0
    other = Scenario(small_ba, SHORTEST, n_seeds=3, warmup=300, window=101, store=store)
    assert other.fingerprint != sc.fingerprint
    assert sc.eta(0, 1.0) == 0.0


def test_find_rc_brackets_and_capacity_monotone(small_ba):
    cfg = SimConfig(rate=1, phi=1.0, mean_capacity=3.0, warmup=500, window=200, max_steps=900, seed=3)
    cr = find_rc(small_ba, cfg, (0, 400), n_seeds=3)
    assert cr.eta_below < 0.01 <= cr.eta_at
    assert cr.evaluations[cr.rc - 1] < 0.01
    doubled = find_rc(small_ba, SimConfig(**{**cfg.__dict__, "mean_capacity": 6.0}), (0, 800), n_seeds=3)
    assert doubled.rc >= cr.rc


def test_optimal_phi_averages_ties():
    class Fake:
        def critical_rate(self, phi, guess, mean_capacity=None):
            rc = int(100 - 40 * abs(phi - 1.3))
            return CriticalRate(rc, 0.01, 0.0, 0.02)

    opt = optimal_phi(Fake(), [0.0, 0.5, 1.0, 1.5, 2.0], fine_step=0.05)
    phis, rcs = opt.rc_curve()
    assert opt.rc_max == 100
    assert opt.phi_opt == pytest.approx(1.3, abs=0.03)
    assert 1.25 in opt.curve and 1.35 in opt.curve and 2.0 in opt.curve
    assert list(phis) == sorted(phis)


def test_queue_exponent_local_free_flow():
    g = generate_ba(BaParams(1000, 4, 4, 5))
    exps = []
    for seed in range(3):
        cfg = SimConfig(rate=8, strategy=LOCAL, alpha=0.0, phi=1.0, mean_capacity=8.0,
                        max_steps=3000, warmup=1500, window=500, seed=seed, snapshot_every=50)
        exps.append(queue_exponent(run(cfg, g)))
    assert np.mean(exps) == pytest.approx(1.0, abs=0.2)


def test_queue_exponent_rejects_congestion_and_flat_degrees(small_ba):
    cfg = SimConfig(rate=80, strategy=LOCAL, phi=1.0, mean_capacity=1.0, max_steps=900,
                    warmup=500, window=200, seed=0, snapshot_every=50)
    with pytest.raises(ValidityError):
        queue_exponent(run(cfg, small_ba))
    cfg = SimConfig(rate=1, strategy=LOCAL, mean_capacity=5.0, max_steps=300, warmup=100, window=100,
                    snapshot_every=50)
    with pytest.raises(ValidityError):
        queue_exponent(run(cfg, complete_graph(6)))


def test_betweenness_matches_networkx_on_ba():
    nx = pytest.importorskip("networkx")
    g = generate_ba(BaParams(400, 3, 3, 17))
    ref = nx.betweenness_centrality(nx.Graph(g.edges()), normalized=False)
    # networkx counts unordered pairs
    want = np.array([2 * ref[v] for v in range(g.n)])
    assert np.allclose(betweenness(g, fit=False).g, want, rtol=1e-10, atol=1e-9)
