"""Order parameter, critical rate search, betweenness and power-law fits."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numba
import numpy as np

from .capacity import CapacityAllocation, allocate
from .engine import LOCAL, SHORTEST, Policy, RunRecord, SimConfig, run
from .errors import ConfigError, RangeError, ValidityError
from .graph import Graph
from .routing import build_shortest_path_table
from .seeds import cell_seed

ETA_THRESHOLD = 0.01


@dataclass(frozen=True)
class OrderParameterEstimate:
    eta: float
    slope: float
    window: int
    rate: int

    @property
    def eta_clamped(self) -> float:
        return max(self.eta, 0.0)


def order_parameter(series: np.ndarray, rate: int, warmup: int, window: int) -> OrderParameterEstimate:
    """eta = (least-squares slope of N_p after warmup) / R.

    Needs at least two windows of data after warmup; a fitted slope over the
    whole tail is the same estimate as averaging dN_p/dt over sub-windows,
    with less variance.
    """
    series = np.asarray(series, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be positive")
    if len(series) < warmup + 2 * window:
        raise ValueError(
            f"series of length {len(series)} shorter than warmup + 2*window = {warmup + 2 * window}"
        )
    tail = series[warmup:]
    x = np.arange(len(tail), dtype=np.float64)
    x -= x.mean()
    slope = float(np.dot(x, tail - tail.mean()) / np.dot(x, x))
    eta = slope / rate if rate > 0 else 0.0
    return OrderParameterEstimate(eta, slope, window, rate)


@dataclass(frozen=True)
class CriticalRate:
    rc: int
    threshold: float
    eta_below: float
    eta_at: float
    evaluations: dict[int, float] = field(default_factory=dict, compare=False)


def bisect_rc(
    eta_at: Callable[[int], float],
    lo: int,
    hi: int,
    threshold: float = ETA_THRESHOLD,
) -> CriticalRate:
    """Smallest integer R in (lo, hi] with eta_at(R) >= threshold, by bisection.

    Needs eta(lo) < threshold <= eta(hi). R = 0 injects nothing, so
    ``lo=0`` is always a valid free-flow end and is not evaluated.
    """
    if not 0 <= lo < hi:
        raise ConfigError(f"need 0 <= lo < hi, got lo={lo}, hi={hi}")
    cache: dict[int, float] = {0: 0.0}

    def eta(r: int) -> float:
        if r not in cache:
            cache[r] = float(eta_at(r))
        return cache[r]

    if eta(hi) < threshold:
        raise RangeError(f"no congestion up to R={hi} (eta={cache[hi]:.4g})")
    if eta(lo) >= threshold:
        raise RangeError(f"already congested at R={lo} (eta={cache[lo]:.4g})")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if eta(mid) >= threshold:
            hi = mid
        else:
            lo = mid
    return CriticalRate(hi, threshold, cache[lo], cache[hi], dict(sorted(cache.items())))


def search_rc(
    eta_at: Callable[[int], float],
    guess: int = 4,
    threshold: float = ETA_THRESHOLD,
    growth: float = 1.25,
    r_max: int = 1_000_000,
) -> CriticalRate:
    """Bracket the transition by geometric steps from ``guess``, then bisect.

    A good ``guess`` (e.g. R_c at a neighbouring parameter value) keeps the
    bracket tight, so only a handful of rates get simulated.
    """
    cache: dict[int, float] = {0: 0.0}

    def eta(r: int) -> float:
        if r not in cache:
            cache[r] = float(eta_at(r))
        return cache[r]

    r = max(int(guess), 1)
    if eta(r) >= threshold:
        hi = r
        while True:
            lo = int(hi / growth)
            lo = min(lo, hi - 1)
            if eta(lo) < threshold:
                break
            hi = lo
    else:
        lo = r
        while True:
            hi = max(int(np.ceil(lo * growth)), lo + 1)
            if hi > r_max:
                raise RangeError(f"no congestion up to R={r_max}")
            if eta(hi) >= threshold:
                break
            lo = hi
    result = bisect_rc(eta, lo, hi, threshold)
    return replace(result, evaluations=dict(sorted(cache.items())))


class Scenario:
    """One graph plus routing and measurement settings, with cached evaluations.

    ``eta(rate, phi)`` averages the order parameter over ``n_seeds`` runs
    whose seeds come from :func:`cell_seed`, so repeated queries and other
    capacity levels reuse the same random streams.
    """

    def __init__(
        self,
        graph: Graph,
        strategy: str = SHORTEST,
        alpha: float = 0.0,
        mean_capacity: float = 3.0,
        n_seeds: int = 5,
        master_seed: int = 0,
        warmup: int = 5000,
        window: int = 1000,
        max_steps: int | None = None,
        threshold: float = ETA_THRESHOLD,
        tie_seed: int = 0,
        policy: Policy | None = None,
        store=None,
        mapper: Callable | None = None,
    ):
        self.graph = graph
        self.strategy = strategy
        self.alpha = float(alpha) if strategy == LOCAL else 0.0
        self.mean_capacity = float(mean_capacity)
        self.n_seeds = n_seeds
        self.master_seed = master_seed
        self.warmup = warmup
        self.window = window
        self.max_steps = max_steps if max_steps is not None else warmup + 2 * window
        self.threshold = threshold
        self.tie_seed = tie_seed
        self._policy = policy
        self._alloc: dict[tuple[float, float], CapacityAllocation] = {}
        self._eta: dict[tuple[int, float, float], list[float]] = {}
        self._fingerprint: str | None = None
        self.store = store
        self.mapper = mapper
        self.runs = 0

    def __getstate__(self):
        state = self.__dict__.copy()
        state["store"] = None
        state["mapper"] = None
        state["_eta"] = {}
        return state

    @property
    def fingerprint(self) -> str:
        """Hash of everything except (rate, phi, capacity) that a cell result depends on."""
        if self._fingerprint is None:
            h = hashlib.sha256()
            h.update(self.graph.indptr.astype(np.int64).tobytes())
            h.update(self.graph.indices.astype(np.int64).tobytes())
            h.update(
                f"{self.strategy}|{self.alpha:.9g}|{self.n_seeds}|{self.master_seed}|{self.warmup}|"
                f"{self.window}|{self.max_steps}|{self.tie_seed}".encode()
            )
            self._fingerprint = h.hexdigest()[:16]
        return self._fingerprint

    @property
    def policy(self) -> Policy:
        if self._policy is None:
            if self.strategy == SHORTEST:
                self._policy = Policy.shortest(build_shortest_path_table(self.graph, self.tie_seed))
            else:
                self._policy = Policy.local(self.graph, self.alpha)
        return self._policy

    def allocation(self, phi: float, mean_capacity: float | None = None) -> CapacityAllocation:
        c = self.mean_capacity if mean_capacity is None else float(mean_capacity)
        key = (float(phi), c)
        if key not in self._alloc:
            self._alloc[key] = allocate(self.graph, c, phi)
        return self._alloc[key]

    def config(self, rate: int, phi: float, replicate: int, mean_capacity: float | None = None,
               snapshot_every: int = 0) -> SimConfig:
        return SimConfig(
            rate=rate,
            strategy=self.strategy,
            phi=phi,
            mean_capacity=self.mean_capacity if mean_capacity is None else mean_capacity,
            alpha=self.alpha,
            max_steps=self.max_steps,
            warmup=self.warmup,
            window=self.window,
            seed=cell_seed(self.master_seed, phi, rate, self.alpha, replicate),
            snapshot_every=snapshot_every,
        )

    def run(self, rate: int, phi: float, replicate: int, mean_capacity: float | None = None,
            snapshot_every: int = 0) -> RunRecord:
        cfg = self.config(rate, phi, replicate, mean_capacity, snapshot_every)
        self.runs += 1
        return run(cfg, self.graph, self.policy, self.allocation(phi, cfg.mean_capacity))

    def etas(self, rate: int, phi: float, mean_capacity: float | None = None) -> list[float]:
        c = self.mean_capacity if mean_capacity is None else float(mean_capacity)
        key = (int(rate), float(phi), c)
        if key in self._eta:
            return self._eta[key]
        cell = self.store.get(self.fingerprint, *key) if self.store is not None else None
        if cell is None:
            reps = range(self.n_seeds)
            if self.mapper is None:
                etas = [self.replicate_eta(rate, phi, rep, c) for rep in reps]
            else:
                etas = list(self.mapper(self, [(rate, phi, rep, c) for rep in reps]))
            cell = {
                "rate": int(rate), "phi": float(phi), "mean_capacity": c,
                "seeds": [self.config(rate, phi, rep, c).seed for rep in reps],
                "eta": [float(e) for e in etas],
            }
            if self.store is not None:
                self.store.put(self.fingerprint, *key, cell)
        self._eta[key] = cell["eta"]
        return self._eta[key]

    def evaluated_points(self) -> list[tuple[int, float, float]]:
        """(rate, phi, mean capacity) of every point evaluated so far, sorted."""
        return sorted(self._eta)

    def replicate_eta(self, rate: int, phi: float, replicate: int, mean_capacity: float) -> float:
        rec = self.run(rate, phi, replicate, mean_capacity)
        return order_parameter(rec.n_packets, rate, self.warmup, self.window).eta

    def eta(self, rate: int, phi: float, mean_capacity: float | None = None) -> float:
        if rate == 0:
            return 0.0
        return float(np.mean(self.etas(rate, phi, mean_capacity)))

    def critical_rate(self, phi: float, guess: int | None = None,
                      mean_capacity: float | None = None) -> CriticalRate:
        return search_rc(lambda r: self.eta(r, phi, mean_capacity), guess or 4, self.threshold)


def find_rc(
    graph: Graph,
    config: SimConfig,
    r_range: tuple[int, int],
    n_seeds: int = 5,
    threshold: float = ETA_THRESHOLD,
    policy: Policy | None = None,
) -> CriticalRate:
    """R_c for the setting in ``config`` (its rate is ignored) by bisection over ``r_range``.

    ``config.seed`` acts as the master seed for the replicate runs.
    """
    scen = Scenario(
        graph, config.strategy, config.alpha, config.mean_capacity, n_seeds, config.seed,
        config.warmup, config.window, config.max_steps, threshold, policy=policy,
    )
    lo, hi = r_range
    return bisect_rc(lambda r: scen.eta(r, config.phi), lo, hi, threshold)


@dataclass
class PhiOptimum:
    phi_opt: float
    rc_max: int
    curve: dict[float, CriticalRate]

    def rc_curve(self) -> tuple[np.ndarray, np.ndarray]:
        phis = np.array(sorted(self.curve))
        return phis, np.array([self.curve[p].rc for p in phis])


def phi_grid(lo: float, hi: float, step: float) -> list[float]:
    n = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(n + 1)]


def optimal_phi(
    scenario: Scenario,
    coarse: Sequence[float] = tuple(phi_grid(0.0, 2.5, 0.25)),
    fine_step: float = 0.05,
    mean_capacity: float | None = None,
    progress: Callable[[float, CriticalRate], None] | None = None,
) -> PhiOptimum:
    """Locate the phi maximising R_c: a coarse grid, then a fine grid around its best cell.

    The fine grid spans the coarse neighbours either side of the coarse
    maximum. R_c is an integer, so several phi values can share the
    maximum; the optimum reported is the mean of those tied values.
    """
    coarse = sorted(float(p) for p in coarse)
    if not coarse:
        raise ConfigError("empty phi grid")
    curve: dict[float, CriticalRate] = {}
    guess = 4

    def visit(phi: float) -> None:
        nonlocal guess
        if phi in curve:
            return
        cr = scenario.critical_rate(phi, guess, mean_capacity)
        curve[phi] = cr
        guess = cr.rc
        if progress is not None:
            progress(phi, cr)

    for phi in coarse:
        visit(phi)
    i = max(range(len(coarse)), key=lambda j: curve[coarse[j]].rc)
    lo, hi = coarse[max(i - 1, 0)], coarse[min(i + 1, len(coarse) - 1)]
    guess = curve[coarse[i]].rc
    if hi > lo:
        for phi in phi_grid(lo, hi, fine_step):
            visit(phi)
    rc_max = max(cr.rc for cr in curve.values())
    tied = [p for p, cr in curve.items() if cr.rc == rc_max]
    return PhiOptimum(float(np.mean(tied)), rc_max, dict(sorted(curve.items())))


@numba.njit(cache=True)
def _brandes(indptr, indices):
    n = len(indptr) - 1
    g = np.zeros(n)
    sigma = np.empty(n)
    dist = np.empty(n, dtype=np.int64)
    delta = np.empty(n)
    order = np.empty(n, dtype=np.int64)
    for s in range(n):
        for i in range(n):
            sigma[i] = 0.0
            dist[i] = -1
            delta[i] = 0.0
        sigma[s] = 1.0
        dist[s] = 0
        order[0] = s
        lo, hi = 0, 1
        while lo < hi:
            v = order[lo]
            lo += 1
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    order[hi] = w
                    hi += 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
        for j in range(hi - 1, 0, -1):
            w = order[j]
            for p in range(indptr[w], indptr[w + 1]):
                v = indices[p]
                if dist[v] == dist[w] - 1:
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            g[w] += delta[w]
    return g


@dataclass(frozen=True)
class BetweennessResult:
    g: np.ndarray
    mu: float | None = None
    fit_range: tuple[int, int] | None = None
    residual: float | None = None


def betweenness(graph: Graph, fit: bool = True, fit_endpoints: bool = True) -> BetweennessResult:
    """Exact betweenness over ordered pairs s != t, endpoints excluded.

    When ``fit`` is set, also fits g ~ k^mu on degree-binned means, from the
    minimum degree up to the largest degree whose bin has at least two nodes.
    With ``fit_endpoints`` the fit uses the endpoint-inclusive load
    g + 2(N - 1), i.e. every pair a node takes part in; ``g`` itself is
    always reported endpoint-exclusive.
    """
    g = _brandes(graph.indptr, graph.indices)
    g.setflags(write=False)
    if not fit:
        return BetweennessResult(g)
    load = g + 2.0 * (graph.n - 1) if fit_endpoints else g
    try:
        kmin, kmax = betweenness_fit_range(graph.degrees)
        mu, resid = fit_power_law(graph.degrees, load, (kmin, kmax), return_residual=True)
    except ValidityError:
        return BetweennessResult(g)
    return BetweennessResult(g, mu, (kmin, kmax), resid)


def betweenness_fit_range(degrees: np.ndarray) -> tuple[int, int]:
    ks, counts = np.unique(degrees, return_counts=True)
    multi = ks[counts >= 2]
    if len(multi) == 0:
        raise ValidityError("no degree class holds two or more nodes")
    return int(ks.min()), int(multi.max())


def binned_means(k: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean of ``y`` per exact value of ``k``: (distinct k, mean y, count)."""
    ks, inverse, counts = np.unique(np.asarray(k), return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=np.asarray(y, dtype=np.float64), minlength=len(ks))
    return ks, sums / counts, counts


def fit_power_law(
    k: Sequence[float],
    y: Sequence[float],
    fit_range: tuple[float, float] | None = None,
    return_residual: bool = False,
):
    """Slope of log(mean y) against log k over the degree bins inside ``fit_range``."""
    ks, ybar, _ = binned_means(np.asarray(k), np.asarray(y))
    if fit_range is not None:
        sel = (ks >= fit_range[0]) & (ks <= fit_range[1])
        ks, ybar = ks[sel], ybar[sel]
    if len(ks) < 3:
        raise ValidityError(f"need at least 3 distinct degrees in fit range, got {len(ks)}")
    if np.any(ybar <= 0):
        raise ValidityError("power-law fit needs positive values")
    lx, ly = np.log(ks.astype(np.float64)), np.log(ybar)
    slope, intercept = np.polyfit(lx, ly, 1)
    if return_residual:
        resid = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
        return float(slope), resid
    return float(slope)


def queue_exponent(record, eta_tolerance: float = ETA_THRESHOLD, start_step: int | None = None) -> float:
    """Exponent of the mean per-node queue length against degree in a free-flow run.

    ``record`` is an engine RunRecord from a local-routing run with
    snapshots. Congested runs are rejected since queues then reflect the
    capacity bottleneck rather than the routing load.
    """
    cfg = record.config
    if len(record.degree_classes) < 3:
        raise ValidityError("fewer than 3 distinct degrees; exponent undefined")
    est = order_parameter(record.n_packets, max(cfg.rate, 1), cfg.warmup, cfg.window)
    if est.eta >= eta_tolerance:
        raise ValidityError(f"run is congested (eta={est.eta:.4g})")
    start = cfg.warmup if start_step is None else start_step
    nbar = record.mean_queue_per_node(start)
    keep = nbar > 0
    if keep.sum() < 3:
        raise ValidityError("too few degree classes with nonzero queues")
    ks = record.degree_classes[keep]
    slope = np.polyfit(np.log(ks.astype(np.float64)), np.log(nbar[keep]), 1)[0]
    return float(slope)
