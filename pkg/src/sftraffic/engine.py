"""Discrete-time packet dynamics with per-node FIFO queues.

Each step first injects ``R`` packets at random sources, then lets every node
forward up to its quota from the head of its queue. Packets forwarded during a
step land at the tail of the next node and wait for the following step;
same-step arrivals are appended in sender-index order.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numba
import numpy as np

from .capacity import CapacityAllocation, allocate
from .errors import ConfigError
from .graph import Graph
from .routing import (
    LocalTables,
    ShortestPathTable,
    _alias_pick,
    _is_neighbor,
    build_shortest_path_table,
    local_tables,
)

SHORTEST = "shortest"
LOCAL = "local"
STRATEGIES = (SHORTEST, LOCAL)

# counters
_T, _GEN, _DELIV, _NP, _SEQ, _FIFO_BAD, _FREE, _NLOG, _FREE_HEAD = range(9)
_N_COUNTERS = 9
# packet record columns; one 64-byte row per slot
NEXT, ID, SRC, DEST, BIRTH, HOPS, SEQ = range(7)
_PKT_COLS = 8
_CHUNK = 1000


@dataclass(frozen=True)
class Packet:
    id: int
    source: int
    dest: int
    birth_step: int


@dataclass(frozen=True)
class SimConfig:
    rate: int
    strategy: str = SHORTEST
    phi: float = 0.0
    mean_capacity: float = 3.0
    alpha: float = 0.0
    max_steps: int = 7000
    warmup: int = 5000
    window: int = 1000
    seed: int = 0
    snapshot_every: int = 0

    def problems(self) -> list[str]:
        out = []
        if self.rate < 0:
            out.append(f"rate={self.rate}: must be >= 0")
        if self.strategy not in STRATEGIES:
            out.append(f"strategy={self.strategy!r}: expected one of {STRATEGIES}")
        if not self.mean_capacity > 0:
            out.append(f"mean_capacity={self.mean_capacity}: must be positive")
        if self.warmup < 0 or self.window < 1:
            out.append("warmup must be >= 0 and window >= 1")
        if self.warmup + self.window > self.max_steps:
            out.append(
                f"warmup + window = {self.warmup + self.window} exceeds max_steps={self.max_steps}"
            )
        if self.snapshot_every < 0:
            out.append("snapshot_every must be >= 0")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass(frozen=True)
class Policy:
    """Routing data prepared once per (graph, strategy)."""

    strategy: str
    table: ShortestPathTable | None = None
    alpha: float = 0.0
    tables: LocalTables | None = None

    @classmethod
    def shortest(cls, table: ShortestPathTable) -> "Policy":
        return cls(SHORTEST, table=table)

    @classmethod
    def local(cls, graph: Graph, alpha: float) -> "Policy":
        return cls(LOCAL, alpha=alpha, tables=local_tables(graph, alpha))


_EMPTY_TABLE = np.zeros((1, 1), dtype=np.int32)
_EMPTY_F = np.zeros(1, dtype=np.float64)
_EMPTY_I = np.zeros(1, dtype=np.int64)
_EMPTY_BITS = np.zeros((1, 1), dtype=np.uint8)


@dataclass
class DeliveryLog:
    id: np.ndarray
    source: np.ndarray
    dest: np.ndarray
    birth: np.ndarray
    done: np.ndarray
    hops: np.ndarray


def _free_chain(start: int, stop: int, tail: int) -> np.ndarray:
    nxt = np.arange(start + 1, stop + 1, dtype=np.int64)
    nxt[-1] = tail
    return nxt


@dataclass
class SimState:
    """Mutable queues, counters and a pool of recycled packet slots.

    Row ``p`` of ``pkt`` is one packet record (columns ``NEXT``, ``ID``,
    ``SRC``, ``DEST``, ``BIRTH``, ``HOPS``, ``SEQ``). Queued packets are linked
    per node through ``NEXT``; free slots form a second chain. With
    ``log_deliveries`` set, each delivered packet is appended to :attr:`log`.
    """

    head: np.ndarray
    tail: np.ndarray
    qlen: np.ndarray
    last_seq: np.ndarray
    quota: np.ndarray
    sent: np.ndarray
    pkt: np.ndarray
    counters: np.ndarray
    log_deliveries: bool = False
    _log_chunks: list = field(default_factory=list, repr=False)

    @classmethod
    def empty(cls, n: int, slots: int = 1024, log_deliveries: bool = False) -> "SimState":
        slots = max(slots, 1)
        pkt = np.zeros((slots, _PKT_COLS), dtype=np.int64)
        pkt[:, NEXT] = _free_chain(0, slots, -1)
        counters = np.zeros(_N_COUNTERS, dtype=np.int64)
        counters[_FREE] = slots
        return cls(
            head=np.full(n, -1, dtype=np.int64),
            tail=np.full(n, -1, dtype=np.int64),
            qlen=np.zeros(n, dtype=np.int64),
            last_seq=np.full(n, -1, dtype=np.int64),
            quota=np.zeros(n, dtype=np.int64),
            sent=np.zeros(n, dtype=np.int64),
            pkt=pkt,
            counters=counters,
            log_deliveries=log_deliveries,
        )

    @property
    def clock(self) -> int:
        return int(self.counters[_T])

    @property
    def n_packets(self) -> int:
        return int(self.counters[_NP])

    @property
    def generated(self) -> int:
        return int(self.counters[_GEN])

    @property
    def delivered(self) -> int:
        return int(self.counters[_DELIV])

    @property
    def fifo_violations(self) -> int:
        return int(self.counters[_FIFO_BAD])

    @property
    def log(self) -> DeliveryLog:
        if not self._log_chunks:
            return DeliveryLog(*(np.empty(0, dtype=np.int64) for _ in range(6)))
        return DeliveryLog(*np.concatenate(self._log_chunks, axis=1))

    def reserve(self, extra: int) -> None:
        """Make sure at least ``extra`` free slots exist."""
        free = int(self.counters[_FREE])
        if free >= extra:
            return
        have = len(self.pkt)
        size = max(have + extra - free, 2 * have)
        pkt = np.zeros((size, _PKT_COLS), dtype=np.int64)
        pkt[:have] = self.pkt
        # new slots go in front of whatever is left of the old free chain
        pkt[have:, NEXT] = _free_chain(have, size, self.counters[_FREE_HEAD] if free else -1)
        self.pkt = pkt
        self.counters[_FREE_HEAD] = have
        self.counters[_FREE] += size - have

    def queue(self, node: int) -> list[Packet]:
        """Packets waiting at ``node``, head first."""
        out = []
        p = self.head[node]
        while p >= 0:
            row = self.pkt[p]
            out.append(Packet(int(row[ID]), int(row[SRC]), int(row[DEST]), int(row[BIRTH])))
            p = row[NEXT]
        return out

    def queue_by_degree(self, graph: Graph) -> tuple[np.ndarray, np.ndarray]:
        """Distinct degrees and the total queue length over nodes of each degree."""
        ks, inverse = np.unique(graph.degrees, return_inverse=True)
        totals = np.bincount(inverse, weights=self.qlen, minlength=len(ks)).astype(np.int64)
        return ks, totals


@numba.njit(cache=True)
def _advance(
    n_steps, rate, cap_floor, cap_frac, local_mode, next_table,
    indptr, indices, prob, alias, adj_bits, reverse, rng,
    head, tail, qlen, last_seq, quota, sent, pkt, counters, log,
    np_out, deliv_out, gen_out,
):
    # counters live in locals until the call returns; keep array stores out of the hot loop
    t = counters[_T]
    generated = counters[_GEN]
    delivered = counters[_DELIV]
    in_flight = counters[_NP]
    seq = counters[_SEQ]
    fifo_bad = counters[_FIFO_BAD]
    free = counters[_FREE]
    free_head = counters[_FREE_HEAD]
    nlog = 0
    n = len(head)
    do_log = log.shape[1] > 0
    elig = np.empty(n, dtype=np.int64)
    block_lo = np.empty(n, dtype=np.int64)
    block_hi = np.empty(n, dtype=np.int64)
    moved = np.empty(len(pkt), dtype=np.int64)
    moved_to = np.empty(len(pkt), dtype=np.int64)
    for s in range(n_steps):
        for _ in range(rate):
            src = rng.integers(0, n)
            dst = rng.integers(0, n - 1)
            if dst >= src:
                dst += 1
            p = free_head
            free_head = pkt[p, NEXT]
            free -= 1
            pkt[p, ID] = generated
            generated += 1
            pkt[p, SRC] = src
            pkt[p, DEST] = dst
            pkt[p, BIRTH] = t
            pkt[p, HOPS] = 0
            pkt[p, NEXT] = -1
            pkt[p, SEQ] = seq
            seq += 1
            if tail[src] < 0:
                head[src] = p
            else:
                pkt[tail[src], NEXT] = p
            tail[src] = p
            qlen[src] += 1
            in_flight += 1

        for i in range(n):
            elig[i] = qlen[i]
            q = cap_floor[i]
            if cap_frac[i] > 0.0 and rng.random() < cap_frac[i]:
                q += 1
            quota[i] = q
            sent[i] = 0

        n_moved = 0
        for j in range(n):
            i = n - 1 - j if reverse else j
            block_lo[i] = n_moved
            k = quota[i] if quota[i] < elig[i] else elig[i]
            for _ in range(k):
                p = head[i]
                head[i] = pkt[p, NEXT]
                if head[i] < 0:
                    tail[i] = -1
                qlen[i] -= 1
                if pkt[p, SEQ] < last_seq[i]:
                    fifo_bad += 1
                last_seq[i] = pkt[p, SEQ]
                sent[i] += 1
                dst = pkt[p, DEST]
                if local_mode:
                    if _is_neighbor(adj_bits, i, dst):
                        nxt = dst
                    else:
                        nxt = _alias_pick(indptr, indices, prob, alias, i, rng.random())
                else:
                    nxt = next_table[i, dst]
                pkt[p, HOPS] += 1
                if nxt == dst:
                    delivered += 1
                    in_flight -= 1
                    if do_log:
                        log[0, nlog] = pkt[p, ID]
                        log[1, nlog] = pkt[p, SRC]
                        log[2, nlog] = dst
                        log[3, nlog] = pkt[p, BIRTH]
                        log[4, nlog] = t
                        log[5, nlog] = pkt[p, HOPS]
                        nlog += 1
                    pkt[p, NEXT] = free_head
                    free_head = p
                    free += 1
                else:
                    moved[n_moved] = p
                    moved_to[n_moved] = nxt
                    n_moved += 1
            block_hi[i] = n_moved

        # arrivals join tails in sender-index order whatever order senders ran in
        for i in range(n):
            for r in range(block_lo[i], block_hi[i]):
                p = moved[r]
                nxt = moved_to[r]
                pkt[p, NEXT] = -1
                pkt[p, SEQ] = seq
                seq += 1
                if tail[nxt] < 0:
                    head[nxt] = p
                else:
                    pkt[tail[nxt], NEXT] = p
                tail[nxt] = p
                qlen[nxt] += 1
        t += 1
        np_out[s] = in_flight
        deliv_out[s] = delivered
        gen_out[s] = generated
    counters[_T] = t
    counters[_GEN] = generated
    counters[_DELIV] = delivered
    counters[_NP] = in_flight
    counters[_SEQ] = seq
    counters[_FIFO_BAD] = fifo_bad
    counters[_FREE] = free
    counters[_FREE_HEAD] = free_head
    counters[_NLOG] = nlog


def advance(
    state: SimState,
    graph: Graph,
    allocation: CapacityAllocation,
    policy: Policy,
    rate: int,
    rng: np.random.Generator,
    n_steps: int = 1,
    reverse_order: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run ``n_steps`` steps in place; returns per-step (N_p, delivered, generated)."""
    state.reserve(rate * n_steps)
    cap = allocation.capacity
    floor = np.floor(cap)
    frac = cap - floor
    out = np.empty((3, n_steps), dtype=np.int64)
    log_size = state.n_packets + rate * n_steps if state.log_deliveries else 0
    log = np.empty((6, log_size), dtype=np.int64)
    state.counters[_NLOG] = 0
    if policy.strategy == LOCAL:
        routing = (True, _EMPTY_TABLE, graph.indptr, graph.indices,
                   policy.tables.prob, policy.tables.alias, policy.tables.adj_bits)
    else:
        routing = (False, policy.table.next_hop, graph.indptr, graph.indices,
                   _EMPTY_F, _EMPTY_I, _EMPTY_BITS)
    _advance(
        n_steps, rate, floor.astype(np.int64), frac, *routing, reverse_order, rng,
        state.head, state.tail, state.qlen, state.last_seq, state.quota, state.sent,
        state.pkt, state.counters, log, out[0], out[1], out[2],
    )
    if state.log_deliveries:
        state._log_chunks.append(log[:, :state.counters[_NLOG]])
    return out[0], out[1], out[2]


def step(
    state: SimState,
    graph: Graph,
    allocation: CapacityAllocation,
    policy: Policy,
    rate: int,
    rng: np.random.Generator,
    reverse_order: bool = False,
) -> SimState:
    advance(state, graph, allocation, policy, rate, rng, 1, reverse_order)
    return state


@dataclass
class RunRecord:
    config: SimConfig
    n_packets: np.ndarray
    delivered: np.ndarray
    generated: np.ndarray
    degree_classes: np.ndarray
    class_sizes: np.ndarray
    snapshot_steps: np.ndarray
    queue_totals: np.ndarray  # shape (snapshots, degree classes)

    def series_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,n_packets,delivered_cum,generated_cum\n")
        for t, (a, b, c) in enumerate(zip(self.n_packets, self.delivered, self.generated), 1):
            buf.write(f"{t},{a},{b},{c}\n")
        return buf.getvalue()

    def snapshots_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,degree,queue_total\n")
        for t, row in zip(self.snapshot_steps, self.queue_totals):
            for k, q in zip(self.degree_classes, row):
                buf.write(f"{t},{k},{q}\n")
        return buf.getvalue()

    def mean_queue_per_node(self, start_step: int = 0) -> np.ndarray:
        """Time-averaged queue length of a single node in each degree class."""
        sel = self.snapshot_steps > start_step
        if not sel.any():
            raise ValueError("no snapshots after the requested step")
        return self.queue_totals[sel].mean(axis=0) / self.class_sizes


def make_policy(graph: Graph, config: SimConfig, table: ShortestPathTable | None = None) -> Policy:
    if config.strategy == SHORTEST:
        return Policy.shortest(table if table is not None else build_shortest_path_table(graph, 0))
    return Policy.local(graph, config.alpha)


def run(
    config: SimConfig,
    graph: Graph,
    policy: Policy | None = None,
    allocation: CapacityAllocation | None = None,
) -> RunRecord:
    """Simulate ``config.max_steps`` steps from empty queues.

    ``policy`` and ``allocation`` may be passed in to reuse work across runs
    on the same graph; they must match ``config``.
    """
    config.validate()
    if policy is None:
        policy = make_policy(graph, config)
    if allocation is None:
        allocation = allocate(graph, config.mean_capacity, config.phi)
    rng = np.random.default_rng(config.seed)
    state = SimState.empty(graph.n, config.rate * _CHUNK + 1024)
    ks, counts = np.unique(graph.degrees, return_counts=True)

    every = config.snapshot_every or _CHUNK
    series = []
    snap_steps, snap_rows = [], []
    done = 0
    while done < config.max_steps:
        todo = min(every, config.max_steps - done)
        series.append(np.stack(advance(state, graph, allocation, policy, config.rate, rng, todo)))
        done += todo
        if config.snapshot_every:
            snap_steps.append(done)
            snap_rows.append(state.queue_by_degree(graph)[1])
    n_packets, delivered, generated = np.concatenate(series, axis=1)
    return RunRecord(
        config=config,
        n_packets=n_packets,
        delivered=delivered,
        generated=generated,
        degree_classes=ks,
        class_sizes=counts,
        snapshot_steps=np.array(snap_steps, dtype=np.int64),
        queue_totals=np.array(snap_rows, dtype=np.int64).reshape(len(snap_rows), len(ks)),
    )
