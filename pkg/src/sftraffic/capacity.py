"""Degree-based split of a fixed total delivery budget."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graph import Graph


@dataclass(frozen=True)
class CapacityAllocation:
    capacity: np.ndarray
    phi: float
    mean_capacity: float

    @property
    def total(self) -> float:
        return float(self.capacity.sum())


def allocate(graph: Graph, mean_capacity: float, phi: float) -> CapacityAllocation:
    """C_i = N <C> k_i^phi / sum_j k_j^phi, evaluated in log space.

    Shifting every log-weight by the maximum before exponentiating keeps
    k^phi finite for any finite ``phi``.
    """
    if not mean_capacity > 0:
        raise ConfigError(f"mean capacity must be positive, got {mean_capacity}")
    if graph.n == 0:
        raise ConfigError("cannot allocate capacity on an empty graph")
    if np.any(graph.degrees <= 0):
        raise ConfigError("isolated node: degree-based allocation undefined")
    n = graph.n
    if phi == 0:
        cap = np.full(n, float(mean_capacity))
    else:
        logw = phi * np.log(graph.degrees.astype(np.float64))
        w = np.exp(logw - logw.max())
        cap = n * mean_capacity * w / math.fsum(w)
    cap.setflags(write=False)
    return CapacityAllocation(cap, float(phi), float(mean_capacity))


def step_quota(c: float, rng: np.random.Generator) -> int:
    """Packets a node may send this step: floor(c) plus one more with prob frac(c)."""
    if c < 0:
        raise ValueError(f"negative capacity {c}")
    base = math.floor(c)
    return base + int(rng.random() < c - base)


def allocation_csv(graph: Graph, alloc: CapacityAllocation) -> str:
    buf = io.StringIO()
    buf.write("node,degree,capacity\n")
    for i, (k, c) in enumerate(zip(graph.degrees, alloc.capacity)):
        buf.write(f"{i},{k},{c:.6g}\n")
    return buf.getvalue()
