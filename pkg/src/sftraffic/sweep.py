"""Experiment specs, sweep orchestration and CSV/manifest output."""

from __future__ import annotations

import copy
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .engine import LOCAL, SHORTEST
from .errors import ConfigError
from .graph import BaParams, Graph, generate_ba, load_edge_list
from .metrics import (
    ETA_THRESHOLD,
    Scenario,
    betweenness,
    binned_means,
    optimal_phi,
    phi_grid,
)
from .seeds import derived_seed
from .store import CellStore, write_atomic

OUTPUTS = ("eta_vs_R", "rc_vs_phi", "betweenness", "queue_evolution", "phi_opt")

DEFAULTS: dict[str, Any] = {
    "graph": {"n": 1000, "m0": 3, "m": 3, "seed": None},
    "strategy": SHORTEST,
    "phi": [0.0],
    "rate": [],
    "alpha": [0.0],
    "mean_capacity": [3.0],
    "seeds": 5,
    "master_seed": 0,
    "warmup": 5000,
    "window": 1000,
    "max_steps": 7000,
    "threshold": ETA_THRESHOLD,
    "tie_seed": 0,
    "fine_step": 0.05,
    "outputs": ["eta_vs_R"],
    "queue": {"rate": 10, "degrees": [], "snapshot_every": 100},
}


@dataclass
class ExperimentSpec:
    """A parsed experiment config. ``raw`` is the normalised dict that the manifest records."""

    raw: dict[str, Any]
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key: str) -> Any:
        return self.raw[key]

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: str | os.PathLike | None = None) -> "ExperimentSpec":
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        raw = copy.deepcopy(DEFAULTS)
        for key, value in data.items():
            if isinstance(raw[key], dict) and isinstance(value, dict):
                if key == "graph" and "edge_list" in value:
                    raw[key] = {}
                raw[key].update(value)
            else:
                raw[key] = value
        for axis in ("phi", "rate", "alpha", "mean_capacity"):
            raw[axis] = _expand_axis(raw[axis])
        return cls(raw, Path(base_dir) if base_dir is not None else Path.cwd())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentSpec":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data, path.parent)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    def with_master_seed(self, seed: int) -> "ExperimentSpec":
        raw = copy.deepcopy(self.raw)
        raw["master_seed"] = int(seed)
        return ExperimentSpec(raw, self.base_dir)

    def edge_list_path(self) -> Path | None:
        path = self.raw["graph"].get("edge_list")
        return None if path is None else self.base_dir / path

    def graph_seed(self) -> int:
        seed = self.raw["graph"].get("seed")
        return derived_seed(self.raw["master_seed"], "graph") if seed is None else int(seed)


def _expand_axis(value: Any) -> Any:
    """Accept a list, a scalar, or {start, stop, step}."""
    if isinstance(value, dict) and set(value) == {"start", "stop", "step"}:
        try:
            return phi_grid(float(value["start"]), float(value["stop"]), float(value["step"]))
        except (TypeError, ValueError, ZeroDivisionError):
            return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [value]
    return value


def _is_number(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def _is_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate_spec(spec: ExperimentSpec) -> list[str]:
    """Every problem with ``spec``; an empty list means it is valid."""
    r = spec.raw
    out: list[str] = []
    g = r["graph"]
    if not isinstance(g, dict):
        out.append("graph: must be an object")
    elif "edge_list" in g:
        path = spec.edge_list_path()
        if not path.is_file():
            out.append(f"graph.edge_list: file not found: {path}")
    else:
        for key in ("n", "m0", "m"):
            if not _is_int(g.get(key)):
                out.append(f"graph.{key}: must be an integer")
        if g.get("seed") is not None and not _is_int(g["seed"]):
            out.append("graph.seed: must be an integer or null")
        if all(_is_int(g.get(k)) for k in ("n", "m0", "m")):
            out.extend(f"graph.{p}" for p in BaParams(g["n"], g["m0"], g["m"]).problems())
    if r["strategy"] not in (SHORTEST, LOCAL):
        out.append(f"strategy: must be '{SHORTEST}' or '{LOCAL}', got {r['strategy']!r}")
    outputs = r["outputs"]
    if not isinstance(outputs, list) or not outputs:
        out.append("outputs: must be a nonempty list")
        outputs = []
    for name in outputs:
        if name not in OUTPUTS:
            out.append(f"outputs: unknown output {name!r} (choose from {', '.join(OUTPUTS)})")
    for axis in ("phi", "alpha", "mean_capacity"):
        vals = r[axis]
        if not isinstance(vals, list) or not vals:
            out.append(f"{axis}: sweep axis must be a nonempty list")
        elif not all(_is_number(v) for v in vals):
            out.append(f"{axis}: values must be finite numbers")
        elif len(set(vals)) != len(vals):
            out.append(f"{axis}: duplicate values")
    if isinstance(r["mean_capacity"], list) and any(_is_number(c) and c <= 0 for c in r["mean_capacity"]):
        out.append("mean_capacity: values must be positive")
    rates = r["rate"]
    if not isinstance(rates, list) or not all(_is_int(x) and x >= 1 for x in rates):
        out.append("rate: must be a list of positive integers")
    elif "eta_vs_R" in outputs and not rates:
        out.append("rate: sweep axis must be nonempty for eta_vs_R")
    if r["strategy"] == SHORTEST and isinstance(r["alpha"], list) and len(r["alpha"]) > 1:
        out.append("alpha: only applies to local routing; give a single value for shortest")
    if not _is_int(r["seeds"]) or r["seeds"] < 1:
        out.append("seeds: must be an integer >= 1")
    if not _is_int(r["master_seed"]) or r["master_seed"] < 0:
        out.append("master_seed: must be a nonnegative integer")
    if not _is_int(r["tie_seed"]):
        out.append("tie_seed: must be an integer")
    for key in ("warmup", "window", "max_steps"):
        if not _is_int(r[key]) or r[key] < (0 if key == "warmup" else 1):
            out.append(f"{key}: must be a {'nonnegative' if key == 'warmup' else 'positive'} integer")
    if all(_is_int(r[k]) for k in ("warmup", "window", "max_steps")):
        if r["warmup"] > r["max_steps"]:
            out.append(f"warmup: {r['warmup']} exceeds max_steps {r['max_steps']}")
        elif r["warmup"] + 2 * r["window"] > r["max_steps"]:
            out.append("max_steps: must be at least warmup + 2*window")
    if not _is_number(r["threshold"]) or r["threshold"] <= 0:
        out.append("threshold: must be positive")
    if not _is_number(r["fine_step"]) or r["fine_step"] <= 0:
        out.append("fine_step: must be positive")
    q = r["queue"]
    if "queue_evolution" in outputs:
        if not isinstance(q, dict):
            out.append("queue: must be an object")
        else:
            if not _is_int(q.get("rate")) or q["rate"] < 1:
                out.append("queue.rate: must be a positive integer")
            if not _is_int(q.get("snapshot_every")) or q["snapshot_every"] < 1:
                out.append("queue.snapshot_every: must be a positive integer")
            degs = q.get("degrees")
            if not isinstance(degs, list) or not all(_is_int(k) for k in degs):
                out.append("queue.degrees: must be a list of integers (empty means all)")
    return out


def check_spec(spec: ExperimentSpec) -> None:
    problems = validate_spec(spec)
    if problems:
        raise ConfigError("invalid experiment spec:\n  " + "\n  ".join(problems))


def build_graph(spec: ExperimentSpec) -> Graph:
    path = spec.edge_list_path()
    if path is not None:
        return load_edge_list(path.read_text())
    g = spec.raw["graph"]
    return generate_ba(BaParams(g["n"], g["m0"], g["m"], spec.graph_seed()))


def f6(x: float) -> str:
    return f"{float(x):.6g}"


def _csv(header: str, rows) -> str:
    buf = io.StringIO()
    buf.write(header + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else f6(v))
                           for v in row) + "\n")
    return buf.getvalue()


_WORKER_SCENARIOS: dict[str, Scenario] = {}


def _init_worker(scenarios: dict[str, Scenario]) -> None:
    _WORKER_SCENARIOS.update(scenarios)


def _worker_eta(task: tuple) -> float:
    fp, rate, phi, rep, c = task
    return _WORKER_SCENARIOS[fp].replicate_eta(rate, phi, rep, c)


class PoolMapper:
    """Farms the replicate runs of one sweep point out to worker processes."""

    def __init__(self, executor: ProcessPoolExecutor):
        self.executor = executor

    def __call__(self, scenario: Scenario, tasks):
        return self.executor.map(_worker_eta, [(scenario.fingerprint, *t) for t in tasks])


def _tag(x: float) -> str:
    return f6(x).replace("-", "m")


def _scenarios(spec: ExperimentSpec, graph: Graph, store: CellStore | None) -> dict[float, Scenario]:
    r = spec.raw
    out = {}
    for alpha in r["alpha"]:
        out[float(alpha)] = Scenario(
            graph, r["strategy"], alpha, r["mean_capacity"][0], r["seeds"], r["master_seed"],
            r["warmup"], r["window"], r["max_steps"], r["threshold"], r["tie_seed"], store=store,
        )
    return out


def run_experiment(
    spec: ExperimentSpec,
    out_dir: str | os.PathLike,
    workers: int | None = None,
    plots: bool = False,
    log=None,
) -> list[Path]:
    """Run every output family requested by ``spec`` and write CSVs plus a manifest into ``out_dir``.

    Finished sweep points are kept under ``out_dir/cells`` so an interrupted
    run resumes where it stopped. On failure a ``FAILED`` marker holding the
    error is written and the exception re-raised.
    """
    check_spec(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    workers = workers or os.cpu_count() or 1
    say = log or (lambda msg: None)
    executor = None
    try:
        graph = build_graph(spec)
        scenarios = _scenarios(spec, graph, CellStore(out / "cells"))
        if workers > 1:
            executor = ProcessPoolExecutor(
                workers, initializer=_init_worker,
                initargs=({s.fingerprint: s for s in scenarios.values()},),
            )
            for s in scenarios.values():
                s.mapper = PoolMapper(executor)
        written = _run_families(spec, graph, scenarios, out, say)
        written.append(_write_manifest(spec, graph, scenarios, out, written))
        if plots:
            from .plots import render_all

            written.extend(render_all(out))
        return written
    except BaseException as exc:
        write_atomic(marker, f"{type(exc).__name__}: {exc}\n")
        raise
    finally:
        if executor is not None:
            executor.shutdown()


def _run_families(spec, graph, scenarios, out: Path, say) -> list[Path]:
    r = spec.raw
    outputs = r["outputs"]
    phis = [float(p) for p in r["phi"]]
    caps = [float(c) for c in r["mean_capacity"]]
    written: list[Path] = []

    def emit(name: str, text: str) -> None:
        path = out / name
        write_atomic(path, text)
        written.append(path)
        say(f"wrote {path}")

    if "eta_vs_R" in outputs:
        rows = []
        for alpha, sc in scenarios.items():
            for c in caps:
                for phi in phis:
                    for rate in sorted(r["rate"]):
                        etas = sc.etas(rate, phi, c)
                        rows.append((alpha, c, phi, rate, float(np.mean(etas)), float(np.std(etas)), len(etas)))
                    say(f"eta curve alpha={alpha} C={c} phi={phi} done")
        emit("eta_vs_R.csv", _csv("alpha,mean_capacity,phi,R,eta,eta_std,seeds", rows))

    if "rc_vs_phi" in outputs:
        for alpha, sc in scenarios.items():
            for c in caps:
                rows, guess = [], 4
                for phi in phis:
                    cr = sc.critical_rate(phi, guess, c)
                    guess = cr.rc
                    rows.append((phi, cr.rc, cr.eta_below, cr.eta_at, sc.n_seeds))
                    say(f"R_c alpha={alpha} C={c} phi={phi}: {cr.rc}")
                name = f"rc_vs_phi_C{_tag(c)}"
                if len(scenarios) > 1:
                    name += f"_alpha{_tag(alpha)}"
                emit(name + ".csv", _csv("phi,Rc,eta_lo,eta_hi,seeds", rows))

    if "phi_opt" in outputs:
        rows, best = [], []
        for alpha, sc in scenarios.items():
            for c in caps:
                opt = optimal_phi(sc, phis, r["fine_step"], c)
                rows.append((alpha, c, opt.phi_opt, opt.rc_max))
                say(f"phi_opt alpha={alpha} C={c}: {opt.phi_opt:.3f} (R_c={opt.rc_max})")
        emit("phi_opt_vs_alpha.csv", _csv("alpha,mean_capacity,phi_opt,Rc_max", rows))
        emit("max_rc_vs_alpha.csv", _csv("alpha,mean_capacity,Rc_max", [(a, c, rc) for a, c, _, rc in rows]))

    if "betweenness" in outputs:
        res = betweenness(graph)
        ks, gbar, counts = binned_means(graph.degrees, res.g)
        emit("betweenness_vs_degree.csv", _csv("k,g_mean,count", zip(ks, gbar, counts)))
        say(f"betweenness mu={res.mu}")

    if "queue_evolution" in outputs:
        q = r["queue"]
        for alpha, sc in scenarios.items():
            for c in caps:
                for phi in phis:
                    rec = sc.run(q["rate"], phi, 0, c, snapshot_every=q["snapshot_every"])
                    keep = set(q["degrees"]) if q["degrees"] else set(rec.degree_classes.tolist())
                    cols = [j for j, k in enumerate(rec.degree_classes) if k in keep]
                    rows = [
                        (int(t), int(rec.degree_classes[j]), int(row[j]))
                        for t, row in zip(rec.snapshot_steps, rec.queue_totals)
                        for j in cols
                    ]
                    name = f"queue_evolution_C{_tag(c)}_phi{_tag(phi)}"
                    if len(scenarios) > 1:
                        name += f"_alpha{_tag(alpha)}"
                    emit(name + ".csv", _csv("step,degree,queue_total", rows))
    return written


def _write_manifest(spec, graph, scenarios, out: Path, written: list[Path]) -> Path:
    cells = []
    for alpha, sc in scenarios.items():
        for rate, phi, c in sc.evaluated_points():
            cells.append({
                "alpha": alpha, "mean_capacity": c, "phi": phi, "rate": rate,
                "seeds": [sc.config(rate, phi, rep, c).seed for rep in range(sc.n_seeds)],
            })
    manifest = {
        "spec": spec.raw,
        "spec_sha256": spec.digest(),
        "graph": {
            "seed": None if spec.edge_list_path() else spec.graph_seed(),
            "n": graph.n, "edges": graph.n_edges,
            "edges_sha256": hashlib.sha256(graph.indices.astype(np.int64).tobytes()).hexdigest(),
        },
        "scenario_fingerprints": {f6(a): s.fingerprint for a, s in scenarios.items()},
        "outputs": sorted(p.name for p in written),
        "cells": cells,
    }
    path = out / "manifest.json"
    write_atomic(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def spec_from_manifest(path: str | os.PathLike) -> ExperimentSpec:
    data = json.loads(Path(path).read_text())
    return ExperimentSpec.from_dict(data["spec"], Path(path).parent)
