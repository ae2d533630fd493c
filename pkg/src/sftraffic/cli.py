"""Command line entry point: simulate, sweep, betweenness, gen-graph."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


from .errors import ConfigError, GraphFormatError, UnreachableError
from .graph import BaParams, generate_ba, save_edge_list
from .metrics import Scenario, betweenness, binned_means, order_parameter
from .sweep import ExperimentSpec, _csv, build_graph, check_spec, f6, run_experiment
from .store import write_atomic


def _spec(args) -> ExperimentSpec:
    spec = ExperimentSpec.load(args.config) if args.config else ExperimentSpec.from_dict({})
    if args.master_seed is not None:
        spec = spec.with_master_seed(args.master_seed)
    return spec


def cmd_simulate(args) -> int:
    spec = _spec(args)
    raw = spec.raw
    if args.rate is not None:
        raw["rate"] = [args.rate]
    for name in ("phi", "alpha", "mean_capacity"):
        value = getattr(args, name)
        if value is not None:
            raw[name] = [value]
    if not raw["rate"]:
        raise ConfigError("simulate needs a rate (--rate or a rate list in the config)")
    check_spec(spec)
    rate, phi, alpha, c = raw["rate"][0], raw["phi"][0], raw["alpha"][0], raw["mean_capacity"][0]
    graph = build_graph(spec)
    sc = Scenario(graph, raw["strategy"], alpha, c, 1, raw["master_seed"], raw["warmup"],
                  raw["window"], raw["max_steps"], raw["threshold"], raw["tie_seed"])
    rec = sc.run(rate, phi, args.replicate, c, snapshot_every=args.snapshot_every)
    est = order_parameter(rec.n_packets, rate, raw["warmup"], raw["window"])
    if args.out:
        out = Path(args.out)
        write_atomic(out / "series.csv", rec.series_csv())
        if args.snapshot_every:
            write_atomic(out / "snapshots.csv", rec.snapshots_csv())
    print(f"eta={f6(est.eta)} slope={f6(est.slope)} R={rate} seed={rec.config.seed}")
    return 0


def cmd_sweep(args) -> int:
    spec = _spec(args)
    out = args.out or "results"
    run_experiment(spec, out, workers=args.workers, plots=args.plots,
                   log=lambda msg: print(msg, file=sys.stderr, flush=True))
    return 0


def cmd_betweenness(args) -> int:
    spec = _spec(args)
    if args.edge_list:
        spec.raw["graph"] = {"edge_list": str(Path(args.edge_list).resolve())}
    spec.raw["outputs"] = ["betweenness"]
    check_spec(spec)
    graph = build_graph(spec)
    res = betweenness(graph)
    ks, gbar, counts = binned_means(graph.degrees, res.g)
    table = _csv("k,g_mean,count", zip(ks, gbar, counts))
    if args.out:
        out = Path(args.out)
        write_atomic(out / "betweenness_vs_degree.csv", table)
        write_atomic(out / "betweenness.csv",
                     _csv("node,degree,g", zip(range(graph.n), graph.degrees, res.g)))
    else:
        sys.stdout.write(table)
    mu = "nan" if res.mu is None else f6(res.mu)
    print(f"mu={mu} fit_range={res.fit_range}", file=sys.stderr)
    return 0


def cmd_gen_graph(args) -> int:
    spec = _spec(args)
    g = spec.raw["graph"]
    for name in ("n", "m0", "m", "seed"):
        value = getattr(args, name)
        if value is not None:
            g[name] = value
    spec.raw["outputs"] = ["betweenness"]
    check_spec(spec)
    if spec.edge_list_path() is not None:
        raise ConfigError("gen-graph needs BA parameters, not an edge list")
    text = save_edge_list(generate_ba(BaParams(g["n"], g["m0"], g["m"], spec.graph_seed())))
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--master-seed", type=int, help="override the config's master seed")

    p = argparse.ArgumentParser(prog="sftraffic", description="Packet traffic on scale-free networks.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run one cell and print eta")
    s.add_argument("--out", help="directory for series.csv / snapshots.csv")
    s.add_argument("--rate", type=int)
    s.add_argument("--phi", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--mean-capacity", type=float)
    s.add_argument("--replicate", type=int, default=0)
    s.add_argument("--snapshot-every", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="run a full experiment spec")
    s.add_argument("--out", help="output directory (default: results)")
    s.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    s.add_argument("--plots", action="store_true", help="also render PNG figures next to the CSVs")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("betweenness", parents=[common], help="betweenness by degree and fitted exponent")
    s.add_argument("--edge-list", help="read the graph from an edge-list file")
    s.add_argument("--out", help="output directory (default: CSV on stdout)")
    s.set_defaults(func=cmd_betweenness)

    s = sub.add_parser("gen-graph", parents=[common], help="emit a BA edge list")
    s.add_argument("--out", help="output file (default: stdout)")
    s.add_argument("--n", type=int)
    s.add_argument("--m0", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_gen_graph)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GraphFormatError, UnreachableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
