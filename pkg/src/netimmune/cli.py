"""Experiment orchestration and the ``netimmune`` command line."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import platform
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .exact_qp import sweep_records, sweep_records_batched
from .graph import (
    BUNDLED,
    ConvergenceError,
    Graph,
    GraphError,
    degree_costs,
    eigen_drop,
    generate_barabasi_albert,
    generate_barbell,
    generate_erdos_renyi,
    largest_connected_component,
    load_bundled,
    load_edge_list,
    principal_eigenpair,
)
from .moea import GaConfig, make_hybrid_init, nsga2_run, sms_emoa_run
from .pareto import (
    Front,
    FrontError,
    ObjectivePoint,
    first_attainment_curve,
    front_from_csv,
    front_to_csv,
    front_to_json,
    hypervolume_2d,
    nondominated_filter,
)
from .shield import netshield_greedy, netshield_plus, shield_value

log = logging.getLogger("netimmune")

METHODS = (
    "netshield",
    "netshield_plus",
    "eps_qp",
    "eps_qp_batched",
    "nsga2",
    "sms_emoa",
    "hybrid_nsga2",
    "hybrid_sms",
)
STOCHASTIC = {"nsga2", "sms_emoa", "hybrid_nsga2", "hybrid_sms"}
GRID_WARN = 10**4

SPEC_RE = {
    "er": re.compile(r"^er:(\d+):(\d+)(?::seed=(-?\d+))?$"),
    "ba": re.compile(r"^ba:(\d+):(\d+)(?::seed=(-?\d+))?$"),
    "barbell": re.compile(r"^barbell:(\d+)$"),
}


class ExperimentError(Exception):
    pass


@dataclass
class ExperimentConfig:
    graph: str
    method: str
    out: str
    k: int | None = None
    batch: int = 1
    eps_max: int | None = None
    eps_stride: int = 1
    pop: int = 100
    pm: float | None = None
    pc: float = 0.75
    budget: int = 10000
    runs: int = 5
    seed: int = 0
    largest_component: bool = False
    node_limit: int | None = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.method not in METHODS:
            raise ExperimentError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.runs < 1:
            raise ExperimentError("runs must be at least 1")
        if self.batch < 1:
            raise ExperimentError("batch must be at least 1")
        if self.eps_stride < 1:
            raise ExperimentError("eps-stride must be at least 1")
        if self.eps_max is not None and self.eps_max < 0:
            raise ExperimentError("eps-max must be nonnegative")


def resolve_graph(source: str, largest_component: bool = False) -> Graph:
    """Graph from a generator spec, a bundled dataset name or an edge-list path."""
    for kind, rx in SPEC_RE.items():
        m = rx.match(source)
        if not m:
            continue
        if kind == "barbell":
            g = generate_barbell(int(m.group(1)))
        else:
            a, b = int(m.group(1)), int(m.group(2))
            seed = int(m.group(3) or 0)
            g = generate_erdos_renyi(a, b, seed) if kind == "er" else generate_barabasi_albert(a, b, seed)
        break
    else:
        name = source.removeprefix("bundled:")
        if name in BUNDLED and not Path(source).exists():
            g = load_bundled(name)
        else:
            g = load_edge_list(source)
    if largest_component:
        g = largest_connected_component(g)
    return g


def epsilon_grid(costs, eps_max: int | None, stride: int) -> list[int]:
    top = int(np.sum(costs)) if eps_max is None else eps_max
    grid = list(range(0, top + 1, stride))
    if grid[-1] != top:
        grid.append(top)
    return grid


def _labels(g: Graph, nodes) -> tuple[str, ...]:
    return tuple(g.labels[i] for i in sorted(nodes))


def _selection_point(g, costs, base_ep, nodes, method) -> ObjectivePoint:
    nodes = sorted(nodes)
    return ObjectivePoint(
        eigen_drop(g, nodes, base_ep.lambda_max),
        int(costs[nodes].sum()),
        method,
        _labels(g, nodes),
        shield_value(base_ep, g, nodes),
    )


def _netshield_points(g, costs, cfg: ExperimentConfig) -> list[ObjectivePoint]:
    ep = principal_eigenpair(g)
    ks = [cfg.k] if cfg.k is not None else range(g.n + 1)
    pts = []
    if cfg.method == "netshield":
        order = netshield_greedy(g, max(ks), ep)
        for k in ks:
            pts.append(_selection_point(g, costs, ep, order[:k], "netshield"))
    else:
        for k in ks:
            pts.append(_selection_point(g, costs, ep, netshield_plus(g, k, cfg.batch), "netshield_plus"))
    return pts


def _qp_rows(g, records) -> list[dict]:
    return [
        {
            "budget": r.budget,
            "cost": r.cost,
            "delta_lambda": repr(float(r.delta_lambda)),
            "shield_value": repr(float(r.shield_value)),
            "optimal": int(r.optimal),
            "nodes": ";".join(_labels(g, r.nodes)),
        }
        for r in records
    ]


def _qp_front(g, costs, cfg: ExperimentConfig, grid, batched: bool):
    if batched:
        recs = sweep_records_batched(g, costs, cfg.batch, grid, node_limit=cfg.node_limit)
        method = "eps_qp_batched"
    else:
        recs = sweep_records(g, costs, grid, node_limit=cfg.node_limit, workers=_workers())
        method = "eps_qp"
    pts = [
        ObjectivePoint(r.delta_lambda, r.cost, method, _labels(g, r.nodes), r.shield_value) for r in recs
    ]
    return nondominated_filter(pts), recs


def _ga_job(args):
    g, costs, gcfg, init, algorithm = args
    t0 = time.perf_counter()
    runner = nsga2_run if algorithm == "nsga2" else sms_emoa_run
    res = runner(g, costs, gcfg, init)
    return res, time.perf_counter() - t0


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("NETIMMUNE_WORKERS", "1")))
    except ValueError:
        return 1


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")


def _write_rows(path: Path, rows: list[dict], header: Sequence[str]):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _write(path, buf.getvalue())


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one configured experiment and write its artifacts into ``cfg.out``.

    Returns the manifest that is also written to ``manifest.json``.
    """
    cfg.validate()
    t_start = time.perf_counter()
    g = resolve_graph(cfg.graph, cfg.largest_component)
    costs = degree_costs(g)
    ep = principal_eigenpair(g)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    manifest = {
        "config": asdict(cfg),
        "graph": {"n": g.n, "edges": g.edge_count, "lambda_max": ep.lambda_max},
        "versions": {
            "netimmune": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "artifacts": [],
        "warnings": [],
        "timings": {},
    }
    method = cfg.method
    grid = None
    if method in ("eps_qp", "eps_qp_batched", "hybrid_nsga2", "hybrid_sms"):
        grid = epsilon_grid(costs, cfg.eps_max, cfg.eps_stride)
        manifest["eps_grid"] = {
            "max": grid[-1],
            "stride": cfg.eps_stride,
            "count": len(grid),
            "values": grid,
        }
        if len(grid) > GRID_WARN:
            msg = f"epsilon grid has {len(grid)} budgets; consider --eps-stride"
            log.warning(msg)
            manifest["warnings"].append(msg)

    def emit(name: str, front, **meta):
        _write(out / f"{name}.csv", front_to_csv(front))
        _write(out / f"{name}.json", front_to_json(front, method=method, **meta))
        manifest["artifacts"] += [f"{name}.csv", f"{name}.json"]

    if method in ("netshield", "netshield_plus"):
        t0 = time.perf_counter()
        pts = _netshield_points(g, costs, cfg)
        emit("front", nondominated_filter(pts))
        manifest["timings"]["solve"] = time.perf_counter() - t0
    elif method in ("eps_qp", "eps_qp_batched"):
        t0 = time.perf_counter()
        front, recs = _qp_front(g, costs, cfg, grid, method == "eps_qp_batched")
        emit("front", front)
        _write_rows(
            out / "solutions.csv",
            _qp_rows(g, recs),
            ("budget", "cost", "delta_lambda", "shield_value", "optimal", "nodes"),
        )
        manifest["artifacts"].append("solutions.csv")
        manifest["all_optimal"] = all(r.optimal for r in recs)
        manifest["timings"]["solve"] = time.perf_counter() - t0
    else:
        algorithm = "nsga2" if method in ("nsga2", "hybrid_nsga2") else "sms_emoa"
        init_fronts = []
        if method.startswith("hybrid"):
            t0 = time.perf_counter()
            init_fronts = [
                _qp_front(g, costs, cfg, grid, batched=False)[0],
                _qp_front(g, costs, cfg, grid, batched=True)[0],
            ]
            emit("init_front", nondominated_filter(p for f in init_fronts for p in f))
            manifest["timings"]["init"] = time.perf_counter() - t0
        jobs = []
        for r in range(cfg.runs):
            seed = cfg.seed + r
            gcfg = GaConfig(
                population_size=cfg.pop,
                p_m=cfg.pm,
                p_c=cfg.pc,
                evaluation_budget=cfg.budget,
                seed=seed,
                algorithm=algorithm,
            )
            init = make_hybrid_init(init_fronts, cfg.pop, g, seed) if init_fronts else None
            jobs.append((g, costs, gcfg, init, algorithm))
        workers = _workers()
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_ga_job, jobs))
        else:
            results = [_ga_job(j) for j in jobs]
        fronts = []
        for r, (res, elapsed) in enumerate(results):
            front = Front(tuple(_retag(p, method) for p in res.front))
            fronts.append(front)
            emit(f"front_run{r}", front, seed=cfg.seed + r, evaluations=res.evaluations)
            manifest["timings"][f"run{r}"] = elapsed
        curve = first_attainment_curve(fronts, 1)
        emit("attainment", curve, k=1, runs=cfg.runs)
        manifest["seeds"] = [cfg.seed + r for r in range(cfg.runs)]

    manifest["timings"]["total"] = time.perf_counter() - t_start
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return manifest


def _retag(p: ObjectivePoint, method: str) -> ObjectivePoint:
    return ObjectivePoint(p.delta_lambda, p.cost, method, p.nodes, p.shield_value)


def compare_fronts(paths: Sequence[str | os.PathLike], out: str | os.PathLike) -> dict:
    """Merge front CSVs into one non-dominated front and tabulate hypervolumes."""
    if not paths:
        raise ExperimentError("need at least one front file")
    fronts = {}
    for p in paths:
        path = Path(p)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ExperimentError(f"cannot read {path}: {exc}") from None
        fronts[str(path)] = front_from_csv(text)
    names = list(fronts)
    merged = nondominated_filter(p for f in fronts.values() for p in f)

    all_pts = [p for f in fronts.values() for p in f]
    top = max((p.delta_lambda for p in all_pts), default=0.0)
    ref = ObjectivePoint(
        -0.05 * top if top > 0 else -1.0,
        max((p.cost for p in all_pts), default=0) + 1,
    )
    hv = {name: hypervolume_2d(f, ref) for name, f in fronts.items()}
    rows = []
    for i, a in enumerate(names):
        for b in names[i:]:
            union = hypervolume_2d(list(fronts[a]) + list(fronts[b]), ref)
            rows.append(
                {
                    "front_a": a,
                    "front_b": b,
                    "hv_a": repr(hv[a]),
                    "hv_b": repr(hv[b]),
                    "hv_union": repr(union),
                    "a_not_b": repr(union - hv[b]),
                    "b_not_a": repr(union - hv[a]),
                }
            )
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    _write(outdir / "merged.csv", front_to_csv(merged))
    sources = {}
    for name, f in fronts.items():
        for p in f:
            sources.setdefault((p.cost, p.delta_lambda, p.method, p.nodes), name)
    doc = {
        "reference_point": {"delta_lambda": ref.delta_lambda, "cost": ref.cost},
        "hypervolume": hv,
        "pairs": rows,
        "merged": [
            {
                "cost": p.cost,
                "delta_lambda": p.delta_lambda,
                "method": p.method,
                "nodes": list(p.nodes),
                "source": sources[(p.cost, p.delta_lambda, p.method, p.nodes)],
            }
            for p in merged
        ],
    }
    _write(outdir / "compare.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write_rows(
        outdir / "hypervolume.csv",
        rows,
        ("front_a", "front_b", "hv_a", "hv_b", "hv_union", "a_not_b", "b_not_a"),
    )
    return {"merged": merged, "hypervolume": hv, "pairs": rows, "reference": ref}


def write_edge_list(g: Graph, path: str | os.PathLike):
    lines = [f"# generated by netimmune {__version__}: n={g.n} edges={g.edge_count}"]
    lines += [f"{g.labels[i]} {g.labels[j]}" for i, j in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netimmune", description="Cost/benefit Pareto fronts for node immunization.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one method on one graph")
    s.add_argument("--graph", required=True, help="edge-list path, bundled name, or er:/ba:/barbell: spec")
    s.add_argument("--method", required=True, choices=METHODS)
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int)
    s.add_argument("--batch", type=int, default=1)
    s.add_argument("--eps-max", type=int)
    s.add_argument("--eps-stride", type=int, default=1)
    s.add_argument("--pop", type=int, default=100)
    s.add_argument("--pm", type=float, help="per-bit mutation probability (default 1/n)")
    s.add_argument("--pc", type=float, default=0.75)
    s.add_argument("--budget", type=int, default=10000)
    s.add_argument("--runs", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--largest-component", action="store_true")
    s.add_argument("--node-limit", type=int, help="branch-and-bound node cap per solve")

    c = sub.add_parser("compare", help="merge front CSVs and tabulate hypervolumes")
    c.add_argument("fronts", nargs="+")
    c.add_argument("--out", required=True)

    gen = sub.add_parser("gen", help="write a generated graph as an edge list")
    gen.add_argument("--spec", required=True)
    gen.add_argument("--out", required=True)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        if args.command == "solve":
            cfg = ExperimentConfig(
                graph=args.graph,
                method=args.method,
                out=args.out,
                k=args.k,
                batch=args.batch,
                eps_max=args.eps_max,
                eps_stride=args.eps_stride,
                pop=args.pop,
                pm=args.pm,
                pc=args.pc,
                budget=args.budget,
                runs=args.runs,
                seed=args.seed,
                largest_component=args.largest_component,
                node_limit=args.node_limit,
            )
            run_experiment(cfg)
        elif args.command == "compare":
            compare_fronts(args.fronts, args.out)
        else:
            write_edge_list(resolve_graph(args.spec), args.out)
    except (ExperimentError, GraphError, FrontError, ConvergenceError, OSError, ValueError) as exc:
        print(f"netimmune: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
