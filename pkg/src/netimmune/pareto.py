"""Pareto dominance, front filtering, 2-D hypervolume and attainment curves.

Objective points live in (delta_lambda, cost) space with delta_lambda
maximized and cost minimized. Front filtering uses strict dominance; the
attainment machinery uses weak dominance.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DROP_TOL = 1e-9

CSV_HEADER = ("cost", "delta_lambda", "method", "nodes")


class FrontError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectivePoint:
    delta_lambda: float
    cost: int
    method: str = ""
    nodes: tuple[str, ...] = ()
    shield_value: float | None = None

    def key(self):
        return (self.cost, -self.delta_lambda, self.method, self.nodes)


@dataclass(frozen=True)
class Front:
    points: tuple[ObjectivePoint, ...] = ()

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def objectives(self) -> list[tuple[float, int]]:
        return [(p.delta_lambda, p.cost) for p in self.points]


@dataclass(frozen=True)
class AttainmentCurve(Front):
    k: int = field(default=1)


def dominates(a: ObjectivePoint, b: ObjectivePoint, tol: float = DROP_TOL) -> bool:
    if a.delta_lambda < b.delta_lambda - tol or a.cost > b.cost:
        return False
    return a.delta_lambda > b.delta_lambda + tol or a.cost < b.cost


def weakly_dominates(a: ObjectivePoint, b: ObjectivePoint) -> bool:
    return a.delta_lambda >= b.delta_lambda and a.cost <= b.cost


def nondominated_filter(points: Iterable[ObjectivePoint], tol: float = DROP_TOL) -> Front:
    """Maximal mutually non-dominated subset, sorted by ascending cost.

    Points equal in both objectives (drop within ``tol``) collapse to one;
    the survivor is chosen by a fixed key so the result does not depend on
    input order.
    """
    ordered = sorted(points, key=ObjectivePoint.key)
    kept: list[ObjectivePoint] = []
    best = -np.inf
    for p in ordered:
        if p.delta_lambda > best + tol:
            kept.append(p)
            best = p.delta_lambda
    return Front(tuple(kept))


def _validate_ref(points: Sequence[ObjectivePoint], ref: ObjectivePoint):
    for p in points:
        if not (p.delta_lambda > ref.delta_lambda and p.cost < ref.cost):
            raise FrontError(
                f"reference point ({ref.delta_lambda}, {ref.cost}) is not strictly worse than "
                f"({p.delta_lambda}, {p.cost})"
            )


def hypervolume_2d(front: Iterable[ObjectivePoint], ref: ObjectivePoint) -> float:
    """Area dominated by ``front`` and bounded by ``ref``."""
    pts = list(front)
    if not pts:
        return 0.0
    _validate_ref(pts, ref)
    objs = np.array([(-p.delta_lambda, float(p.cost)) for p in pts])
    return hypervolume_minimize(objs, (-ref.delta_lambda, float(ref.cost)))


def hypervolume_minimize(objs: np.ndarray, ref: Sequence[float]) -> float:
    """Hypervolume of a 2-column minimization array against ``ref``.

    Sort-and-sweep over the staircase, summing horizontal slabs. Points are
    assumed to lie strictly inside the reference box.
    """
    if len(objs) == 0:
        return 0.0
    objs = np.asarray(objs, dtype=np.float64)
    order = np.lexsort((objs[:, 1], objs[:, 0]))
    area = 0.0
    top = ref[1]
    for x, y in objs[order]:
        if y < top:
            area += (ref[0] - x) * (top - y)
            top = y
    return float(area)


def first_attainment_curve(runs: Sequence[Iterable[ObjectivePoint]], k: int = 1) -> AttainmentCurve:
    """Boundary of the region weakly dominated by at least ``k`` of ``runs``."""
    runs = [list(r) for r in runs]
    if not runs:
        raise FrontError("need at least one run")
    if not 1 <= k <= len(runs):
        raise FrontError(f"k must lie in [1, {len(runs)}]")
    costs = sorted({p.cost for r in runs for p in r})
    level_points = []
    for c in costs:
        per_run = []
        for r in runs:
            reach = [p for p in r if p.cost <= c]
            if reach:
                per_run.append(max(reach, key=lambda p: (p.delta_lambda, -p.cost)))
        if len(per_run) < k:
            continue
        per_run.sort(key=lambda p: p.delta_lambda, reverse=True)
        src = per_run[k - 1]
        # provenance survives only when the attaining point sits exactly on this level
        nodes = src.nodes if src.cost == c else ()
        level_points.append(ObjectivePoint(src.delta_lambda, c, src.method, nodes, src.shield_value))
    front = nondominated_filter(level_points, tol=0.0)
    return AttainmentCurve(front.points, k=k)


def front_to_csv(front: Iterable[ObjectivePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in front:
        w.writerow([p.cost, repr(float(p.delta_lambda)), p.method, ";".join(p.nodes)])
    return buf.getvalue()


def front_from_csv(text: str) -> Front:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise FrontError(f"front CSV must start with header {','.join(CSV_HEADER)}")
    pts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise FrontError(f"line {lineno}: expected {len(CSV_HEADER)} fields")
        cost, drop, method, nodes = row
        try:
            pts.append(
                ObjectivePoint(float(drop), int(cost), method, tuple(nodes.split(";")) if nodes else ())
            )
        except ValueError as exc:
            raise FrontError(f"line {lineno}: {exc}") from None
    return Front(tuple(pts))


def front_to_json(front: Iterable[ObjectivePoint], **meta) -> str:
    doc = dict(meta)
    doc["points"] = [
        {
            "cost": p.cost,
            "delta_lambda": p.delta_lambda,
            "method": p.method,
            "nodes": list(p.nodes),
            "shield_value": p.shield_value,
        }
        for p in front
    ]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
