"""Exact budgeted Shield-value maximization and the epsilon-constraint sweeps.

The solver maximizes

    f(x) = sum_i linear_i x_i - sum_{i<j} w_ij x_i x_j,   linear, w >= 0

over binary x subject to sum_i cost_i x_i <= budget (and optionally
|x| <= cap) with a depth-first branch-and-bound. Among optima within
``TIE_TOL`` of the best value the lexicographically smallest selection
vector is returned, so results are reproducible and comparable against
exhaustive enumeration.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import (
    EigenPair,
    Graph,
    GraphError,
    as_mask,
    detached,
    eigen_drop,
    principal_eigenpair,
    remove_nodes,
    spectral_radius,
)
from .pareto import Front, ObjectivePoint, nondominated_filter

log = logging.getLogger(__name__)

TIE_TOL = 1e-9
PRUNE_TOL = TIE_TOL + 1e-12
PAIR_EPS = 1e-15


@dataclass(frozen=True, eq=False)
class QpInstance:
    linear: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_w: np.ndarray
    costs: np.ndarray
    budget: int
    cardinality_cap: int | None = None

    @property
    def n(self) -> int:
        return len(self.linear)

    def weight_matrix(self) -> np.ndarray:
        w = np.zeros((self.n, self.n))
        w[self.pair_i, self.pair_j] = self.pair_w
        w[self.pair_j, self.pair_i] = self.pair_w
        return w

    def with_budget(self, budget: int, cap: int | None = None) -> "QpInstance":
        return QpInstance(self.linear, self.pair_i, self.pair_j, self.pair_w, self.costs, budget, cap)


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    objective: float
    cost: int
    optimal: bool
    nodes_explored: int

    @property
    def nodes(self) -> list[int]:
        return np.flatnonzero(self.x).tolist()


def build_qp(g: Graph, ep: EigenPair, costs, budget: int, cap: int | None = None) -> QpInstance:
    costs = np.asarray(costs, dtype=np.int64)
    if len(ep.u) != g.n or costs.shape != (g.n,):
        raise GraphError("eigenpair, cost vector and graph dimensions disagree")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if np.any(costs < 0):
        raise ValueError("costs must be nonnegative")
    u = np.asarray(ep.u, dtype=np.float64)
    linear = 2.0 * ep.lambda_max * u * u
    i, j = np.nonzero(np.triu(g.adjacency, 1))
    prod = u[i] * u[j]
    keep = prod >= PAIR_EPS
    return QpInstance(linear, i[keep], j[keep], 2.0 * prod[keep], costs, int(budget), cap)


def qp_objective(q: QpInstance, x) -> float:
    """Objective value of selection ``x`` in a fixed summation order."""
    mask = as_mask(x, q.n)
    return float(np.sum(q.linear[mask])) - float(np.sum(q.pair_w[mask[q.pair_i] & mask[q.pair_j]]))


class _NodeLimit(Exception):
    pass


def lex_key(mask: np.ndarray) -> bytes:
    return mask.astype(np.uint8).tobytes()


def solve_budget_qp(q: QpInstance, node_limit: int | None = None) -> QpSolution:
    """Provably optimal maximizer of the Shield-value QP under the budget.

    With ``node_limit`` set, the search may stop early; the best selection
    found is returned with ``optimal=False``.
    """
    n = q.n
    costs = q.costs.astype(np.float64)
    budget = float(q.budget)
    cap = n if q.cardinality_cap is None else min(int(q.cardinality_cap), n)
    w = q.weight_matrix()

    order = np.array(
        sorted(range(n), key=lambda i: (-q.linear[i] / max(costs[i], 1.0), i)), dtype=np.int64
    )
    cost_ord = costs[order]

    mask = np.zeros(n, dtype=bool)
    gain = q.linear.astype(np.float64).copy()
    best = 0.0
    candidates: list[tuple[float, np.ndarray]] = [(0.0, mask.copy())]
    explored = 0

    def relax(p: int, rem_budget: float, rem_cap: int) -> float:
        g = gain[order[p:]]
        c = cost_ord[p:]
        ok = (g > 0) & (c <= rem_budget)
        g, c = g[ok], c[ok]
        if g.size == 0:
            return 0.0
        free = c == 0
        bound = float(g[free].sum())
        g2, c2 = g[~free], c[~free]
        if g2.size:
            idx = np.argsort(-(g2 / c2), kind="stable")
            cs = np.cumsum(c2[idx])
            gs = np.cumsum(g2[idx])
            k = int(np.searchsorted(cs, rem_budget, side="right"))
            if k > 0:
                bound += float(gs[k - 1])
            if k < g2.size:
                used = float(cs[k - 1]) if k > 0 else 0.0
                bound += (rem_budget - used) / c2[idx[k]] * g2[idx[k]]
        if rem_cap < g.size:
            top = np.partition(g, g.size - rem_cap)[g.size - rem_cap:]
            bound = min(bound, float(top.sum()))
        return bound

    def dfs(p: int, obj: float, spent: float, count: int):
        nonlocal best, explored, gain
        explored += 1
        if node_limit is not None and explored > node_limit:
            raise _NodeLimit
        if p == n or count >= cap:
            return
        if obj + relax(p, budget - spent, cap - count) < best - PRUNE_TOL:
            return
        j = order[p]
        gj = gain[j]
        # nonpositive marginal gain: any superset via j is matched by a lex-smaller set without it
        if gj > 0 and spent + costs[j] <= budget:
            saved = gain
            gain = gain - w[j]
            mask[j] = True
            new_obj = obj + gj
            if new_obj >= best - TIE_TOL:
                candidates.append((new_obj, mask.copy()))
                if new_obj > best:
                    best = new_obj
                    if len(candidates) > 64:
                        candidates[:] = [c for c in candidates if c[0] >= best - TIE_TOL]
            dfs(p + 1, new_obj, spent + costs[j], count + 1)
            mask[j] = False
            gain = saved
        dfs(p + 1, obj, spent, count)

    optimal = True
    try:
        dfs(0, 0.0, 0.0, 0)
    except _NodeLimit:
        optimal = False

    scored = [(qp_objective(q, m), m) for _, m in candidates]
    top = max(v for v, _ in scored)
    x = min((m for v, m in scored if v >= top - TIE_TOL), key=lex_key)
    return QpSolution(
        x=x,
        objective=qp_objective(q, x),
        cost=int(q.costs[x].sum()),
        optimal=optimal,
        nodes_explored=explored,
    )


@dataclass(frozen=True)
class SweepRecord:
    budget: int
    nodes: tuple[int, ...]
    cost: int
    shield_value: float
    delta_lambda: float
    optimal: bool


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("NETIMMUNE_WORKERS", "1")))
    except ValueError:
        return 1


def default_budgets(costs) -> list[int]:
    return list(range(int(np.sum(costs)) + 1))


def _point(g: Graph, rec: SweepRecord, method: str) -> ObjectivePoint:
    return ObjectivePoint(
        rec.delta_lambda,
        rec.cost,
        method,
        tuple(g.labels[i] for i in rec.nodes),
        rec.shield_value,
    )


def _plain_job(args):
    q, budget, node_limit = args
    return solve_budget_qp(q.with_budget(budget), node_limit)


def sweep_records(
    g: Graph,
    costs,
    budgets: Sequence[int],
    node_limit: int | None = None,
    workers: int | None = None,
) -> list[SweepRecord]:
    """Solve the budgeted QP for every budget and re-score with the true eigen-drop."""
    budgets = list(budgets)
    if not budgets or min(budgets) < 0:
        raise ValueError("budgets must be a nonempty sequence of nonnegative integers")
    ep = principal_eigenpair(g)
    q = build_qp(g, ep, costs, 0)
    jobs = [(q, b, node_limit) for b in budgets]
    workers = workers or _workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            sols = list(pool.map(_plain_job, jobs))
    else:
        sols = [_plain_job(j) for j in jobs]
    drops: dict[bytes, float] = {}
    records = []
    for b, sol in zip(budgets, sols):
        key = lex_key(sol.x)
        if key not in drops:
            drops[key] = eigen_drop(g, sol.x, ep.lambda_max)
        records.append(
            SweepRecord(b, tuple(sol.nodes), sol.cost, sol.objective, drops[key], sol.optimal)
        )
    return records


def epsilon_sweep(g: Graph, costs, budgets: Sequence[int] | None = None, **kw) -> Front:
    if budgets is None:
        budgets = default_budgets(costs)
    recs = sweep_records(g, costs, budgets, **kw)
    return nondominated_filter(_point(g, r, "eps_qp") for r in recs)


class _ResidualCache:
    """Eigenpairs and QP coefficients of residual graphs keyed by the removed set."""

    def __init__(self, g: Graph, costs: np.ndarray):
        self.g = detached(g)
        self.costs = costs
        self._cache: dict[frozenset, tuple[Graph, QpInstance]] = {}

    def get(self, removed: frozenset) -> tuple[Graph, QpInstance]:
        hit = self._cache.get(removed)
        if hit is None:
            residual = remove_nodes(self.g, sorted(removed))
            ep = principal_eigenpair(residual)
            # costs stay frozen at the original graph's values
            q = build_qp(residual, ep, self.costs[list(residual.origin)], 0)
            hit = (residual, q)
            self._cache[removed] = hit
        return hit


def batched_selection(
    cache: _ResidualCache, b: int, budget: int, node_limit: int | None = None
) -> tuple[list[int], bool]:
    """Batched sweep for one budget; returns chosen original indices and an optimality flag.

    A batch with fewer than ``b`` nodes ends the process, as does exhausting
    the graph.
    """
    chosen: list[int] = []
    remaining = budget
    optimal = True
    n = cache.g.n
    while len(chosen) < n:
        residual, q = cache.get(frozenset(chosen))
        sol = solve_budget_qp(q.with_budget(remaining, b), node_limit)
        optimal &= sol.optimal
        picked = [residual.origin[i] for i in sol.nodes]
        chosen.extend(picked)
        remaining -= sol.cost
        if len(picked) < b:
            break
    return sorted(chosen), optimal


def sweep_records_batched(
    g: Graph,
    costs,
    b: int,
    budgets: Sequence[int],
    node_limit: int | None = None,
) -> list[SweepRecord]:
    if b < 1:
        raise ValueError("batch size must be at least 1")
    budgets = list(budgets)
    if not budgets or min(budgets) < 0:
        raise ValueError("budgets must be a nonempty sequence of nonnegative integers")
    costs = np.asarray(costs, dtype=np.int64)
    cache = _ResidualCache(g, costs)
    base = spectral_radius(g)
    ep = principal_eigenpair(g)
    q0 = build_qp(g, ep, costs, 0)
    drops: dict[tuple, float] = {}
    records = []
    for budget in budgets:
        nodes, optimal = batched_selection(cache, b, budget, node_limit)
        key = tuple(nodes)
        if key not in drops:
            drops[key] = eigen_drop(g, nodes, base)
        records.append(
            SweepRecord(
                budget,
                key,
                int(costs[nodes].sum()),
                qp_objective(q0, nodes),
                drops[key],
                optimal,
            )
        )
    return records


def epsilon_sweep_batched(
    g: Graph, costs, b: int, budgets: Sequence[int] | None = None, **kw
) -> Front:
    """Batched sweep: per budget, repeatedly take up to ``b`` nodes optimal for the
    current residual graph's Shield-value within the remaining budget."""
    if budgets is None:
        budgets = default_budgets(costs)
    recs = sweep_records_batched(g, costs, b, budgets, **kw)
    return nondominated_filter(_point(g, r, "eps_qp_batched") for r in recs)
