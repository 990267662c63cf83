"""NSGA-II and SMS-EMOA over node-selection bit vectors.

Objectives are (eigen-drop -> max, cost -> min). Internally everything is
minimized as ``(-delta_lambda, cost)``; the selection operators below take
such two-column arrays.
"""
from __future__ import annotations

import logging
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import Graph, as_mask, matrix_eigenpair, spectral_radius
from .pareto import Front, ObjectivePoint, hypervolume_minimize, nondominated_filter

log = logging.getLogger(__name__)

ALGORITHMS = ("nsga2", "sms_emoa")


class ConfigError(ValueError):
    pass


@dataclass
class GaConfig:
    population_size: int = 100
    p_m: float | None = None  # None -> 1/n
    p_c: float = 0.75
    evaluation_budget: int = 10000
    seed: int = 0
    algorithm: str = "nsga2"
    reference_point: tuple[float, float] | None = None  # (delta_lambda, cost)
    count_duplicates: bool = True
    max_iterations: int | None = None

    def validate(self):
        if self.population_size < 2:
            raise ConfigError("population_size must be at least 2")
        if self.p_m is not None and not 0.0 <= self.p_m <= 1.0:
            raise ConfigError("p_m must lie in [0, 1]")
        if not 0.0 <= self.p_c <= 1.0:
            raise ConfigError("p_c must lie in [0, 1]")
        if self.evaluation_budget < self.population_size:
            raise ConfigError("evaluation_budget must be at least population_size")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")


@dataclass
class GaResult:
    front: Front
    population: np.ndarray
    objectives: np.ndarray  # columns: delta_lambda, cost
    evaluations: int
    eigen_solves: int
    iterations: int
    reference: tuple[float, float]
    hv_history: list[float] = field(default_factory=list)


class Evaluator:
    """Memoized (eigen-drop, cost) of a selection, with a record of everything seen."""

    def __init__(self, g: Graph, costs):
        self.g = g
        self.adjacency = g.adjacency
        self.costs = np.asarray(costs, dtype=np.int64)
        self.base = spectral_radius(g)
        self.cache: dict[bytes, tuple[float, int]] = {}
        self.archive: dict[bytes, np.ndarray] = {}
        self.eigen_solves = 0

    def is_cached(self, x: np.ndarray) -> bool:
        return x.tobytes() in self.cache

    def __call__(self, x) -> tuple[float, int]:
        x = as_mask(x, self.g.n)
        key = x.tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        keep = np.flatnonzero(~x)
        if keep.size == self.g.n:
            drop = 0.0
        else:
            self.eigen_solves += 1
            lam = matrix_eigenpair(self.adjacency[np.ix_(keep, keep)])[0]
            drop = max(0.0, self.base - lam)
        hit = (drop, int(self.costs[x].sum()))
        self.cache[key] = hit
        self.archive[key] = x
        return hit

    def archive_front(self, method: str) -> Front:
        pts = []
        for key, x in self.archive.items():
            drop, cost = self.cache[key]
            pts.append(
                ObjectivePoint(drop, cost, method, tuple(self.g.labels[i] for i in np.flatnonzero(x)))
            )
        return nondominated_filter(pts)


def evaluate(g: Graph, costs, x) -> tuple[float, int]:
    return Evaluator(g, costs)(x)


def default_reference(g: Graph, costs) -> tuple[float, float]:
    lam = spectral_radius(g)
    drop_ref = -0.05 * lam if lam > 0 else -1.0
    return drop_ref, float(np.sum(costs)) + 1.0


# -- selection primitives (minimization arrays) ----------------------------


def dominance_matrix(f: np.ndarray) -> np.ndarray:
    """``out[i, j]`` is true when row i Pareto-dominates row j."""
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    return le & lt


def nondominated_sort(f: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Non-dominated sort of a two-column minimization array.

    Returns index arrays per rank and the rank of each row. Rows are swept
    in lexicographic order; each front keeps its smallest second objective,
    which is non-decreasing across fronts, so placement is a binary search.
    """
    f = np.asarray(f, dtype=np.float64)
    n = len(f)
    rank = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return [], rank
    order = np.lexsort((f[:, 1], f[:, 0]))
    tails: list[float] = []  # min second objective per front
    tail_x: list[float] = []
    for i in order:
        x, y = f[i, 0], f[i, 1]
        k = bisect_left(tails, y)
        # an equal tail dominates unless it is an exact duplicate
        while k < len(tails) and tails[k] == y and tail_x[k] != x:
            k += 1
        if k == len(tails):
            tails.append(y)
            tail_x.append(x)
        else:
            tails[k] = y
            tail_x[k] = x
        rank[i] = k
    fronts = [np.flatnonzero(rank == r) for r in range(len(tails))]
    return fronts, rank


def crowding_distance(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    n = len(f)
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for m in range(f.shape[1]):
        order = np.argsort(f[:, m], kind="stable")
        lo, hi = f[order[0], m], f[order[-1], m]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi == lo:
            continue
        dist[order[1:-1]] += (f[order[2:], m] - f[order[:-2], m]) / (hi - lo)
    return dist


def hv_contribution_2d(f: np.ndarray, ref: Sequence[float]) -> np.ndarray:
    """Exclusive hypervolume of each row of a mutually non-dominated set.

    Exact duplicates contribute nothing.
    """
    f = np.asarray(f, dtype=np.float64)
    if len(f) == 0:
        return np.zeros(0)
    if np.any(f[:, 0] >= ref[0]) or np.any(f[:, 1] >= ref[1]):
        raise ValueError("reference point must be strictly worse than every point")
    order = np.lexsort((f[:, 1], f[:, 0]))
    x, y = f[order, 0], f[order, 1]
    # x ascending means y descending on a staircase
    same_next = np.append((x[1:] == x[:-1]) & (y[1:] == y[:-1]), False)
    same_prev = np.insert(same_next[:-1], 0, False)
    right = np.append(x[1:], ref[0])
    upper = np.insert(y[:-1], 0, ref[1])
    contrib = (right - x) * (upper - y)
    contrib[same_next | same_prev] = 0.0
    out = np.empty(len(f))
    out[order] = contrib
    return out


def population_hypervolume(objs: np.ndarray, ref_min: Sequence[float]) -> float:
    f = np.column_stack([-objs[:, 0], objs[:, 1]])
    return hypervolume_minimize(f, ref_min)


# -- variation -------------------------------------------------------------


def uniform_crossover(rng, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    swap = rng.random(a.size) < 0.5
    return np.where(swap, b, a), np.where(swap, a, b)


def bitflip(rng, x: np.ndarray, p_m: float) -> np.ndarray:
    return x ^ (rng.random(x.size) < p_m)


def _vary(rng, p1, p2, cfg_pc, p_m):
    if rng.random() < cfg_pc:
        c1, c2 = uniform_crossover(rng, p1, p2)
    else:
        c1, c2 = p1.copy(), p2.copy()
    return bitflip(rng, c1, p_m), bitflip(rng, c2, p_m)


# -- drivers ---------------------------------------------------------------


class _Budget:
    def __init__(self, cfg: GaConfig):
        self.limit = cfg.evaluation_budget
        self.count_duplicates = cfg.count_duplicates
        self.max_iterations = cfg.max_iterations
        if not self.count_duplicates and self.max_iterations is None:
            # without a cap a small search space could never exhaust the budget
            self.max_iterations = 10 * cfg.evaluation_budget
        self.charged = 0
        self.iterations = 0

    def evaluate(self, ev: Evaluator, x: np.ndarray) -> tuple[float, int]:
        if self.count_duplicates or not ev.is_cached(x):
            self.charged += 1
        self.iterations += 1
        return ev(x)

    @property
    def exhausted(self) -> bool:
        if self.charged >= self.limit:
            return True
        return self.max_iterations is not None and self.iterations >= self.max_iterations


def _initial(rng, g: Graph, cfg: GaConfig, init) -> np.ndarray:
    if init is None:
        return rng.random((cfg.population_size, g.n)) < 0.5
    pop = np.asarray(init, dtype=bool)
    if pop.shape != (cfg.population_size, g.n):
        raise ConfigError(f"initial population must have shape ({cfg.population_size}, {g.n})")
    return pop.copy()


def _setup(g, costs, cfg, init):
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    ev = Evaluator(g, costs)
    budget = _Budget(cfg)
    p_m = cfg.p_m if cfg.p_m is not None else 1.0 / max(g.n, 1)
    ref = cfg.reference_point or default_reference(g, costs)
    pop = _initial(rng, g, cfg, init)
    objs = np.array([budget.evaluate(ev, x) for x in pop], dtype=np.float64)
    return rng, ev, budget, p_m, ref, pop, objs


def _minimize(objs: np.ndarray) -> np.ndarray:
    return np.column_stack([-objs[:, 0], objs[:, 1]])


def _rank_and_crowding(f: np.ndarray):
    fronts, rank = nondominated_sort(f)
    crowd = np.zeros(len(f))
    for fr in fronts:
        crowd[fr] = crowding_distance(f[fr])
    return fronts, rank, crowd


def _tournament(rng, rank, crowd) -> int:
    i, j = rng.choice(len(rank), size=2, replace=False)
    if rank[i] != rank[j]:
        return int(i if rank[i] < rank[j] else j)
    if crowd[i] != crowd[j]:
        return int(i if crowd[i] > crowd[j] else j)
    return int(min(i, j))


def nsga2_select(f: np.ndarray, size: int) -> np.ndarray:
    """Indices of ``size`` survivors by rank, then crowding distance."""
    fronts, _ = nondominated_sort(f)
    chosen = []
    for fr in fronts:
        if len(chosen) + fr.size <= size:
            chosen.extend(fr.tolist())
            continue
        crowd = crowding_distance(f[fr])
        order = np.argsort(-crowd, kind="stable")
        chosen.extend(fr[order[: size - len(chosen)]].tolist())
        break
    return np.array(chosen, dtype=np.int64)


def nsga2_run(g: Graph, costs, cfg: GaConfig, init=None) -> GaResult:
    """Generational NSGA-II; returns the archive front and the final population."""
    rng, ev, budget, p_m, ref, pop, objs = _setup(g, costs, cfg, init)
    mu = cfg.population_size
    _, rank, crowd = _rank_and_crowding(_minimize(objs))
    while not budget.exhausted:
        kids, kid_objs = [], []
        while len(kids) < mu and not budget.exhausted:
            a = pop[_tournament(rng, rank, crowd)]
            b = pop[_tournament(rng, rank, crowd)]
            for child in _vary(rng, a, b, cfg.p_c, p_m):
                if len(kids) >= mu or budget.exhausted:
                    break
                kids.append(child)
                kid_objs.append(budget.evaluate(ev, child))
        if not kids:
            break
        pool = np.vstack([pop, np.array(kids)])
        pool_objs = np.vstack([objs, np.array(kid_objs, dtype=np.float64)])
        keep = nsga2_select(_minimize(pool_objs), mu)
        pop, objs = pool[keep], pool_objs[keep]
        _, rank, crowd = _rank_and_crowding(_minimize(objs))
    return GaResult(
        front=ev.archive_front("nsga2"),
        population=pop,
        objectives=objs,
        evaluations=budget.charged,
        eigen_solves=ev.eigen_solves,
        iterations=budget.iterations,
        reference=ref,
    )


def sms_emoa_run(g: Graph, costs, cfg: GaConfig, init=None, track_hypervolume: bool = False) -> GaResult:
    """Steady-state (mu+1) SMS-EMOA with a fixed reference point."""
    rng, ev, budget, p_m, ref, pop, objs = _setup(g, costs, cfg, init)
    ref_min = (-ref[0], ref[1])
    mu = cfg.population_size
    history = [population_hypervolume(objs, ref_min)] if track_hypervolume else []
    while not budget.exhausted:
        i, j = rng.choice(mu, size=2, replace=False)
        child = _vary(rng, pop[i], pop[j], cfg.p_c, p_m)[0]
        child_obj = budget.evaluate(ev, child)
        pool = np.vstack([pop, child[None, :]])
        pool_objs = np.vstack([objs, np.array(child_obj, dtype=np.float64)[None, :]])
        f = _minimize(pool_objs)
        fronts, _ = nondominated_sort(f)
        worst = fronts[-1]
        if worst.size == 1:
            drop = int(worst[0])
        else:
            contrib = hv_contribution_2d(f[worst], ref_min)
            drop = int(worst[np.argmin(contrib)])
        keep = np.delete(np.arange(mu + 1), drop)
        pop, objs = pool[keep], pool_objs[keep]
        if track_hypervolume:
            history.append(population_hypervolume(objs, ref_min))
    return GaResult(
        front=ev.archive_front("sms_emoa"),
        population=pop,
        objectives=objs,
        evaluations=budget.charged,
        eigen_solves=ev.eigen_solves,
        iterations=budget.iterations,
        reference=ref,
        hv_history=history,
    )


def run(g: Graph, costs, cfg: GaConfig, init=None) -> GaResult:
    if cfg.algorithm == "nsga2":
        return nsga2_run(g, costs, cfg, init)
    return sms_emoa_run(g, costs, cfg, init)


def make_hybrid_init(
    fronts: Sequence[Front], population_size: int, g: Graph, seed: int
) -> np.ndarray:
    """Initial population seeded with the selections behind ``fronts``.

    Short populations are padded with uniform random bit vectors; long ones
    are truncated by non-dominated rank, then crowding distance.
    """
    if population_size < 1:
        raise ConfigError("population_size must be at least 1")
    index = {label: i for i, label in enumerate(g.labels)}
    seen: dict[bytes, int] = {}
    vecs, objs = [], []
    for front in fronts:
        for p in front:
            x = np.zeros(g.n, dtype=bool)
            x[[index[label] for label in p.nodes]] = True
            key = x.tobytes()
            if key in seen:
                continue
            seen[key] = len(vecs)
            vecs.append(x)
            objs.append((-p.delta_lambda, float(p.cost)))
    rng = np.random.default_rng(seed)
    if len(vecs) > population_size:
        keep = np.sort(nsga2_select(np.array(objs), population_size))
        vecs = [vecs[i] for i in keep]
    pad = population_size - len(vecs)
    rows = vecs + list(rng.random((pad, g.n)) < 0.5) if pad > 0 else vecs
    return np.array(rows, dtype=bool).reshape(population_size, g.n)
