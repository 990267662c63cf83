"""Graph representation, ingestion, generators and spectral primitives.

Graphs are small dense undirected simple graphs held as a read-only
adjacency matrix. Everything here is a pure function of its inputs;
removal produces a new graph that remembers which indices of its parent
it came from.
"""
from __future__ import annotations

import io
import itertools
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence, TextIO

import networkx as nx
import numpy as np

RAYLEIGH_TOL = 1e-12
RESIDUAL_TOL = 1e-10
MAX_POWER_ITER = 10**6

BUNDLED = {
    "pandemic": "pandemic.edgelist",
    "conference_day1": "conference_day1.edgelist",
}


class GraphError(ValueError):
    pass


class EdgeListError(GraphError):
    """Malformed edge-list input; carries the offending 1-based line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph.

    ``origin[i]`` is the index node ``i`` had in the graph this one was cut
    from (identity for freshly built graphs).
    """

    labels: tuple[str, ...]
    adjacency: np.ndarray
    origin: tuple[int, ...] = field(default=())

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.float64, copy=True)
        n = len(self.labels)
        if a.shape != (n, n):
            raise GraphError(f"adjacency shape {a.shape} does not match {n} labels")
        if not np.array_equal(a, a.T):
            raise GraphError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise GraphError("self-loops are not allowed")
        if not np.all((a == 0) | (a == 1)):
            raise GraphError("adjacency must be binary")
        if len(set(self.labels)) != n:
            raise GraphError("node labels must be unique")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        if not self.origin:
            object.__setattr__(self, "origin", tuple(range(n)))
        elif len(self.origin) != n:
            raise GraphError("origin map must have one entry per node")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    def index_of(self, label: str) -> int:
        return self.labels.index(str(label))

    def to_networkx(self) -> nx.Graph:
        h = nx.Graph()
        h.add_nodes_from(range(self.n))
        h.add_edges_from(self.edges())
        return h

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.edge_count})"


@dataclass(frozen=True, eq=False)
class EigenPair:
    lambda_max: float
    u: np.ndarray


def from_edges(labels: Sequence[str], edges: Iterable[tuple[int, int]]) -> Graph:
    n = len(labels)
    a = np.zeros((n, n))
    for i, j in edges:
        if i == j:
            raise GraphError(f"self-loop on node {labels[i]!r}")
        a[i, j] = a[j, i] = 1.0
    return Graph(tuple(labels), a)


def from_networkx(h: nx.Graph) -> Graph:
    nodes = list(h.nodes())
    index = {v: i for i, v in enumerate(nodes)}
    return from_edges([str(v) for v in nodes], ((index[u], index[v]) for u, v in h.edges()))


def as_mask(s, n: int) -> np.ndarray:
    """Coerce a selection to a bool mask of length ``n``.

    Boolean arrays are taken as selection vectors; anything else is read as
    a collection of node indices.
    """
    arr = np.asarray(s if not isinstance(s, (set, frozenset)) else sorted(s))
    if arr.dtype == bool:
        if arr.shape != (n,):
            raise GraphError(f"selection vector must have length {n}")
        return arr.copy()
    mask = np.zeros(n, dtype=bool)
    if arr.size == 0:
        return mask
    idx = arr.astype(np.int64).ravel()
    if np.any(idx < 0) or np.any(idx >= n):
        raise GraphError(f"node index out of range for graph with {n} nodes")
    mask[idx] = True
    return mask


def load_edge_list(source: str | os.PathLike | TextIO, largest_component: bool = False) -> Graph:
    """Parse a whitespace-separated edge list.

    ``source`` may be a path or an open text stream. Lines starting with
    ``#`` and blank lines are skipped; duplicate edges collapse. Node indices
    follow first appearance.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return load_edge_list(fh, largest_component)

    labels: dict[str, int] = {}
    edges: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListError(f"expected two node labels, got {len(parts)} fields", lineno)
        a, b = parts
        if a == b:
            raise EdgeListError(f"self-loop on node {a!r}", lineno)
        i = labels.setdefault(a, len(labels))
        j = labels.setdefault(b, len(labels))
        edges.add((min(i, j), max(i, j)))
    if not labels:
        raise EdgeListError("edge list is empty")
    g = from_edges(list(labels), sorted(edges))
    if largest_component:
        g = largest_connected_component(g)
    return g


def parse_edge_list(text: str, largest_component: bool = False) -> Graph:
    return load_edge_list(io.StringIO(text), largest_component)


def load_bundled(name: str) -> Graph:
    try:
        fname = BUNDLED[name]
    except KeyError:
        raise GraphError(f"unknown bundled dataset {name!r}; choose from {sorted(BUNDLED)}") from None
    ref = resources.files("netimmune").joinpath("data", fname)
    if not ref.is_file():
        raise FileNotFoundError(
            f"bundled dataset {name!r} is not installed (expected data/{fname} inside the package)"
        )
    with ref.open("r", encoding="utf-8") as fh:
        return load_edge_list(fh)


def connected_components(a: np.ndarray) -> tuple[int, np.ndarray]:
    """Component count and per-node component id (ids ordered by lowest member)."""
    n = a.shape[0]
    labels = np.arange(n, dtype=np.float64)
    adj = a > 0
    while True:
        # min-label propagation over neighbours
        nbr = np.where(adj, labels[None, :], np.inf).min(axis=1)
        new = np.minimum(labels, nbr)
        if np.array_equal(new, labels):
            break
        labels = new
    _, comp = np.unique(labels, return_inverse=True)
    comp = comp.ravel()
    return int(comp.max()) + 1 if n else 0, comp


def largest_connected_component(g: Graph) -> Graph:
    if g.n == 0:
        return g
    ncomp, comp = connected_components(g.adjacency)
    if ncomp == 1:
        return g
    sizes = np.bincount(comp)
    # ties go to the component containing the lowest index
    keep = comp == int(np.argmax(sizes))
    return remove_nodes(g, ~keep)


def generate_erdos_renyi(n: int, target_edges: int, seed: int) -> Graph:
    """G(n, m): exactly ``target_edges`` edges drawn uniformly without replacement."""
    max_edges = n * (n - 1) // 2
    if n < 0 or not 0 <= target_edges <= max_edges:
        raise GraphError(f"target_edges must lie in [0, {max_edges}] for n={n}")
    return from_networkx(nx.gnm_random_graph(n, target_edges, seed=seed))


def generate_barabasi_albert(n: int, attach: int, seed: int) -> Graph:
    """Preferential attachment grown from a complete core on ``attach + 1`` nodes.

    Edge count is ``attach * (attach + 1) / 2 + attach * (n - attach - 1)``.
    """
    if not 1 <= attach < n:
        raise GraphError(f"attach must satisfy 1 <= attach < n (got attach={attach}, n={n})")
    h = nx.barabasi_albert_graph(n, attach, seed=seed, initial_graph=nx.complete_graph(attach + 1))
    return from_networkx(h)


def generate_barbell(clique_size: int) -> Graph:
    """Two ``K_c`` joined through one degree-2 bridge node.

    Labels follow the classic 13-node picture: clique ``1..c`` hangs off
    node ``c``, clique ``c+1..2c`` off node ``c+1``, and the bridge is the
    last node.
    """
    c = clique_size
    if c < 2:
        raise GraphError("clique_size must be at least 2")
    edges = list(itertools.combinations(range(c), 2))
    edges += list(itertools.combinations(range(c, 2 * c), 2))
    bridge = 2 * c
    edges += [(c - 1, bridge), (c, bridge)]
    return from_edges([str(i + 1) for i in range(2 * c + 1)], edges)


def barbell_bridge(g: Graph) -> int:
    return g.n - 1


def _power_iteration(m: np.ndarray, max_iter: int) -> tuple[float, np.ndarray]:
    # shift by +I so bipartite components (±lambda pairs) still converge
    k = m.shape[0]
    shifted = m + np.eye(k)
    v = np.full(k, 1.0 / np.sqrt(k))
    mu_prev = np.inf
    for _ in range(max_iter):
        w = shifted @ v
        mu = float(v @ w)
        scale = max(1.0, mu)
        if abs(mu - mu_prev) < RAYLEIGH_TOL * scale:
            if np.linalg.norm(w - mu * v) <= RESIDUAL_TOL * scale:
                return mu - 1.0, v
        mu_prev = mu
        v = w / np.linalg.norm(w)
    raise ConvergenceError(f"power iteration did not converge within {max_iter} iterations")


def principal_eigenpair(g: Graph, max_iter: int = MAX_POWER_ITER) -> EigenPair:
    """Largest adjacency eigenvalue and its nonnegative unit eigenvector.

    Each connected component is solved separately; the vector of the
    component with the largest eigenvalue is returned (lowest node index
    wins ties) and is zero elsewhere. An edgeless graph yields 0 and the
    uniform vector.
    """
    lam, u = matrix_eigenpair(g.adjacency, max_iter)
    u.setflags(write=False)
    return EigenPair(lam, u)


def matrix_eigenpair(a: np.ndarray, max_iter: int = MAX_POWER_ITER) -> tuple[float, np.ndarray]:
    n = a.shape[0]
    if n == 0:
        return 0.0, np.zeros(0)
    if not a.any():
        return 0.0, np.full(n, 1.0 / np.sqrt(n))
    ncomp, comp = connected_components(a)
    if ncomp == 1:
        lam, vec = _power_iteration(a, max_iter)
        u = np.abs(vec)
    else:
        best_lam, best_idx, best_vec = -1.0, None, None
        for c in range(ncomp):
            idx = np.flatnonzero(comp == c)
            if idx.size < 2:
                continue
            lam, vec = _power_iteration(a[np.ix_(idx, idx)], max_iter)
            if lam > best_lam + 1e-12:
                best_lam, best_idx, best_vec = lam, idx, vec
        u = np.zeros(n)
        u[best_idx] = np.abs(best_vec)
    u /= np.linalg.norm(u)
    return float(u @ (a @ u)), u


def spectral_radius(g: Graph) -> float:
    return matrix_eigenpair(g.adjacency)[0]


def detached(g: Graph) -> Graph:
    """Copy of ``g`` whose origin map is the identity."""
    return Graph(g.labels, g.adjacency)


def remove_nodes(g: Graph, s) -> Graph:
    """Induced subgraph on the nodes not in ``s``."""
    drop = as_mask(s, g.n)
    keep = np.flatnonzero(~drop)
    return Graph(
        tuple(g.labels[i] for i in keep),
        g.adjacency[np.ix_(keep, keep)],
        tuple(g.origin[i] for i in keep),
    )


def eigen_drop(g: Graph, s, base_lambda: float | None = None) -> float:
    """lambda(G) - lambda(G without s). Pass ``base_lambda`` to skip recomputing lambda(G)."""
    mask = as_mask(s, g.n)
    if not mask.any():
        return 0.0
    lam = spectral_radius(g) if base_lambda is None else base_lambda
    # interlacing makes this nonnegative; clamp rounding noise
    return max(0.0, lam - spectral_radius(remove_nodes(g, mask)))


def degree_costs(g: Graph) -> np.ndarray:
    return g.degrees.copy()
