"""Shield-value proxy and the greedy NetShield / NetShield+ selectors."""
from __future__ import annotations

import numpy as np

from .graph import EigenPair, Graph, GraphError, as_mask, detached, principal_eigenpair, remove_nodes

# marginal gains closer than this are treated as ties (lowest index wins)
TIE_TOL = 1e-12


def shield_value(ep: EigenPair, g: Graph, s) -> float:
    """Sum of 2*lam*u_i^2 over S minus 2*u_i*u_j*A_ij over unordered pairs in S."""
    if len(ep.u) != g.n:
        raise GraphError(f"eigenvector length {len(ep.u)} does not match graph with {g.n} nodes")
    mask = as_mask(s, g.n)
    us = ep.u[mask]
    sub = g.adjacency[np.ix_(mask, mask)]
    linear = 2.0 * ep.lambda_max * float(us @ us)
    # ordered-pair quadratic form counts each edge twice -> 2*u_i*u_j per edge
    pairwise = float(us @ sub @ us)
    return linear - pairwise


def _argmax_low(gains: np.ndarray, allowed: np.ndarray) -> int:
    vals = np.where(allowed, gains, -np.inf)
    best = vals.max()
    return int(np.flatnonzero(vals >= best - TIE_TOL * max(1.0, abs(best)))[0])


def greedy_order(g: Graph, k: int, ep: EigenPair | None = None) -> list[int]:
    if not 0 <= k <= g.n:
        raise GraphError(f"k must lie in [0, {g.n}]")
    if ep is None:
        ep = principal_eigenpair(g)
    u = ep.u
    base = 2.0 * ep.lambda_max * u * u
    # penalty[j] = sum over selected i of A_ij * u_i
    penalty = np.zeros(g.n)
    allowed = np.ones(g.n, dtype=bool)
    order = []
    for _ in range(k):
        gains = base - 2.0 * u * penalty
        j = _argmax_low(gains, allowed)
        order.append(j)
        allowed[j] = False
        penalty += g.adjacency[:, j] * u[j]
    return order


def netshield_greedy(g: Graph, k: int, ep: EigenPair | None = None) -> list[int]:
    """Pick ``k`` nodes by maximal marginal Shield-value gain, eigenpair fixed on ``g``.

    Returns node indices in selection order.
    """
    return greedy_order(g, k, ep)


def netshield_plus(g: Graph, k: int, b: int) -> list[int]:
    """NetShield in batches of ``b``, recomputing the eigenpair on the residual graph."""
    if not 0 <= k <= g.n:
        raise GraphError(f"k must lie in [0, {g.n}]")
    if b < 1:
        raise GraphError("batch size must be at least 1")
    chosen: list[int] = []
    residual = detached(g)
    while len(chosen) < k:
        step = min(b, k - len(chosen))
        picked = netshield_greedy(residual, step)
        # residual.origin maps back to g's indices
        chosen.extend(residual.origin[i] for i in picked)
        residual = remove_nodes(residual, picked)
    return chosen
