"""Exact small-instance solvers used as ground truth in tests and benchmarks.

Subsets feasible for the constrained densest-subgraph problem are exactly
the cliques of the positive-entry structure, so both solvers walk cliques:
exhaustively for the weighted densest objective (n <= 20), and with
coloring-bounded branch and bound for maximum cardinality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import AffinityMatrix, SizeLimitError, ValidationError

DENSEST_MAX_N = 20


@dataclass
class OracleResult:
    best_set: list[int]
    best_value: float
    nodes_explored: int


def _adjacency_masks(m: AffinityMatrix) -> list[int]:
    adj = [0] * m.n
    for i, j in zip(m.rows, m.cols):
        adj[i] |= 1 << int(j)
        adj[j] |= 1 << int(i)
    return adj


def exact_densest(m: AffinityMatrix) -> OracleResult:
    """Enumerate every feasible subset; return the density maximizer.

    Density of a set S is (sum of 2 M(i,j) over pairs in S + sum of diag
    over S) / |S|; a singleton scores its diagonal. Ties prefer smaller
    cardinality, then the lexicographically smallest set.
    """
    n = m.n
    if n > DENSEST_MAX_N:
        raise SizeLimitError(f"exact_densest enumerates 2^n subsets; n={n} > {DENSEST_MAX_N}")
    if n < 1:
        raise ValidationError("matrix must have at least one vertex")
    w = m.to_dense()
    np.fill_diagonal(w, 0.0)
    diag = m.diag
    adj = _adjacency_masks(m)

    best_value = -np.inf
    best_set: tuple[int, ...] = ()
    nodes = 0
    members: list[int] = []

    def extend(cand: int, weight: float, pair_sums: np.ndarray):
        nonlocal best_value, best_set, nodes
        mask = cand
        while mask:
            v = (mask & -mask).bit_length() - 1
            mask &= mask - 1
            nodes += 1
            total = weight + diag[v] + 2.0 * pair_sums[v]
            members.append(v)
            value = total / len(members)
            if value > best_value or (
                value == best_value
                and (len(members), tuple(members)) < (len(best_set), best_set)
            ):
                best_value = value
                best_set = tuple(members)
            nxt = mask & adj[v]  # candidates above v still adjacent to all members
            if nxt:
                extend(nxt, total, pair_sums + w[v])
            members.pop()

    extend((1 << n) - 1, 0.0, np.zeros(n))
    return OracleResult(list(best_set), float(best_value), nodes)


def _greedy_color_order(p_mask: int, adj: list[int], static_order: list[int]):
    """Partition p_mask into independent classes; return vertices with
    ascending color bounds (a clique takes at most one per class)."""
    order: list[int] = []
    colors: list[int] = []
    uncolored = p_mask
    c = 0
    while uncolored:
        c += 1
        avail = uncolored
        for v in static_order:
            if (avail >> v) & 1:
                order.append(v)
                colors.append(c)
                uncolored &= ~(1 << v)
                avail &= ~adj[v]
                avail &= ~(1 << v)
    return order, colors


def exact_max_clique(m: AffinityMatrix) -> OracleResult:
    """Branch-and-bound maximum clique on a binary affinity matrix.

    Among maximum cliques, returns the lexicographically smallest (found by
    a second, prefix-forcing pass). Practical up to roughly n = 64.
    """
    if m.weights.size and not np.all(m.weights == 1.0):
        k = int(np.argmax(m.weights != 1.0))
        raise ValidationError(
            f"non-binary weight {m.weights[k]} at ({m.rows[k]}, {m.cols[k]})")
    n = m.n
    if n < 1:
        raise ValidationError("matrix must have at least one vertex")
    adj = _adjacency_masks(m)
    degree = [mask.bit_count() for mask in adj]
    static_order = sorted(range(n), key=lambda v: (-degree[v], v))
    full = (1 << n) - 1
    nodes = 0

    best_size = 0
    best: list[int] = []

    def expand(r: list[int], p_mask: int):
        nonlocal best_size, best, nodes
        nodes += 1
        if not p_mask:
            if len(r) > best_size:
                best_size, best = len(r), r.copy()
            return
        order, colors = _greedy_color_order(p_mask, adj, static_order)
        for i in range(len(order) - 1, -1, -1):
            if len(r) + colors[i] <= best_size:
                return
            v = order[i]
            r.append(v)
            expand(r, p_mask & adj[v])
            r.pop()
            p_mask &= ~(1 << v)

    expand([], full)

    def exists_clique(p_mask: int, k: int) -> bool:
        nonlocal nodes
        if k <= 0:
            return True
        nodes += 1
        if p_mask.bit_count() < k:
            return False
        order, colors = _greedy_color_order(p_mask, adj, static_order)
        for i in range(len(order) - 1, -1, -1):
            if colors[i] < k:
                return False
            v = order[i]
            if exists_clique(p_mask & adj[v], k - 1):
                return True
            p_mask &= ~(1 << v)
        return False

    # lexicographically smallest witness of the optimal size
    chosen: list[int] = []
    cand = full
    for _ in range(best_size):
        mask = cand
        while mask:
            v = (mask & -mask).bit_length() - 1
            mask &= mask - 1
            above = ~((1 << (v + 1)) - 1)
            nxt = cand & adj[v] & above
            if exists_clique(nxt, best_size - len(chosen) - 1):
                chosen.append(v)
                cand = nxt
                break
        else:
            raise AssertionError("witness extraction lost the optimum")

    return OracleResult(chosen, float(best_size), nodes)
