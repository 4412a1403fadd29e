"""Penalized densest-subgraph relaxation solved by projected gradient ascent.

The combinatorial problem (maximize u^T M u / u^T u over binary u subject to
u_i u_j = 0 wherever M(i, j) = 0) is relaxed to maximizing F(u) = u^T M_d u
over the nonnegative part of the unit ball, where M_d replaces structural
zeros with a penalty -d. The penalty is raised incrementally; once d >= n,
local optima of the relaxation satisfy the original constraints. The dense
cluster is then read off as the round(u^T M_d u) largest entries of u.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .affinity import AffinityMatrix, ValidationError, require_valid


class SolverFailure(Exception):
    """Solver could not produce a usable iterate."""


class DegenerateIterate(Exception):
    """Retraction of a vector with no positive mass."""


@dataclass(frozen=True)
class SolverParams:
    """Penalty schedule, tolerances, and seeding for solve().

    The default schedule starts small (the first level then tracks the
    dominant structure of M itself) and grows d geometrically until d >= n,
    so every penalty scale is visited in O(log n) levels. Setting delta_d
    switches to the additive schedule d += delta_d. tol_u bounds the
    infinity norm of the iterate update; tol_F is relative to max(1, |F|).
    """

    d0: float = 0.02
    delta_d: float | None = None
    d_growth: float = 2.0
    tol_u: float = 1e-9
    tol_F: float = 1e-12
    max_inner_iters: int = 1000
    max_outer_iters: int = 100
    beta: float = 0.5
    min_alpha: float = 1e-12
    seed: int = 0
    # candidate clusters are peeled off the graph one per round and the
    # densest wins; >1 escapes spurious basins in extreme-outlier regimes.
    # Rounds stop early once no remaining subgraph can beat the incumbent.
    rounds: int = 1

    def __post_init__(self):
        if not (self.d0 > 0):
            raise ValueError("d0 must be > 0")
        if self.delta_d is not None and not (self.delta_d > 0):
            raise ValueError("delta_d must be > 0")
        if not (self.d_growth > 1):
            raise ValueError("d_growth must be > 1")
        if not (self.tol_u > 0 and self.tol_F > 0):
            raise ValueError("tolerances must be > 0")
        if not (0 < self.beta < 1):
            raise ValueError("beta must be in (0, 1)")
        if not (self.min_alpha > 0):
            raise ValueError("min_alpha must be > 0")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")


@dataclass
class SolveStats:
    outer_iters: int = 0
    inner_iters: int = 0
    final_d: float = 0.0
    wall_ms: float = 0.0
    converged: bool = False
    reseeds: int = 0
    repair_drops: int = 0
    ascent_violations: int = 0
    domain_ok: bool = True
    # exact whenever it exceeds 1e-6; pairs with both entries below 1e-3
    # cannot exceed that and are not enumerated
    max_zero_pair_product: float = 0.0
    final_objective: float = 0.0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class Solution:
    u: np.ndarray
    omega_hat: int
    selected: list[int]
    density: float
    feasible: bool
    stats: SolveStats = field(default_factory=SolveStats)


class PenalizedMatrix:
    """View of M with structural zeros replaced by -d (off-diagonal only).

    The dense -d complement is never materialized: with s = sum(u) and C the
    stored structure carrying weights w + d,

        M_d u = C u + (diag + d) * u - d * s * 1

    so each matvec costs O(|E| + n).
    """

    def __init__(self, m: AffinityMatrix, d: float):
        if not (d > 0):
            raise ValueError("penalty d must be > 0")
        self.base = m
        self.d = float(d)
        csr = m._sym_csr
        self._shifted = sp.csr_matrix(
            (csr.data + self.d, csr.indices, csr.indptr), shape=csr.shape)
        self._diag_plus_d = m.diag + self.d

    @property
    def n(self) -> int:
        return self.base.n

    def matvec(self, u: np.ndarray) -> np.ndarray:
        if u.shape != (self.n,):
            raise ValueError(f"dimension mismatch: expected ({self.n},), got {u.shape}")
        return self._shifted.dot(u) + self._diag_plus_d * u - (self.d * u.sum())

    def to_dense(self) -> np.ndarray:
        out = np.full((self.n, self.n), -self.d)
        dense = self.base.to_dense()
        out[dense != 0] = dense[dense != 0]
        out[np.diag_indices(self.n)] = self.base.diag
        return out


def penalize(m: AffinityMatrix, d: float) -> PenalizedMatrix:
    return PenalizedMatrix(m, d)


def objective(m_d: PenalizedMatrix, u: np.ndarray) -> float:
    """F(u) = u^T M_d u."""
    return float(u @ m_d.matvec(u))


def gradient(m_d: PenalizedMatrix, u: np.ndarray) -> np.ndarray:
    """grad F(u) = 2 M_d u."""
    return 2.0 * m_d.matvec(u)


def project_tangent(u: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Tangent-space component g - u <u, g>, O(n)."""
    return g - u * (u @ g)


def _greedy_step_ex(u, g_perp, u_dot_g, min_alpha):
    """(alpha0, snap_index): boundary-crossing step and the coordinate it
    drives to zero, or the power-iteration step with no snap."""
    mask = (g_perp < 0) & (u > 0)
    if mask.any():
        ratios = np.full(u.shape, np.inf)
        ratios[mask] = np.abs(u[mask] / g_perp[mask])
        snap = int(np.argmin(ratios))
        return float(ratios[snap]), snap
    if u_dot_g > 0:
        return 1.0 / u_dot_g, None
    return min_alpha, None


def greedy_step(u, g_perp, u_dot_g, min_alpha=1e-12):
    """Step that drives the first descending positive coordinate to zero.

    When no coordinate is being pushed negative, falls back to the step
    1/(u . grad F), which makes the update proportional to M_d u (a power
    iteration); guarded by min_alpha when that curvature term is <= 0.
    """
    return _greedy_step_ex(u, g_perp, u_dot_g, min_alpha)[0]


def retract(v: np.ndarray) -> np.ndarray:
    """max(v / ||v||, 0): back onto the nonnegative part of the unit ball."""
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise DegenerateIterate("zero vector")
    u = np.maximum(v / nrm, 0.0)
    if not u.any():
        raise DegenerateIterate("all mass clipped by nonnegativity")
    return u


def _retract_unit(v: np.ndarray) -> np.ndarray:
    """Retraction iterated to its fixpoint: clip, then normalize to unit norm.

    The solve loop keeps iterates exactly on the sphere/orthant manifold so
    that backtracking compares unit vectors with unit vectors; an iterate
    left strictly inside the ball after clipping would make every on-sphere
    candidate look worse whenever the objective is negative.

    Coordinates below float noise are snapped to exact zero: a boundary step
    leaves ~1e-19 dust on the coordinate it drives out, and that dust would
    poison the next boundary ratio (steps of ~1e-21 read as convergence).
    """
    u = np.maximum(v, 0.0)
    u[u < 1e-14] = 0.0
    nrm = np.linalg.norm(u)
    if nrm == 0.0:
        raise DegenerateIterate("all mass clipped by nonnegativity")
    return u / nrm


def _backtrack_ex(m_d, u, g_perp, alpha0, f_u, params, snap=None):
    """Shrink alpha0 by beta until F(retract(u + alpha g_perp)) >= F(u).

    Candidates are evaluated at the retraction fixpoint (unit norm) so the
    comparison with the unit-norm incumbent is scale-consistent. When snap
    names a boundary-crossing coordinate, the first candidate zeroes it
    exactly (float rounding of u + alpha g would otherwise leave dust) and
    is probed even when alpha0 < min_alpha. Returns (alpha, u_new, f_new,
    stalled). stalled means no admissible step was non-decreasing; the
    iterate is returned unchanged and the caller treats it as converged.
    """
    if not (alpha0 > 0):
        raise ValueError("alpha0 must be > 0")
    alpha = alpha0
    first = True
    while first or alpha >= params.min_alpha:
        v = u + alpha * g_perp
        if first and snap is not None:
            v[snap] = 0.0
        first = False
        try:
            cand = _retract_unit(v)
        except DegenerateIterate:
            cand = None
        if cand is not None:
            f_new = objective(m_d, cand)
            if f_new >= f_u:
                return alpha, cand, f_new, False
        alpha *= params.beta
    return params.min_alpha, u, f_u, True


def backtrack(m_d, u, g_perp, alpha0, params, f_u=None):
    """Public line-search entry: see _backtrack_ex (no exact snapping)."""
    if f_u is None:
        f_u = objective(m_d, u)
    return _backtrack_ex(m_d, u, g_perp, alpha0, f_u, params)


def density_of(m: AffinityMatrix, selected) -> float:
    """Subgraph density: (sum of 2 M(i,j) over selected pairs + diag) / |selected|."""
    sel = np.asarray(sorted(set(int(i) for i in selected)), dtype=np.int64)
    if sel.size == 0:
        raise ValueError("empty selection")
    sub = m._sym_csr[sel][:, sel]
    return float((sub.sum() + m.diag[sel].sum()) / sel.size)


def _pairwise_connected(m: AffinityMatrix, sel: np.ndarray) -> np.ndarray:
    """Boolean adjacency (edge present) among sel, in sel order."""
    sub = m._sym_csr[sel][:, sel]
    adj = (sub.toarray() != 0.0)
    np.fill_diagonal(adj, True)
    return adj


def _max_zero_pair_product(m: AffinityMatrix, u: np.ndarray) -> float:
    # only coordinates above sqrt(1e-6) can participate in a product > 1e-6
    support = np.flatnonzero(u > 1e-3)
    best = 0.0
    for i in support:
        masked = u.copy()
        masked[m.neighbors(i)] = 0.0
        masked[i] = 0.0
        if masked.size:
            best = max(best, float(u[i] * masked.max()))
    return best


def solve(m: AffinityMatrix, params: SolverParams | None = None) -> Solution:
    """Run the full ascent: penalty schedule, inner gradient loop, rounding.

    The returned selection is the round(u^T M_d u) largest entries of u,
    post-hoc repaired so that every selected pair is connected in M. With
    rounds > 1, each found cluster is peeled off and the remainder is
    solved again; the densest cluster over all rounds wins. Iteration
    counts and wall time aggregate over rounds.
    """
    params = params or SolverParams()
    require_valid(m)
    if m.n < 1:
        raise ValidationError("matrix must have at least one vertex")
    t0 = time.perf_counter()
    best: Solution | None = None
    cur = m
    remaining = np.arange(m.n)
    for k in range(params.rounds):
        rng = np.random.default_rng(params.seed if k == 0 else [params.seed, k])
        sol = _solve_once(cur, params, rng)
        if cur is not m:
            sol = _lift_to_full(sol, m, remaining)
        if best is None or sol.density > best.density:
            if best is not None:
                _merge_run_stats(sol.stats, best.stats)
            best = sol
        else:
            _merge_run_stats(best.stats, sol.stats)
        keep = np.setdiff1d(remaining, np.asarray(sol.selected, dtype=np.int64))
        if keep.size < 2 or k == params.rounds - 1:
            break
        cur = m.induced(keep)
        remaining = keep
        # no subgraph of the remainder can be denser than maxdeg + maxdiag
        if cur.max_weighted_degree() + float(cur.diag.max()) <= best.density:
            break
    best.stats.wall_ms = (time.perf_counter() - t0) * 1e3
    return best


def _lift_to_full(sol: Solution, m: AffinityMatrix, remaining: np.ndarray) -> Solution:
    """Map a solution of an induced subgraph back to original vertex ids."""
    u = np.zeros(m.n)
    u[remaining] = sol.u
    selected = sorted(int(remaining[i]) for i in sol.selected)
    return Solution(u=u, omega_hat=sol.omega_hat, selected=selected,
                    density=density_of(m, selected), feasible=sol.feasible,
                    stats=sol.stats)


def _merge_run_stats(keep: SolveStats, other: SolveStats) -> None:
    keep.inner_iters += other.inner_iters
    keep.outer_iters += other.outer_iters
    keep.reseeds += other.reseeds
    keep.repair_drops += other.repair_drops
    keep.ascent_violations += other.ascent_violations
    keep.domain_ok = keep.domain_ok and other.domain_ok
    keep.max_zero_pair_product = max(keep.max_zero_pair_product,
                                     other.max_zero_pair_product)


def _solve_once(m: AffinityMatrix, params: SolverParams,
                rng: np.random.Generator) -> Solution:
    n = m.n
    t0 = time.perf_counter()
    stats = SolveStats()
    u = _retract_unit(rng.uniform(0.0, 1.0, n))

    d = params.d0
    m_d = penalize(m, d)
    for outer in range(params.max_outer_iters):
        stats.outer_iters = outer + 1
        converged_inner = False
        for _ in range(params.max_inner_iters):
            mv = m_d.matvec(u)
            f_u = float(u @ mv)
            g = 2.0 * mv
            u_dot_g = float(u @ g)
            # drop components pushing into an active bound (u_i = 0, g_i <= 0):
            # they would be clipped anyway and only eat the step's norm budget
            g_eff = np.where((u > 0.0) | (g > 0.0), g, 0.0)
            g_perp = g_eff - u * u_dot_g  # u.g_eff == u.g on the support
            alpha0, snap = _greedy_step_ex(u, g_perp, u_dot_g, params.min_alpha)
            if u_dot_g > 0 and alpha0 > 1.0 / u_dot_g:
                # a boundary step computed from a near-zero gradient component
                # can exceed the power step by orders of magnitude; capping
                # keeps backtracking short without losing boundary snapping
                alpha0, snap = 1.0 / u_dot_g, None
            try:
                alpha, u_new, f_new, stalled = _backtrack_ex(
                    m_d, u, g_perp, alpha0, f_u, params, snap)
            except DegenerateIterate:
                if stats.reseeds >= 1:
                    raise SolverFailure(
                        f"degenerate iterate twice (outer={outer}, d={d})") from None
                stats.reseeds += 1
                u = _retract_unit(rng.uniform(0.0, 1.0, n))
                continue
            stats.inner_iters += 1
            if f_new < f_u:
                stats.ascent_violations += 1
            if u_new.min() < 0.0 or np.linalg.norm(u_new) > 1.0 + 1e-12:
                stats.domain_ok = False
            du = float(np.max(np.abs(u_new - u)))
            df = abs(f_new - f_u)
            u, f_u = u_new, f_new
            if stalled or du <= params.tol_u or df <= params.tol_F * max(1.0, abs(f_u)):
                converged_inner = True
                break
        if d >= n and converged_inner:
            stats.converged = True
            break
        d = d + params.delta_d if params.delta_d is not None else d * params.d_growth
        m_d = penalize(m, d)
    stats.final_d = d

    # binarize: walk the centrality order and keep the densest prefix. The
    # classic cut round(u^T M_d u) equals the cluster size only for weights
    # near 1; with weaker weights the spectral value tracks density, not
    # cardinality, and systematically undersizes the selection.
    val = objective(m_d, u)
    stats.final_objective = val
    order = np.argsort(-u, kind="stable")  # ties broken by lowest index
    prefix = order[:int(np.count_nonzero(u > 0.0))]
    csr = m._sym_csr
    in_prefix = np.zeros(n, dtype=bool)
    running = 0.0
    omega, best_density = 1, -np.inf
    for k, v in enumerate(prefix, start=1):
        lo, hi = csr.indptr[v], csr.indptr[v + 1]
        nbrs = csr.indices[lo:hi]
        running += 2.0 * float(csr.data[lo:hi][in_prefix[nbrs]].sum()) + m.diag[v]
        in_prefix[v] = True
        if running / k > best_density:
            omega, best_density = k, running / k
    sel_desc = prefix[:omega]

    # post-hoc repair: floating point can leave stray mass on a vertex that
    # conflicts with the cluster; shrink until pairwise connected
    adj = _pairwise_connected(m, sel_desc)
    while sel_desc.size > 1:
        bad = np.argwhere(~adj)
        if bad.size == 0:
            break
        a, b = bad[0]  # first offending pair in u-descending order
        drop = int(b) if u[sel_desc[b]] <= u[sel_desc[a]] else int(a)
        keep = np.ones(sel_desc.size, dtype=bool)
        keep[drop] = False
        sel_desc = sel_desc[keep]
        adj = adj[np.ix_(keep, keep)]
        stats.repair_drops += 1
    omega = int(sel_desc.size)

    selected = sorted(int(i) for i in sel_desc)
    feasible = bool(_pairwise_connected(m, np.asarray(selected, dtype=np.int64)).all())
    stats.max_zero_pair_product = _max_zero_pair_product(m, u)
    stats.wall_ms = (time.perf_counter() - t0) * 1e3
    return Solution(
        u=u,
        omega_hat=omega,
        selected=selected,
        density=density_of(m, selected),
        feasible=feasible,
        stats=stats,
    )


def save_solution(sol: Solution, path, header: dict | None = None) -> None:
    """Plain-text solution format; config and stats go in trailing # comments."""
    lines = [
        f"omega {sol.omega_hat}",
        f"density {sol.density!r}",
        f"feasible {1 if sol.feasible else 0}",
        "selected " + " ".join(str(i) for i in sol.selected),
    ]
    for i in np.flatnonzero(sol.u):
        lines.append(f"u {int(i)} {float(sol.u[i])!r}")
    for k, v in (header or {}).items():
        lines.append(f"# {k}={v}")
    for k, v in sol.stats.as_dict().items():
        lines.append(f"# {k}={v}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_solution(path, n: int | None = None) -> Solution:
    """Parse the solution format written by save_solution (comments ignored)."""
    from .affinity import ParseError

    omega = density = feasible = None
    selected: list[int] = []
    u_entries: list[tuple[int, float]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if parts[0] == "omega":
                    omega = int(parts[1])
                elif parts[0] == "density":
                    density = float(parts[1])
                elif parts[0] == "feasible":
                    feasible = bool(int(parts[1]))
                elif parts[0] == "selected":
                    selected = [int(p) for p in parts[1:]]
                elif parts[0] == "u":
                    u_entries.append((int(parts[1]), float(parts[2])))
                else:
                    raise ParseError(f"{path}:{lineno}: unknown record {parts[0]!r}")
            except (ValueError, IndexError):
                raise ParseError(f"{path}:{lineno}: bad line {line!r}") from None
    if omega is None or density is None or feasible is None:
        raise ParseError(f"{path}: incomplete solution file")
    size = n if n is not None else (max(i for i, _ in u_entries) + 1 if u_entries else 0)
    u = np.zeros(size)
    for i, v in u_entries:
        u[i] = v
    return Solution(u=u, omega_hat=omega, selected=selected,
                    density=density, feasible=feasible)
