"""Consistency-graph affinity matrices: data model, scoring, validation, file I/O.

An affinity matrix of n putative associations is symmetric with entries in
[0, 1]: off-diagonal entries score pairwise geometric consistency, diagonal
entries score per-association similarity (1 when no similarity information
is available). Zero entries are structural (never stored): they mark pairs
that must not be selected together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

# Diagonal similarities below this are rejected rather than clamped: an
# association with no similarity should be removed upstream, not kept at ~0.
MIN_DIAG = 1e-6


class ParseError(Exception):
    """Malformed input file."""


class ValidationError(Exception):
    """Data violates a structural invariant."""


class SizeLimitError(ValidationError):
    """Problem size exceeds an enforced limit."""


@dataclass(frozen=True)
class ScoringConfig:
    """Consistency scoring: threshold `epsilon`, Gaussian width `sigma`.

    `epsilon` and `sigma` carry the units of the residual being scored
    (meters for point-distance residuals, radians for angular ones).
    """

    epsilon: float
    sigma: float = 0.0
    kind: str = "weighted"  # "weighted" | "binary"

    def __post_init__(self):
        if self.kind not in ("weighted", "binary"):
            raise ValueError(f"unknown scoring kind: {self.kind!r}")
        if not (self.epsilon > 0):
            raise ValueError("epsilon must be > 0")
        if self.kind == "weighted" and not (self.sigma > 0):
            raise ValueError("sigma must be > 0 for weighted scoring")


def score_weighted(x: float, cfg: ScoringConfig) -> float:
    """Gaussian consistency score exp(-x^2 / 2 sigma^2), cut to 0 for |x| > epsilon."""
    if cfg.kind != "weighted":
        raise ValueError("score_weighted requires cfg.kind == 'weighted'")
    if not math.isfinite(x):
        raise ValueError(f"non-finite residual: {x}")
    if abs(x) > cfg.epsilon:
        return 0.0
    return math.exp(-0.5 * (x / cfg.sigma) ** 2)


def score_binary(x: float, cfg: ScoringConfig) -> float:
    """1 if |x| <= epsilon else 0."""
    if cfg.kind != "binary":
        raise ValueError("score_binary requires cfg.kind == 'binary'")
    if not math.isfinite(x):
        raise ValueError(f"non-finite residual: {x}")
    return 1.0 if abs(x) <= cfg.epsilon else 0.0


def score_residuals(x: np.ndarray, cfg: ScoringConfig) -> np.ndarray:
    """Vectorized scoring used by the affinity builders."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("non-finite residual in input")
    if cfg.kind == "binary":
        return (np.abs(x) <= cfg.epsilon).astype(np.float64)
    w = np.exp(-0.5 * (x / cfg.sigma) ** 2)
    w[np.abs(x) > cfg.epsilon] = 0.0
    return w


@dataclass
class Violation:
    kind: str  # "asymmetric-pair" | "out-of-range" | "bad-diagonal"
    i: int
    j: int | None = None
    detail: str = ""

    def __str__(self):
        where = f"({self.i}, {self.j})" if self.j is not None else f"({self.i})"
        return f"{self.kind} at {where}: {self.detail}"


class AffinityMatrix:
    """Sparse symmetric affinity matrix.

    Off-diagonal entries are stored once as (i, j, w) with i < j; absent
    entries mean M(i, j) = 0. Immutable after construction; a compressed-row
    view of the full symmetric structure is built once for O(|E|) matvecs.
    """

    def __init__(self, n, rows, cols, weights, diag=None):
        rows = np.asarray(rows, dtype=np.int64).copy()
        cols = np.asarray(cols, dtype=np.int64).copy()
        weights = np.asarray(weights, dtype=np.float64).copy()
        if not (rows.shape == cols.shape == weights.shape) or rows.ndim != 1:
            raise ValueError("rows, cols, weights must be 1-d arrays of equal length")
        if rows.size:
            if rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= n:
                raise ValueError("entry index out of range")
            if (rows == cols).any():
                raise ValueError("diagonal entries belong in diag, not the entry list")
        # canonicalize to i < j, sorted lexicographically
        swap = rows > cols
        rows[swap], cols[swap] = cols[swap], rows[swap]
        order = np.lexsort((cols, rows))
        self.n = int(n)
        self.rows = rows[order]
        self.cols = cols[order]
        self.weights = weights[order]
        if diag is None:
            self.diag = np.ones(n, dtype=np.float64)
        else:
            self.diag = np.asarray(diag, dtype=np.float64).copy()
            if self.diag.shape != (n,):
                raise ValueError("diag must have length n")
        for a in (self.rows, self.cols, self.weights, self.diag):
            a.flags.writeable = False

    @property
    def num_edges(self) -> int:
        return self.rows.size

    @cached_property
    def _sym_csr(self) -> sp.csr_matrix:
        # both triangles of the off-diagonal part
        r = np.concatenate([self.rows, self.cols])
        c = np.concatenate([self.cols, self.rows])
        w = np.concatenate([self.weights, self.weights])
        m = sp.csr_matrix((w, (r, c)), shape=(self.n, self.n))
        m.sort_indices()
        return m

    def matvec(self, u: np.ndarray) -> np.ndarray:
        """M u, cost O(|E| + n)."""
        return self._sym_csr.dot(u) + self.diag * u

    def neighbors(self, i: int) -> np.ndarray:
        """Indices j with M(i, j) > 0."""
        m = self._sym_csr
        return m.indices[m.indptr[i]:m.indptr[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        m = self._sym_csr
        lo, hi = m.indptr[i], m.indptr[i + 1]
        k = np.searchsorted(m.indices[lo:hi], j)
        return k < hi - lo and m.indices[lo + k] == j

    def to_dense(self) -> np.ndarray:
        out = self._sym_csr.toarray()
        out[np.diag_indices(self.n)] = self.diag
        return out

    @classmethod
    def from_dense(cls, m) -> "AffinityMatrix":
        m = np.asarray(m, dtype=np.float64)
        n = m.shape[0]
        if m.shape != (n, n):
            raise ValueError("square matrix required")
        r, c = np.nonzero(np.triu(m, 1))
        return cls(n, r, c, m[r, c], diag=np.diag(m).copy())

    def induced(self, keep) -> "AffinityMatrix":
        """Subgraph on the given vertices, relabeled 0..len(keep)-1 in sorted order."""
        keep = np.unique(np.asarray(keep, dtype=np.int64))
        if keep.size and (keep[0] < 0 or keep[-1] >= self.n):
            raise ValueError("vertex index out of range")
        pos = -np.ones(self.n, dtype=np.int64)
        pos[keep] = np.arange(keep.size)
        mask = (pos[self.rows] >= 0) & (pos[self.cols] >= 0)
        return AffinityMatrix(keep.size, pos[self.rows[mask]], pos[self.cols[mask]],
                              self.weights[mask], diag=self.diag[keep])

    def max_weighted_degree(self) -> float:
        """Largest row sum of off-diagonal weights; density of any subgraph
        is at most this plus the largest diagonal."""
        if self.num_edges == 0:
            return 0.0
        return float(np.asarray(self._sym_csr.sum(axis=1)).max())

    def __repr__(self):
        return f"AffinityMatrix(n={self.n}, edges={self.num_edges})"


def validate(m: AffinityMatrix) -> Violation | None:
    """Check symmetry, range, and diagonal invariants; None means valid.

    Storage is canonicalized to i < j, so asymmetry can only appear as a
    duplicated coordinate pair (two conflicting values for one logical entry).
    """
    r, c, w = m.rows, m.cols, m.weights
    if r.size:
        dup = np.flatnonzero((np.diff(r) == 0) & (np.diff(c) == 0))
        bad = np.flatnonzero(~np.isfinite(w) | (w <= 0.0) | (w > 1.0))
        first_dup = int(dup[0]) if dup.size else None
        first_bad = int(bad[0]) if bad.size else None
        if first_dup is not None and (first_bad is None or first_dup < first_bad):
            i, j = int(r[first_dup]), int(c[first_dup])
            return Violation("asymmetric-pair", i, j,
                             f"duplicate entry for pair, values {w[first_dup]} and {w[first_dup + 1]}")
        if first_bad is not None:
            k = first_bad
            return Violation("out-of-range", int(r[k]), int(c[k]),
                             f"weight {w[k]} outside (0, 1]")
    d = m.diag
    bad_d = np.flatnonzero(~np.isfinite(d) | (d < MIN_DIAG) | (d > 1.0))
    if bad_d.size:
        i = int(bad_d[0])
        return Violation("bad-diagonal", i, None,
                         f"diagonal {d[i]} outside [{MIN_DIAG}, 1]")
    return None


def require_valid(m: AffinityMatrix) -> None:
    v = validate(m)
    if v is not None:
        raise ValidationError(str(v))


def save_matrix(m: AffinityMatrix, path) -> None:
    """Plain-text format: `n <count>`, then `i j w` lines (0-based, i <= j).

    Diagonal values of 1 are implied and not written. repr() float formatting
    makes the round-trip bit-exact.
    """
    lines = [f"n {m.n}"]
    entries = [(int(i), int(i), float(w)) for i, w in enumerate(m.diag) if w != 1.0]
    entries += [(int(i), int(j), float(w))
                for i, j, w in zip(m.rows, m.cols, m.weights)]
    entries.sort()
    lines += [f"{i} {j} {w!r}" for i, j, w in entries]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_matrix(path) -> AffinityMatrix:
    """Parse the plain-text matrix format written by save_matrix."""
    rows, cols, weights = [], [], []
    diag = None
    n = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if n is None:
                if len(parts) != 2 or parts[0] != "n":
                    raise ParseError(f"{path}:{lineno}: expected 'n <count>'")
                try:
                    n = int(parts[1])
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad vertex count {parts[1]!r}") from None
                if n < 0:
                    raise ParseError(f"{path}:{lineno}: negative vertex count")
                diag = np.ones(n, dtype=np.float64)
                continue
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 'i j w'")
            try:
                i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad entry {line!r}") from None
            if i > j:
                raise ParseError(f"{path}:{lineno}: entries must satisfy i <= j")
            if not (0 <= i < n and j < n):
                raise ParseError(f"{path}:{lineno}: index out of range for n={n}")
            if i == j:
                diag[i] = w
            else:
                rows.append(i)
                cols.append(j)
                weights.append(w)
    if n is None:
        raise ParseError(f"{path}: empty matrix file")
    return AffinityMatrix(n, rows, cols, weights, diag=diag)
