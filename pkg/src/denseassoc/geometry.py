"""Observation sets and invariant-based affinity construction.

Affinity between two putative associations is scored on a quantity the
unknown transformation preserves: pairwise distance for rigid point clouds,
inter-element angle for line and plane clouds. Associations sharing a source
or target index are structurally inconsistent (one-to-one matching) and get
no edge regardless of geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import AffinityMatrix, ScoringConfig, ParseError, score_residuals

UNIT_TOL = 1e-9
# pairwise scoring is O(m^2); refuse accidental huge inputs
MAX_ASSOCIATIONS = 20000
MAX_ALL_TO_ALL = 100_000_000


@dataclass
class PointSet:
    points: np.ndarray  # (n, 3) meters

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points must be (n, 3)")
        if not np.isfinite(self.points).all():
            raise ValueError("non-finite coordinate")

    def __len__(self):
        return self.points.shape[0]


def _require_unit(v: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(v, axis=1)
    if np.abs(norms - 1.0).max(initial=0.0) > UNIT_TOL:
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise ValueError(f"non-unit {what} at index {bad} (norm {norms[bad]})")


@dataclass
class LineSet:
    points: np.ndarray      # (n, 3), a point on each line
    directions: np.ndarray  # (n, 3), unit

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=np.float64))
        if self.points.shape != self.directions.shape or self.points.shape[1] != 3:
            raise ValueError("points and directions must both be (n, 3)")
        _require_unit(self.directions, "direction")

    def __len__(self):
        return self.points.shape[0]


@dataclass
class PlaneSet:
    normals: np.ndarray    # (n, 3), unit; sign convention is the caller's contract
    distances: np.ndarray  # (n,) origin distances, meters

    def __post_init__(self):
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=np.float64))
        self.distances = np.atleast_1d(np.asarray(self.distances, dtype=np.float64))
        if self.normals.ndim != 2 or self.normals.shape[1] != 3:
            raise ValueError("normals must be (n, 3)")
        if self.distances.shape != (self.normals.shape[0],):
            raise ValueError("distances must have length n")
        _require_unit(self.normals, "normal")

    def __len__(self):
        return self.normals.shape[0]


@dataclass
class AssociationSet:
    """Putative correspondences (i, j): i indexes the source set, j the target."""

    pairs: np.ndarray                  # (m, 2) int
    inlier_mask: np.ndarray | None = None  # (m,) bool ground truth, benchmarks only

    def __post_init__(self):
        self.pairs = np.atleast_2d(np.asarray(self.pairs, dtype=np.int64))
        if self.pairs.ndim != 2 or self.pairs.shape[1] != 2:
            raise ValueError("pairs must be (m, 2)")
        if self.pairs.size and self.pairs.min() < 0:
            raise ValueError("negative association index")
        if len(np.unique(self.pairs, axis=0)) != len(self.pairs):
            raise ValueError("duplicate association pair")
        if self.inlier_mask is not None:
            self.inlier_mask = np.asarray(self.inlier_mask, dtype=bool)
            if self.inlier_mask.shape != (len(self.pairs),):
                raise ValueError("inlier_mask must have one flag per pair")

    def __len__(self):
        return self.pairs.shape[0]

    def truth_indices(self) -> np.ndarray:
        if self.inlier_mask is None:
            raise ValueError("association set carries no ground truth")
        return np.flatnonzero(self.inlier_mask)


def all_to_all(n_src: int, n_dst: int) -> AssociationSet:
    """The full n_src x n_dst correspondence hypothesis."""
    if n_src < 1 or n_dst < 1:
        raise ValueError("set sizes must be >= 1")
    if n_src * n_dst > MAX_ALL_TO_ALL:
        raise ValueError(f"all-to-all product {n_src * n_dst} too large")
    i, j = np.meshgrid(np.arange(n_src), np.arange(n_dst), indexing="ij")
    return AssociationSet(np.column_stack([i.ravel(), j.ravel()]))


def _check_assoc(assoc: AssociationSet, n_src: int, n_dst: int, allow_large: bool):
    if len(assoc) == 0:
        raise ValueError("empty association set")
    if assoc.pairs[:, 0].max() >= n_src or assoc.pairs[:, 1].max() >= n_dst:
        raise IndexError("association index out of range")
    if len(assoc) > MAX_ASSOCIATIONS and not allow_large:
        raise ValueError(
            f"{len(assoc)} associations implies O(m^2) scoring; "
            f"pass allow_large=True to override")


def _assemble(assoc: AssociationSet, residual_block, cfg: ScoringConfig,
              block: int = 512) -> AffinityMatrix:
    """Blockwise pairwise scoring with the distinctness constraint applied."""
    m = len(assoc)
    src, dst = assoc.pairs[:, 0], assoc.pairs[:, 1]
    rows, cols, weights = [], [], []
    for start in range(0, m, block):
        stop = min(start + block, m)
        w = score_residuals(residual_block(start, stop), cfg)
        shared = (src[start:stop, None] == src[None, :]) | \
                 (dst[start:stop, None] == dst[None, :])
        w[shared] = 0.0
        r, c = np.nonzero(w)
        keep = (r + start) < c  # store i < j once
        r, c = r[keep], c[keep]
        rows.append(r + start)
        cols.append(c)
        weights.append(w[r, c])
    return AffinityMatrix(
        m,
        np.concatenate(rows) if rows else np.empty(0, dtype=np.int64),
        np.concatenate(cols) if cols else np.empty(0, dtype=np.int64),
        np.concatenate(weights) if weights else np.empty(0),
    )


def affinity_points(p: PointSet, q: PointSet, assoc: AssociationSet,
                    cfg: ScoringConfig, allow_large: bool = False) -> AffinityMatrix:
    """Score association pairs on preservation of pairwise point distance."""
    _check_assoc(assoc, len(p), len(q), allow_large)
    a = p.points[assoc.pairs[:, 0]]
    b = q.points[assoc.pairs[:, 1]]

    def residual(start, stop):
        d_src = np.linalg.norm(a[start:stop, None, :] - a[None, :, :], axis=2)
        d_dst = np.linalg.norm(b[start:stop, None, :] - b[None, :, :], axis=2)
        return d_src - d_dst

    return _assemble(assoc, residual, cfg)


def _angle_block(v: np.ndarray, start: int, stop: int, fold: bool) -> np.ndarray:
    cosines = np.clip(v[start:stop] @ v.T, -1.0, 1.0)
    theta = np.arccos(cosines)
    if fold:
        theta = np.minimum(theta, np.pi - theta)
    return theta


def affinity_lines(lines: LineSet, lines2: LineSet, assoc: AssociationSet,
                   cfg: ScoringConfig, allow_large: bool = False) -> AffinityMatrix:
    """Score association pairs on preservation of inter-line angle (radians).

    Line directions are sign-ambiguous, so angles are folded to [0, pi/2]
    on both sides before differencing.
    """
    _check_assoc(assoc, len(lines), len(lines2), allow_large)
    va = lines.directions[assoc.pairs[:, 0]]
    vb = lines2.directions[assoc.pairs[:, 1]]

    def residual(start, stop):
        return _angle_block(va, start, stop, fold=True) - \
            _angle_block(vb, start, stop, fold=True)

    return _assemble(assoc, residual, cfg)


def affinity_planes(planes: PlaneSet, planes2: PlaneSet, assoc: AssociationSet,
                    cfg: ScoringConfig, allow_large: bool = False) -> AffinityMatrix:
    """Score association pairs on preservation of inter-normal angle (radians).

    Normals are taken as consistently signed (extraction pipelines orient
    them), so angles are not folded; the distance field is carried but not
    used by the invariant.
    """
    _check_assoc(assoc, len(planes), len(planes2), allow_large)
    na = planes.normals[assoc.pairs[:, 0]]
    nb = planes2.normals[assoc.pairs[:, 1]]

    def residual(start, stop):
        return _angle_block(na, start, stop, fold=False) - \
            _angle_block(nb, start, stop, fold=False)

    return _assemble(assoc, residual, cfg)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation matrix drawn uniformly over SO(3) (normalized-quaternion method)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def apply_rigid(points: np.ndarray, rot: np.ndarray, t: np.ndarray) -> np.ndarray:
    return points @ rot.T + t


# ---------------------------------------------------------------------------
# ingestion


def _read_rows(path, n_fields: int, what: str) -> np.ndarray:
    rows = []
    first = True
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if first:
                first = False
                try:
                    float(parts[0])
                except ValueError:
                    continue  # header row
            if len(parts) < n_fields:
                raise ParseError(f"{path}:{lineno}: expected {n_fields} {what} fields")
            try:
                rows.append([float(p) for p in parts[:n_fields]])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad {what} value in {line!r}") from None
    if not rows:
        raise ParseError(f"{path}: no {what} rows")
    return np.asarray(rows)


def load_points_csv(path) -> PointSet:
    """CSV with columns x,y,z."""
    return PointSet(_read_rows(path, 3, "point"))


def load_lines_csv(path) -> LineSet:
    """CSV with columns px,py,pz,vx,vy,vz."""
    rows = _read_rows(path, 6, "line")
    return LineSet(rows[:, :3], rows[:, 3:])


def load_planes_csv(path) -> PlaneSet:
    """CSV with columns nx,ny,nz,d."""
    rows = _read_rows(path, 4, "plane")
    return PlaneSet(rows[:, :3], rows[:, 3])


def load_associations_csv(path) -> AssociationSet:
    """CSV with columns i,j and an optional 0/1 inlier column."""
    pairs, flags = [], []
    first = True
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if first:
                first = False
                if not parts[0].lstrip("-").isdigit():
                    continue  # header row
            if len(parts) < 2:
                raise ParseError(f"{path}:{lineno}: expected 'i,j[,inlier]'")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
                if len(parts) >= 3:
                    flags.append(bool(int(parts[2])))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad association {line!r}") from None
    if not pairs:
        raise ParseError(f"{path}: no association rows")
    if flags and len(flags) != len(pairs):
        raise ParseError(f"{path}: inlier column present on only some rows")
    return AssociationSet(np.asarray(pairs), np.asarray(flags) if flags else None)


def load_points_ply(path) -> PointSet:
    """Minimal ASCII PLY reader: vertex element with float x, y, z properties."""
    with open(path, "r", encoding="utf-8") as f:
        if f.readline().strip() != "ply":
            raise ParseError(f"{path}: not a PLY file")
        fmt = f.readline().strip()
        if not fmt.startswith("format ascii"):
            raise ParseError(f"{path}: only ASCII PLY is supported ({fmt!r})")
        n_vertex = None
        props: list[str] = []
        in_vertex = False
        for raw in f:
            line = raw.strip()
            if line.startswith("comment"):
                continue
            if line.startswith("element"):
                parts = line.split()
                in_vertex = parts[1] == "vertex"
                if in_vertex:
                    n_vertex = int(parts[2])
            elif line.startswith("property") and in_vertex:
                props.append(line.split()[-1])
            elif line == "end_header":
                break
        if n_vertex is None:
            raise ParseError(f"{path}: no vertex element")
        try:
            ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
        except ValueError:
            raise ParseError(f"{path}: vertex element lacks x/y/z properties") from None
        pts = np.empty((n_vertex, 3))
        for k in range(n_vertex):
            parts = f.readline().split()
            if len(parts) < len(props):
                raise ParseError(f"{path}: truncated vertex data at row {k}")
            pts[k] = float(parts[ix]), float(parts[iy]), float(parts[iz])
    return PointSet(pts)


def load_points(path) -> PointSet:
    """Dispatch on extension: .ply -> PLY, otherwise CSV."""
    if str(path).lower().endswith(".ply"):
        return load_points_ply(path)
    return load_points_csv(path)


def save_points_ply(points: PointSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(points)}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        f.write("end_header\n")
        for x, y, z in points.points:
            f.write(f"{x!r} {y!r} {z!r}\n")
