"""Benchmark harnesses: random binary graphs across sparsity, and noisy
point-cloud association instances with controlled outlier ratios.

All generators are deterministic in (seed, trial). Sweeps aggregate per-trial
metrics into CSV-ready rows; solver failures are logged per trial, excluded
from means, and counted.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .affinity import AffinityMatrix, ScoringConfig
from .geometry import (AssociationSet, PointSet, affinity_points, apply_rigid,
                       random_rotation)
from .oracle import exact_max_clique
from .solver import SolverFailure, SolverParams, solve


@dataclass(frozen=True)
class SparsitySpec:
    """Binary graphs: complete on n vertices minus a sparsity fraction of edges."""

    n: int
    sparsity: float
    trials: int = 50
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.sparsity <= 1.0):
            raise ValueError("sparsity must be in [0, 1]")
        if self.n < 1 or self.trials < 1:
            raise ValueError("n and trials must be >= 1")


@dataclass(frozen=True)
class BunnySpec:
    """Noisy two-view point association instances.

    A surface model is scaled to a 1 m cube, n_model_points are sampled and
    rigidly moved into a second view with elementwise uniform noise; clutter
    points fill a ball around the moved cloud. Putative associations are a
    mix of true correspondences and uniformly drawn wrong pairs.
    """

    n_model_points: int = 1000
    noise_halfwidth: float = 0.01
    n_clutter: int = 200
    clutter_radius: float = 1.0
    outlier_ratio: float = 0.0
    n_assoc: int = 1000
    epsilon: float = 0.08
    sigma: float = 0.03
    kind: str = "weighted"
    trials: int = 50
    seed: int = 0
    # partial view: only this many of the model points appear in view 2
    # (None = all of them); caps the available true correspondences
    n_visible: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.outlier_ratio < 1.0):
            raise ValueError("outlier_ratio must be in [0, 1)")
        if self.n_assoc < 1:
            raise ValueError("n_assoc must be >= 1")
        if self.n_visible is not None and not (1 <= self.n_visible <= self.n_model_points):
            raise ValueError("n_visible must be in [1, n_model_points]")

    def scoring(self) -> ScoringConfig:
        return ScoringConfig(self.epsilon, self.sigma, self.kind)


@dataclass
class Metrics:
    precision: float | None  # None when nothing was returned, never 0 by fiat
    recall: float
    runtime_ms: float = 0.0
    clique_size_error: int | None = None


@dataclass
class SweepRow:
    key: float                    # sparsity level or outlier ratio
    trials: int
    failures: int
    mean_ms: float
    values: dict = field(default_factory=dict)
    per_trial: list = field(default_factory=list)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def _solver_seed(base: int, trial: int) -> int:
    return int(np.random.SeedSequence([base, trial]).generate_state(1)[0])


def gen_sparsity_graph(spec: SparsitySpec, trial: int = 0) -> AffinityMatrix:
    """Complete graph with round(sparsity * n(n-1)/2) random edges removed."""
    rng = _trial_rng(spec.seed, trial)
    n = spec.n
    total = n * (n - 1) // 2
    n_remove = int(round(spec.sparsity * total))
    rows, cols = np.triu_indices(n, 1)
    if n_remove:
        removed = rng.choice(total, size=n_remove, replace=False)
        keep = np.ones(total, dtype=bool)
        keep[removed] = False
        rows, cols = rows[keep], cols[keep]
    return AffinityMatrix(n, rows, cols, np.ones(rows.size))


def synthetic_surface(n_points: int = 5000) -> PointSet:
    """Deterministic closed surface standing in for a scanned model.

    A superquadric blob (fills the corners of its bounding cube) with
    incommensurate radial modulation. Chosen so that sampled instances have
    generic geometry: pairwise distances spread over the whole cube rather
    than clustering, which keeps accidental consistencies between wrong
    associations at scan-like rates.
    """
    i = np.arange(n_points)
    z = 1.0 - 2.0 * (i + 0.5) / n_points
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    r_xy = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    dirs = np.column_stack([r_xy * np.cos(phi), r_xy * np.sin(phi), z])
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    base = (np.abs(dirs) ** 6.0).sum(axis=1) ** (-1.0 / 6.0)
    mod = (1.0 + 0.30 * np.sin(3.2 * theta + 0.8) * np.cos(2.4 * phi + 0.3)
           + 0.20 * np.cos(5.6 * phi + 1.7) * np.sin(1.9 * theta)
           + 0.12 * np.sin(4.3 * phi + 0.4) * np.sin(3.4 * theta + 1.2))
    return PointSet(base[:, None] * dirs * mod[:, None])


def _uniform_ball(rng, k: int, radius: float) -> np.ndarray:
    v = rng.normal(size=(k, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * (radius * rng.uniform(0.0, 1.0, size=(k, 1)) ** (1.0 / 3.0))


def gen_bunny_instance(spec: BunnySpec, model: PointSet,
                       trial: int = 0) -> tuple[PointSet, PointSet, AssociationSet]:
    """One two-view instance with labeled ground truth.

    View 1 holds the sampled model points; view 2 holds their rigidly moved,
    noise-perturbed counterparts followed by clutter. True correspondences
    are (i, i); outlier associations are drawn without replacement from the
    remaining all-to-all pairs.
    """
    rng = _trial_rng(spec.seed, trial)
    pts = model.points
    if len(pts) < spec.n_model_points:
        raise ValueError(f"model has {len(pts)} points, need {spec.n_model_points}")
    lo = pts.min(axis=0)
    extent = (pts.max(axis=0) - lo).max()
    scaled = (pts - lo) / extent  # longest side becomes 1 m

    src = scaled[rng.choice(len(scaled), size=spec.n_model_points, replace=False)]
    n_visible = spec.n_visible if spec.n_visible is not None else spec.n_model_points
    if n_visible < spec.n_model_points:
        visible_idx = np.sort(rng.choice(spec.n_model_points, size=n_visible, replace=False))
    else:
        visible_idx = np.arange(spec.n_model_points)
    rot = random_rotation(rng)
    t = rng.uniform(-1.0, 1.0, size=3)
    moved = apply_rigid(src[visible_idx], rot, t)
    moved += rng.uniform(-spec.noise_halfwidth, spec.noise_halfwidth, size=moved.shape)
    clutter = moved.mean(axis=0) + _uniform_ball(rng, spec.n_clutter, spec.clutter_radius)
    dst = np.vstack([moved, clutter])

    n_inlier = int(round(spec.n_assoc * (1.0 - spec.outlier_ratio)))
    if n_inlier > n_visible:
        raise ValueError(
            f"need {n_inlier} inlier associations but only "
            f"{n_visible} true correspondences exist")
    if n_inlier < 1:
        raise ValueError("outlier_ratio leaves no inlier association")

    # true correspondence k: model point visible_idx[k] -> view-2 row k
    chosen = rng.choice(n_visible, size=n_inlier, replace=False)
    pairs = [(int(visible_idx[k]), int(k)) for k in chosen]
    truth = {(int(visible_idx[k]), int(k)) for k in range(n_visible)}
    used = set(pairs)
    n_dst = len(dst)
    while len(pairs) < spec.n_assoc:
        batch = max(64, 2 * (spec.n_assoc - len(pairs)))
        cand_i = rng.integers(0, spec.n_model_points, size=batch)
        cand_j = rng.integers(0, n_dst, size=batch)
        for i, j in zip(cand_i, cand_j):
            pair = (int(i), int(j))
            if pair in truth or pair in used:
                continue  # true correspondences are never outlier labels
            used.add(pair)
            pairs.append(pair)
            if len(pairs) == spec.n_assoc:
                break
    mask = np.zeros(spec.n_assoc, dtype=bool)
    mask[:n_inlier] = True
    order = rng.permutation(spec.n_assoc)
    pairs_arr = np.asarray(pairs, dtype=np.int64)[order]
    assoc = AssociationSet(pairs_arr, mask[order])
    return PointSet(src), PointSet(dst), assoc


def precision_recall(selected, truth) -> Metrics:
    """Precision = correct/returned (None when nothing returned); recall = correct/truth."""
    sel = set(int(i) for i in selected)
    tru = set(int(i) for i in truth)
    if not tru:
        raise ValueError("ground truth is empty")
    hits = len(sel & tru)
    precision = hits / len(sel) if sel else None
    recall = hits / len(tru)
    return Metrics(precision=precision, recall=recall)


# ---------------------------------------------------------------------------
# sweeps


def _sparsity_trial(args):
    spec, trial, params = args
    graph = gen_sparsity_graph(spec, trial)
    truth = exact_max_clique(graph)
    try:
        sol = solve(graph, replace(params, seed=_solver_seed(params.seed, trial)))
    except SolverFailure as exc:
        return Metrics(precision=None, recall=0.0), str(exc), None
    err = len(sol.selected) - int(truth.best_value)
    met = Metrics(precision=None, recall=0.0, runtime_ms=sol.stats.wall_ms,
                  clique_size_error=err)
    return met, None, sol.stats.inner_iters


def _bunny_trial(args):
    spec, trial, params, model = args
    src, dst, assoc = gen_bunny_instance(spec, model, trial)
    graph = affinity_points(src, dst, assoc, spec.scoring(), allow_large=True)
    try:
        sol = solve(graph, replace(params, seed=_solver_seed(params.seed, trial)))
    except SolverFailure as exc:
        return Metrics(precision=None, recall=0.0), str(exc), None
    met = precision_recall(sol.selected, assoc.truth_indices())
    met.runtime_ms = sol.stats.wall_ms
    return met, None, sol.stats.inner_iters


def _run_trials(worker, arglist, jobs: int):
    if jobs <= 1:
        return [worker(a) for a in arglist]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, arglist))  # order fixed by trial index


def run_sparsity_sweep(specs, params: SolverParams | None = None,
                       jobs: int = 1, log=None) -> list[SweepRow]:
    """Per sparsity level: mean signed clique-size error vs the exact oracle."""
    params = params or SolverParams()
    out = []
    for spec in specs:
        results = _run_trials(_sparsity_trial,
                              [(spec, t, params) for t in range(spec.trials)], jobs)
        errs = [m.clique_size_error for m, fail, _ in results if fail is None]
        times = [m.runtime_ms for m, fail, _ in results if fail is None]
        failures = sum(1 for _, fail, _ in results if fail is not None)
        if log is not None:
            for t, (_, fail, _) in enumerate(results):
                if fail is not None:
                    log(f"sparsity={spec.sparsity} trial={t}: {fail}")
        out.append(SweepRow(
            key=spec.sparsity, trials=spec.trials, failures=failures,
            mean_ms=float(np.mean(times)) if times else float("nan"),
            values={
                "mean_err": float(np.mean(errs)) if errs else float("nan"),
                "std_err": float(np.std(errs)) if errs else float("nan"),
            },
            per_trial=[m for m, fail, _ in results if fail is None],
        ))
    return out


def run_bunny_sweep(specs, params: SolverParams | None = None, model: PointSet | None = None,
                    jobs: int = 1, log=None) -> list[SweepRow]:
    """Per outlier ratio: mean precision/recall over trials."""
    params = params or SolverParams()
    model = model or synthetic_surface()
    out = []
    for spec in specs:
        results = _run_trials(_bunny_trial,
                              [(spec, t, params, model) for t in range(spec.trials)], jobs)
        ok = [m for m, fail, _ in results if fail is None]
        failures = sum(1 for _, fail, _ in results if fail is not None)
        if log is not None:
            for t, (_, fail, _) in enumerate(results):
                if fail is not None:
                    log(f"outlier_ratio={spec.outlier_ratio} trial={t}: {fail}")
        precisions = [m.precision for m in ok if m.precision is not None]
        out.append(SweepRow(
            key=spec.outlier_ratio, trials=spec.trials, failures=failures,
            mean_ms=float(np.mean([m.runtime_ms for m in ok])) if ok else float("nan"),
            values={
                "mean_p": float(np.mean(precisions)) if precisions else float("nan"),
                "mean_r": float(np.mean([m.recall for m in ok])) if ok else float("nan"),
            },
            per_trial=ok,
        ))
    return out


# ---------------------------------------------------------------------------
# output


def _format_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_sparsity_csv(rows, path, header: dict | None = None) -> None:
    _write_csv(path, header, "sparsity,mean_err,std_err,mean_ms",
               [(r.key, r.values["mean_err"], r.values["std_err"], r.mean_ms)
                for r in rows])


def write_bunny_csv(rows, path, header: dict | None = None) -> None:
    _write_csv(path, header, "outlier_ratio,mean_p,mean_r,mean_ms,failures",
               [(r.key, r.values["mean_p"], r.values["mean_r"], r.mean_ms, r.failures)
                for r in rows])


def _write_csv(path, header, columns: str, data_rows) -> None:
    lines = [f"# {k}={v}" for k, v in (header or {}).items()]
    lines.append(columns)
    for row in data_rows:
        lines.append(",".join(_format_value(v) for v in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)


def plot_sparsity(rows, path) -> None:
    """Clique-size error and runtime against sparsity (two panels)."""
    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 7), sharex=True)
    xs = [r.key for r in rows]
    ax1.errorbar(xs, [r.values["mean_err"] for r in rows],
                 yerr=[r.values["std_err"] for r in rows], marker="o")
    ax1.axhline(0.0, color="gray", lw=0.8)
    ax1.set_ylabel("clique size error")
    ax2.plot(xs, [r.mean_ms for r in rows], marker="o")
    ax2.set_xlabel("sparsity")
    ax2.set_ylabel("runtime [ms]")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_bunny(rows, path) -> None:
    """Precision, recall, and runtime against outlier ratio (three panels)."""
    plt = _pyplot()
    fig, (ax1, ax2, ax3) = plt.subplots(3, 1, figsize=(6, 9), sharex=True)
    xs = [r.key for r in rows]
    ax1.plot(xs, [r.values["mean_p"] for r in rows], marker="o")
    ax1.set_ylabel("precision")
    ax1.set_ylim(0, 1.05)
    ax2.plot(xs, [r.values["mean_r"] for r in rows], marker="o")
    ax2.set_ylabel("recall")
    ax2.set_ylim(0, 1.05)
    ax3.plot(xs, [r.mean_ms for r in rows], marker="o")
    ax3.set_xlabel("outlier ratio")
    ax3.set_ylabel("runtime [ms]")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt
