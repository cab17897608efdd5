"""Lloyd's K-means with k-means++ seeding, and elbow selection of k."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .io_utils import atomic_write_text

DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-6
DEFAULT_RESTARTS = 10


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    k: int
    seed: int
    iterations_run: int
    converged: bool
    labels: np.ndarray
    inertia: float

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


@dataclass(frozen=True)
class WcssCurve:
    ks: tuple[int, ...]
    values: tuple[float, ...]

    def __getitem__(self, k: int) -> float:
        return self.values[self.ks.index(k)]

    def to_csv(self, path) -> None:
        lines = ["k,wcss"] + [f"{k},{w!r}" for k, w in zip(self.ks, self.values)]
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path) -> "WcssCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(tuple(int(r["k"]) for r in rows), tuple(float(r["wcss"]) for r in rows))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    return X


def _sq_distances(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # Explicit differences rather than the |x|^2 - 2x.c + |c|^2 expansion:
    # exact zeros matter for tie-breaking and for the k = n case.
    diff = X[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _assign(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = _sq_distances(X, centroids)
    labels = np.argmin(d2, axis=1)  # first minimum wins ties
    return labels, d2[np.arange(X.shape[0]), labels]


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_distances(X, X[chosen]).min(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point already coincides with a centroid
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(remaining))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_distances(X, X[idx:idx + 1])[:, 0])
    return X[chosen].copy()


def lloyd(
    X: np.ndarray,
    centroids: np.ndarray,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    trace: list | None = None,
) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Run Lloyd iterations from ``centroids``.

    Returns ``(centroids, labels, iterations_run, converged)``. When ``trace``
    is a list, the WCSS after each assignment step is appended to it.
    """
    centroids = np.array(centroids, dtype=np.float64)
    k = centroids.shape[0]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        labels, d2 = _assign(X, centroids)
        if trace is not None:
            trace.append(float(d2.sum()))
        new = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = X[members].mean(axis=0)
        empty = [j for j in range(k) if not np.any(labels == j)]
        if empty:
            # Re-seed each empty cluster at the point farthest from its own centroid.
            d2 = d2.copy()
            for j in empty:
                far = int(np.argmax(d2))
                new[j] = X[far]
                d2[far] = -1.0
        shift = float(np.max(np.sqrt(np.sum((new - centroids) ** 2, axis=1))))
        centroids = new
        if shift < tol and not empty:
            converged = True
            break
    labels, _ = _assign(X, centroids)
    return centroids, labels, it, converged


def _restart_seeds(seed: int, restarts: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(restarts)


def kmeans(
    X,
    k: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    restarts: int = DEFAULT_RESTARTS,
    init: np.ndarray | None = None,
) -> ClusterModel:
    """Best-of-``restarts`` K-means; ties on WCSS go to the lowest restart index.

    ``init`` adds one extra deterministic start from the given centroids.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of rows ({n})")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")

    starts = [_kmeans_pp(X, k, np.random.default_rng(ss)) for ss in _restart_seeds(seed, restarts)]
    if init is not None:
        init = np.asarray(init, dtype=np.float64)
        if init.shape != (k, X.shape[1]):
            raise ShapeError(f"init centroids have shape {init.shape}, expected {(k, X.shape[1])}")
        starts.append(init)

    best: ClusterModel | None = None
    for start in starts:
        centroids, labels, iters, converged = lloyd(X, start, max_iter, tol)
        inertia = float(_assign(X, centroids)[1].sum())
        if best is None or inertia < best.inertia:
            best = ClusterModel(centroids, k, seed, iters, converged, labels, inertia)
    return best


def wcss(X, model: ClusterModel) -> float:
    X = _as_matrix(X)
    if X.shape[1] != model.centroids.shape[1]:
        raise ShapeError(
            f"model has {model.centroids.shape[1]} features, data has {X.shape[1]}"
        )
    return float(_assign(X, model.centroids)[1].sum())


def assign(model: ClusterModel, X) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != model.centroids.shape[1]:
        raise ShapeError(
            f"model has {model.centroids.shape[1]} features, data has {X.shape[1]}"
        )
    return _assign(X, model.centroids)[0]


def wcss_curve(X, k_max: int, seed: int = 0, restarts: int = DEFAULT_RESTARTS,
               max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL
               ) -> tuple[WcssCurve, dict[int, ClusterModel]]:
    """Best-of-restarts WCSS for k = 1..k_max.

    Each k also gets a warm start from the best (k-1) solution plus the point
    farthest from it, which keeps the curve non-increasing in k.
    """
    X = _as_matrix(X)
    if k_max > X.shape[0]:
        raise ValueError(f"k_max={k_max} exceeds the number of rows ({X.shape[0]})")
    models: dict[int, ClusterModel] = {}
    prev: ClusterModel | None = None
    for k in range(1, k_max + 1):
        warm = None
        if prev is not None:
            _, d2 = _assign(X, prev.centroids)
            warm = np.vstack([prev.centroids, X[int(np.argmax(d2))]])
        model = kmeans(X, k, seed=seed, restarts=restarts,
                       max_iter=max_iter, tol=tol, init=warm)
        if prev is not None and model.inertia > prev.inertia:
            # Rounding in the mean update can nudge Lloyd upward; the unrefined
            # warm start is never worse than prev.
            labels, d2 = _assign(X, warm)
            model = ClusterModel(warm, k, seed, 0, False, labels, float(d2.sum()))
        models[k] = model
        prev = model
    curve = WcssCurve(tuple(models), tuple(m.inertia for m in models.values()))
    return curve, models


def elbow_k(curve: WcssCurve) -> int:
    """k in [2, k_max-1] with the largest discrete second difference."""
    w = dict(zip(curve.ks, curve.values))
    best_k, best_val = None, -np.inf
    for k in range(2, max(curve.ks)):
        val = w[k - 1] - 2.0 * w[k] + w[k + 1]
        if val > best_val:
            best_k, best_val = k, val
    return best_k


def elbow_select(X, k_max: int = 10, seed: int = 0,
                 restarts: int = DEFAULT_RESTARTS) -> tuple[int, WcssCurve]:
    if k_max < 3:
        raise ValueError(f"k_max must be at least 3, got {k_max}")
    curve, _ = wcss_curve(X, k_max, seed=seed, restarts=restarts)
    return elbow_k(curve), curve
