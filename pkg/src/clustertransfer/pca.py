"""Two-component PCA by power iteration with deflation."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError
from .io_utils import atomic_write_text, fmt

MAX_ITER = 1000
TOL = 1e-10
START_SEED = 0


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (2, n_features), orthonormal rows
    explained_variance: np.ndarray  # (2,), descending


def _sign_fix(v: np.ndarray) -> np.ndarray:
    return -v if v[int(np.argmax(np.abs(v)))] < 0 else v


def _dominant_eigvec(C: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Top eigenvector of the symmetric PSD matrix ``C``.

    Each step applies the current matrix to the vector and then squares the
    matrix, so step ``j`` effectively multiplies by ``C**(2**j)``. This keeps
    close eigenvalue pairs from stalling convergence.
    """
    M = C / np.linalg.norm(C)
    v = start / np.linalg.norm(start)
    for _ in range(MAX_ITER):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # start vector fell in the null space; nudge it off
            w = M @ (v + 1e-3 * np.ones_like(v))
            norm = np.linalg.norm(w)
            if norm == 0.0:
                raise NumericError("power iteration collapsed to zero")
        w = w / norm
        if np.dot(w, v) < 0:
            w = -w
        if np.linalg.norm(w - v) < TOL:
            return w
        v = w
        M = M @ M
        m_norm = np.linalg.norm(M)
        if m_norm == 0.0 or not np.isfinite(m_norm):
            return v
        M = M / m_norm
    raise NumericError(f"power iteration did not converge in {MAX_ITER} steps")


def fit_pca(X) -> PcaModel:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {X.shape}")
    n, d = X.shape
    if n < 3:
        raise ValueError(f"PCA needs at least 3 rows, got {n}")
    if d < 2:
        raise ValueError(f"PCA to 2 components needs at least 2 features, got {d}")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix contains non-finite values")

    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / (n - 1)
    rng = np.random.default_rng(START_SEED)
    scale = np.trace(C)

    components = []
    variances = []
    residual = C.copy()
    for _ in range(2):
        start = rng.standard_normal(d)
        for prev in components:
            start -= np.dot(start, prev) * prev
        if np.linalg.norm(residual) <= 1e-14 * max(scale, 1e-300):
            # no variance left: any unit vector orthogonal to the previous ones
            v = start
        else:
            v = _dominant_eigvec(residual, start)
        for prev in components:
            v = v - np.dot(v, prev) * prev
        v = _sign_fix(v / np.linalg.norm(v))
        lam = max(float(v @ C @ v), 0.0)
        components.append(v)
        variances.append(lam)
        residual = residual - lam * np.outer(v, v)

    order = np.argsort(variances, kind="stable")[::-1]
    return PcaModel(mean, np.array(components)[order], np.array(variances)[order])


def project(model: PcaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.mean.shape[0]:
        raise ShapeError(f"model expects {model.mean.shape[0]} features, got {X.shape[1]}")
    return (X - model.mean) @ model.components.T


def export_scatter(coords, labels, path) -> None:
    """Write ``pc1,pc2,cluster`` rows."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    labels = np.asarray(labels).reshape(-1)
    if coords.shape[0] != labels.shape[0]:
        raise ShapeError(f"{coords.shape[0]} coordinates but {labels.shape[0]} labels")
    lines = ["pc1,pc2,cluster"]
    lines += [f"{fmt(a)},{fmt(b)},{int(c)}" for (a, b), c in zip(coords, labels)]
    try:
        atomic_write_text(path, "\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write scatter file {path}: {exc}") from exc


def read_scatter(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    coords = np.array([[float(r["pc1"]), float(r["pc2"])] for r in rows]).reshape(-1, 2)
    labels = np.array([int(r["cluster"]) for r in rows], dtype=int)
    return coords, labels
