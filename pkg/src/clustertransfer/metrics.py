"""Regression metrics and the evaluation report record."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError, UndefinedMetricError


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    if y.shape != yhat.shape:
        raise ShapeError(f"length mismatch: {y.size} targets vs {yhat.size} predictions")
    if y.size == 0:
        raise ValueError("metric of an empty vector")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(yhat - y)))


def r2(y, yhat) -> float:
    """Coefficient of determination; negative when worse than predicting the mean."""
    y, yhat = _pair(y, yhat)
    if y.size < 2:
        raise UndefinedMetricError("r2 needs at least 2 samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("r2 is undefined for constant targets")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class Provenance:
    dataset: str
    cluster: str
    split: str
    frozen: int
    seed: int


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    r2: float | None
    n: int
    provenance: Provenance

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["rmse"], d["mae"], d["r2"], d["n"], Provenance(**d["provenance"]))


def evaluate(y, yhat, provenance: Provenance) -> EvalReport:
    """All three metrics; r2 is ``None`` when undefined for this sample."""
    try:
        r2_value = r2(y, yhat)
    except UndefinedMetricError:
        r2_value = None
    return EvalReport(rmse(y, yhat), mae(y, yhat), r2_value, int(np.size(y)), provenance)
