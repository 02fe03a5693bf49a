"""Forecast evaluation: relative error, MAE, row cosine similarity, DTW."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dmd import dumps
from .errors import DegenerateTruthError, ShapeError


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return pred, truth


def relative_error(pred, truth) -> float:
    """``||pred - truth||_F / ||truth||_F``."""
    pred, truth = _pair(pred, truth)
    denom = np.linalg.norm(truth)
    if denom == 0:
        raise DegenerateTruthError("truth has zero norm")
    return float(np.linalg.norm(pred - truth) / denom)


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise ShapeError("empty input")
    return float(np.mean(np.abs(pred - truth)))


def mse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise ShapeError("empty input")
    return float(np.mean((pred - truth) ** 2))


def cosine_similarity_rows(pred, truth) -> float:
    """Mean over rows of the cosine between predicted and true rows.

    Rows where either side has zero norm contribute 0 and trigger a warning.
    """
    pred, truth = _pair(pred, truth)
    if pred.ndim == 1:
        pred, truth = pred[None, :], truth[None, :]
    if pred.shape[0] == 0:
        raise ShapeError("no rows")
    num = np.einsum("ij,ij->i", pred, truth)
    den = np.linalg.norm(pred, axis=1) * np.linalg.norm(truth, axis=1)
    zero = den == 0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero-norm rows count as similarity 0", RuntimeWarning, stacklevel=2)
    cos = np.where(zero, 0.0, num / np.where(zero, 1.0, den))
    return float(np.clip(cos.mean(), -1.0, 1.0))


def column_distances(A, B) -> np.ndarray:
    """Euclidean distances between every column of ``A`` and of ``B``."""
    sq = (A * A).sum(axis=0)[:, None] + (B * B).sum(axis=0)[None, :] - 2.0 * (A.T @ B)
    D = np.sqrt(np.maximum(sq, 0.0))
    # the expansion loses precision for near-equal columns; redo those exactly
    close = sq <= 1e-8 * (sq.max() if sq.size else 0.0) + 1e-300
    if close.any():
        ii, jj = np.nonzero(close)
        D[ii, jj] = np.linalg.norm(A[:, ii] - B[:, jj], axis=0)
    return D


def dtw_multivariate(pred, truth) -> float:
    """Dependent multivariate DTW cost between the column sequences of two
    matrices with equal row counts (no warping window)."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    pred = pred[None, :] if pred.ndim == 1 else pred
    truth = truth[None, :] if truth.ndim == 1 else truth
    if pred.shape[0] != truth.shape[0]:
        raise ShapeError(f"row counts differ: {pred.shape[0]} vs {truth.shape[0]}")
    if pred.shape[1] == 0 or truth.shape[1] == 0:
        raise ShapeError("DTW needs non-empty sequences")
    D = np.ascontiguousarray(column_distances(pred, truth))
    return float(kernels.dtw_accumulate(D)[-1, -1])


@dataclass(frozen=True)
class MetricsReport:
    re: float
    mae: float
    cs: float
    dtw: float
    shape: tuple
    meta: dict = field(default_factory=dict)

    FIELDS = ("re", "mae", "cs", "dtw")

    def to_dict(self) -> dict:
        return {
            "re": self.re,
            "mae": self.mae,
            "cs": self.cs,
            "dtw": self.dtw,
            "shape": list(self.shape),
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def csv_header(self) -> str:
        return "method,city,re,mae,dtw,cs"

    def csv_row(self) -> str:
        vals = [repr(float(getattr(self, f))) for f in ("re", "mae", "dtw", "cs")]
        return ",".join([str(self.meta.get("method", "")), str(self.meta.get("city", ""))] + vals)


def evaluate(pred, truth, meta=None, with_dtw=True) -> MetricsReport:
    pred, truth = _pair(pred, truth)
    return MetricsReport(
        relative_error(pred, truth),
        mae(pred, truth),
        cosine_similarity_rows(pred, truth),
        dtw_multivariate(pred, truth) if with_dtw else float("nan"),
        tuple(int(s) for s in pred.shape),
        dict(meta or {}),
    )
