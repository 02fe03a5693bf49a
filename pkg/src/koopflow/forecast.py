"""Extrapolation from a spectral decomposition and a Fourier regression baseline."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dmd import SpectralDecomposition, vandermonde_powers
from .embedding import HankelMatrix, dehankelize
from .errors import InputError, ModeOverflowError, ModeOverflowWarning, ShapeError

GROWTH_TOL = 1e-6
# reconstructions are clamped to this magnitude on overflow
CLAMP = 1e300


@dataclass(frozen=True, eq=False)
class ForecastResult:
    """Predicted readings, ``t x horizon``, already de-centered."""

    predictions: np.ndarray
    horizon: int
    start_index: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.predictions.shape[1] != self.horizon:
            raise ShapeError(f"{self.predictions.shape[1]} columns for horizon {self.horizon}")
        if not np.all(np.isfinite(self.predictions)):
            raise ShapeError("forecast contains non-finite values")


def reconstruct(d: SpectralDecomposition, ks, meta=None) -> np.ndarray:
    """Embedded-space columns ``B diag(phi) lam**k`` for each ``k`` in ``ks``.

    Powers that overflow are clamped and a :class:`ModeOverflowWarning` is
    issued; pass a dict as ``meta`` to have ``meta["overflow"]`` set.
    """
    ks = np.atleast_1d(np.asarray(ks))
    if ks.size == 0:
        raise InputError("empty k range")
    _require_modes(d)
    P, bad = vandermonde_powers(d.eigenvalues, ks)
    if bad.any():
        warnings.warn(
            f"{int(bad.any(axis=1).sum())} modes overflow at k <= {int(ks.max())}; clamped",
            ModeOverflowWarning,
            stacklevel=2,
        )
        P = np.where(bad, CLAMP, P)
        if meta is not None:
            meta["overflow"] = True
    with np.errstate(over="ignore", invalid="ignore"):
        R = (d.modes * d.amplitudes[None, :]) @ P
    return np.nan_to_num(R, nan=0.0, posinf=CLAMP, neginf=-CLAMP)


def _require_modes(d):
    if np.isnan(d.modes).any():
        raise InputError("decomposition was stored without all of its modes")


def drop_growing(d: SpectralDecomposition, tol=GROWTH_TOL) -> SpectralDecomposition:
    """Remove modes with ``|lam| > 1 + tol``."""
    return d.subset(np.flatnonzero(np.abs(d.eigenvalues) <= 1 + tol))


def forecast(
    d: SpectralDecomposition,
    horizon,
    row_means,
    clamp_nonnegative=True,
    dehankel="average",
    drop_growing_modes=False,
) -> ForecastResult:
    """Continue the fitted dynamics ``horizon`` steps past the training window.

    Embedded columns ``k = m .. m + horizon + h - 2`` are reconstructed,
    de-Hankelized, and the slice that starts right after the last training
    sample is returned with the row means added back.

    Parameters
    ----------
    d : SpectralDecomposition
        Fitted on an embedding with ``d.snapshots`` columns (``m``).
    horizon : int
        Number of future steps; 0 gives an empty result.
    row_means : array_like
        Per-detector means removed before fitting.
    clamp_nonnegative : bool
        Replace negative predictions with 0.
    dehankel : {"average", "first_block"}
    drop_growing_modes : bool
        Remove modes with ``|lam| > 1 + 1e-6`` instead of raising on overflow.
    """
    horizon = int(horizon)
    if horizon < 0:
        raise InputError("horizon must be non-negative")
    t = d.base_dim
    h = d.delay
    m = d.snapshots
    row_means = np.asarray(row_means, dtype=np.float64).ravel()
    if row_means.shape != (t,):
        raise ShapeError(f"row_means has length {row_means.size}, expected {t}")
    n_train = m + h - 1
    meta = {
        "method": d.origin.get("method", "hdmd"),
        "clamp_nonnegative": bool(clamp_nonnegative),
        "dehankel": dehankel,
        "origin": dict(d.origin),
    }
    if horizon == 0:
        return ForecastResult(np.zeros((t, 0)), 0, n_train, meta)
    _require_modes(d)
    if drop_growing_modes:
        n0 = d.size
        d = drop_growing(d)
        meta["dropped_growing"] = n0 - d.size

    if dehankel == "first_block":
        # column k carries times k .. k+h-1 in its blocks; first block row only
        ks = np.arange(n_train, n_train + horizon)
        P, bad = vandermonde_powers(d.eigenvalues, ks)
        if bad.any():
            raise ModeOverflowError(f"modes overflow within {horizon} steps")
        E = ((d.modes[:t] * d.amplitudes[None, :]) @ P)
        imag = float(np.max(np.abs(E.imag))) if E.size else 0.0
        block = E.real
    elif dehankel == "average":
        ks = np.arange(m, m + horizon + h - 1)
        P, bad = vandermonde_powers(d.eigenvalues, ks)
        if bad.any():
            raise ModeOverflowError(f"modes overflow within {horizon} steps")
        with np.errstate(over="raise", invalid="raise"):
            try:
                E = (d.modes * d.amplitudes[None, :]) @ P
            except FloatingPointError as exc:
                raise ModeOverflowError(str(exc)) from exc
        imag = float(np.max(np.abs(E.imag)))
        H = HankelMatrix(np.ascontiguousarray(E.real), h, t, len(ks) + h - 1)
        # times m .. m + horizon + 2h - 3; the forecast starts at m + h - 1
        block = dehankelize(H)[:, h - 1:h - 1 + horizon]
    else:
        raise ValueError(f"unknown dehankel mode {dehankel!r}")
    if not np.all(np.isfinite(block)):
        raise ModeOverflowError("forecast is not finite")
    meta["max_imag_residue"] = imag
    pred = block + row_means[:, None]
    if clamp_nonnegative:
        meta["clamped_cells"] = int(np.count_nonzero(pred < 0))
        pred = np.maximum(pred, 0.0)
    return ForecastResult(pred, horizon, n_train, meta)


def fourier_design(tau_hours, periods, k_harmonics):
    """Columns ``1, sin(2 pi k tau / p), cos(2 pi k tau / p)`` for each period
    and harmonic."""
    tau = np.asarray(tau_hours, dtype=np.float64)
    cols = [np.ones_like(tau)]
    for p in periods:
        for k in range(1, k_harmonics + 1):
            w = 2 * np.pi * k / p
            cols.append(np.sin(w * tau))
            cols.append(np.cos(w * tau))
    return np.column_stack(cols)


def merge_frequencies(periods, k_harmonics, span_hours, tol_cycles=0.05):
    """Distinct harmonic frequencies (cycles per hour) in first-seen order.

    Two frequencies are the same term when they drift apart by less than
    ``tol_cycles`` over the training span; the basis would be collinear.
    """
    freqs = []
    merged = 0
    for p in periods:
        for k in range(1, k_harmonics + 1):
            f = k / p
            if any(abs(f - g) * span_hours < tol_cycles for g in freqs):
                merged += 1
                continue
            freqs.append(f)
    return np.array(freqs), merged


def fourier_regression_forecast(series, periods, k_harmonics=3, horizon=288, dt=300.0):
    """Least-squares fit of Fourier terms to the training series, evaluated
    over the following ``horizon`` steps.

    ``series`` is a :class:`~koopflow.data.CenteredSeries` (or a plain
    ``t x N`` array of centered data, in which case the means are taken as
    zero).  Each row is fitted separately on the same basis; time is measured
    in hours from the first training sample.  ``meta["in_sample_mse"]``
    records the training fit.
    """
    periods = np.asarray(periods, dtype=np.float64).ravel()
    if periods.size == 0:
        raise InputError("no periods given")
    if np.any(periods <= 0) or not np.all(np.isfinite(periods)):
        raise InputError("periods must be positive and finite")
    if k_harmonics < 1:
        raise InputError("k_harmonics must be >= 1")
    horizon = int(horizon)
    if horizon < 0:
        raise InputError("horizon must be non-negative")
    data = np.asarray(getattr(series, "data", series), dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    means = np.asarray(getattr(series, "row_means", np.zeros(data.shape[0])), dtype=np.float64)
    n = data.shape[1]
    if n < 1:
        raise ShapeError("empty training series")
    step = dt / 3600.0
    tau = np.arange(n) * step
    freqs, merged = merge_frequencies(periods, k_harmonics, n * step)
    if merged:
        warnings.warn(f"{merged} duplicate Fourier terms merged; design would be rank-deficient", UserWarning, stacklevel=2)
    A = fourier_design(tau, 1.0 / freqs, 1)
    coef, _, rank, _ = np.linalg.lstsq(A, data.T, rcond=None)
    if rank < A.shape[1]:
        warnings.warn(f"Fourier design rank {rank} < {A.shape[1]} columns; minimum-norm solution used", UserWarning, stacklevel=2)
    fitted = (A @ coef).T
    mse_in = float(np.mean((fitted - data) ** 2))
    tau_f = (n + np.arange(horizon)) * step
    pred = (fourier_design(tau_f, 1.0 / freqs, 1) @ coef).T + means[:, None]
    meta = {
        "method": "fourier_lr",
        "periods_hours": [float(p) for p in periods],
        "k_harmonics": int(k_harmonics),
        "n_terms": int(A.shape[1]),
        "in_sample_mse": mse_in,
        "coefficients": coef.T,
    }
    return ForecastResult(pred.reshape(data.shape[0], horizon), horizon, n, meta)
