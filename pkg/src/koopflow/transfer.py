"""Shared eigenvalues across source cities and their injection into a target.

A target's companion vector ``c`` defines the recurrence polynomial
``p_c(z) = z**n - sum_j c_j z**j``.  Injecting ``lam_hat`` means finding the
``c_bar`` closest to ``c`` (in the sense of the target's own spectral fit,
``||xi - Lam z||``) for which every ``lam_hat`` is an exact root.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dmd import (
    CompanionMatrix,
    SpectralDecomposition,
    _cplx_array,
    _cplx_list,
    dumps,
    eigen_cycle_times,
    fit_spectrum,
    svd_reduced,
)
from .errors import ConditioningError, InputError, ParseError

RIDGE_TRIGGER = 1e12
COND_LIMIT = 1e14


@dataclass(frozen=True, eq=False)
class SharedEigenSet:
    """Benchmark eigenvalues that every other source reproduces within ``epsilon``."""

    eigenvalues: np.ndarray
    epsilon: float
    benchmark_index: int = 0
    source_meta: tuple = ()
    source_spectra: tuple = field(default=(), repr=False)

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def check(self) -> bool:
        """Re-verify the sharing condition against the stored source spectra."""
        if not self.source_spectra:
            return True
        again = shared_eigenvalues(self.source_spectra, self.epsilon, self.benchmark_index, warn=False)
        return np.array_equal(again.eigenvalues, self.eigenvalues)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": _cplx_list(self.eigenvalues),
            "epsilon": float(self.epsilon),
            "benchmark_index": int(self.benchmark_index),
            "sources": list(self.source_meta),
            "source_spectra": [_cplx_list(s) for s in self.source_spectra],
        }

    @classmethod
    def from_dict(cls, d) -> "SharedEigenSet":
        return cls(
            _cplx_array(d["eigenvalues"]),
            float(d["epsilon"]),
            int(d.get("benchmark_index", 0)),
            tuple(d.get("sources", ())),
            tuple(_cplx_array(s) for s in d.get("source_spectra", ())),
        )

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_json(cls, text) -> "SharedEigenSet":
        return cls.from_dict(json.loads(text))


def shared_eigenvalues(spectra, epsilon, k=0, source_meta=(), warn=True) -> SharedEigenSet:
    """Benchmark eigenvalues ``lam`` of city ``k`` with
    ``max_{i != k} min_j |lam - lam_{i,j}| < epsilon``.

    Accepted values keep benchmark order and are not deduplicated.  With a
    single city the condition is vacuous and the whole spectrum is returned.
    """
    spectra = [np.asarray(s, dtype=complex).ravel() for s in spectra]
    if not spectra:
        raise InputError("no spectra given")
    if not epsilon > 0:
        raise InputError(f"epsilon must be positive, got {epsilon}")
    if not 0 <= k < len(spectra):
        raise InputError(f"benchmark index {k} outside [0, {len(spectra) - 1}]")
    bench = spectra[k]
    keep = np.ones(len(bench), dtype=bool)
    for i, other in enumerate(spectra):
        if i == k:
            continue
        if other.size == 0:
            keep[:] = False
            break
        dist = np.abs(bench[:, None] - other[None, :]).min(axis=1)
        keep &= dist < epsilon
    lam = bench[keep]
    if warn and lam.size > 1:
        gaps = np.abs(lam[:, None] - lam[None, :])
        iu = np.triu_indices(lam.size, 1)
        close = gaps[iu] < epsilon
        if close.any():
            pairs = [(int(a), int(b)) for a, b in zip(iu[0][close], iu[1][close])]
            warnings.warn(f"near-duplicate shared eigenvalues at index pairs {pairs}", UserWarning, stacklevel=2)
    return SharedEigenSet(lam, float(epsilon), int(k), tuple(source_meta), tuple(spectra))


def conjugate_closure(lam, tol=1e-10) -> np.ndarray:
    """Snap nearly-real values to the real axis, add missing conjugates and
    merge values closer than ``tol`` (relative)."""
    lam = np.asarray(lam, dtype=complex).ravel()
    out = []
    for z in lam:
        scale = max(1.0, abs(z))
        if abs(z.imag) <= tol * scale:
            z = complex(z.real, 0.0)
        for cand in (z, np.conj(z)):
            if not any(abs(cand - w) <= tol * scale for w in out):
                out.append(complex(cand))
    return np.array(out, dtype=complex)


def vandermonde(lam, n) -> np.ndarray:
    """Rows ``[1, lam_i, ..., lam_i**(n-1)]``."""
    return np.vander(np.asarray(lam, dtype=complex), n, increasing=True)


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    Lam: np.ndarray
    xi: np.ndarray
    Lam_hat: np.ndarray
    xi_hat: np.ndarray

    @classmethod
    def build(cls, target_eigs, lam_hat) -> "ConstraintSystem":
        target_eigs = np.asarray(target_eigs, dtype=complex)
        lam_hat = np.asarray(lam_hat, dtype=complex)
        n = len(target_eigs)
        return cls(vandermonde(target_eigs, n), target_eigs**n, vandermonde(lam_hat, n), lam_hat**n)

    @property
    def n(self) -> int:
        return self.Lam.shape[1]

    def violation(self, c) -> np.ndarray:
        """``|Lam_hat c - xi_hat| / (1 + |xi_hat|)`` per injected value."""
        return np.abs(self.Lam_hat @ c - self.xi_hat) / (1 + np.abs(self.xi_hat))


def _gram_inverse_apply(G, B):
    n = G.shape[0]
    cond = np.linalg.cond(G)
    if cond > RIDGE_TRIGGER:
        G = G + (1e-12 * np.trace(G).real / n) * np.eye(n)
        cond = np.linalg.cond(G)
        if not cond <= COND_LIMIT:
            raise ConditioningError(f"Vandermonde Gram matrix condition {cond:.3e} exceeds {COND_LIMIT:.0e} after ridge")
    return scipy.linalg.solve(G, B, assume_a="her")


def constrained_companion(c, target_eigs, lam_hat, method="nullspace", tol=1e-6):
    """Companion vector ``c_bar`` that has every ``lam_hat`` as a root and
    otherwise stays as close as possible to the target's own fit.

    Solves ``min ||xi - Lam z||`` subject to ``Lam_hat z = xi_hat``.

    Parameters
    ----------
    c : array_like, shape (n,)
        Unconstrained companion vector of the target.
    target_eigs : array_like, shape (n,)
        Roots of the target companion polynomial.
    lam_hat : array_like, shape (q,)
        Eigenvalues to inject; conjugates are added and duplicates merged.
    method : {"nullspace", "closed_form"}
        ``"nullspace"`` parametrizes the feasible set with an orthonormal
        null-space basis of ``Lam_hat`` and never forms the Gram matrix.
        ``"closed_form"`` evaluates the Gram-matrix formula
        ``c + G^-1 Lam_hat* (Lam_hat G^-1 Lam_hat*)^-1 (xi_hat - Lam_hat c)``
        with ``G = Lam* Lam``, adding a small ridge when ``G`` is
        ill-conditioned.

    Returns
    -------
    ndarray
        Real when the input is real and the imaginary residue is negligible.
    """
    c = np.asarray(c)
    target_eigs = np.asarray(target_eigs, dtype=complex).ravel()
    n = c.shape[0]
    if target_eigs.shape[0] != n:
        raise InputError(f"{target_eigs.shape[0]} target eigenvalues for companion dimension {n}")
    lam_hat = conjugate_closure(lam_hat)
    if lam_hat.size == 0:
        raise InputError("no eigenvalues to inject")
    if lam_hat.size > n:
        raise InputError(f"{lam_hat.size} constraints exceed companion dimension {n}")
    sys_ = ConstraintSystem.build(target_eigs, lam_hat)
    cz = c.astype(complex)
    r_hat = sys_.xi_hat - sys_.Lam_hat @ cz

    if method == "nullspace":
        dp = np.linalg.lstsq(sys_.Lam_hat, r_hat, rcond=None)[0]
        N = scipy.linalg.null_space(sys_.Lam_hat)
        c_bar = cz + dp
        if N.shape[1]:
            y = np.linalg.lstsq(sys_.Lam @ N, sys_.xi - sys_.Lam @ c_bar, rcond=None)[0]
            c_bar = c_bar + N @ y
    elif method == "closed_form":
        G = sys_.Lam.conj().T @ sys_.Lam
        GiLh = _gram_inverse_apply(G, sys_.Lam_hat.conj().T)
        S = sys_.Lam_hat @ GiLh
        c_bar = cz + GiLh @ np.linalg.solve(S, r_hat)
    else:
        raise ValueError(f"unknown method {method!r}")

    worst = float(sys_.violation(c_bar).max())
    if not worst < tol:
        raise ConditioningError(f"injected eigenvalues violate the constraint by {worst:.3e}")
    if not np.iscomplexobj(c) and np.max(np.abs(c_bar.imag)) <= 1e-8 * max(1.0, np.max(np.abs(c_bar))):
        return c_bar.real
    return c_bar


def trhdmd(target_pair, shared, rank_policy="full", *, dt=300.0, method="nullspace", origin=None):
    """Decompose the target with the shared eigenvalues injected into its
    companion vector.

    Returns the enhanced :class:`SpectralDecomposition`; its ``origin``
    records how many values were injected and how far the nearest output
    eigenvalue is from each.
    """
    lam_hat = shared.eigenvalues if isinstance(shared, SharedEigenSet) else np.asarray(shared, dtype=complex)
    lam_hat = np.asarray(lam_hat, dtype=complex)
    if lam_hat.size == 0:
        raise InputError("shared eigenvalue set is empty")
    svd = svd_reduced(np.asarray(target_pair.past))
    c = svd.pinv_apply(np.asarray(target_pair.future)[:, -1])
    roots = CompanionMatrix(c).roots()
    c_bar = constrained_companion(c, roots, lam_hat, method=method)
    meta = {"method": "trhdmd", "injected": int(conjugate_closure(lam_hat).size)}
    meta.update(origin or {})
    d, _, _ = fit_spectrum(target_pair, rank_policy, c=c_bar, svd=svd, dt=dt, origin=meta)
    gaps = [float(np.min(np.abs(d.eigenvalues - z))) if d.size else float("inf") for z in lam_hat]
    d.origin["injection_error"] = max(gaps)
    return d


def shared_periods(shared, dt) -> np.ndarray:
    """Distinct finite cycle times (hours, ascending) of a shared set."""
    lam = shared.eigenvalues if isinstance(shared, SharedEigenSet) else shared
    sigma = eigen_cycle_times(lam, dt)
    sigma = np.sort(sigma[np.isfinite(sigma)])
    out = []
    for s in sigma:
        if not out or abs(s - out[-1]) > 1e-9 * max(s, 1.0):
            out.append(float(s))
    return np.array(out)


def write_periods_csv(periods, path):
    with open(path, "w", newline="") as fh:
        fh.write("period_hours\n")
        for p in periods:
            fh.write(f"{float(p)!r}\n")


def read_periods_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [s.strip() for s in rows[0]] != ["period_hours"]:
        raise ParseError("expected header 'period_hours'", 1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not row[0].strip():
            continue
        try:
            out.append(float(row[0]))
        except ValueError:
            raise ParseError(f"bad period {row[0]!r}", lineno) from None
    return np.array(out)
