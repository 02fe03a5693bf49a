"""Companion-matrix dynamic mode decomposition.

The decomposition of a snapshot pair ``(X, Y)`` (``Y`` is ``X`` shifted one
column) proceeds as:

1. thin SVD ``X = U S V*``;
2. companion vector ``c = X^+ x_last`` (least-squares prediction of the last
   snapshot from all earlier ones) and companion matrix ``C``;
3. reduced operator ``K~ = (S_r V_r*) C (V_r S_r^{-1})`` on the leading ``r``
   right-singular directions;
4. eigenpairs ``K~ W = W diag(lam)``;
5. modes ``B = Y V_r S_r^{-1} W diag(lam)^{-1}`` and amplitudes
   ``phi = (B diag(lam))^+ x_1``.

Snapshot ``k`` is then approximated by ``B diag(phi) lam**k``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptySpectrumError, NumericError, RankError, ShapeError

PINV_RTOL = 1e-12
ZERO_EIG_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SvdTriple:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.S)

    def numerical_rank(self, rtol=PINV_RTOL) -> int:
        if len(self.S) == 0 or self.S[0] == 0:
            return 0
        return int(np.count_nonzero(self.S > rtol * self.S[0]))

    def truncate(self, r) -> "SvdTriple":
        return SvdTriple(self.U[:, :r], self.S[:r], self.V[:, :r])

    def pinv_apply(self, b, rtol=PINV_RTOL):
        """Minimum-norm least-squares solution of ``M z = b``."""
        r = self.numerical_rank(rtol)
        U, S, V = self.U[:, :r], self.S[:r], self.V[:, :r]
        return V @ ((U.conj().T @ b) / (S if np.ndim(b) == 1 else S[:, None]))


def svd_reduced(M) -> SvdTriple:
    """Thin SVD with a deterministic phase convention.

    Each right singular vector is rotated so its first non-negligible entry is
    real and non-negative; the left vector gets the same rotation, leaving the
    product unchanged.
    """
    M = np.asarray(M)
    if M.size == 0:
        raise ShapeError("cannot take the SVD of an empty matrix")
    if not np.all(np.isfinite(M)):
        raise NumericError("matrix contains non-finite entries")
    try:
        U, S, Vh = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed: {exc}") from exc
    V = Vh.conj().T
    mags = np.abs(V)
    lead = np.argmax(mags > 1e-8 * mags.max(axis=0, keepdims=True), axis=0)
    pivot = V[lead, np.arange(V.shape[1])]
    phase = np.where(np.abs(pivot) > 0, pivot / np.where(pivot == 0, 1, np.abs(pivot)), 1)
    rot = np.conj(phase)
    if not np.iscomplexobj(M):
        rot = rot.real
    return SvdTriple(U * rot, S, V * rot)


def svht_omega(beta):
    """Polynomial approximation of the optimal hard-threshold coefficient
    for an unknown noise level, as a function of the aspect ratio."""
    return 0.56 * beta**3 - 0.95 * beta**2 + 1.82 * beta + 1.43


def svht_rank(S, rows, cols) -> int:
    """Number of singular values above ``omega(beta) * median(S)``, at least 1."""
    S = np.asarray(S, dtype=np.float64)
    if S.size == 0:
        raise ShapeError("no singular values given")
    if rows * cols <= 0:
        raise ShapeError("matrix dimensions must be positive")
    beta = min(rows, cols) / max(rows, cols)
    tau = svht_omega(beta) * np.median(S)
    return max(int(np.count_nonzero(S > tau)), 1)


def choose_rank(policy, svd: SvdTriple, shape) -> int:
    """Rank implied by ``policy``: ``"svht"``, ``"full"`` or an integer."""
    r_max = svd.numerical_rank()
    if policy == "full":
        r = r_max
    elif policy == "svht":
        r = svht_rank(svd.S[:r_max] if r_max else svd.S, *shape)
    else:
        r = int(policy)
        if r < 1:
            raise ValueError(f"fixed rank must be >= 1, got {policy!r}")
    return min(r, r_max)


@dataclass(frozen=True, eq=False)
class CompanionMatrix:
    """Companion matrix with ones on the sub-diagonal and ``c`` as last column.

    Its characteristic polynomial is
    ``p(z) = z**n - c[n-1] z**(n-1) - ... - c[1] z - c[0]``.
    """

    c: np.ndarray

    @property
    def n(self) -> int:
        return len(self.c)

    def matrix(self) -> np.ndarray:
        n = self.n
        C = np.zeros((n, n), dtype=np.result_type(self.c, np.float64))
        C[np.arange(1, n), np.arange(n - 1)] = 1
        C[:, -1] = self.c
        return C

    def apply(self, A) -> np.ndarray:
        """``C @ A`` without materializing ``C``."""
        out = np.empty((self.n, A.shape[1]), dtype=np.result_type(self.c, A))
        out[0] = 0
        out[1:] = A[:-1]
        out += np.outer(self.c, A[-1])
        return out

    def charpoly(self, z):
        """Evaluate the characteristic polynomial by Horner's rule."""
        z = np.asarray(z, dtype=complex)
        acc = np.ones_like(z)
        for coef in self.c[::-1]:
            acc = acc * z - coef
        return acc

    def roots(self) -> np.ndarray:
        if self.n == 0:
            return np.empty(0, dtype=complex)
        try:
            return np.linalg.eigvals(self.matrix()).astype(complex)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"companion eigenvalues failed: {exc}") from exc


def companion_vector(X, x_last, rtol=PINV_RTOL, svd: SvdTriple | None = None):
    """Minimum-norm ``c`` minimizing ``||x_last - X c||``."""
    X = np.asarray(X)
    x_last = np.asarray(x_last)
    if x_last.shape != (X.shape[0],):
        raise ShapeError(f"x_last has shape {x_last.shape}, expected ({X.shape[0]},)")
    svd = svd or svd_reduced(X)
    return svd.pinv_apply(x_last, rtol)


def vandermonde_powers(lam, ks):
    """``lam[j] ** ks[i]`` arranged as ``(len(lam), len(ks))``; flags overflow."""
    lam = np.asarray(lam, dtype=complex)
    ks = np.asarray(ks)
    with np.errstate(over="ignore", invalid="ignore"):
        P = lam[:, None] ** ks[None, :]
    bad = ~np.isfinite(P)
    return P, bad


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues, modes and amplitudes of a finite Koopman surrogate."""

    eigenvalues: np.ndarray
    modes: np.ndarray
    amplitudes: np.ndarray
    rank: int
    delay: int = 1
    base_dim: int | None = None
    dt: float = 300.0
    residual: float = float("nan")
    snapshots: int = 0  # embedded columns in the fitted data
    origin: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def cycle_times(self) -> np.ndarray:
        return eigen_cycle_times(self.eigenvalues, self.dt)

    def subset(self, index) -> "SpectralDecomposition":
        index = np.asarray(index, dtype=int)
        return replace(
            self,
            eigenvalues=self.eigenvalues[index],
            modes=self.modes[:, index],
            amplitudes=self.amplitudes[index],
        )

    def to_dict(self, max_modes=None) -> dict:
        """JSON-ready dict; ``max_modes`` limits how many mode columns
        (strongest first) are written, the spectrum itself is always complete."""
        k = self.size if max_modes is None or max_modes < 0 else min(self.size, int(max_modes))
        return {
            "eigenvalues": _cplx_list(self.eigenvalues),
            "modes": _cplx_list(self.modes[:, :k].T),
            "modes_stored": int(k),
            "amplitudes": _cplx_list(self.amplitudes),
            "rank": int(self.rank),
            "delay": int(self.delay),
            "base_dim": None if self.base_dim is None else int(self.base_dim),
            "dt_seconds": float(self.dt),
            "residual": float(self.residual),
            "snapshots": int(self.snapshots),
            "origin": self.origin,
        }

    @classmethod
    def from_dict(cls, d) -> "SpectralDecomposition":
        """Inverse of :meth:`to_dict`.  Mode columns that were not stored
        are NaN; such a decomposition cannot be used for reconstruction."""
        lam = _cplx_array(d["eigenvalues"])
        base_dim = d.get("base_dim")
        rows = int(base_dim or 0) * int(d.get("delay", 1))
        stored = _cplx_array(d["modes"]) if len(d["modes"]) else np.zeros((0, rows), dtype=complex)
        if stored.size:
            rows = stored.shape[1]
        modes = np.full((rows, lam.size), np.nan + 0j)
        modes[:, : stored.shape[0]] = stored.T
        return cls(
            lam,
            modes,
            _cplx_array(d["amplitudes"]),
            int(d["rank"]),
            int(d.get("delay", 1)),
            base_dim,
            float(d.get("dt_seconds", 300.0)),
            float(d.get("residual", float("nan"))),
            int(d.get("snapshots", 0)),
            dict(d.get("origin", {})),
        )

    @property
    def modes_complete(self) -> bool:
        return not np.isnan(self.modes).any()

    def to_json(self, max_modes=None) -> str:
        return dumps(self.to_dict(max_modes))

    @classmethod
    def from_json(cls, text) -> "SpectralDecomposition":
        return cls.from_dict(json.loads(text))


def _cplx_list(a):
    """``[[re, im], ...]`` as a float array (serialized compactly by :func:`dumps`)."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1)


def _cplx_array(items):
    a = np.asarray(items, dtype=np.float64)
    if a.size == 0:
        return np.empty(a.shape[:-2] + (0,) if a.ndim > 1 else 0, dtype=complex)
    # assign parts separately so signed zeros survive
    out = np.empty(a.shape[:-1], dtype=complex)
    out.real = a[..., 0]
    out.imag = a[..., 1]
    return out


def _plain(x):
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else repr(v)
    if isinstance(x, (np.integer, np.bool_)):
        return x.item()
    if isinstance(x, (complex, np.complexfloating)):
        return [_plain(x.real), _plain(x.imag)]
    return x


def _is_flat_numeric(x):
    return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)


def _encode(x, depth):
    pad = "  " * (depth + 1)
    end = "  " * depth
    if isinstance(x, np.ndarray) and x.dtype.kind in "biuf":
        if x.dtype.kind == "f" and not np.all(np.isfinite(x)):
            return json.dumps(_nested(x.tolist()))
        return json.dumps(x.tolist())
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = sorted((str(k), v) for k, v in x.items())
        body = ",\n".join(f"{pad}{json.dumps(k)}: {_encode(v, depth + 1)}" for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(x, (list, tuple)):
        x = [_plain(v) for v in x]
        if _is_flat_numeric(x) or all(isinstance(v, list) and _is_flat_numeric(v) for v in x):
            return json.dumps(_nested(x))
        if not x:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, depth + 1) for v in x) + "\n" + end + "]"
    return json.dumps(_plain(x))


def _nested(x):
    if isinstance(x, list):
        return [_nested(v) for v in x]
    return _plain(x)


def dumps(obj) -> str:
    """Canonical JSON used for every artifact.

    Keys are sorted; numeric arrays are written on one line; non-finite
    floats become the strings ``"inf"``, ``"-inf"`` or ``"nan"``.
    """
    return _encode(obj, 0) + "\n"


def _order(lam, phi):
    mag = np.abs(phi)
    scale = mag.max() if mag.size and mag.max() > 0 else 1.0
    # coarse rounding keeps conjugate partners adjacent despite roundoff
    key_mag = np.round(mag / scale, 10)
    return np.lexsort((-np.round(lam.imag, 12), -np.round(lam.real, 12), -key_mag))


def _mat(Q, Z):
    """``Q @ Z`` for real ``Q`` and complex ``Z`` without upcasting ``Q``."""
    if np.iscomplexobj(Q):
        return Q @ Z
    # strided real/imag views would miss the BLAS path
    return (Q @ np.ascontiguousarray(Z.real)) + 1j * (Q @ np.ascontiguousarray(Z.imag))


def _normalize_modes(B):
    """Unit-norm columns rotated so the largest entry is real positive.

    Returns the modes and the per-column unit rotation applied."""
    norms = np.linalg.norm(B, axis=0)
    norms[norms == 0] = 1
    B = B / norms
    lead = np.argmax(np.abs(B) > (1 - 1e-9) * np.abs(B).max(axis=0, keepdims=True), axis=0)
    pivot = B[lead, np.arange(B.shape[1])]
    phase = np.where(np.abs(pivot) > 0, pivot / np.where(pivot == 0, 1, np.abs(pivot)), 1)
    rot = np.conj(phase) / norms
    return B * np.conj(phase), rot


def fit_spectrum(pair, rank_policy="svht", *, c=None, svd=None, dt=300.0, origin=None):
    """Run the decomposition on a snapshot pair, optionally with a given
    companion vector ``c`` (used by the transfer step).

    Returns ``(decomposition, c, svd)``.
    """
    X = np.asarray(pair.past)
    Y = np.asarray(pair.future)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] < 1 or X.shape[0] < 1:
        raise ShapeError(f"invalid snapshot pair shapes {X.shape} / {Y.shape}")
    svd = svd or svd_reduced(X)
    if svd.S[0] < 1e-14 * max(X.shape):
        raise RankError("snapshot matrix is numerically zero")
    r = choose_rank(rank_policy, svd, X.shape)
    if c is None:
        c = svd.pinv_apply(Y[:, -1])
    comp = CompanionMatrix(np.asarray(c))
    Vr, Sr = svd.V[:, :r], svd.S[:r]

    K = (Sr[:, None] * (Vr.conj().T @ comp.apply(Vr))) / Sr[None, :]
    if not np.all(np.isfinite(K)):
        raise NumericError("reduced operator contains non-finite entries")
    try:
        lam, W = np.linalg.eig(K)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    lam = lam.astype(complex)
    keep = np.abs(lam) >= ZERO_EIG_TOL
    lam, W = lam[keep], W[:, keep]

    # Y V_r S_r^-1 = Q R with orthonormal Q: the amplitude least-squares
    # problem reduces to the small factor, B = Q Z
    Q, R = np.linalg.qr(Y @ (Vr / Sr[None, :]))
    Z = (R @ W) / lam[None, :]
    Z = Z / np.where((nz := np.linalg.norm(Z, axis=0)) == 0, 1, nz)
    B, rot = _normalize_modes(_mat(Q, Z))
    Z = Z * rot
    if lam.size:
        qy = Q.conj().T @ Y[:, 0]
        phi = SvdTriple(*_svd_plain(Z * lam[None, :])).pinv_apply(qy.astype(complex))
    else:
        phi = np.empty(0, dtype=complex)

    idx = _order(lam, phi)
    lam, B, phi = lam[idx], B[:, idx], phi[idx]

    ks = np.arange(1, X.shape[1] + 1)
    P, bad = vandermonde_powers(lam, ks)
    if bad.any():
        residual = float("inf")
    else:
        R = (B * phi[None, :]) @ P
        ny = np.linalg.norm(Y)
        residual = float(np.linalg.norm(Y - R) / ny) if ny > 0 else float(np.linalg.norm(R))

    meta = {"rank_policy": str(rank_policy), "retained_rank": int(r)}
    meta.update(origin or {})
    d = SpectralDecomposition(
        lam,
        B,
        phi,
        int(lam.size),
        int(getattr(pair, "delay", 1)),
        getattr(pair, "base_dim", None) or X.shape[0],
        float(dt),
        residual,
        X.shape[1] + 1,
        meta,
    )
    return d, comp.c, svd


def _svd_plain(M):
    U, S, Vh = np.linalg.svd(M, full_matrices=False)
    return U, S, Vh.conj().T


def dmd(pair, rank_policy="svht", *, dt=300.0, origin=None) -> SpectralDecomposition:
    """Companion-matrix DMD of an (embedded) snapshot pair.

    ``rank_policy`` selects how many leading right-singular directions of the
    past matrix the reduced operator keeps: ``"svht"`` (optimal hard
    threshold), ``"full"`` (numerical rank) or a fixed integer.
    """
    return fit_spectrum(pair, rank_policy, dt=dt, origin=origin)[0]


def eigen_cycle_times(lam, dt) -> np.ndarray:
    """Oscillation period in hours, ``2 pi dt / |angle(lam)|``.

    Non-oscillatory eigenvalues (zero angle) map to ``inf``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    theta = np.abs(np.angle(np.asarray(lam, dtype=complex)))
    with np.errstate(divide="ignore"):
        sigma = np.where(theta > 0, 2 * np.pi * dt / np.where(theta > 0, theta, 1), np.inf)
    return sigma / 3600.0


def conjugate_partner(lam, j, tol=1e-8):
    """Index of the conjugate of ``lam[j]`` (``j`` itself for real values)."""
    z = lam[j]
    if abs(z.imag) <= tol * max(1.0, abs(z)):
        return j
    dist = np.abs(lam - np.conj(z))
    dist[j] = np.inf
    k = int(np.argmin(dist))
    return k if dist[k] <= tol * max(1.0, abs(z)) * 1e4 else None


def amplitude_filter(d: SpectralDecomposition, threshold: float) -> SpectralDecomposition:
    """Keep triples with ``|phi| >= threshold`` plus their conjugate partners."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    passed = np.abs(d.amplitudes) >= threshold
    keep = passed.copy()
    for j in np.flatnonzero(passed):
        k = conjugate_partner(d.eigenvalues, j)
        if k is not None:
            keep[k] = True
    if not keep.any():
        raise EmptySpectrumError(f"no mode has amplitude >= {threshold}")
    out = d.subset(np.flatnonzero(keep))
    return replace(out, origin={**d.origin, "amplitude_threshold": float(threshold)})


def conjugate_symmetry_error(lam) -> float:
    """Largest distance from a conjugated eigenvalue to the spectrum."""
    lam = np.asarray(lam, dtype=complex)
    if lam.size == 0:
        return 0.0
    return float(np.max(np.min(np.abs(np.conj(lam)[:, None] - lam[None, :]), axis=1)))


def warn_if_growing(d: SpectralDecomposition, tol=1e-6):
    growing = np.abs(d.eigenvalues) > 1 + tol
    if growing.any():
        warnings.warn(
            f"{int(growing.sum())} modes grow (|lambda| > 1); long forecasts may overflow",
            RuntimeWarning,
            stacklevel=2,
        )
    return growing
