"""Time-delay (Hankel) embedding and its averaging inverse."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .errors import DelayError, ShapeError


@dataclass(frozen=True, eq=False)
class HankelMatrix:
    """Delay-embedded block matrix.

    Column ``j`` stacks original columns ``j, j+1, ..., j+delay-1`` top to
    bottom, so ``data`` has shape ``(delay * base_dim, base_columns - delay + 1)``.
    """

    data: np.ndarray
    delay: int
    base_dim: int
    base_columns: int

    @property
    def n_columns(self) -> int:
        return self.base_columns - self.delay + 1

    def block(self, i) -> np.ndarray:
        t = self.base_dim
        return self.data[i * t:(i + 1) * t]

    def check(self):
        h, t, N = self.delay, self.base_dim, self.base_columns
        m = N - h + 1
        if h < 1 or t < 1 or m < 1 or self.data.shape != (h * t, m):
            raise ShapeError(
                f"Hankel data shape {self.data.shape} inconsistent with "
                f"delay={h}, base_dim={t}, base_columns={N}"
            )


def hankelize(matrix, h: int) -> HankelMatrix:
    """Embed a ``t x N`` matrix with ``h`` stacked delays."""
    matrix = np.asarray(matrix)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    t, N = matrix.shape
    if not 1 <= h <= N - 1:
        raise DelayError(f"delay h={h} outside [1, {N - 1}] for {N} columns")
    m = N - h + 1
    # windows[d, j, i] = matrix[d, j + i]
    windows = sliding_window_view(matrix, h, axis=1)
    data = np.ascontiguousarray(windows.transpose(2, 0, 1).reshape(h * t, m))
    return HankelMatrix(data, h, t, N)


def hankel_counts(h, m):
    """Number of Hankel cells that map onto each original time index."""
    n_time = m + h - 1
    tau = np.arange(n_time)
    return np.minimum.reduce([np.full(n_time, h), tau + 1, n_time - tau, np.full(n_time, m)])


def dehankelize(H: HankelMatrix, mode: str = "average") -> np.ndarray:
    """Map a (possibly non-Hankel) block matrix back to ``t x N``.

    ``mode="average"`` takes the mean over every cell that corresponds to the
    same detector and time; ``mode="first_block"`` reads the first block row
    and completes the tail from the last column.
    """
    H.check()
    data = np.asarray(H.data)
    t, h = H.base_dim, H.delay
    if mode == "first_block":
        head = data[:t]
        tail = data[t:, -1].reshape(h - 1, t).T
        return np.concatenate([head, tail], axis=1)
    if mode != "average":
        raise ValueError(f"unknown dehankel mode {mode!r}")
    if np.iscomplexobj(data):
        re = kernels.antidiagonal_mean(np.ascontiguousarray(data.real), t, h)
        im = kernels.antidiagonal_mean(np.ascontiguousarray(data.imag), t, h)
        return re + 1j * im
    return kernels.antidiagonal_mean(np.ascontiguousarray(data, dtype=np.float64), t, h)
