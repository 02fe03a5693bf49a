"""Pure-Python versions of the compiled kernels."""
import numpy as np


def dtw_accumulate(dist):
    """Cumulative DTW cost matrix for a pairwise distance matrix.

    ``W[i, j] = dist[i, j] + min(W[i-1, j], W[i, j-1], W[i-1, j-1])`` with the
    first row and column accumulated along the border.
    """
    dist = np.asarray(dist, dtype=np.float64)
    n, k = dist.shape
    out = np.empty((n, k))
    if n == 0 or k == 0:
        return out
    d = dist.tolist()
    prev = [0.0] * k
    acc = 0.0
    for j in range(k):
        acc += d[0][j]
        prev[j] = acc
    out[0] = prev
    for i in range(1, n):
        row = d[i]
        cur = [0.0] * k
        cur[0] = row[0] + prev[0]
        for j in range(1, k):
            cur[j] = row[j] + min(prev[j], cur[j - 1], prev[j - 1])
        out[i] = cur
        prev = cur
    return out


def antidiagonal_mean(data, t, h):
    """Average Hankel cells that map to the same (detector, time) entry.

    Deviations from the first cell of each anti-diagonal are averaged, so a
    consistent Hankel matrix is inverted exactly.
    """
    data = np.asarray(data, dtype=np.float64)
    m = data.shape[1]
    n_time = m + h - 1
    # first cell: block 0 for tau < m, else the last column of block tau-m+1
    ref = np.concatenate([data[:t], data[t:, -1].reshape(h - 1, t).T], axis=1)
    out = np.zeros((t, n_time))
    for i in range(h):
        out[:, i:i + m] += data[i * t:(i + 1) * t] - ref[:, i:i + m]
    tau = np.arange(n_time)
    counts = np.minimum.reduce([np.full(n_time, h), tau + 1, n_time - tau, np.full(n_time, m)])
    return ref + out / counts
