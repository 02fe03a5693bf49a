import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopflow.dmd import svd_reduced
from koopflow.embedding import HankelMatrix, dehankelize, hankel_counts, hankelize
from koopflow.errors import DelayError, ShapeError


def brute_dehankel(data, t, h):
    """Average every cell mapping to (d, j) with explicit loops."""
    m = data.shape[1]
    n = m + h - 1
    sums = np.zeros((t, n))
    counts = np.zeros((t, n))
    for i in range(h):
        for d in range(t):
            for j in range(m):
                sums[d, i + j] += data[i * t + d, j]
                counts[d, i + j] += 1
    return sums / counts


def test_scalar_series_h2():
    H = hankelize(np.array([1, 2, 3, 4, 5]), 2)
    np.testing.assert_array_equal(H.data, [[1, 2, 3, 4], [2, 3, 4, 5]])
    assert (H.delay, H.base_dim, H.base_columns) == (2, 1, 5)


def test_two_detectors_h2():
    H = hankelize(np.array([[1, 2, 3], [4, 5, 6]]), 2)
    np.testing.assert_array_equal(H.data, [[1, 2], [4, 5], [2, 3], [5, 6]])


def test_h1_identity():
    M = np.arange(12.0).reshape(3, 4)
    H = hankelize(M, 1)
    np.testing.assert_array_equal(H.data, M)
    np.testing.assert_array_equal(dehankelize(H), M)


def test_delay_range():
    with pytest.raises(DelayError):
        hankelize(np.zeros((2, 5)), 5)
    with pytest.raises(DelayError):
        hankelize(np.zeros((2, 5)), 0)


def test_block_structure(rng):
    M = rng.normal(size=(3, 20))
    H = hankelize(M, 6)
    for i in range(6):
        for j in range(H.n_columns - i):
            np.testing.assert_array_equal(H.block(i)[:, j], H.block(0)[:, j + i])


def test_non_hankel_average():
    H = HankelMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]), 2, 1, 3)
    np.testing.assert_allclose(dehankelize(H), [[1.0, 2.5, 4.0]])
    np.testing.assert_allclose(dehankelize(H), brute_dehankel(H.data, 1, 2))


def test_inconsistent_metadata():
    with pytest.raises(ShapeError):
        dehankelize(HankelMatrix(np.zeros((4, 3)), 2, 1, 4))


@pytest.mark.parametrize("shape,h", [((1, 30), 7), ((4, 25), 25 - 1), ((3, 12), 1), ((2, 40), 13)])
def test_average_matches_brute_force(rng, shape, h):
    t, n = shape
    m = n - h + 1
    data = rng.normal(size=(h * t, m))
    H = HankelMatrix(data, h, t, n)
    np.testing.assert_allclose(dehankelize(H), brute_dehankel(data, t, h), rtol=0, atol=1e-12)


def test_complex_dehankel(rng):
    data = rng.normal(size=(6, 5)) + 1j * rng.normal(size=(6, 5))
    H = HankelMatrix(data, 3, 2, 7)
    out = dehankelize(H)
    np.testing.assert_allclose(out.real, brute_dehankel(data.real, 2, 3), atol=1e-12)
    np.testing.assert_allclose(out.imag, brute_dehankel(data.imag, 2, 3), atol=1e-12)


def test_first_block_mode(rng):
    M = rng.normal(size=(2, 9))
    np.testing.assert_array_equal(dehankelize(hankelize(M, 4), "first_block"), M)


def test_counts():
    for h, m in ((1, 5), (3, 4), (6, 2), (4, 10)):
        c = hankel_counts(h, m)
        n = m + h - 1
        brute = [sum(1 for i in range(h) for j in range(m) if i + j == tau) for tau in range(n)]
        np.testing.assert_array_equal(c, brute)
        assert c.sum() == h * m
        # equals min(h, j+1, N-j) once m >= h
        if m >= h:
            np.testing.assert_array_equal(c, np.minimum(np.minimum(h, np.arange(n) + 1), n - np.arange(n)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.integers(2, 200), st.data())
def test_roundtrip_property(t, n, data):
    h = data.draw(st.integers(1, n - 1))
    seed = data.draw(st.integers(0, 2**32 - 1))
    M = np.random.default_rng(seed).normal(size=(t, n))
    np.testing.assert_array_equal(dehankelize(hankelize(M, h)), M)


@pytest.mark.parametrize("p", [24, 48, 60])
def test_sinusoid_singular_vectors(p):
    n = 5 * p
    k = np.arange(n)
    x = np.sin(2 * np.pi * k / p + 0.3)
    H = hankelize(x, p)
    V = svd_reduced(H.data).V[:, :2].real
    j = np.arange(H.n_columns)
    basis, _ = np.linalg.qr(np.column_stack([np.sin(2 * np.pi * j / p), np.cos(2 * np.pi * j / p)]))
    for col in V.T:
        col = col / np.linalg.norm(col)
        assert np.linalg.norm(basis.T @ col) > 0.99
