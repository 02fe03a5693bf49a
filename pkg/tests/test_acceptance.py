"""Acceptance criteria with pinned tolerances.

Each test records one ``PASS``/``FAIL`` line (repeated in the terminal
summary) and then asserts, so a criterion that is not met shows up both in
the summary and as a failing test.
"""
import json
import time
import warnings
from itertools import permutations
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ACCEPTANCE_LINES, BACKENDS, DATASET_DIR
from koopflow.cli import main
from koopflow.data import average_detectors, center, load_csv, snapshot_pair
from koopflow.dmd import CompanionMatrix, dmd
from koopflow.embedding import dehankelize, hankelize
from koopflow.forecast import fourier_regression_forecast, reconstruct
from koopflow.metrics import cosine_similarity_rows, dtw_multivariate, mae, relative_error
from koopflow.pipeline import (
    decompose_series,
    forecast_target,
    observed_test,
    shared_from_sources,
    split_record,
)
from koopflow.synthetic import synthetic_city, transfer_scenario
from koopflow.transfer import conjugate_closure, constrained_companion, shared_eigenvalues, shared_periods

SEEDS = range(20)
WIN_RATE = 0.9


def record(n, ok, detail):
    ACCEPTANCE_LINES[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[n])
    assert ok, ACCEPTANCE_LINES[n]


def match_distance(found, expected):
    found = list(found)
    if len(found) != len(expected):
        return np.inf
    return min(max(abs(a - b) for a, b in zip(p, expected)) for p in permutations(found))


# -- 1: exact linear recovery -------------------------------------------------

_c1 = {"eig": 0.0, "re": 0.0, "time": 0.0, "n": 0}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 10.0))
def _c1_case(seed, scale):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(2, 2))
    if abs(np.linalg.det(P)) < 0.1:
        P = P + 2 * np.eye(2)
    A = P @ np.diag([2.0, 0.5]) @ np.linalg.inv(P)
    X = np.empty((2, 6))
    X[:, 0] = scale * rng.normal(size=2)
    for k in range(1, 6):
        X[:, k] = A @ X[:, k - 1]
    if min(np.linalg.svd(X[:, :-1], compute_uv=False)) < 1e-6 * np.linalg.norm(X):
        return
    t0 = time.perf_counter()
    d = dmd(snapshot_pair(X), "full")
    R = reconstruct(d, np.arange(6)).real
    _c1["time"] = max(_c1["time"], time.perf_counter() - t0)
    _c1["eig"] = max(_c1["eig"], match_distance(d.eigenvalues, [2.0, 0.5]))
    _c1["re"] = max(_c1["re"], relative_error(R, X))
    _c1["n"] += 1


def test_criterion_1_exact_linear_recovery():
    _c1_case()
    ok = _c1["eig"] < 1e-8 and _c1["re"] < 1e-8 and _c1["time"] < 1.0 and _c1["n"] > 0
    record(1, ok, f"{_c1['n']} systems: max eig err {_c1['eig']:.1e} (<1e-8), max RE {_c1['re']:.1e} (<1e-8), "
                  f"max time {_c1['time']:.3f} s (<1 s)")


# -- 2: sinusoid identification -----------------------------------------------


def test_criterion_2_sinusoid_identification():
    worst, slowest = 0.0, 0.0
    for seed in range(5):
        rec, _ = synthetic_city(np.random.default_rng(seed), (24.0, 12.0), 3, 3, 100.0, dt=300.0)
        t0 = time.perf_counter()
        d = decompose_series(center(rec), 288, "svht", 300.0)
        slowest = max(slowest, time.perf_counter() - t0)
        cyc = d.cycle_times()
        top = [cyc[j] for j in range(d.size) if d.eigenvalues[j].imag > 0][:2]
        worst = max(worst, match_distance(top, [24.0, 12.0]))
    ok = worst < 0.1 and slowest < 30
    record(2, ok, f"5 seeds: top two pairs vs {{24 h, 12 h}} max gap {worst:.4f} h (<0.1 h), "
                  f"max time {slowest:.2f} s (<30 s)")


# -- 3: constraint exactness --------------------------------------------------


def exact_range_residual(dc, target, lam_hat, dps=50):
    """Norm of the part of ``dc`` outside range((L* L)^-1 Lh*), with the basis
    built in ``dps``-digit arithmetic."""
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = dps
    n = len(dc)
    L = mp.matrix([[mp.mpc(complex(z)) ** j for j in range(n)] for z in target])
    Lh = mp.matrix([[mp.mpc(complex(z)) ** j for j in range(n)] for z in lam_hat])
    M = mp.inverse(L.H * L) * Lh.H
    Q, _ = mp.qr(M)
    Q = Q[:, : M.cols]
    v = mp.matrix([mp.mpc(complex(x)) for x in dc])
    return float(mp.norm(v - Q * (Q.H * v)))


def test_criterion_3_constraint_exactness():
    rng = np.random.default_rng(2024)
    worst_p, worst_proj = 0.0, 0.0
    for _ in range(100):
        radii = rng.uniform(0.5, 1.0, 6)
        ang = rng.uniform(0, np.pi, 6)
        roots = np.concatenate([radii * np.exp(1j * ang), radii * np.exp(-1j * ang)])
        c = -np.poly(roots).real[1:][::-1]
        target = CompanionMatrix(c).roots()
        lam = np.exp(1j * rng.uniform(0, np.pi, 3))
        c_bar = constrained_companion(c, target, lam)
        worst_p = max(worst_p, float(np.abs(CompanionMatrix(c_bar).charpoly(lam)).max()))
        worst_proj = max(worst_proj, exact_range_residual(c_bar - c, target, conjugate_closure(lam)))
    ok = worst_p < 1e-6 and worst_proj < 1e-8
    record(3, ok, f"100 instances n=12 q=3: max |p(lam_hat)| {worst_p:.1e} (<1e-6), "
                  f"max complement projection {worst_proj:.1e} (<1e-8)")


# -- 4: shared-eigenvalue oracle ----------------------------------------------


def loop_shared(spectra, eps, k):
    out = []
    for lam in spectra[k]:
        if all(i == k or (len(s) and min(abs(lam - z) for z in s) < eps) for i, s in enumerate(spectra)):
            out.append(lam)
    return out


def test_criterion_4_shared_oracle():
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(50):
        m = int(rng.integers(1, 6))
        base = rng.uniform(0.3, 1.0, 40) * np.exp(1j * rng.uniform(-np.pi, np.pi, 40))
        eps = 10 ** rng.uniform(-4, -1)
        spectra = []
        for _ in range(m):
            size = int(rng.integers(0, 41))
            pick = base[rng.permutation(40)[:size]]
            # perturbations straddle epsilon so both outcomes occur
            spectra.append(pick + eps * rng.uniform(0, 2, size) * np.exp(1j * rng.uniform(0, 2 * np.pi, size)))
        k = int(rng.integers(0, m))
        got = shared_eigenvalues(spectra, eps, k, warn=False).eigenvalues
        ref = np.array(loop_shared(spectra, eps, k), dtype=complex)
        mismatches += not np.array_equal(got, ref)
    record(4, mismatches == 0, f"50 collections (m<=5, sizes<=40): {mismatches} mismatches (exact equality)")


# -- 5 and 6: synthetic transfer ----------------------------------------------


@pytest.fixture(scope="module")
def transfer_runs():
    rows = []
    for seed in SEEDS:
        sources, target, _ = transfer_scenario(seed)
        shared, _ = shared_from_sources(sources, 300, 1e-3)
        train, test = split_record(target, 3)
        horizon = test.data.shape[1]
        truth = observed_test(test, horizon)
        f0, _ = forecast_target(train, 300, horizon, "hdmd", dt=target.dt)
        f1, _ = forecast_target(train, 300, horizon, "trhdmd", shared, dt=target.dt)
        periods = shared_periods(shared, target.dt)
        avg_train = average_detectors(train)
        avg_truth = truth.mean(axis=0, keepdims=True)
        lr_naive = fourier_regression_forecast(avg_train, [24.0], 3, horizon, target.dt)
        with warnings.catch_warnings():
            # harmonics of 24 h coincide with 12 h and 8 h terms
            warnings.simplefilter("ignore", UserWarning)
            lr_shared = fourier_regression_forecast(avg_train, periods, 3, horizon, target.dt)
        rows.append({
            "seed": seed,
            "re_hdmd": relative_error(f0.predictions, truth),
            "re_trhdmd": relative_error(f1.predictions, truth),
            "mse_naive": float(np.mean((lr_naive.predictions - avg_truth) ** 2)),
            "mse_shared": float(np.mean((lr_shared.predictions - avg_truth) ** 2)),
            "periods": [round(p, 3) for p in periods],
        })
    return rows


@pytest.mark.slow
def test_criterion_5_transfer_benefit(transfer_runs):
    wins = sum(r["re_trhdmd"] < r["re_hdmd"] for r in transfer_runs)
    gain = np.median([r["re_hdmd"] - r["re_trhdmd"] for r in transfer_runs])
    rate = wins / len(transfer_runs)
    record(5, rate >= WIN_RATE, f"TrHDMD RE < HDMD RE in {wins}/{len(transfer_runs)} seeds (>= 90%), "
                                f"median RE gain {gain:.4f}")


@pytest.mark.slow
def test_criterion_6_fourier_period_benefit(transfer_runs):
    wins = sum(r["mse_shared"] < r["mse_naive"] for r in transfer_runs)
    ratio = np.median([r["mse_shared"] / r["mse_naive"] for r in transfer_runs])
    rate = wins / len(transfer_runs)
    record(6, rate >= WIN_RATE, f"LR shared-period MSE < 24 h MSE in {wins}/{len(transfer_runs)} seeds (>= 90%), "
                                f"median MSE ratio {ratio:.3f}")


# -- 7: metric oracles --------------------------------------------------------


def exhaustive_dtw(A, B):
    n, k = A.shape[1], B.shape[1]
    D = [[float(np.sqrt(np.sum((A[:, i] - B[:, j]) ** 2))) for j in range(k)] for i in range(n)]
    best = np.inf
    stack = [(0, 0, D[0][0])]
    while stack:
        i, j, cost = stack.pop()
        if (i, j) == (n - 1, k - 1):
            best = min(best, cost)
            continue
        for a, b in ((i + 1, j), (i, j + 1), (i + 1, j + 1)):
            if a < n and b < k:
                stack.append((a, b, cost + D[a][b]))
    return best


def test_criterion_7_metric_oracles():
    rng = np.random.default_rng(7)
    dtw_bad = 0
    cases = 0
    for t in (1, 2):
        for n in range(1, 7):
            for k in range(1, 7):
                A, B = rng.normal(size=(t, n)), rng.normal(size=(t, k))
                # the DP and the enumeration sum the same terms in different orders
                dtw_bad += abs(dtw_multivariate(A, B) - exhaustive_dtw(A, B)) > 1e-12 * max(1.0, exhaustive_dtw(A, B))
                cases += 1
    worst = 0.0
    for _ in range(100):
        shape = (int(rng.integers(1, 6)), int(rng.integers(1, 30)))
        p, q = rng.normal(size=shape), rng.normal(size=shape)
        re_ref = np.sqrt(sum((a - b) ** 2 for a, b in zip(p.ravel(), q.ravel())) / sum(b * b for b in q.ravel()))
        mae_ref = sum(abs(a - b) for a, b in zip(p.ravel(), q.ravel())) / p.size
        cs_ref = sum(
            sum(x * y for x, y in zip(a, b)) / (np.sqrt(sum(x * x for x in a)) * np.sqrt(sum(y * y for y in b)))
            for a, b in zip(p, q)
        ) / p.shape[0]
        for got, ref in ((relative_error(p, q), re_ref), (mae(p, q), mae_ref), (cosine_similarity_rows(p, q), cs_ref)):
            worst = max(worst, abs(got - ref) / max(1.0, abs(ref)))
    ok = dtw_bad == 0 and worst < 1e-12
    record(7, ok, f"DTW vs path enumeration: {dtw_bad}/{cases} mismatches; "
                  f"RE/MAE/CS max deviation {worst:.1e} (<1e-12) on 100 pairs")


# -- 8: embedding round trip --------------------------------------------------


@pytest.mark.parametrize("backend_param", BACKENDS)
def test_criterion_8_roundtrip(backend_param, monkeypatch):
    from koopflow import kernels

    monkeypatch.setattr(kernels, "antidiagonal_mean", backend_param.antidiagonal_mean)
    rng = np.random.default_rng(8)
    bad = 0
    for _ in range(200):
        t = int(rng.integers(1, 11))
        n = int(rng.integers(2, 201))
        h = int(rng.integers(1, n))
        M = rng.normal(scale=10 ** rng.uniform(-3, 3), size=(t, n))
        bad += not np.array_equal(dehankelize(hankelize(M, h)), M)
    name = backend_param.__name__.rsplit(".", 1)[-1]
    key = 8 if name == "_pykernels" else 8.5
    ACCEPTANCE_LINES.pop(key, None)
    ok = bad == 0
    line = f"criterion  8: {'PASS' if ok else 'FAIL'}  [{name}] 200 cases t<=10 N<=200: {bad} not elementwise exact"
    ACCEPTANCE_LINES[key] = line
    print(line)
    assert ok, line


# -- 9: determinism -----------------------------------------------------------


def test_criterion_9_determinism(tmp_path):
    src = tmp_path / "scenario"
    assert main(["synth", "--output-dir", str(src), "--seed", "9", "--target-detectors", "12"], environ={}) == 0
    snapshots = []
    for label in ("one", "two"):
        o = tmp_path / label
        argv = ["--config", str(src / "config.json"), "--output-dir", str(o), "--seed", "9", "--detector-sample", "8"]
        assert main(["forecast", *argv], environ={}) == 0
        files = {p.name: p.read_bytes() for p in sorted(o.iterdir()) if p.name != "run_manifest.json"}
        manifest = json.loads((o / "run_manifest.json").read_text())
        manifest["forecast"]["config"].pop("output_dir")
        snapshots.append((files, manifest))
    same = snapshots[0] == snapshots[1]
    names = ", ".join(sorted(snapshots[0][0]))
    record(9, same, f"two forecast runs, same config and seed: outputs [{names}] byte-identical: {same}")


# -- 10: paper reproduction (dataset only) ------------------------------------

PAPER_PERIODS_H300 = [0.53, 2.38, 4.81, 5.98, 7.99, 12.02, 24.21]
PAPER_RE_H300 = 0.4411


@pytest.mark.dataset
@pytest.mark.skipif(DATASET_DIR is None, reason="set KOOPFLOW_DATASET to a directory of city CSVs")
def test_criterion_10_paper_reproduction():
    root = Path(DATASET_DIR)
    sources = [load_csv(root / f"{c}.csv") for c in ("bordeaux", "graz", "madrid")]
    target = load_csv(root / "stuttgart.csv")
    shared, _ = shared_from_sources(sources, 300, 1e-3)
    periods = shared_periods(shared, sources[0].dt)
    gap = (
        float(np.max(np.abs(np.sort(periods) - PAPER_PERIODS_H300)))
        if len(periods) == len(PAPER_PERIODS_H300) else np.inf
    )
    train, test = split_record(target, 3)
    horizon = min(test.data.shape[1], 288)
    f, _ = forecast_target(train, 300, horizon, "hdmd", dt=target.dt)
    re = relative_error(f.predictions, observed_test(test, horizon))
    ok = abs(re - PAPER_RE_H300) <= 0.05 and gap <= 0.05
    record(10, ok, f"Stuttgart HDMD h=300 RE {re:.4f} (0.4411 +/- 0.05); {len(periods)} shared periods, "
                   f"max gap {gap:.3f} h (<=0.05 h)")


def test_criterion_10_gate_noted():
    if DATASET_DIR is None:
        ACCEPTANCE_LINES[10] = "criterion 10: SKIP  dataset not supplied (KOOPFLOW_DATASET unset)"
        print(ACCEPTANCE_LINES[10])

