"""End-to-end steps shared by the CLI and the tests."""
from __future__ import annotations

import numpy as np

from .data import center, snapshot_pair, split_train_test
from .dmd import amplitude_filter, dmd
from .embedding import hankelize
from .forecast import forecast
from .transfer import shared_eigenvalues, trhdmd

AMPLITUDE_THRESHOLD = 1e-2


def embedded_pair(series, h):
    data = getattr(series, "data", series)
    return snapshot_pair(hankelize(data, h))


def decompose_series(series, h, rank_policy="full", dt=300.0, origin=None):
    """HDMD of a centered series."""
    return dmd(embedded_pair(series, h), rank_policy, dt=dt, origin=origin)


def source_spectrum(record, h, rank_policy="svht", threshold=AMPLITUDE_THRESHOLD):
    """Amplitude-filtered spectrum of a whole source city."""
    d = decompose_series(center(record), h, rank_policy, record.dt, {"city": record.city_name})
    return amplitude_filter(d, threshold)


def shared_from_sources(records, h, epsilon=1e-3, k=0, rank_policy="svht", threshold=AMPLITUDE_THRESHOLD):
    spectra = [source_spectrum(r, h, rank_policy, threshold) for r in records]
    return shared_eigenvalues(
        [s.eigenvalues for s in spectra], epsilon, k, tuple(r.city_name for r in records)
    ), spectra


def forecast_target(
    train,
    h,
    horizon,
    method="hdmd",
    shared=None,
    rank_policy="full",
    dt=300.0,
    clamp_nonnegative=True,
    dehankel="average",
    drop_growing_modes=False,
):
    """Fit the training series with HDMD or TrHDMD and forecast ``horizon``
    steps.  Returns ``(forecast_result, decomposition)``."""
    pair = embedded_pair(train, h)
    origin = {"city": train.city_name, "method": method}
    if method == "hdmd":
        d = dmd(pair, rank_policy, dt=dt, origin=origin)
    elif method == "trhdmd":
        d = trhdmd(pair, shared, rank_policy, dt=dt, origin=origin)
    else:
        raise ValueError(f"unknown method {method!r}")
    f = forecast(d, horizon, train.row_means, clamp_nonnegative, dehankel, drop_growing_modes)
    return f, d


def split_record(record, train_days):
    """Center on the training window and split."""
    return split_train_test(center(record), train_days, record.dt)


def observed_test(test, horizon):
    """Held-out readings in flow units, first ``horizon`` columns."""
    return (test.data + test.row_means[:, None])[:, :horizon]


def transfer_comparison(sources, target, h_source=300, h_target=300, epsilon=1e-3, train_days=3, truth=None):
    """RE of HDMD and TrHDMD forecasts of the day after training.

    ``truth`` (a CityRecord) replaces the observed target as the reference
    when given, e.g. a noise-free copy.
    """
    from .metrics import relative_error

    shared, _ = shared_from_sources(sources, h_source, epsilon)
    train, test = split_record(target, train_days)
    horizon = test.data.shape[1]
    ref = observed_test(test, horizon) if truth is None else truth.flows[:, -horizon:]
    f0, _ = forecast_target(train, h_target, horizon, "hdmd", dt=target.dt)
    f1, d1 = forecast_target(train, h_target, horizon, "trhdmd", shared, dt=target.dt)
    return {
        "hdmd": relative_error(f0.predictions, ref),
        "trhdmd": relative_error(f1.predictions, ref),
        "shared": int(shared.size),
        "injection_error": d1.origin.get("injection_error"),
    }
