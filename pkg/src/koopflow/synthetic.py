"""Seeded synthetic multi-city traffic generator.

Each city is a sum of cosines with detector-specific amplitudes and phases on
top of a constant base flow, plus Gaussian noise scaled to a signal-to-noise
ratio.  Used by tests, benchmarks and the ``synth`` CLI command.
"""
from __future__ import annotations

import numpy as np

from .data import CityRecord

SECONDS_PER_DAY = 86400


def tone_matrix(rng, periods_hours, t, n_steps, dt=300.0, amp=(20.0, 60.0)):
    """``t x n_steps`` sum of cosines, one random amplitude and phase per
    detector and period."""
    k = np.arange(n_steps)
    out = np.zeros((t, n_steps))
    for p in periods_hours:
        a = rng.uniform(amp[0], amp[1], t)
        ph = rng.uniform(0, 2 * np.pi, t)
        out += a[:, None] * np.cos(2 * np.pi * k * dt / (p * 3600.0) + ph[:, None])
    return out


def synthetic_city(rng, periods_hours, t, days, snr, dt=300.0, base=200.0, name="synthetic", start=0):
    """Return ``(noisy, clean)`` CityRecords.

    ``snr`` is the ratio of per-detector signal standard deviation to noise
    standard deviation; ``None`` means no noise.
    """
    n_steps = int(round(days * SECONDS_PER_DAY / dt))
    sig = tone_matrix(rng, periods_hours, t, n_steps, dt)
    clean = base + sig
    if snr is None:
        noisy = clean.copy()
    else:
        scale = sig.std(axis=1, keepdims=True) / snr
        noisy = clean + rng.normal(size=sig.shape) * scale
    ids = tuple(f"d{j:03d}" for j in range(t))
    ts = start + dt * np.arange(n_steps)
    return CityRecord(name, ids, ts, noisy), CityRecord(name, ids, ts, clean)


def transfer_scenario(
    seed,
    shared=(24.0, 12.0, 8.0),
    target_extra=(6.0,),
    n_sources=3,
    source_detectors=5,
    source_days=3,
    source_snr=10.0,
    target_detectors=30,
    target_days=4,
    target_snr=1.0,
    dt=300.0,
):
    """Source cities sharing ``shared`` periods and a noisy target that adds
    its own ``target_extra`` tones.

    Returns ``(sources, target, target_clean)``.
    """
    rng = np.random.default_rng(seed)
    sources = [
        synthetic_city(rng, shared, source_detectors, source_days, source_snr, dt, name=f"source{i}")[0]
        for i in range(n_sources)
    ]
    target, clean = synthetic_city(
        rng, tuple(shared) + tuple(target_extra), target_detectors, target_days, target_snr, dt, name="target"
    )
    return sources, target, clean
