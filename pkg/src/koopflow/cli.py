"""Batch command-line interface.

Every subcommand reads a JSON run configuration (``--config``), applies
command-line overrides and writes its artifacts plus ``run_manifest.json``
into the output directory.  Precedence for the output directory is
``--output-dir`` > ``$KOOPMAN_OUT`` > ``output_dir`` in the config.

Exit codes: 0 success, 2 data error, 3 numeric error, 4 missing artifact.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels, svg
from .data import (
    CityRecord,
    IngestConfig,
    average_detectors,
    center,
    load_csv,
    split_train_test,
    subsample_detectors,
    write_csv,
)
from .dmd import SpectralDecomposition, amplitude_filter, dumps, svd_reduced
from .embedding import hankelize
from .errors import DataError, EmptySpectrumError, KoopflowError, NumericError
from .forecast import fourier_regression_forecast
from .metrics import evaluate, mse
from .pipeline import decompose_series, forecast_target
from .transfer import SharedEigenSet, read_periods_csv, shared_eigenvalues, shared_periods, write_periods_csv

EXIT_OK, EXIT_DATA, EXIT_NUMERIC, EXIT_ARTIFACT = 0, 2, 3, 4
ENV_OUT = "KOOPMAN_OUT"


class MissingArtifactError(KoopflowError):
    """A file produced by an earlier pipeline step is not there."""


@dataclass
class CitySpec:
    name: str
    csv_path: str
    role: str = "source"


@dataclass
class RunConfig:
    cities: list = field(default_factory=list)
    delay_h: int = 300
    source_delay_h: int | None = None
    epsilon: float = 1e-3
    benchmark_index: int = 0
    rank_policy: str | int = "full"
    source_rank_policy: str | int = "svht"
    amplitude_threshold: float = 1e-2
    max_stored_modes: int = 12
    train_days: int = 3
    horizon_steps: int = 288
    seed: int = 0
    detector_sample: int | str = "all"
    output_dir: str = "koopflow_out"
    clamp_nonnegative: bool = True
    dehankel_mode: str = "average"
    drop_growing_modes: bool = False
    k_harmonics: int = 3
    average_detectors: bool = False
    fill: str = "reject"
    layout: str = "auto"
    jobs: int = 1

    def __post_init__(self):
        self.cities = [c if isinstance(c, CitySpec) else CitySpec(**c) for c in self.cities]
        for c in self.cities:
            if c.role not in ("source", "target"):
                raise DataError(f"city {c.name}: role must be 'source' or 'target', got {c.role!r}")
        if int(self.delay_h) < 1:
            raise DataError("delay_h must be >= 1")
        if self.dehankel_mode not in ("average", "first_block"):
            raise DataError(f"unknown dehankel_mode {self.dehankel_mode!r}")
        for key in ("rank_policy", "source_rank_policy"):
            v = getattr(self, key)
            if isinstance(v, str) and v.isdigit():
                setattr(self, key, int(v))
            elif v not in ("svht", "full") and not isinstance(v, int):
                raise DataError(f"{key} must be 'svht', 'full' or an integer, got {v!r}")

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise DataError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def sources(self):
        return [c for c in self.cities if c.role == "source"]

    def target(self) -> CitySpec:
        targets = [c for c in self.cities if c.role == "target"]
        if len(targets) != 1:
            raise DataError(f"exactly one target city required, found {len(targets)}")
        return targets[0]

    def city(self, name) -> CitySpec:
        for c in self.cities:
            if c.name == name:
                return c
        raise DataError(f"no city named {name!r} in config")


# -- run context --------------------------------------------------------------


class Run:
    """Collects input hashes, outputs and warnings for the manifest."""

    def __init__(self, command, config: RunConfig, out: Path, upstream: Path | None = None):
        self.command = command
        self.config = config
        self.out = out
        self.upstream = upstream or out
        self.inputs = {}
        self.outputs = []
        self.notes = []

    def read(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"required file not found: {path}")
        self.inputs[str(path)] = hashlib.sha256(path.read_bytes()).hexdigest()
        return path

    def artifact(self, name) -> Path:
        """Path of an artifact from an earlier step (exit 4 if absent)."""
        return self.read(self.upstream / name)

    def write(self, name, text):
        path = self.out / name
        path.write_text(text)
        self.outputs.append(name)
        return path

    def track(self, name):
        self.outputs.append(name)
        return self.out / name

    def warn(self, message):
        self.notes.append(message)
        print(f"koopflow: warning: {message}", file=sys.stderr)

    def manifest(self):
        path = self.out / "run_manifest.json"
        try:
            existing = json.loads(path.read_text()) if path.exists() else {}
        except json.JSONDecodeError:
            existing = {}
        existing[self.command] = {
            "config": self.config.to_dict(),
            "inputs": self.inputs,
            "outputs": sorted(set(self.outputs)),
            # sorted: worker threads may emit in any order
            "warnings": sorted(self.notes),
            "versions": {
                "koopflow": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
                "kernels": kernels.BACKEND,
            },
        }
        path.write_text(dumps(existing))


def _load_city(run: Run, spec: CitySpec) -> CityRecord:
    cfg = run.config
    path = run.read(spec.csv_path)
    try:
        rec = load_csv(path, IngestConfig(cfg.layout, cfg.fill, spec.name))
    except DataError as exc:
        raise type(exc)(f"{spec.name}: {exc}") from exc
    return subsample_detectors(rec, cfg.detector_sample, cfg.seed)


def _parallel(run: Run, fn, items):
    """Apply ``fn`` to each item, in a thread pool when ``jobs > 1``.

    Results come back in input order.  Warnings are captured by the caller
    of the command (warning filters are process-global, not per thread).
    """
    jobs = max(1, int(run.config.jobs))
    if jobs == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _fit_window(record: CityRecord, cfg: RunConfig, role: str):
    """Centered training window used to decompose a city."""
    series = center(record)
    if role == "target" and cfg.train_days > 0:
        try:
            train, _ = split_train_test(series, cfg.train_days, record.dt)
            return train
        except DataError:
            pass
    return series


def _delay(cfg: RunConfig, role):
    if role == "source" and cfg.source_delay_h:
        return int(cfg.source_delay_h)
    return int(cfg.delay_h)


def _policy(cfg: RunConfig, role):
    return cfg.source_rank_policy if role == "source" else cfg.rank_policy


# -- commands -----------------------------------------------------------------


def cmd_ingest(run: Run, args):
    specs = run.config.cities
    if not specs:
        raise DataError("no cities configured")
    recs = _parallel(run, lambda s: _load_city(run, s), specs)
    summary = {}
    for spec, rec in zip(specs, recs):
        write_csv(rec, run.track(f"{spec.name}.csv"))
        summary[spec.name] = {
            "detectors": len(rec.detector_ids),
            "columns": int(rec.flows.shape[1]),
            "dt_seconds": rec.dt if rec.flows.shape[1] > 1 else None,
            "role": spec.role,
        }
    run.write("ingest.json", dumps(summary))


def _decompose_one(run: Run, spec: CitySpec):
    cfg = run.config
    rec = _load_city(run, spec)
    series = _fit_window(rec, cfg, spec.role)
    h = _delay(cfg, spec.role)
    origin = {"city": spec.name, "role": spec.role, "method": "hdmd"}
    try:
        d = decompose_series(series, h, _policy(cfg, spec.role), rec.dt, origin)
    except DataError as exc:
        raise type(exc)(f"{spec.name}: {exc}") from exc
    except NumericError as exc:
        raise type(exc)(f"{spec.name}: {exc}") from exc
    try:
        filtered = amplitude_filter(d, cfg.amplitude_threshold)
    except EmptySpectrumError:
        warnings.warn(f"{spec.name}: every mode falls below the amplitude threshold")
        filtered = d.subset([])
    coherent = (np.abs(np.abs(filtered.eigenvalues) - 1) < 0.05) & (np.abs(filtered.eigenvalues.imag) > 1e-8)
    if coherent.sum() < 2:
        warnings.warn(f"{spec.name}: no coherent oscillatory modes in the filtered spectrum")
    H = hankelize(series.data, h)
    V = svd_reduced(H.data).V[:, :4].real
    return filtered, V


def cmd_decompose(run: Run, args):
    cfg = run.config
    specs = [cfg.city(n) for n in args.cities] if args.cities else cfg.cities
    if not specs:
        raise DataError("no cities configured")
    results = _parallel(run, lambda s: _decompose_one(run, s), specs)
    for spec, (d, V) in zip(specs, results):
        run.write(f"{spec.name}.spectrum.json", d.to_json(cfg.max_stored_modes))
        run.write(f"{spec.name}.eigs.svg", svg.polar_eigenvalues({spec.name: d.eigenvalues}, f"{spec.name} eigenvalues"))
        lines = ["index," + ",".join(f"v{i + 1}" for i in range(V.shape[1]))]
        lines += [f"{j}," + ",".join(repr(float(x)) for x in row) for j, row in enumerate(V)]
        run.write(f"{spec.name}.singvecs.csv", "\n".join(lines) + "\n")
    if len(specs) >= 2:
        overlay = {s.name: d.eigenvalues for s, (d, _) in zip(specs, results)}
        run.write("eigs_overlay.svg", svg.polar_eigenvalues(overlay, "Eigenvalue comparison"))


def _read_spectrum(run: Run, name, suffix="spectrum.json") -> SpectralDecomposition:
    return SpectralDecomposition.from_json(run.artifact(f"{name}.{suffix}").read_text())


def cmd_shared(run: Run, args):
    cfg = run.config
    sources = cfg.sources
    if not sources:
        raise DataError("no source cities configured")
    if len(sources) < 2:
        run.warn("fewer than 2 source cities; sharing is vacuous and returns the whole benchmark spectrum")
    spectra = [_read_spectrum(run, s.name).eigenvalues for s in sources]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        shared = shared_eigenvalues(spectra, cfg.epsilon, cfg.benchmark_index, tuple(s.name for s in sources))
    for w in caught:
        run.warn(str(w.message))
    if shared.size == 0:
        run.warn(f"no eigenvalues shared within epsilon={cfg.epsilon}")
    dt = _read_spectrum(run, sources[0].name).dt
    run.write("shared.json", shared.to_json())
    write_periods_csv(shared_periods(shared, dt), run.track("periods.csv"))


def _load_shared(run: Run) -> SharedEigenSet:
    shared = SharedEigenSet.from_json(run.artifact("shared.json").read_text())
    if shared.size == 0:
        raise DataError("shared.json holds no eigenvalues; nothing to inject")
    return shared


def cmd_transfer(run: Run, args):
    cfg = run.config
    spec = cfg.target()
    shared = _load_shared(run)
    rec = _load_city(run, spec)
    train = _fit_window(rec, cfg, "target")
    from .pipeline import embedded_pair
    from .transfer import trhdmd

    d = trhdmd(
        embedded_pair(train, cfg.delay_h), shared, cfg.rank_policy, dt=rec.dt,
        origin={"city": spec.name, "role": "target"},
    )
    run.write(f"{spec.name}.trspectrum.json", d.to_json(cfg.max_stored_modes))
    run.write(
        f"{spec.name}.treigs.svg",
        svg.polar_eigenvalues({spec.name: d.eigenvalues, "shared": shared.eigenvalues}, f"{spec.name} with transfer"),
    )


def _future_timestamps(rec: CityRecord, start, horizon):
    dt = rec.dt
    return rec.timestamps[0] + dt * (start + np.arange(horizon))


def _truth_block(rec: CityRecord, start, horizon):
    end = min(rec.flows.shape[1], start + horizon)
    return rec.flows[:, start:end]


def cmd_forecast(run: Run, args):
    cfg = run.config
    spec = cfg.target()
    rec = _load_city(run, spec)
    dt = rec.dt
    horizon = int(cfg.horizon_steps)
    series = center(rec)
    train, test = split_train_test(series, cfg.train_days, dt)
    n_train = train.data.shape[1]
    metrics = {"method": args.method, "city": spec.name, "horizon": horizon}

    if args.method == "fourier_lr":
        if args.periods:
            periods = np.array([float(p) for p in args.periods.split(",")])
        else:
            periods = read_periods_csv(run.artifact("periods.csv"))
        if periods.size == 0:
            raise DataError("no periods available for the Fourier regression")
        lr_train = average_detectors(train) if cfg.average_detectors else train
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = fourier_regression_forecast(lr_train, periods, cfg.k_harmonics, horizon, dt)
        for w in caught:
            run.warn(str(w.message))
        ids = lr_train.detector_ids
        metrics["in_sample_mse"] = result.meta["in_sample_mse"]
        metrics["periods_hours"] = list(result.meta["periods_hours"])
        waves = []
    else:
        shared = _load_shared(run) if args.method == "trhdmd" else None
        result, d = forecast_target(
            train, cfg.delay_h, horizon, args.method, shared, cfg.rank_policy, dt,
            cfg.clamp_nonnegative, cfg.dehankel_mode, cfg.drop_growing_modes,
        )
        ids = train.detector_ids
        metrics["residual"] = d.residual
        metrics["modes"] = d.size
        if d.origin.get("injection_error") is not None:
            metrics["injection_error"] = d.origin["injection_error"]
        waves = _mode_waveforms(d, 12)

    truth = _truth_block(rec, n_train, horizon)
    if args.method == "fourier_lr" and cfg.average_detectors:
        truth = truth.mean(axis=0, keepdims=True)
    rec_out = CityRecord(
        spec.name, ids, _future_timestamps(rec, n_train, horizon), result.predictions, rec.timestamp_format
    )
    write_csv(rec_out, run.track("forecast.csv"))
    k = truth.shape[1]
    if k > 0:
        pred = result.predictions[:, :k]
        rep = evaluate(pred, truth, {"method": args.method, "city": spec.name}, with_dtw=not args.no_dtw)
        metrics.update(rep.to_dict())
        metrics["out_of_sample_mse"] = mse(pred, truth)
        metrics["evaluated_steps"] = k
    else:
        metrics["evaluated_steps"] = 0
    run.write("metrics.json", dumps(metrics))
    if waves:
        labels = [f"{s:.2f} h" if np.isfinite(s) else "static" for s, _ in waves]
        run.write("modes.svg", svg.line_panels([w for _, w in waves], f"{spec.name} top modes", labels=labels))


def _mode_waveforms(d: SpectralDecomposition, count):
    """Real waveform of the strongest modes over one day (first detector)."""
    steps = int(round(86400 / d.dt)) if d.dt > 0 else 288
    ks = np.arange(min(steps, 2000))
    out = []
    seen = set()
    cyc = d.cycle_times()
    for j in range(d.size):
        z = d.eigenvalues[j]
        if z.imag < 0:
            continue
        key = round(float(cyc[j]), 6) if np.isfinite(cyc[j]) else "inf"
        if key in seen:
            continue
        seen.add(key)
        with np.errstate(over="ignore", invalid="ignore"):
            w = (d.modes[0, j] * d.amplitudes[j] * z ** ks).real
        out.append((float(cyc[j]), np.nan_to_num(w)))
        if len(out) == count:
            break
    return out


def cmd_evaluate(run: Run, args):
    pred = load_csv(run.read(args.pred), IngestConfig(city_name="pred"))
    truth = load_csv(run.read(args.truth), IngestConfig(city_name="truth"))
    missing = [d for d in pred.detector_ids if d not in truth.detector_ids]
    if missing:
        raise DataError(f"detectors missing from truth: {', '.join(missing[:5])}")
    truth = truth.reorder(pred.detector_ids)
    index = {float(t): i for i, t in enumerate(truth.timestamps)}
    cols = [index.get(float(t)) for t in pred.timestamps]
    keep = [i for i, c in enumerate(cols) if c is not None]
    if not keep:
        raise DataError("prediction and truth share no timestamps")
    P = pred.flows[:, keep]
    T = truth.flows[:, [cols[i] for i in keep]]
    city = Path(args.truth).name.split(".")[0]
    rep = evaluate(P, T, {"method": args.label, "city": city}, with_dtw=not args.no_dtw)
    out = rep.to_dict()
    out["evaluated_steps"] = len(keep)
    out["mse"] = mse(P, T)
    run.write(args.name, dumps(out))
    print(rep.csv_header())
    print(rep.csv_row())


def cmd_export_periods(run: Run, args):
    shared = SharedEigenSet.from_json(run.artifact("shared.json").read_text())
    dt = args.dt
    if dt is None:
        sources = run.config.sources
        dt = _read_spectrum(run, sources[0].name).dt if sources else 300.0
    periods = shared_periods(shared, dt)
    write_periods_csv(periods, run.track(args.name))
    for p in periods:
        print(f"{p:.4f}")


def _window(text, n):
    a, _, b = text.partition(":")
    lo = int(a) if a else 0
    hi = int(b) if b else n
    if not 0 <= lo < hi <= n:
        raise DataError(f"window {text!r} outside [0, {n}]")
    return lo, hi


def pair_modes(da: SpectralDecomposition, db: SpectralDecomposition, rel_tol=0.05):
    """Match oscillatory modes of two decompositions by nearest cycle time.

    Only eigenvalues in the upper half plane take part.  A pair is accepted
    when the cycle times differ by at most ``rel_tol`` relative; each mode of
    ``db`` is used once, strongest modes of ``da`` first.

    The amplitude ratio is ``||b_B phi_B|| / ||b_A phi_A||`` and the phase
    shift is the angle of ``<b_A phi_A, b_B phi_B>`` in ``(-pi, pi]``, so a
    window starting ``d`` steps later shifts a mode of period ``p`` by
    ``2 pi d / p``.
    """
    ia = [j for j in range(da.size) if da.eigenvalues[j].imag > 0]
    ib = [j for j in range(db.size) if db.eigenvalues[j].imag > 0]
    ca, cb = da.cycle_times(), db.cycle_times()
    used = set()
    pairs, unmatched = [], []
    for j in ia:
        cands = [k for k in ib if k not in used]
        if not cands:
            unmatched.append({"window": "a", "cycle_hours": float(ca[j])})
            continue
        k = min(cands, key=lambda k: (abs(cb[k] - ca[j]), k))
        if abs(cb[k] - ca[j]) > rel_tol * ca[j]:
            unmatched.append({"window": "a", "cycle_hours": float(ca[j])})
            continue
        used.add(k)
        # b * phi does not depend on how each mode's phase was normalized
        va = da.modes[:, j] * da.amplitudes[j]
        vb = db.modes[:, k] * db.amplitudes[k]
        pa, pb = np.linalg.norm(va), np.linalg.norm(vb)
        shift = float(np.angle(np.vdot(va, vb)))
        if shift <= -np.pi:
            shift += 2 * np.pi
        pairs.append({
            "cycle_hours_a": float(ca[j]),
            "cycle_hours_b": float(cb[k]),
            "amplitude_a": float(pa),
            "amplitude_b": float(pb),
            "amplitude_ratio": float(pb / pa) if pa > 0 else float("inf"),
            "phase_shift": shift,
        })
    unmatched += [{"window": "b", "cycle_hours": float(cb[k])} for k in ib if k not in used]
    return pairs, unmatched


def cmd_compare_modes(run: Run, args):
    cfg = run.config
    spec = cfg.city(args.city) if args.city else cfg.cities[0]
    rec = _load_city(run, spec)
    n = rec.flows.shape[1]
    h = int(args.delay or cfg.delay_h)
    decs = {}
    for label, text in (("a", args.window_a), ("b", args.window_b)):
        lo, hi = _window(text, n)
        series = center(rec.select(columns=slice(lo, hi)))
        d = decompose_series(series, h, cfg.rank_policy, rec.dt, {"city": spec.name, "window": [lo, hi]})
        try:
            d = amplitude_filter(d, cfg.amplitude_threshold)
        except EmptySpectrumError:
            run.warn(f"window {label}: every mode falls below the amplitude threshold")
        decs[label] = d
    pairs, unmatched = pair_modes(decs["a"], decs["b"], args.pair_tol)
    run.write("compare_modes.json", dumps({
        "city": spec.name,
        "window_a": args.window_a,
        "window_b": args.window_b,
        "delay_h": h,
        "pairs": pairs,
        "unmatched": unmatched,
    }))
    wa = _mode_waveforms(decs["a"], 12)
    wb = dict((round(c, 6), w) for c, w in _mode_waveforms(decs["b"], 50))
    panels, labels = [], []
    for p in pairs[:12]:
        ca = p["cycle_hours_a"]
        match = next((w for c, w in wa if abs(c - ca) < 1e-9), None)
        other = wb.get(round(p["cycle_hours_b"], 6))
        if match is not None and other is not None:
            panels.append([match, other])
            labels.append(f"{ca:.2f} h")
    run.write("compare_modes.svg", svg.line_panels(panels, f"{spec.name}: window a vs b", labels=labels))


def cmd_synth(run: Run, args):
    from .synthetic import transfer_scenario

    sources, target, clean = transfer_scenario(
        args.seed, target_detectors=args.target_detectors, n_sources=args.sources,
    )
    cities = []
    for rec in sources + [target]:
        path = run.track(f"{rec.city_name}.input.csv")
        write_csv(rec, path)
        role = "target" if rec is target else "source"
        # relative to the config file, which lives next to the CSVs
        cities.append({"name": rec.city_name, "csv_path": path.name, "role": role})
    write_csv(clean, run.track("target.clean.csv"))
    config = RunConfig(cities=cities, output_dir=str(run.out.resolve())).to_dict()
    run.write("config.json", dumps(config))


# -- argument parsing ---------------------------------------------------------


COMMANDS = {
    "ingest": cmd_ingest,
    "decompose": cmd_decompose,
    "shared": cmd_shared,
    "transfer": cmd_transfer,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "export-periods": cmd_export_periods,
    "compare-modes": cmd_compare_modes,
    "synth": cmd_synth,
}

# flags that map one-to-one onto RunConfig fields
OVERRIDES = {
    "delay": ("delay_h", int),
    "source_delay": ("source_delay_h", int),
    "epsilon": ("epsilon", float),
    "benchmark": ("benchmark_index", int),
    "rank_policy": ("rank_policy", str),
    "source_rank_policy": ("source_rank_policy", str),
    "amplitude_threshold": ("amplitude_threshold", float),
    "max_stored_modes": ("max_stored_modes", int),
    "train_days": ("train_days", int),
    "horizon": ("horizon_steps", int),
    "seed": ("seed", int),
    "detector_sample": ("detector_sample", str),
    "dehankel": ("dehankel_mode", str),
    "k_harmonics": ("k_harmonics", int),
    "fill": ("fill", str),
    "layout": ("layout", str),
    "jobs": ("jobs", int),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--output-dir", help="output directory (overrides $KOOPMAN_OUT and the config)")
    common.add_argument("--from-dir", help="directory holding artifacts of earlier steps (default: output dir)")
    common.add_argument("--city-csv", action="append", default=[], metavar="NAME=PATH[:ROLE]",
                        help="add a city without a config file (repeatable)")
    common.add_argument("--delay", type=int, help="delay h")
    common.add_argument("--source-delay", type=int, help="delay h for source cities")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--benchmark", type=int, help="benchmark source index k")
    common.add_argument("--rank-policy", help="svht | full | integer (target)")
    common.add_argument("--source-rank-policy", help="svht | full | integer (sources)")
    common.add_argument("--amplitude-threshold", type=float)
    common.add_argument("--max-stored-modes", type=int, help="mode columns written per spectrum (-1: all)")
    common.add_argument("--train-days", type=int)
    common.add_argument("--horizon", type=int, help="forecast steps")
    common.add_argument("--seed", type=int)
    common.add_argument("--detector-sample", help="number of detectors or 'all'")
    common.add_argument("--dehankel", choices=("average", "first_block"))
    common.add_argument("--k-harmonics", type=int)
    common.add_argument("--fill", choices=("reject", "linear", "zero"))
    common.add_argument("--layout", choices=("auto", "wide", "long"))
    common.add_argument("--jobs", type=int, help="parallel workers for per-city work")
    common.add_argument("--no-clamp", action="store_true", help="keep negative predictions")
    common.add_argument("--drop-growing", action="store_true", help="drop modes with |lambda| > 1")

    p = argparse.ArgumentParser(prog="koopflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"koopflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="validate and normalize city CSVs")
    d = sub.add_parser("decompose", parents=[common], help="HDMD spectrum per city")
    d.add_argument("--cities", nargs="*", help="subset of city names")
    sub.add_parser("shared", parents=[common], help="shared eigenvalues of the source cities")
    sub.add_parser("transfer", parents=[common], help="decompose the target with shared eigenvalues injected")
    f = sub.add_parser("forecast", parents=[common], help="forecast the target city")
    f.add_argument("--method", choices=("hdmd", "trhdmd", "fourier_lr"), default="hdmd")
    f.add_argument("--periods", help="comma-separated periods in hours (fourier_lr; default periods.csv)")
    f.add_argument("--average-detectors", action="store_true", help="fourier_lr on the detector mean")
    f.add_argument("--no-dtw", action="store_true", help="skip the DTW metric")
    e = sub.add_parser("evaluate", parents=[common], help="score a forecast CSV against observations")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--label", default="forecast")
    e.add_argument("--name", default="evaluation.json", help="output file name")
    e.add_argument("--no-dtw", action="store_true")
    x = sub.add_parser("export-periods", parents=[common], help="write shared cycle times as CSV")
    x.add_argument("--dt", type=float, help="sampling interval in seconds")
    x.add_argument("--name", default="periods.csv")
    c = sub.add_parser("compare-modes", parents=[common], help="pair modes of two windows of one city")
    c.add_argument("--city")
    c.add_argument("--window-a", required=True, help="column range START:END")
    c.add_argument("--window-b", required=True, help="column range START:END")
    c.add_argument("--pair-tol", type=float, default=0.05, help="relative cycle-time tolerance")
    s = sub.add_parser("synth", parents=[common], help="write a synthetic multi-city scenario")
    s.add_argument("--sources", type=int, default=3)
    s.add_argument("--target-detectors", type=int, default=30)
    return p


def resolve_config(args, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    raw = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise MissingArtifactError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc
        base = path.parent
        for c in raw.get("cities", []):
            if "csv_path" in c and not Path(c["csv_path"]).is_absolute():
                c["csv_path"] = str(base / c["csv_path"])
    for item in args.city_csv:
        name, _, rest = item.partition("=")
        path, role = rest, "source"
        if rest.rsplit(":", 1)[-1] in ("source", "target"):
            path, role = rest.rsplit(":", 1)
        if not name or not path:
            raise DataError(f"bad --city-csv value {item!r}")
        raw.setdefault("cities", []).append({"name": name, "csv_path": path, "role": role})
    if environ.get(ENV_OUT):
        raw["output_dir"] = environ[ENV_OUT]
    if args.output_dir:
        raw["output_dir"] = args.output_dir
    for flag, (key, conv) in OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            raw[key] = conv(v)
    if args.no_clamp:
        raw["clamp_nonnegative"] = False
    if args.drop_growing:
        raw["drop_growing_modes"] = True
    if getattr(args, "average_detectors", False):
        raw["average_detectors"] = True
    if isinstance(raw.get("detector_sample"), str) and raw["detector_sample"].isdigit():
        raw["detector_sample"] = int(raw["detector_sample"])
    try:
        return RunConfig.from_dict(raw)
    except TypeError as exc:
        raise DataError(f"invalid config: {exc}") from exc


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args, environ)
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        run = Run(args.command, config, out, Path(args.from_dir) if args.from_dir else None)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            COMMANDS[args.command](run, args)
        for w in caught:
            run.warn(str(w.message))
        run.manifest()
        return EXIT_OK
    except MissingArtifactError as exc:
        print(f"koopflow: missing artifact: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"koopflow: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        print(f"koopflow: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
