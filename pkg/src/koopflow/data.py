"""City records: CSV ingestion, centering, train/test split, snapshot pairs.

A city is a detector x time matrix of flows (vehicles per interval) sampled on
a uniform grid. Two CSV layouts are understood:

* wide: header ``detector_id,<ts0>,<ts1>,...`` and one row per detector;
* long: header ``detector_id,timestamp,flow`` and one row per reading.

Timestamps are integer epoch seconds or ISO-8601 strings. The wide layout is
also the canonical output format (:func:`write_csv`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import (
    MissingDataError,
    ParseError,
    SamplingError,
    ShapeError,
    SplitError,
)

SECONDS_PER_DAY = 86400
FILL_POLICIES = ("reject", "linear", "zero")


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class IngestConfig:
    layout: str = "auto"  # "wide" | "long" | "auto"
    fill: str = "reject"
    city_name: str | None = None

    def __post_init__(self):
        if self.layout not in ("auto", "wide", "long"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.fill not in FILL_POLICIES:
            raise ValueError(f"unknown fill policy {self.fill!r}")


@dataclass(frozen=True, eq=False)
class CityRecord:
    """Detector x time flow matrix on a uniform time grid."""

    city_name: str
    detector_ids: tuple[str, ...]
    timestamps: np.ndarray  # epoch seconds
    flows: np.ndarray
    timestamp_format: str = "epoch"  # "epoch" | "iso"

    def __post_init__(self):
        ts = _frozen(self.timestamps)
        fl = _frozen(self.flows)
        if fl.ndim != 2:
            raise ShapeError(f"flows must be 2-D, got shape {fl.shape}")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "flows", fl)
        object.__setattr__(self, "detector_ids", tuple(str(d) for d in self.detector_ids))
        if fl.shape != (len(self.detector_ids), len(ts)):
            raise ShapeError(
                f"flows shape {fl.shape} does not match "
                f"{len(self.detector_ids)} detectors x {len(ts)} timestamps"
            )
        if not np.all(np.isfinite(fl)):
            raise MissingDataError(f"{self.city_name}: flows contain missing or non-finite values")
        _check_uniform(ts)

    @property
    def dt(self) -> float:
        if len(self.timestamps) < 2:
            raise SamplingError("sampling interval undefined for fewer than 2 timestamps")
        return float(self.timestamps[1] - self.timestamps[0])

    @property
    def shape(self):
        return self.flows.shape

    def __eq__(self, other):
        if not isinstance(other, CityRecord):
            return NotImplemented
        return (
            self.city_name == other.city_name
            and self.detector_ids == other.detector_ids
            and self.timestamp_format == other.timestamp_format
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.flows, other.flows)
        )

    def select(self, rows=None, columns=None) -> "CityRecord":
        rows = np.arange(self.flows.shape[0]) if rows is None else np.asarray(rows)
        cols = slice(None) if columns is None else columns
        return CityRecord(
            self.city_name,
            tuple(self.detector_ids[i] for i in rows),
            self.timestamps[cols],
            self.flows[rows][:, cols],
            self.timestamp_format,
        )

    def reorder(self, detector_ids) -> "CityRecord":
        index = {d: i for i, d in enumerate(self.detector_ids)}
        return self.select(rows=[index[d] for d in detector_ids])


def _check_uniform(ts):
    if len(ts) < 2:
        return
    steps = np.diff(ts)
    dt = steps[0]
    if dt <= 0:
        raise SamplingError("timestamps must be strictly increasing")
    if np.max(np.abs(steps - dt)) >= 1e-6 * dt:
        bad = int(np.argmax(np.abs(steps - dt)))
        raise SamplingError(
            f"non-uniform sampling: step {steps[bad]} s at position {bad + 1}, expected {dt} s"
        )


@dataclass(frozen=True, eq=False)
class CenteredSeries:
    """Row-centered flows together with the means that were subtracted."""

    data: np.ndarray
    row_means: np.ndarray
    city_name: str = ""
    detector_ids: tuple[str, ...] = ()
    timestamps: np.ndarray = field(default_factory=lambda: np.empty(0))
    timestamp_format: str = "epoch"

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))
        object.__setattr__(self, "row_means", _frozen(self.row_means))
        object.__setattr__(self, "timestamps", _frozen(self.timestamps))
        if self.data.ndim != 2 or self.row_means.shape != (self.data.shape[0],):
            raise ShapeError(
                f"row_means shape {self.row_means.shape} does not match data {self.data.shape}"
            )

    @property
    def shape(self):
        return self.data.shape

    def raw(self) -> np.ndarray:
        """Undo the centering."""
        return self.data + self.row_means[:, None]

    def to_record(self) -> CityRecord:
        return CityRecord(
            self.city_name, self.detector_ids, self.timestamps, self.raw(), self.timestamp_format
        )


@dataclass(frozen=True)
class SnapshotPair:
    """Time-shifted pair: ``future`` is ``past`` advanced by one column."""

    past: np.ndarray
    future: np.ndarray
    delay: int = 1
    base_dim: int | None = None

    @property
    def first(self) -> np.ndarray:
        return self.past[:, 0]

    @property
    def second(self) -> np.ndarray:
        return self.future[:, 0]

    @property
    def last(self) -> np.ndarray:
        return self.future[:, -1]

    @property
    def n_snapshots(self) -> int:
        return self.past.shape[1] + 1


# -- timestamps ------------------------------------------------------------


def _parse_timestamp(text):
    """Return (epoch seconds, format tag)."""
    s = text.strip()
    try:
        return float(int(s)), "epoch"
    except ValueError:
        pass
    try:
        v = float(s)
        if math.isfinite(v):
            return v, "epoch"
    except ValueError:
        pass
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)  # raises ValueError
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp(), "iso"


def format_timestamp(value, fmt):
    if fmt == "iso":
        return datetime.fromtimestamp(float(value), tz=timezone.utc).isoformat()
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _parse_flow(text, line):
    s = text.strip()
    if s == "" or s.lower() in ("nan", "na", "null"):
        return math.nan
    try:
        return float(s)
    except ValueError:
        raise ParseError(f"cannot parse flow value {text!r}", line) from None


# -- ingestion -------------------------------------------------------------


def _read_rows(path):
    with open(path, newline="") as fh:
        return [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if row and any(c.strip() for c in row)]


def _detect_layout(header):
    cols = [c.strip().lower() for c in header]
    if len(cols) == 3 and cols[1] == "timestamp" and cols[2] == "flow":
        return "long"
    return "wide"


def _parse_wide(rows):
    (hline, header), body = rows[0], rows[1:]
    if header[0].strip().lower() != "detector_id":
        raise ParseError("first header cell must be 'detector_id'", hline)
    stamps, fmts = [], set()
    for cell in header[1:]:
        try:
            v, f = _parse_timestamp(cell)
        except ValueError:
            raise ParseError(f"cannot parse timestamp {cell!r}", hline) from None
        stamps.append(v)
        fmts.add(f)
    ids, values = [], []
    seen = set()
    for line, row in body:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
        det = row[0].strip()
        if det in seen:
            raise ParseError(f"duplicate detector {det!r}", line)
        seen.add(det)
        ids.append(det)
        values.append([_parse_flow(c, line) for c in row[1:]])
    flows = np.array(values, dtype=np.float64).reshape(len(ids), len(stamps))
    return ids, np.array(stamps), flows, ("iso" if fmts == {"iso"} else "epoch")


def _parse_long(rows):
    body = rows[1:]
    ids, index = [], {}
    cells = {}
    fmts = set()
    for line, row in body:
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line)
        det = row[0].strip()
        try:
            ts, f = _parse_timestamp(row[1])
        except ValueError:
            raise ParseError(f"cannot parse timestamp {row[1]!r}", line) from None
        fmts.add(f)
        flow = _parse_flow(row[2], line)
        if det not in index:
            index[det] = len(ids)
            ids.append(det)
        key = (det, ts)
        if key in cells:
            raise ParseError(f"duplicate reading for detector {det!r} at {row[1].strip()}", line)
        cells[key] = flow
    stamps = np.array(sorted({ts for _, ts in cells}))
    col = {ts: j for j, ts in enumerate(stamps)}
    flows = np.full((len(ids), len(stamps)), np.nan)
    for (det, ts), v in cells.items():
        flows[index[det], col[ts]] = v
    return ids, stamps, flows, ("iso" if fmts == {"iso"} else "epoch")


def _fill(flows, policy, ids):
    missing = ~np.isfinite(flows)
    if not missing.any():
        return flows
    if policy == "reject":
        i, j = np.argwhere(missing)[0]
        raise MissingDataError(
            f"{int(missing.sum())} missing cells (first: detector {ids[i]!r}, column {j}); "
            "choose fill policy 'linear' or 'zero' to impute"
        )
    out = flows.copy()
    if policy == "zero":
        out[missing] = 0.0
        return out
    x = np.arange(flows.shape[1])
    for i in np.flatnonzero(missing.any(axis=1)):
        ok = ~missing[i]
        if not ok.any():
            raise MissingDataError(f"detector {ids[i]!r} has no valid readings")
        out[i, ~ok] = np.interp(x[~ok], x[ok], flows[i, ok])
    return out


def load_csv(path, schema: IngestConfig | None = None) -> CityRecord:
    """Read a city CSV into a :class:`CityRecord`.

    Rows keep the order in which detector ids first appear in the file.
    Missing cells are handled by ``schema.fill``; the default rejects them.
    """
    schema = schema or IngestConfig()
    path = Path(path)
    rows = _read_rows(path)
    if not rows:
        raise ParseError(f"{path}: empty file", 1)
    layout = schema.layout if schema.layout != "auto" else _detect_layout(rows[0][1])
    ids, stamps, flows, fmt = (_parse_long if layout == "long" else _parse_wide)(rows)
    _check_uniform(stamps)
    flows = _fill(flows, schema.fill, ids)
    name = schema.city_name or path.stem
    return CityRecord(name, tuple(ids), stamps, flows, fmt)


def write_csv(record, path):
    """Write a record (or anything with the same fields) in wide layout."""
    path = Path(path)
    fmt = getattr(record, "timestamp_format", "epoch")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["detector_id"] + [format_timestamp(t, fmt) for t in record.timestamps])
        for det, row in zip(record.detector_ids, np.asarray(record.flows)):
            w.writerow([det] + [repr(float(v)) for v in row])
    return path


# -- transforms ------------------------------------------------------------


def center(record: CityRecord) -> CenteredSeries:
    """Subtract each detector's time-averaged flow."""
    flows = record.flows
    means = flows.mean(axis=1) if flows.shape[1] else np.zeros(flows.shape[0])
    return CenteredSeries(
        flows - means[:, None],
        means,
        record.city_name,
        record.detector_ids,
        record.timestamps,
        record.timestamp_format,
    )


def steps_per_day(dt) -> int:
    spd = SECONDS_PER_DAY / dt
    if abs(spd - round(spd)) > 1e-9 * spd:
        raise SplitError(f"day length is not a multiple of the sampling interval {dt} s")
    return int(round(spd))


def split_train_test(series: CenteredSeries, train_days: int, dt: float):
    """Split into a training window of ``train_days`` whole days and the rest.

    Both halves are re-centered on the *training* means so the test part never
    contributes to the statistics used for forecasting.
    """
    if train_days < 0:
        raise SplitError("train_days must be non-negative")
    n_train = train_days * steps_per_day(dt)
    total = series.data.shape[1]
    if n_train > total:
        raise SplitError(
            f"need {n_train} columns for {train_days} training days, have {total}"
        )
    raw = series.raw()
    means = raw[:, :n_train].mean(axis=1) if n_train else series.row_means

    def part(cols):
        return CenteredSeries(
            raw[:, cols] - means[:, None],
            means,
            series.city_name,
            series.detector_ids,
            series.timestamps[cols] if len(series.timestamps) == total else np.empty(0),
            series.timestamp_format,
        )

    return part(slice(0, n_train)), part(slice(n_train, total))


def snapshot_pair(matrix) -> SnapshotPair:
    """Columns ``0..N-2`` and ``1..N-1`` of ``matrix`` (or of a Hankel matrix)."""
    delay, base_dim = 1, None
    if hasattr(matrix, "delay") and hasattr(matrix, "data"):
        delay, base_dim = matrix.delay, matrix.base_dim
        matrix = matrix.data
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[1] < 2:
        raise ShapeError(f"need a 2-D matrix with at least 2 columns, got shape {matrix.shape}")
    if base_dim is None:
        base_dim = matrix.shape[0]
    return SnapshotPair(matrix[:, :-1], matrix[:, 1:], delay, base_dim)


def subsample_detectors(record: CityRecord, count, seed) -> CityRecord:
    """Seeded random subset of ``count`` detectors, kept in file order."""
    t = record.flows.shape[0]
    if count is None or count == "all" or int(count) >= t:
        return record
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(t, size=int(count), replace=False))
    return record.select(rows=rows)


def average_detectors(series: CenteredSeries, name="mean") -> CenteredSeries:
    """Collapse all detectors into one averaged series."""
    return CenteredSeries(
        series.data.mean(axis=0, keepdims=True),
        np.array([series.row_means.mean()]),
        series.city_name,
        (name,),
        series.timestamps,
        series.timestamp_format,
    )
