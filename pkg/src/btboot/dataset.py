"""Panel data model, integer time grid and CSV ingestion."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import (
    DataError,
    DataIOError,
    DuplicateKeyError,
    EmptySliceError,
    GapError,
    ParseError,
    SchemaError,
)

logger = logging.getLogger(__name__)


def _frozen(a, dtype=float, ndim=1):
    a = np.array(a, dtype=dtype, copy=True)
    if ndim == 2 and a.ndim == 1:
        a = a.reshape(len(a), -1) if a.size else a.reshape(len(a), 0)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeWindow:
    """Inclusive integer window ``[lo, hi]``."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"TimeWindow requires lo <= hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True, eq=False)
class Series:
    """One time series on a contiguous integer grid starting at ``start``.

    ``y`` has shape ``(n,)`` and ``X`` has shape ``(n, p)``; both are stored
    as read-only arrays so the object can be shared between workers.
    """

    id: str
    start: int
    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = _frozen(self.y)
        X = _frozen(self.X, ndim=2)
        if y.ndim != 1 or len(y) == 0:
            raise DataError(f"series {self.id!r} must have at least one observation")
        if X.shape[0] != len(y):
            raise DataError(
                f"series {self.id!r}: covariate rows ({X.shape[0]}) != observations ({len(y)})"
            )
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "id", str(self.id))

    @property
    def end(self) -> int:
        return self.start + len(self.y) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.start, self.end + 1)

    def __len__(self):
        return len(self.y)

    def at(self, t: int) -> int:
        """Position of time ``t`` inside the arrays."""
        if not self.start <= t <= self.end:
            raise IndexError(f"t={t} outside [{self.start}, {self.end}] for series {self.id!r}")
        return t - self.start

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return (
            self.id == other.id
            and self.start == other.start
            and np.array_equal(self.y, other.y)
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
        )

    __hash__ = None


@dataclass(frozen=True)
class TimeGrid:
    """Maps raw timestamps to integer grid positions and back.

    ``freq="int"`` means timestamps already are integer grid positions.
    Otherwise ``freq`` is a fixed-duration pandas alias ("D", "h", "min", ...)
    and positions count periods since ``origin``.
    """

    freq: str = "int"
    origin: str | None = None

    @property
    def is_integer(self):
        return self.freq == "int"

    def _step(self):
        try:
            return pd.Timedelta(pd.tseries.frequencies.to_offset(self.freq))
        except (ValueError, TypeError) as exc:
            raise SchemaError(
                f"data.freq={self.freq!r} is not a fixed-duration frequency"
            ) from exc

    def to_index(self, values) -> np.ndarray:
        if self.is_integer:
            num = pd.to_numeric(pd.Series(values), errors="coerce")
            if num.isna().any() or not np.all(np.mod(num.to_numpy(float), 1) == 0):
                raise ParseError("integer time grid requires integer timestamps")
            return num.to_numpy().astype(np.int64)
        ts = pd.to_datetime(pd.Series(values), errors="coerce")
        if ts.isna().any():
            raise ParseError("unparseable timestamp values")
        origin = pd.Timestamp(self.origin)
        steps = (ts - origin) / self._step()
        if not np.all(np.mod(steps.to_numpy(float), 1) == 0):
            raise ParseError(f"timestamps are not aligned to freq {self.freq!r}")
        return steps.to_numpy().astype(np.int64)

    def to_timestamp(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        if self.is_integer:
            return idx
        stamps = pd.Timestamp(self.origin) + pd.to_timedelta(idx.ravel() * self._step())
        out = np.array([ts.isoformat() for ts in pd.DatetimeIndex(stamps)], dtype=object)
        return out.reshape(idx.shape) if idx.ndim else out[0]

    def with_origin_from(self, values) -> "TimeGrid":
        if self.is_integer:
            return self
        ts = pd.to_datetime(pd.Series(values), errors="coerce")
        if ts.isna().any():
            raise ParseError("unparseable timestamp values")
        return TimeGrid(self.freq, ts.min().isoformat())


@dataclass(frozen=True)
class Panel:
    """Collection of series sharing one covariate schema."""

    series: tuple = ()
    covariate_names: tuple = ()
    grid: TimeGrid = field(default_factory=TimeGrid)

    def __post_init__(self):
        series = tuple(self.series)
        names = tuple(str(n) for n in self.covariate_names)
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "covariate_names", names)
        ids = [s.id for s in series]
        if len(set(ids)) != len(ids):
            raise DuplicateKeyError("series identifiers must be unique within a panel")
        if len(set(names)) != len(names):
            raise SchemaError("covariate names must be unique")
        for s in series:
            if s.X.shape[1] != len(names):
                raise SchemaError(
                    f"series {s.id!r} has {s.X.shape[1]} covariates, schema has {len(names)}"
                )
        object.__setattr__(self, "_index", {s.id: k for k, s in enumerate(series)})

    def __iter__(self) -> Iterator[Series]:
        return iter(self.series)

    def __len__(self):
        return len(self.series)

    def __getitem__(self, series_id) -> Series:
        return self.series[self._index[series_id]]

    def __contains__(self, series_id):
        return series_id in self._index

    @property
    def ids(self):
        return tuple(s.id for s in self.series)

    @property
    def n_obs(self) -> int:
        return sum(len(s) for s in self.series)

    @property
    def min_start(self) -> int:
        return min(s.start for s in self.series)

    @property
    def max_end(self) -> int:
        return max(s.end for s in self.series)

    def replace_series(self, series: Iterable[Series]) -> "Panel":
        return Panel(tuple(series), self.covariate_names, self.grid)

    def equals(self, other: "Panel") -> bool:
        return (
            isinstance(other, Panel)
            and self.covariate_names == other.covariate_names
            and len(self) == len(other)
            and all(a == b for a, b in zip(self.series, other.series))
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.covariate_names).encode())
        for s in self.series:
            h.update(s.id.encode())
            h.update(np.int64(s.start).tobytes())
            h.update(np.ascontiguousarray(s.y).tobytes())
            h.update(np.ascontiguousarray(s.X).tobytes())
        return h.hexdigest()

    def covariate_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown covariate {name!r}") from None

    def to_frame(self, schema: "PanelSchema | None" = None) -> pd.DataFrame:
        schema = schema or PanelSchema()
        frames = []
        for s in self.series:
            df = pd.DataFrame(s.X, columns=list(self.covariate_names))
            df.insert(0, schema.target_col, s.y)
            df.insert(0, schema.time_col, self.grid.to_timestamp(s.times))
            df.insert(0, schema.id_col, s.id)
            frames.append(df)
        if not frames:
            cols = [schema.id_col, schema.time_col, schema.target_col, *self.covariate_names]
            return pd.DataFrame(columns=cols)
        return pd.concat(frames, ignore_index=True)


@dataclass(frozen=True)
class PanelSchema:
    """Column roles for long-format CSV files."""

    id_col: str = "series_id"
    time_col: str = "timestamp"
    target_col: str = "target"
    freq: str = "int"
    covariates: Sequence[str] | None = None


def slice_series(series: Series, window: TimeWindow) -> Series:
    """Restrict ``series`` to ``window`` intersected with its own range."""
    lo = max(window.lo, series.start)
    hi = min(window.hi, series.end)
    if lo > hi:
        raise EmptySliceError(
            f"window [{window.lo}, {window.hi}] does not intersect series {series.id!r} "
            f"over [{series.start}, {series.end}]"
        )
    if lo == series.start and hi == series.end:
        return series
    a, b = lo - series.start, hi - series.start + 1
    return Series(series.id, lo, series.y[a:b], series.X[a:b])


def split_at(panel: Panel, j: int) -> tuple[Panel, Panel]:
    """Partition ``panel`` into observations with ``t <= j`` and ``t > j``.

    Series left without observations on one side are dropped from that side.
    """
    train, test = [], []
    for s in panel:
        if s.start <= j:
            train.append(slice_series(s, TimeWindow(s.start, min(j, s.end))))
        if s.end > j:
            test.append(slice_series(s, TimeWindow(max(j + 1, s.start), s.end)))
    return panel.replace_series(train), panel.replace_series(test)


def panel_from_frame(df: pd.DataFrame, schema: PanelSchema = PanelSchema()) -> Panel:
    """Build a validated :class:`Panel` from a long-format frame."""
    for col in (schema.id_col, schema.time_col, schema.target_col):
        if col not in df.columns:
            raise SchemaError(f"missing column {col!r} (available: {list(df.columns)})")

    reserved = {schema.id_col, schema.time_col, schema.target_col}
    if schema.covariates is not None:
        covariates = list(schema.covariates)
        missing = [c for c in covariates if c not in df.columns]
        if missing:
            raise SchemaError(f"missing covariate columns {missing}")
    else:
        covariates = []
        for c in df.columns:
            if c in reserved:
                continue
            if pd.api.types.is_numeric_dtype(df[c]):
                covariates.append(c)
            else:
                logger.warning("dropping non-numeric column %r; covariates must be numeric", c)

    target = pd.to_numeric(df[schema.target_col], errors="coerce")
    bad = np.flatnonzero(target.isna().to_numpy())
    if len(bad):
        # +2: header line plus 1-based numbering
        raise ParseError(
            f"non-numeric or missing target in column {schema.target_col!r} at row {int(bad[0]) + 2}"
        )
    cov = df[covariates].apply(pd.to_numeric, errors="coerce") if covariates else pd.DataFrame(index=df.index)
    if covariates and cov.isna().to_numpy().any():
        r, c = np.argwhere(cov.isna().to_numpy())[0]
        raise ParseError(
            f"missing or non-numeric covariate {covariates[c]!r} at row {int(r) + 2}; imputation is not supported"
        )

    grid = TimeGrid(schema.freq).with_origin_from(df[schema.time_col])
    t = grid.to_index(df[schema.time_col])
    work = pd.DataFrame({"_id": df[schema.id_col].astype(str).to_numpy(), "_t": t, "_y": target.to_numpy(float)})
    dup = work.duplicated(["_id", "_t"])
    if dup.any():
        row = work[dup].iloc[0]
        raise DuplicateKeyError(f"duplicate (series, timestamp) key ({row['_id']!r}, t={int(row['_t'])})")

    series = []
    for sid, idx in work.groupby("_id", sort=True).indices.items():
        order = idx[np.argsort(work["_t"].to_numpy()[idx], kind="stable")]
        ts = work["_t"].to_numpy()[order]
        steps = np.diff(ts)
        if np.any(steps != 1):
            k = int(np.flatnonzero(steps != 1)[0])
            raise GapError(sid, int(ts[k] + 1))
        series.append(
            Series(sid, int(ts[0]), work["_y"].to_numpy()[order], cov.to_numpy(float)[order] if covariates else np.zeros((len(order), 0)))
        )
    return Panel(tuple(series), tuple(covariates), grid)


def load_panel(path, schema: PanelSchema = PanelSchema()) -> Panel:
    """Read a long-format CSV into a :class:`Panel`.

    Rows are grouped by series id and sorted by timestamp; timestamps are
    mapped onto a contiguous integer grid.
    """
    if not os.path.exists(path):
        raise DataIOError(f"data file not found: {path}")
    try:
        df = pd.read_csv(path, dtype={schema.id_col: str}, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    return panel_from_frame(df, schema)


def save_panel(panel: Panel, path, schema: PanelSchema = PanelSchema()) -> None:
    """Write ``panel`` as long-format CSV (lossless for float64 values)."""
    df = panel.to_frame(schema)
    df.to_csv(path, index=False, float_format="%.17g")


def panel_from_arrays(
    data: Mapping[str, tuple],
    covariate_names: Sequence[str] = (),
    starts: Mapping[str, int] | None = None,
) -> Panel:
    """Convenience constructor: ``{id: (y, X)}`` or ``{id: y}``."""
    series = []
    for sid, value in data.items():
        if isinstance(value, tuple):
            y, X = value
        else:
            y, X = value, np.zeros((len(value), len(covariate_names)))
        start = (starts or {}).get(sid, 0)
        series.append(Series(sid, start, y, X))
    return Panel(tuple(series), tuple(covariate_names))
