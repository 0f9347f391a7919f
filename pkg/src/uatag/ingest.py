"""Point lists, time-series files, and representative-window selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import IngestError

log = logging.getLogger(__name__)

HOUR = 3600
DAY = 86400
WINDOW_HOURS = 504
MIN_SAMPLES_PER_HOUR = 5
DENSE_HOUR_FRACTION = 0.80

POINTS_HEADER = ["point_id", "building_id", "raw_name", "units", "object_type"]
SERIES_HEADER = ["point_id", "timestamp", "value"]


@dataclass(frozen=True)
class PointRecord:
    point_id: str
    building_id: str
    raw_name: str
    units: str | None = None
    object_type: str | None = None
    degenerate: bool = False


@dataclass
class SeriesBundle:
    """Samples of one point; ``times`` in UTC seconds, strictly increasing."""

    point_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.times)

    def in_window(self, start: int, length_hours: int = WINDOW_HOURS) -> tuple[np.ndarray, np.ndarray]:
        lo = np.searchsorted(self.times, start, side="left")
        hi = np.searchsorted(self.times, start + length_hours * HOUR, side="left")
        return self.times[lo:hi], self.values[lo:hi]


@dataclass
class WindowSelection:
    start: int
    length_hours: int = WINDOW_HOURS
    retained: set[str] = field(default_factory=set)
    filtered_out: dict[str, str] = field(default_factory=dict)

    @property
    def end(self) -> int:
        return self.start + self.length_hours * HOUR


def _read_csv(path, header: list[str]) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IngestError("malformed_file", f"cannot parse {path}: {exc}") from exc
    if list(df.columns) != header:
        raise IngestError("malformed_row", f"{path}: expected header {','.join(header)}", 1)
    return df


def load_points(path: str | Path) -> list[PointRecord]:
    df = _read_csv(path, POINTS_HEADER)
    records: list[PointRecord] = []
    first_seen: dict[str, int] = {}
    for i, row in enumerate(df.itertuples(index=False)):
        line = i + 2
        pid = row.point_id.strip()
        if not pid:
            raise IngestError("malformed_row", "empty point_id", line)
        if pid in first_seen:
            raise IngestError(
                "duplicate_point", f"point_id {pid!r} on lines {first_seen[pid]} and {line}", line
            )
        first_seen[pid] = line
        name = row.raw_name
        degenerate = not name.strip()
        if degenerate:
            log.warning("line %d: point %s has an empty raw_name; flagged degenerate", line, pid)
        records.append(
            PointRecord(
                point_id=pid,
                building_id=row.building_id.strip(),
                raw_name=name,
                units=row.units or None,
                object_type=row.object_type or None,
                degenerate=degenerate,
            )
        )
    return records


def load_series(path: str | Path) -> dict[str, SeriesBundle]:
    """Read ``point_id,timestamp,value`` rows into per-point bundles.

    Samples are sorted by time; a repeated ``(point_id, timestamp)`` keeps the
    row that appears last in the file.
    """
    df = _read_csv(path, SERIES_HEADER)
    if df.empty:
        return {}
    # timestamps repeat across points: validate and parse each distinct string once
    codes, uniq = pd.factorize(df["timestamp"])
    stamps = pd.Series(uniq).str.strip()
    no_offset = ~stamps.str.contains(r"(?:Z|[+-]\d{2}:?\d{2})$", regex=True).to_numpy()
    if no_offset.any():
        i = int(np.flatnonzero(no_offset[codes])[0])
        raise IngestError("bad_timestamp", f"timestamp {df['timestamp'].iloc[i]!r} lacks a UTC offset", i + 2)
    ts = pd.to_datetime(stamps, utc=True, format="ISO8601", errors="coerce")
    unparsed = ts.isna().to_numpy()
    if unparsed.any():
        i = int(np.flatnonzero(unparsed[codes])[0])
        raise IngestError("bad_timestamp", f"unparseable timestamp {df['timestamp'].iloc[i]!r}", i + 2)
    values = pd.to_numeric(df["value"], errors="coerce").to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise IngestError("non_finite", f"non-finite value {df['value'].iloc[i]!r}", i + 2)

    secs = ((ts - pd.Timestamp(0, tz="UTC")) // pd.Timedelta(seconds=1)).to_numpy(dtype=np.int64)[codes]
    frame = pd.DataFrame(
        {"pid": df["point_id"].str.strip().to_numpy(), "t": secs, "v": values}
    )
    frame = frame.drop_duplicates(subset=["pid", "t"], keep="last")
    frame = frame.sort_values(["pid", "t"], kind="mergesort")
    out: dict[str, SeriesBundle] = {}
    for pid, g in frame.groupby("pid", sort=True):
        out[pid] = SeriesBundle(pid, g["t"].to_numpy(), g["v"].to_numpy())
    return out


def hourly_counts(times: np.ndarray, start: int, n_hours: int) -> np.ndarray:
    """Samples per hourly bucket over ``[start, start + n_hours h)``."""
    rel = times[(times >= start) & (times < start + n_hours * HOUR)] - start
    return np.bincount(rel // HOUR, minlength=n_hours)[:n_hours]


def required_dense_hours(length_hours: int = WINDOW_HOURS) -> int:
    # 0.8 * 504 = 403.2 -> 404
    return math.ceil(round(DENSE_HOUR_FRACTION * length_hours, 9))


def passes_density(bundle: SeriesBundle, start: int, length_hours: int = WINDOW_HOURS) -> bool:
    if len(bundle) == 0:
        return False
    counts = hourly_counts(bundle.times, start, length_hours)
    return int(np.sum(counts >= MIN_SAMPLES_PER_HOUR)) >= required_dense_hours(length_hours)


def candidate_starts(bundles, length_hours: int = WINDOW_HOURS, step_hours: int = 24) -> np.ndarray:
    """Day-aligned window starts that fit inside the available history.

    When the history is shorter than one window, the single candidate is the
    first day boundary.
    """
    nonempty = [b for b in bundles if len(b)]
    if not nonempty:
        raise IngestError("no_data", "no samples in any series")
    t0 = min(int(b.times[0]) for b in nonempty)
    t1 = max(int(b.times[-1]) for b in nonempty)
    first = t0 - t0 % DAY
    end = -(-(t1 + 1) // DAY) * DAY
    step = step_hours * HOUR
    last = end - length_hours * HOUR
    if last < first:
        return np.array([first], dtype=np.int64)
    return np.arange(first, last + 1, step, dtype=np.int64)


def select_window(bundles, length_hours: int = WINDOW_HOURS, step_hours: int = 24) -> WindowSelection:
    """Pick the window start retaining the most points; earliest wins ties."""
    bundles = list(bundles.values()) if isinstance(bundles, dict) else list(bundles)
    starts = candidate_starts(bundles, length_hours, step_hours)
    first = int(starts[0])
    span_hours = int((starts[-1] - first) // HOUR) + length_hours
    need = required_dense_hours(length_hours)
    offsets = (starts - first) // HOUR

    passing = np.zeros((len(bundles), len(starts)), dtype=bool)
    for i, b in enumerate(bundles):
        if not len(b):
            continue
        dense = (hourly_counts(b.times, first, span_hours) >= MIN_SAMPLES_PER_HOUR).astype(np.int64)
        csum = np.concatenate([[0], np.cumsum(dense)])
        passing[i] = (csum[offsets + length_hours] - csum[offsets]) >= need
    totals = passing.sum(axis=0)
    best = int(np.argmax(totals))
    sel = WindowSelection(start=int(starts[best]), length_hours=length_hours)
    for i, b in enumerate(bundles):
        if passing[i, best]:
            sel.retained.add(b.point_id)
        else:
            sel.filtered_out[b.point_id] = "density"
    return sel


def format_timestamp(t: int) -> str:
    return pd.Timestamp(int(t), unit="s", tz="UTC").strftime("%Y-%m-%dT%H:%M:%SZ")


LABELS_HEADER = ["point_id", "tag"]


def load_labels(path: str | Path) -> dict[str, set[str]]:
    """Ground truth ``point_id,tag`` rows (one row per true tag)."""
    df = _read_csv(path, LABELS_HEADER)
    out: dict[str, set[str]] = {}
    for i, row in enumerate(df.itertuples(index=False)):
        pid, tag = row.point_id.strip(), row.tag.strip()
        if not pid or not tag:
            raise IngestError("malformed_row", "empty point_id or tag", i + 2)
        out.setdefault(pid, set()).add(tag)
    return out


@dataclass
class Corpus:
    points: list[PointRecord]
    series: dict[str, SeriesBundle]
    labels: dict[str, set[str]] | None = None

    @property
    def building_ids(self) -> list[str]:
        return sorted({p.building_id for p in self.points})


def load_corpus(directory: str | Path, labels: bool = True) -> Corpus:
    """Load ``points.csv``, ``timeseries.csv`` and (if present) ``labels.csv``."""
    d = Path(directory)
    lab = d / "labels.csv"
    return Corpus(
        load_points(d / "points.csv"),
        load_series(d / "timeseries.csv"),
        load_labels(lab) if labels and lab.exists() else None,
    )


def merge_corpora(corpora) -> Corpus:
    points: list[PointRecord] = []
    series: dict[str, SeriesBundle] = {}
    labels: dict[str, set[str]] = {}
    has_labels = True
    for c in corpora:
        points.extend(c.points)
        series.update(c.series)
        if c.labels is None:
            has_labels = False
        else:
            labels.update(c.labels)
    ids = [p.point_id for p in points]
    if len(set(ids)) != len(ids):
        raise IngestError("duplicate_point", "point ids collide across merged corpora")
    return Corpus(points, series, labels if has_labels else None)
