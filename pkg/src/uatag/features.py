"""Fixed-length encodings of a point's windowed time-series.

Layout (40 features): for each source in (value, gradient), each hourly
statistic in (mean, median, min, max, var), each aggregate over hours in
(min, max, mean, median). Gradients are differences of consecutive samples
inside the same hour divided by the elapsed seconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .errors import FeatureError
from .ingest import HOUR, WINDOW_HOURS, SeriesBundle

SOURCES = ("value", "gradient")
HOURLY_STATS = ("mean", "median", "min", "max", "var")
AGGREGATES = ("min", "max", "mean", "median")
FEATURE_NAMES = tuple(f"{src}_{st}__{agg}" for src, st, agg in product(SOURCES, HOURLY_STATS, AGGREGATES))
N_FEATURES = len(FEATURE_NAMES)

SCALING_METHODS = ("normalization", "standardization", "minmax")


@dataclass(frozen=True)
class FeatureVector:
    point_id: str
    values: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES


def group_stats(keys: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-key (mean, median, min, max, population var) for nondecreasing ``keys``.

    Returns the unique keys and a ``(n_keys, 5)`` array.
    """
    if len(x) == 0:
        return np.empty(0, dtype=keys.dtype), np.empty((0, 5))
    order = np.lexsort((x, keys))
    k, xs = keys[order], x[order]
    starts = np.flatnonzero(np.concatenate([[True], k[1:] != k[:-1]]))
    counts = np.diff(np.concatenate([starts, [len(xs)]]))
    mean = np.add.reduceat(xs, starts) / counts
    dev = xs - np.repeat(mean, counts)
    var = np.add.reduceat(dev * dev, starts) / counts
    lo = starts + (counts - 1) // 2
    hi = starts + counts // 2
    median = (xs[lo] + xs[hi]) / 2.0
    return k[starts], np.column_stack([mean, median, xs[starts], xs[starts + counts - 1], var])


def _aggregate(hourly: np.ndarray) -> np.ndarray:
    # hourly: (n_hours_present, 5) -> 5 stats x 4 aggregates, stat-major
    if hourly.shape[0] == 0:
        return np.zeros(len(HOURLY_STATS) * len(AGGREGATES))
    agg = np.stack(
        [hourly.min(axis=0), hourly.max(axis=0), hourly.mean(axis=0), np.median(hourly, axis=0)], axis=1
    )
    return agg.reshape(-1)


def featurize_arrays(times: np.ndarray, values: np.ndarray, start: int) -> np.ndarray:
    times = np.asarray(times, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if len(times) == 0:
        raise FeatureError("empty_window", "no samples inside the window")
    hour = (times - start) // HOUR
    _, value_stats = group_stats(hour, values)

    same_hour = hour[1:] == hour[:-1]
    grad = np.diff(values)[same_hour] / np.diff(times)[same_hour].astype(np.float64)
    _, grad_stats = group_stats(hour[1:][same_hour], grad)
    return np.concatenate([_aggregate(value_stats), _aggregate(grad_stats)])


def featurize(bundle: SeriesBundle, start: int, length_hours: int = WINDOW_HOURS) -> FeatureVector:
    t, v = bundle.in_window(start, length_hours)
    if len(t) == 0:
        raise FeatureError("empty_window", f"point {bundle.point_id} has no samples inside the window")
    return FeatureVector(bundle.point_id, featurize_arrays(t, v, start))


def feature_matrix(vectors: Sequence[FeatureVector]) -> np.ndarray:
    if not vectors:
        return np.empty((0, N_FEATURES))
    return np.vstack([v.values for v in vectors])


@dataclass(frozen=True)
class Scaler:
    method: str
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    constant: np.ndarray | None = None
    width: int | None = None

    @property
    def n_features(self) -> int | None:
        return self.width if self.center is None else len(self.center)


def _is_const(spread: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return spread <= 1e-12 * np.maximum(1.0, np.abs(ref))


def fit_scaler(vectors: Iterable[FeatureVector] | np.ndarray, method: str = "standardization") -> Scaler:
    X = vectors if isinstance(vectors, np.ndarray) else feature_matrix(list(vectors))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if method not in SCALING_METHODS:
        raise FeatureError("bad_method", f"unknown scaling method {method!r}")
    if X.shape[0] < 1:
        raise FeatureError("empty", "cannot fit a scaler on zero vectors")
    if method == "normalization":
        return Scaler(method, width=X.shape[1])
    if method == "standardization":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        const = _is_const(std, mean)
        return Scaler(method, mean, np.where(const, 1.0, std), const)
    lo, hi = X.min(axis=0), X.max(axis=0)
    const = _is_const(hi - lo, lo)
    return Scaler(method, lo, np.where(const, 1.0, hi - lo), const)


def apply_scaler(scaler: Scaler, X, method: str | None = None):
    """Scale a FeatureVector or an ``(n, d)`` matrix.

    ``method``, when given, must match the fitted scaler's method.
    """
    if method is not None and method != scaler.method:
        raise FeatureError("method_mismatch", f"scaler was fitted with {scaler.method!r}, not {method!r}")
    if isinstance(X, FeatureVector):
        return FeatureVector(X.point_id, apply_scaler(scaler, X.values[None, :])[0], X.names)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if scaler.n_features is not None and X.shape[1] != scaler.n_features:
        raise FeatureError("dimension_mismatch", f"expected {scaler.n_features} features, got {X.shape[1]}")
    if scaler.method == "normalization":
        norm = np.linalg.norm(X, axis=1, keepdims=True)
        return X / np.where(norm == 0, 1.0, norm)
    Z = (X - scaler.center) / scaler.scale
    Z[:, scaler.constant] = 0.0
    if scaler.method == "minmax":
        Z = np.clip(Z, 0.0, 1.0)
    return Z
