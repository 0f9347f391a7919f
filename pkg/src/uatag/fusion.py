"""Threshold fusion of forest votes and ESC probabilities, and the full pipeline."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import FusionError
from .esc import predict_esc
from .features import N_FEATURES, apply_scaler, featurize
from .forest import predict_forest
from .ingest import IngestError, SeriesBundle, select_window
from .vocab import TagVocabulary, exclusion_group_of

log = logging.getLogger(__name__)

APPLIED = "applied"
BELOW_THRESHOLD = "suppressed_by_threshold"
EXCLUDED = "suppressed_by_exclusion"

TAGGED_HEADER = ["point_id", "tag", "probability", "rf_positive", "stage"]


@dataclass(frozen=True)
class FusionConfig:
    tau_low: float = 0.15
    tau_high: float = 0.70

    def __post_init__(self):
        if not (0.0 <= self.tau_low <= self.tau_high <= 1.0):
            raise FusionError("bad_config", f"need 0 <= tau_low <= tau_high <= 1, got {self.tau_low}, {self.tau_high}")

    def threshold(self, rf_positive: bool) -> float:
        return self.tau_low if rf_positive else self.tau_high


@dataclass(frozen=True)
class TagAssignment:
    point_id: str
    tag: str
    probability: float
    rf_positive: bool
    stage: str


def fuse(
    rf: Mapping[str, bool],
    esc: Mapping[str, float],
    cfg: FusionConfig,
    vocab: TagVocabulary,
    point_id: str = "",
) -> list[TagAssignment]:
    """Decide every tag of one point.

    A tag passes when its ESC probability reaches ``tau_low`` (forest says
    yes) or ``tau_high`` (forest says no). Within an exclusion group only the
    most probable passing tag survives; ties go to the smaller tag name.
    """
    if set(rf) != set(esc) or set(rf) != set(vocab.names):
        raise FusionError("tag_mismatch", "forest, ESC and vocabulary tag universes differ")
    passing = {t: esc[t] >= cfg.threshold(bool(rf[t])) for t in vocab.names}

    winners: dict[str, str] = {}
    for t in vocab.names:
        g = exclusion_group_of(vocab, t)
        if g is None or not passing[t]:
            continue
        cur = winners.get(g.id)
        if cur is None or esc[t] > esc[cur] or (esc[t] == esc[cur] and t < cur):
            winners[g.id] = t

    out = []
    for t in vocab.names:
        if not passing[t]:
            stage = BELOW_THRESHOLD
        else:
            g = exclusion_group_of(vocab, t)
            stage = APPLIED if g is None or winners[g.id] == t else EXCLUDED
        out.append(TagAssignment(point_id, t, float(esc[t]), bool(rf[t]), stage))
    return out


def applied_tags(assignments) -> set[str]:
    return {a.tag for a in assignments if a.stage == APPLIED}


@dataclass
class TagReport:
    """Per-point fused assignments plus points skipped before classification."""

    assignments: dict[str, list[TagAssignment]] = field(default_factory=dict)
    filtered: dict[str, str] = field(default_factory=dict)
    windows: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def applied(self) -> dict[str, set[str]]:
        return {pid: applied_tags(a) for pid, a in sorted(self.assignments.items())}

    def to_csv(self, verbose: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TAGGED_HEADER)
        for pid in sorted(self.assignments):
            for a in self.assignments[pid]:
                if verbose or a.stage == APPLIED:
                    w.writerow([pid, a.tag, repr(a.probability), "true" if a.rf_positive else "false", a.stage])
        return buf.getvalue()

    def filtered_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["point_id", "reason"])
        for pid in sorted(self.filtered):
            w.writerow([pid, self.filtered[pid]])
        return buf.getvalue()


def fuse_matrix(pos: np.ndarray, prob: np.ndarray, cfg: FusionConfig, vocab: TagVocabulary, point_ids) -> dict:
    names = vocab.names
    out = {}
    for i, pid in enumerate(point_ids):
        rf = dict(zip(names, pos[i].tolist()))
        esc = dict(zip(names, prob[i].tolist()))
        out[pid] = fuse(rf, esc, cfg, vocab, pid)
    return out


def prepare_features(points, series) -> tuple[list[str], np.ndarray, dict[str, str], dict[str, int]]:
    """Per building: choose the window, drop sparse points, featurize the rest.

    Returns retained point ids (sorted), their raw feature matrix, the
    filtered points with reasons, and each building's window start.
    """
    by_building: dict[str, list[str]] = {}
    for p in points:
        by_building.setdefault(p.building_id, []).append(p.point_id)
    filtered: dict[str, str] = {}
    windows: dict[str, int] = {}
    rows: dict[str, np.ndarray] = {}
    for bid in sorted(by_building):
        bundles = {pid: series.get(pid, SeriesBundle(pid, [], [])) for pid in by_building[bid]}
        try:
            sel = select_window(bundles)
        except IngestError:
            filtered.update({pid: "no_data" for pid in bundles})
            continue
        windows[bid] = sel.start
        for pid, b in bundles.items():
            if pid in sel.retained:
                rows[pid] = featurize(b, sel.start, sel.length_hours).values
            else:
                filtered[pid] = "no_data" if len(b) == 0 else sel.filtered_out.get(pid, "density")
    retained = sorted(rows)
    X = np.vstack([rows[pid] for pid in retained]) if retained else np.empty((0, N_FEATURES))
    return retained, X, filtered, windows


def run_pipeline(points, series, vocab: TagVocabulary, model, cfg: FusionConfig | None = None) -> TagReport:
    """Window selection, density filter, featurize, scale, classify, fuse.

    ``points`` is a list of PointRecord, ``series`` maps point_id to
    SeriesBundle and ``model`` is a ModelBundle.
    """
    if model.vocab_fingerprint != vocab.fingerprint:
        raise FusionError("fingerprint_mismatch", "model was trained with a different tag vocabulary")
    cfg = cfg or model.fusion
    retained, X, filtered, windows = prepare_features(points, series)
    report = TagReport(filtered=filtered, windows=windows)
    if not retained:
        msg = "no point passed the density filter; nothing tagged"
        log.warning(msg)
        report.warnings.append(msg)
        return report
    Z = apply_scaler(model.scaler, X)
    pos, _ = predict_forest(model.forest, Z, vocab.fingerprint)
    prob = predict_esc(model.esc, Z, vocab.fingerprint)
    report.assignments = fuse_matrix(pos, prob, cfg, vocab, retained)
    return report
