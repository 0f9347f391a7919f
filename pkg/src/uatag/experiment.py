"""Leave-one-building-out comparison of forest, ESC, and the fused pipeline.

Train on every building but one, tag the held-out building, score each
method's applied tags against its labels. Repeat for every building.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evalreport import EvaluationReport, evaluate
from .features import apply_scaler
from .forest import predict_forest
from .esc import predict_esc
from .fusion import FusionConfig, applied_tags, fuse_matrix, prepare_features
from .modelstore import ModelBundle, Reservoir, TrainParams, rows_from_corpus, train_scratch
from .vocab import TagVocabulary


@dataclass
class FoldResult:
    held_out: str
    reports: dict[str, EvaluationReport]
    bundle: ModelBundle | None = None
    esc_probabilities: np.ndarray | None = None
    point_ids: list[str] = field(default_factory=list)

    def f1(self, method: str) -> float:
        return self.reports[method].micro_f1


def predictions(bundle: ModelBundle, Z: np.ndarray, point_ids, vocab: TagVocabulary, cfg: FusionConfig):
    """Applied tag sets per method for already-scaled features ``Z``."""
    pos, _ = predict_forest(bundle.forest, Z, vocab.fingerprint)
    prob = predict_esc(bundle.esc, Z, vocab.fingerprint)
    names = vocab.names
    rf = {pid: {names[j] for j in np.flatnonzero(pos[i])} for i, pid in enumerate(point_ids)}
    half = FusionConfig(0.5, 0.5)
    esc = {pid: applied_tags(a) for pid, a in fuse_matrix(pos, prob, half, vocab, point_ids).items()}
    ua = {pid: applied_tags(a) for pid, a in fuse_matrix(pos, prob, cfg, vocab, point_ids).items()}
    return {"rf": rf, "esc": esc, "ua": ua}, prob


def leave_one_building_out(buildings, vocab: TagVocabulary, params: TrainParams | None = None,
                           keep_bundles: bool = False) -> list[FoldResult]:
    """``buildings`` are Corpus-like objects (or synthgen Buildings) with labels."""
    params = params or TrainParams()
    corpora = [b.corpus() if hasattr(b, "corpus") else b for b in buildings]
    ids = [c.building_ids[0] for c in corpora]
    rows = {bid: rows_from_corpus(c, vocab) for bid, c in zip(ids, corpora)}
    feats = {bid: prepare_features(c.points, c.series) for bid, c in zip(ids, corpora)}
    results = []
    for held, corpus in zip(ids, corpora):
        train_rows = [r for bid in ids if bid != held for r in rows[bid]]
        bundle = train_scratch(Reservoir(tuple(train_rows)), vocab, params)
        retained, X, _, _ = feats[held]
        Z = apply_scaler(bundle.scaler, X)
        preds, prob = predictions(bundle, Z, retained, vocab, params.fusion)
        truth = {pid: corpus.labels[pid] for pid in retained}
        reports = {m: evaluate(p, truth, vocab) for m, p in preds.items()}
        results.append(FoldResult(held, reports, bundle if keep_bundles else None, prob, retained))
    return results


def summarize(results: list[FoldResult]) -> dict[str, float]:
    return {m: float(np.mean([r.f1(m) for r in results])) for m in ("rf", "esc", "ua")}
