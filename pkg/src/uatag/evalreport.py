"""Tagging quality: per-tag and pooled TP/FP/FN, F1, and proportions.

True negatives are deliberately not counted. Rates are relative to the
total number of ground-truth tags, so ``tp_rate + fn_rate == 1``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

from .errors import EvaluationError
from .vocab import TagVocabulary

log = logging.getLogger(__name__)


def f1_score(tp: int, fp: int, fn: int) -> float:
    if tp == fp == fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


@dataclass
class TagCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def f1(self) -> float:
        return f1_score(self.tp, self.fp, self.fn)


@dataclass
class EvaluationReport:
    per_tag: dict[str, TagCounts]
    tp: int
    fp: int
    fn: int
    excluded_points: list[str] = field(default_factory=list)

    @property
    def micro_f1(self) -> float:
        return f1_score(self.tp, self.fp, self.fn)

    @property
    def n_true(self) -> int:
        return self.tp + self.fn

    def proportions(self) -> dict[str, float]:
        n = self.n_true
        if n == 0:
            return {"tp_rate": 0.0, "fp_rate": 0.0, "fn_rate": 0.0}
        return {"tp_rate": self.tp / n, "fp_rate": self.fp / n, "fn_rate": self.fn / n}

    def to_dict(self) -> dict:
        return {
            "aggregate": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "micro_f1": self.micro_f1},
            "proportions": self.proportions(),
            "per_tag": {
                t: {"tp": c.tp, "fp": c.fp, "fn": c.fn, "f1": c.f1, "support": c.support}
                for t, c in sorted(self.per_tag.items())
            },
            "excluded_points": sorted(self.excluded_points),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tag", "tp", "fp", "fn", "f1", "support"])
        for t, c in sorted(self.per_tag.items()):
            w.writerow([t, c.tp, c.fp, c.fn, repr(c.f1), c.support])
        w.writerow(["__micro__", self.tp, self.fp, self.fn, repr(self.micro_f1), self.n_true])
        return buf.getvalue()


def evaluate(
    predicted: Mapping[str, set],
    truth: Mapping[str, set],
    vocab: TagVocabulary | None = None,
) -> EvaluationReport:
    """Compare predicted and true tag sets point by point.

    Points predicted but missing from ``truth`` are excluded and listed in
    the report. Truth points missing from ``predicted`` count as untagged.
    """
    if predicted and truth and not set(predicted) & set(truth):
        raise EvaluationError("disjoint_points", "predicted and truth share no point ids")
    excluded = sorted(set(predicted) - set(truth))
    if excluded:
        log.warning("%d predicted point(s) have no ground truth and are excluded", len(excluded))
    names = vocab.names if vocab is not None else sorted({t for s in truth.values() for t in s}
                                                         | {t for s in predicted.values() for t in s})
    per_tag = {t: TagCounts() for t in names}
    for pid, true_tags in truth.items():
        pred = set(predicted.get(pid, ()))
        true_tags = set(true_tags)
        for t in pred | true_tags:
            if t not in per_tag:
                raise EvaluationError("unknown_tag", f"tag {t!r} on point {pid!r} is not in the vocabulary")
        for t in pred & true_tags:
            per_tag[t].tp += 1
        for t in pred - true_tags:
            per_tag[t].fp += 1
        for t in true_tags - pred:
            per_tag[t].fn += 1
    tp = sum(c.tp for c in per_tag.values())
    fp = sum(c.fp for c in per_tag.values())
    fn = sum(c.fn for c in per_tag.values())
    return EvaluationReport(per_tag, tp, fp, fn, excluded)


def tag_frequency_profile(truth: Mapping[str, set], vocab: TagVocabulary | None = None) -> dict[str, int]:
    counts = Counter(t for tags in truth.values() for t in tags)
    if vocab is None:
        return dict(sorted(counts.items()))
    return {t: counts.get(t, 0) for t in vocab.names}
