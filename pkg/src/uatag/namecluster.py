"""Order-preserving k-mer similarity of raw point names, agglomerative
clustering, and tag-outlier scores for human review.

Two names are compared through their ordered k-mer lists. Every pair of
matching k-mers at 1-based positions ``i`` and ``j`` contributes
``1 - |i - j| / max(N, M)``; the raw similarity is the sum of all
contributions. Clustering uses the geometric-mean normalized similarity so
one threshold serves names of any length.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ClusterError

DEFAULT_K = 4
DEFAULT_THRESHOLD = 0.45
DEFAULT_FLAG_THRESHOLD = 0.2
TIE_EPS = 1e-12


@dataclass(frozen=True)
class KmerSequence:
    point_id: str
    kmers: tuple[str, ...]
    k: int

    @property
    def N(self) -> int:
        return len(self.kmers)


@dataclass(frozen=True)
class Cluster:
    id: int
    members: tuple[str, ...]
    mean_similarity: float


@dataclass(frozen=True)
class OutlierRecord:
    cluster_id: int
    point_id: str
    outlier_score: float
    flagged: bool


def kmerize(raw_name: str, k: int = DEFAULT_K, point_id: str = "") -> KmerSequence:
    if k < 1:
        raise ClusterError("bad_k", f"k must be >= 1, got {k}")
    s = raw_name.strip().upper()
    if len(s) < k:
        return KmerSequence(point_id, (s,), k)
    return KmerSequence(point_id, tuple(s[i : i + k] for i in range(len(s) - k + 1)), k)


def raw_similarity(a: KmerSequence, b: KmerSequence) -> float:
    if a.k != b.k:
        raise ClusterError("k_mismatch", f"cannot compare k={a.k} with k={b.k}")
    where: dict[str, list[int]] = {}
    for j, km in enumerate(b.kmers):
        where.setdefault(km, []).append(j)
    denom = max(a.N, b.N)
    # fsum is correctly rounded, so the result does not depend on argument order
    return math.fsum(1.0 - abs(i - j) / denom for i, km in enumerate(a.kmers) for j in where.get(km, ()))


def normalized_similarity(a: KmerSequence, b: KmerSequence) -> float:
    saa, sbb = raw_similarity(a, a), raw_similarity(b, b)
    if saa <= 0 or sbb <= 0:
        raise ClusterError("degenerate", "self-similarity must be positive")
    return min(1.0, max(0.0, raw_similarity(a, b) / math.sqrt(saa * sbb)))


def similarity_matrix(seqs: Sequence[KmerSequence]) -> np.ndarray:
    n = len(seqs)
    raw = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            raw[i, j] = raw[j, i] = raw_similarity(seqs[i], seqs[j])
    d = np.diag(raw)
    # sqrt of the product, not product of sqrts, to match normalized_similarity bit for bit
    S = np.clip(raw / np.sqrt(np.outer(d, d)), 0.0, 1.0)
    np.fill_diagonal(S, 1.0)
    return S


def agglomerate(S: np.ndarray, ids: Sequence[str], threshold: float) -> list[list[int]]:
    """Average-linkage agglomeration on a similarity matrix.

    Returns member index lists. Merges stop once the best average similarity
    falls below ``threshold``; near-equal candidates (within ``TIE_EPS``) are
    resolved by the smallest pair of lowest member ids.
    """
    clusters: list[list[int]] = [[i] for i in range(len(ids))]
    key = [ids[i] for i in range(len(ids))]
    sums = S.copy()
    active = list(range(len(ids)))
    while len(active) > 1:
        best_val, best_pair = -np.inf, None
        cands = []
        for x in range(len(active)):
            a = active[x]
            for y in range(x + 1, len(active)):
                b = active[y]
                v = sums[a, b] / (len(clusters[a]) * len(clusters[b]))
                cands.append((v, a, b))
                if v > best_val:
                    best_val = v
        if best_val < threshold:
            break
        tied = [(tuple(sorted((key[a], key[b]))), a, b) for v, a, b in cands if v >= best_val - TIE_EPS]
        _, a, b = min(tied)
        clusters[a] = clusters[a] + clusters[b]
        clusters[b] = []
        key[a] = min(key[a], key[b])
        sums[a, :] += sums[b, :]
        sums[:, a] += sums[:, b]
        active.remove(b)
    return [sorted(clusters[a]) for a in active]


def cluster_names(
    sequences: Sequence[KmerSequence], threshold: float = DEFAULT_THRESHOLD
) -> list[Cluster]:
    """Cluster k-mer sequences; clusters are ordered by their smallest point_id."""
    if not sequences:
        raise ClusterError("empty", "need at least one name")
    if not (0.0 < threshold <= 1.0):
        raise ClusterError("bad_threshold", f"threshold must be in (0, 1], got {threshold}")
    ids = [s.point_id for s in sequences]
    S = similarity_matrix(sequences)
    groups = agglomerate(S, ids, threshold)
    groups = sorted((sorted(g, key=lambda i: ids[i]) for g in groups), key=lambda g: ids[g[0]])
    out = []
    for cid, g in enumerate(groups):
        if len(g) > 1:
            sub = S[np.ix_(g, g)]
            mean = float((sub.sum() - len(g)) / (len(g) * (len(g) - 1)))
        else:
            mean = 1.0
        out.append(Cluster(cid, tuple(ids[i] for i in g), mean))
    return out


def clustered_order(clusters: Sequence[Cluster]) -> list[str]:
    return [pid for c in clusters for pid in c.members]


def jaccard_distance(a: set, b: set) -> float:
    union = a | b
    if not union:
        return 0.0
    return 1.0 - len(a & b) / len(union)


def outlier_scores(
    clusters: Sequence[Cluster],
    tags: Mapping[str, set],
    flag_threshold: float = DEFAULT_FLAG_THRESHOLD,
) -> list[OutlierRecord]:
    """Mean Jaccard distance from each member's tags to its cluster peers'."""
    out = []
    for c in clusters:
        for p in c.members:
            if p not in tags:
                raise ClusterError("unknown_point", f"point {p!r} has no tag set")
        for p in c.members:
            if len(c.members) < 2:
                out.append(OutlierRecord(c.id, p, 0.0, False))
                continue
            d = [jaccard_distance(set(tags[p]), set(tags[q])) for q in c.members if q != p]
            score = sum(d) / len(d)
            out.append(OutlierRecord(c.id, p, score, score >= flag_threshold))
    return out


def outliers_csv(records: Sequence[OutlierRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cluster_id", "point_id", "outlier_score", "flagged"])
    for r in records:
        w.writerow([r.cluster_id, r.point_id, repr(r.outlier_score), "true" if r.flagged else "false"])
    return buf.getvalue()


def clusters_csv(clusters: Sequence[Cluster], names: Mapping[str, str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cluster_id", "point_id", "raw_name", "mean_similarity"])
    for c in clusters:
        for p in c.members:
            w.writerow([c.id, p, names.get(p, ""), repr(c.mean_similarity)])
    return buf.getvalue()


def matrix_csv(S: np.ndarray, order: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point_id", *order])
    for i, p in enumerate(order):
        w.writerow([p, *(repr(float(v)) for v in S[i])])
    return buf.getvalue()
