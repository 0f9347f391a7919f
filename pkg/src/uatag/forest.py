"""Multi-label random forest.

Each tree is a single multi-output CART tree: a split is chosen to maximize
the Gini impurity reduction averaged over all tags, and every leaf stores
the fraction of its training rows carrying each tag.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._serial import dec, enc
from .errors import ForestError

LEAF = -1


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    max_features: int | None = None  # floor(sqrt(d)) when None
    threshold: float = 0.5
    seed: int = 42
    threads: int = 1


@dataclass
class DecisionTree:
    feature: np.ndarray  # int, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_tags) positive fractions

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            active = f != LEAF
            if not active.any():
                return node
            r, n = rows[active], node[active]
            go_left = X[r, f[active]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    n_features: int
    tags: list[str]
    vocab_fingerprint: str
    params: ForestParams = field(default_factory=ForestParams)
    trees_trained: int = 0  # total ever grown; seeds new trees in supplemental mode

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _best_split(X, Y, idx, features, min_leaf):
    """Return (gain, feature, threshold) of the best split of rows ``idx``."""
    n = len(idx)
    Yn = Y[idx]
    p = Yn.mean(axis=0)
    parent = np.mean(2.0 * p * (1.0 - p))
    best = (0.0, None, None)
    total = Yn.sum(axis=0)
    sizes_left = np.arange(1, n)
    sizes_right = n - sizes_left
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        cum = np.cumsum(Yn[order], axis=0)[:-1]
        valid = (xs[:-1] < xs[1:]) & (sizes_left >= min_leaf) & (sizes_right >= min_leaf)
        if not valid.any():
            continue
        pl = cum / sizes_left[:, None]
        pr = (total - cum) / sizes_right[:, None]
        child = (sizes_left[:, None] * 2.0 * pl * (1.0 - pl) + sizes_right[:, None] * 2.0 * pr * (1.0 - pr)) / n
        gain = parent - child.mean(axis=1)
        gain[~valid] = -np.inf
        i = int(np.argmax(gain))
        if gain[i] > best[0] + 1e-15:
            thr = (xs[i] + xs[i + 1]) / 2.0
            if not thr < xs[i + 1]:
                thr = xs[i]
            best = (float(gain[i]), int(f), float(thr))
    return best


def grow_tree(X: np.ndarray, Y: np.ndarray, rng: np.random.Generator, params: ForestParams) -> DecisionTree:
    """Grow one tree on rows of ``X``/``Y`` (already resampled by the caller)."""
    d = X.shape[1]
    m = params.max_features or max(1, math.isqrt(d))
    m = min(m, d)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(Y[idx].mean(axis=0))
        return len(feature) - 1

    root = new_node(np.arange(len(X)))
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        frac = value[node]
        pure = np.all((frac == 0.0) | (frac == 1.0))
        if pure or depth >= params.max_depth or len(idx) < 2 * params.min_leaf:
            continue
        feats = np.sort(rng.choice(d, size=m, replace=False))
        gain, f, thr = _best_split(X, Y, idx, feats, params.min_leaf)
        if f is None:
            continue
        mask = X[idx, f] <= thr
        li = new_node(idx[mask])
        ri = new_node(idx[~mask])
        feature[node], threshold[node], left[node], right[node] = f, thr, li, ri
        stack.append((ri, idx[~mask], depth + 1))
        stack.append((li, idx[mask], depth + 1))
    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.vstack(value),
    )


def tag_matrix(Y, tags: list[str]) -> np.ndarray:
    """Binary ``(n, n_tags)`` indicator from per-point tag sets."""
    pos = {t: j for j, t in enumerate(tags)}
    out = np.zeros((len(Y), len(tags)), dtype=np.float64)
    for i, ts in enumerate(Y):
        for t in ts:
            if t not in pos:
                raise ForestError("unknown_tag", f"label {t!r} is outside the vocabulary")
            out[i, pos[t]] = 1.0
    return out


def _grow_seeded(X, Yb, seed, stream, params):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))
    boot = rng.integers(0, len(X), size=len(X))
    return grow_tree(X[boot], Yb[boot], rng, params)


def grow_trees(X, Yb, params: ForestParams, n: int, first_stream: int) -> list[DecisionTree]:
    streams = range(first_stream, first_stream + n)
    if params.threads > 1:
        with ThreadPoolExecutor(params.threads) as ex:
            return list(ex.map(lambda s: _grow_seeded(X, Yb, params.seed, s, params), streams))
    return [_grow_seeded(X, Yb, params.seed, s, params) for s in streams]


def train_forest(X, Y, vocab, params: ForestParams | None = None) -> ForestModel:
    """Train on feature matrix ``X`` and per-point tag sets ``Y``."""
    params = params or ForestParams()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(Y) == 0 or X.shape[0] == 0:
        raise ForestError("empty", "empty training set")
    if X.shape[0] != len(Y):
        raise ForestError("shape", f"{X.shape[0]} feature rows but {len(Y)} label sets")
    if params.n_trees < 1:
        raise ForestError("params", "n_trees must be >= 1")
    Yb = tag_matrix(Y, vocab.names)
    trees = grow_trees(X, Yb, params, params.n_trees, 0)
    return ForestModel(trees, X.shape[1], vocab.names, vocab.fingerprint, params, params.n_trees)


def vote_fractions(model: ForestModel, X: np.ndarray, fingerprint: str | None = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if fingerprint is not None and fingerprint != model.vocab_fingerprint:
        raise ForestError("fingerprint_mismatch", "vocabulary differs from the one the forest was trained on")
    if X.shape[1] != model.n_features:
        raise ForestError("dimension_mismatch", f"expected {model.n_features} features, got {X.shape[1]}")
    acc = np.zeros((X.shape[0], len(model.tags)))
    for tree in model.trees:
        acc += tree.predict(X)
    return acc / model.n_trees


def predict_forest(model: ForestModel, x, fingerprint: str | None = None):
    """Per-tag boolean and vote fraction for one vector or a matrix of them."""
    single = np.ndim(getattr(x, "values", x)) == 1
    X = getattr(x, "values", x)
    frac = vote_fractions(model, X, fingerprint)
    positive = frac >= model.params.threshold
    if single:
        return positive[0], frac[0]
    return positive, frac


def forest_to_dict(model: ForestModel) -> dict:
    trees = []
    for t in model.trees:
        leaves = np.flatnonzero(t.feature == LEAF)
        trees.append(
            {
                "feature": t.feature.tolist(),
                "threshold": enc(t.threshold),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "leaf_values": enc(t.value[leaves]),
            }
        )
    p = model.params
    return {
        "n_features": model.n_features,
        "tags": list(model.tags),
        "vocab_fingerprint": model.vocab_fingerprint,
        "trees_trained": model.trees_trained,
        "params": {
            "n_trees": p.n_trees,
            "max_depth": p.max_depth,
            "min_leaf": p.min_leaf,
            "max_features": p.max_features,
            "threshold": enc(p.threshold),
            "seed": p.seed,
        },
        "trees": trees,
    }


def forest_from_dict(d: dict) -> ForestModel:
    n_tags = len(d["tags"])
    trees = []
    for t in d["trees"]:
        feature = np.array(t["feature"], dtype=np.int64)
        value = np.zeros((len(feature), n_tags))
        leaf_values = dec(t["leaf_values"]).reshape(-1, n_tags)
        value[feature == LEAF] = leaf_values
        trees.append(
            DecisionTree(
                feature,
                dec(t["threshold"]),
                np.array(t["left"], dtype=np.int64),
                np.array(t["right"], dtype=np.int64),
                value,
            )
        )
    pp = dict(d["params"])
    pp["threshold"] = float(pp["threshold"])
    return ForestModel(
        trees, d["n_features"], list(d["tags"]), d["vocab_fingerprint"], ForestParams(**pp), d["trees_trained"]
    )
