"""Model bundles, training modes, and the versioned JSON model file.

Three modes: scratch training fits everything on the full reservoir of
labeled rows; supplemental training appends rows, grows a few extra trees on
the new rows only and warm-starts every SVM; execution only applies tags.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ._serial import dec, enc
from .errors import ModelStoreError
from .esc import EscModel, EscOptions, esc_from_dict, esc_to_dict, train_esc
from .features import Scaler, apply_scaler, fit_scaler
from .forest import ForestModel, ForestParams, forest_from_dict, forest_to_dict, grow_trees, tag_matrix, train_forest
from .fusion import FusionConfig, TagReport, prepare_features, run_pipeline
from .ingest import HOUR, WINDOW_HOURS, format_timestamp
from .vocab import TagVocabulary, dump_vocabulary, parse_vocabulary

SCHEMA_VERSION = 1
FORMAT = "uatag-model"


@dataclass(frozen=True)
class ReservoirRow:
    point_id: str
    building_id: str
    raw_name: str
    features: np.ndarray
    tags: frozenset[str]
    as_of: int  # end of the window the features came from, UTC seconds

    def canonical(self) -> list:
        return [self.building_id, self.point_id, self.as_of, self.raw_name, sorted(self.tags), enc(self.features)]


@dataclass(frozen=True)
class Reservoir:
    rows: tuple[ReservoirRow, ...] = ()

    def __len__(self) -> int:
        return len(self.rows)

    def extend(self, rows: Sequence[ReservoirRow]) -> "Reservoir":
        return Reservoir(self.rows + tuple(rows))

    @property
    def X(self) -> np.ndarray:
        return np.vstack([r.features for r in self.rows])

    @property
    def Y(self) -> list[set[str]]:
        return [set(r.tags) for r in self.rows]

    @property
    def digest(self) -> str:
        return rows_digest(self.rows)


def rows_digest(rows: Sequence[ReservoirRow]) -> str:
    canon = sorted((r.canonical() for r in rows), key=lambda c: json.dumps(c))
    return hashlib.sha256(json.dumps(canon, separators=(",", ":")).encode()).hexdigest()


@dataclass
class TrainParams:
    scaling: str = "standardization"
    forest: ForestParams = field(default_factory=ForestParams)
    esc: EscOptions = field(default_factory=EscOptions)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    supplemental_trees: int = 20
    tree_cap: int = 150
    warm_iter: int = 2000
    timestamp: str | None = None  # defaults to the newest row's window end


@dataclass(frozen=True)
class ModelBundle:
    schema_version: int
    vocabulary: TagVocabulary
    scaler: Scaler
    forest: ForestModel
    esc: EscModel
    fusion: FusionConfig
    reservoir: Reservoir
    history: tuple[dict, ...]
    params: TrainParams

    @property
    def vocab_fingerprint(self) -> str:
        return self.vocabulary.fingerprint

    @property
    def reservoir_digest(self) -> str:
        return self.reservoir.digest


def rows_from_corpus(corpus, vocab: TagVocabulary) -> list[ReservoirRow]:
    """Featurize every labeled point of a corpus that passes the density filter."""
    if corpus.labels is None:
        raise ModelStoreError("no_labels", "training needs a labels.csv")
    retained, X, _, windows = prepare_features(corpus.points, corpus.series)
    info = {p.point_id: p for p in corpus.points}
    rows = []
    for pid, x in zip(retained, X):
        if pid not in corpus.labels:
            continue
        tags = frozenset(corpus.labels[pid])
        for t in tags:
            if t not in vocab:
                raise ModelStoreError("unknown_tag", f"label {t!r} on {pid!r} is not in the vocabulary")
        p = info[pid]
        rows.append(ReservoirRow(pid, p.building_id, p.raw_name, x, tags, windows[p.building_id] + WINDOW_HOURS * HOUR))
    return rows


def _history_entry(seq: int, mode: str, rows: Sequence[ReservoirRow], params: TrainParams) -> dict:
    stamp = params.timestamp or format_timestamp(max(r.as_of for r in rows))
    return {"seq": seq, "mode": mode, "timestamp": stamp, "data_digest": rows_digest(rows), "rows": len(rows)}


def train_scratch(reservoir: Reservoir, vocab: TagVocabulary, params: TrainParams | None = None) -> ModelBundle:
    params = params or TrainParams()
    if len(reservoir) == 0:
        raise ModelStoreError("empty_reservoir", "no training rows")
    X, Y = reservoir.X, reservoir.Y
    scaler = fit_scaler(X, params.scaling)
    Z = apply_scaler(scaler, X)
    forest = train_forest(Z, Y, vocab, params.forest)
    esc = train_esc(Z, Y, vocab, params.esc)
    history = (_history_entry(0, "scratch", reservoir.rows, params),)
    return ModelBundle(SCHEMA_VERSION, vocab, scaler, forest, esc, params.fusion, reservoir, history, params)


def train_supplemental(
    bundle: ModelBundle, new_rows: Sequence[ReservoirRow], params: TrainParams | None = None
) -> ModelBundle:
    """Update a bundle with new labeled rows; the input bundle is left untouched.

    The scaler is not refitted, so features drifting outside the original
    training range are scaled with stale statistics.
    """
    params = params or bundle.params
    new_rows = tuple(new_rows)
    if not new_rows:
        raise ModelStoreError("empty_rows", "supplemental training needs at least one new row")
    vocab = bundle.vocabulary
    for r in new_rows:
        for t in r.tags:
            if t not in vocab:
                raise ModelStoreError("unknown_tag", f"label {t!r} on {r.point_id!r} is not in the vocabulary")
    reservoir = bundle.reservoir.extend(new_rows)

    Znew = apply_scaler(bundle.scaler, np.vstack([r.features for r in new_rows]))
    Ynew = tag_matrix([set(r.tags) for r in new_rows], vocab.names)
    old = bundle.forest
    fparams = replace(old.params, threads=params.forest.threads)
    grown = grow_trees(Znew, Ynew, fparams, params.supplemental_trees, old.trees_trained)
    trees = (list(old.trees) + grown)[-params.tree_cap :]
    forest = ForestModel(
        trees, old.n_features, list(old.tags), old.vocab_fingerprint, fparams, old.trees_trained + len(grown)
    )

    Z = apply_scaler(bundle.scaler, reservoir.X)
    opts = replace(bundle.esc.options, threads=params.esc.threads)
    esc = train_esc(Z, reservoir.Y, vocab, opts, warm_start=bundle.esc, warm_iter=params.warm_iter)

    history = bundle.history + (_history_entry(len(bundle.history), "supplemental", new_rows, params),)
    return ModelBundle(
        bundle.schema_version, vocab, bundle.scaler, forest, esc, bundle.fusion, reservoir, history,
        copy.deepcopy(bundle.params),
    )


def execute(bundle: ModelBundle, corpus, vocab: TagVocabulary | None = None, cfg: FusionConfig | None = None) -> TagReport:
    """Apply a trained bundle to an unlabeled corpus."""
    return run_pipeline(corpus.points, corpus.series, vocab or bundle.vocabulary, bundle, cfg)


# -- persistence -------------------------------------------------------------


def _scaler_to_dict(s: Scaler) -> dict:
    return {
        "method": s.method,
        "center": enc(s.center) if s.center is not None else None,
        "scale": enc(s.scale) if s.scale is not None else None,
        "constant": s.constant.tolist() if s.constant is not None else None,
        "width": s.n_features,
    }


def _scaler_from_dict(d: dict) -> Scaler:
    return Scaler(
        d["method"],
        dec(d["center"]) if d["center"] is not None else None,
        dec(d["scale"]) if d["scale"] is not None else None,
        np.array(d["constant"], dtype=bool) if d["constant"] is not None else None,
        d["width"],
    )


def _params_to_dict(p: TrainParams) -> dict:
    return {
        "scaling": p.scaling,
        "supplemental_trees": p.supplemental_trees,
        "tree_cap": p.tree_cap,
        "warm_iter": p.warm_iter,
    }


def bundle_to_payload(b: ModelBundle) -> dict:
    return {
        "vocabulary": dump_vocabulary(b.vocabulary),
        "vocab_fingerprint": b.vocab_fingerprint,
        "scaler": _scaler_to_dict(b.scaler),
        "forest": forest_to_dict(b.forest),
        "esc": esc_to_dict(b.esc),
        "fusion": {"tau_low": enc(b.fusion.tau_low), "tau_high": enc(b.fusion.tau_high)},
        "reservoir": {"digest": b.reservoir_digest, "rows": [r.canonical() for r in b.reservoir.rows]},
        "history": list(b.history),
        "params": _params_to_dict(b.params),
    }


def payload_to_bundle(schema_version: int, d: dict) -> ModelBundle:
    vocab = parse_vocabulary(d["vocabulary"])
    if vocab.fingerprint != d["vocab_fingerprint"]:
        raise ModelStoreError("inconsistent", "embedded vocabulary does not match its fingerprint")
    forest = forest_from_dict(d["forest"])
    esc = esc_from_dict(d["esc"])
    if forest.vocab_fingerprint != vocab.fingerprint or esc.vocab_fingerprint != vocab.fingerprint:
        raise ModelStoreError("inconsistent", "component fingerprints disagree")
    rows = tuple(
        ReservoirRow(pid, bid, name, dec(feats), frozenset(tags), as_of)
        for bid, pid, as_of, name, tags, feats in d["reservoir"]["rows"]
    )
    reservoir = Reservoir(rows)
    if reservoir.digest != d["reservoir"]["digest"]:
        raise ModelStoreError("inconsistent", "reservoir digest mismatch")
    fusion = FusionConfig(float(d["fusion"]["tau_low"]), float(d["fusion"]["tau_high"]))
    p = d["params"]
    params = TrainParams(
        scaling=p["scaling"],
        forest=replace(forest.params),
        esc=replace(esc.options),
        fusion=fusion,
        supplemental_trees=p["supplemental_trees"],
        tree_cap=p["tree_cap"],
        warm_iter=p["warm_iter"],
    )
    return ModelBundle(
        schema_version, vocab, _scaler_from_dict(d["scaler"]), forest, esc, fusion, reservoir,
        tuple(d["history"]), params,
    )


def _checksum(schema_version: int, payload: dict) -> str:
    body = json.dumps({"schema_version": schema_version, "payload": payload}, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(body.encode()).hexdigest()


def dumps(bundle: ModelBundle) -> str:
    payload = bundle_to_payload(bundle)
    doc = {
        "format": FORMAT,
        "schema_version": bundle.schema_version,
        "checksum": _checksum(bundle.schema_version, payload),
        "payload": payload,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def loads(text: str) -> ModelBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelStoreError("checksum", f"model file is not valid JSON ({exc.msg}); checksum cannot be verified") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelStoreError("corrupt", "not a uatag model file")
    version = doc.get("schema_version")
    if not isinstance(version, int) or version > SCHEMA_VERSION or version < 1:
        raise ModelStoreError("unsupported_version", f"schema_version {version!r} is not supported (max {SCHEMA_VERSION})")
    payload = doc.get("payload")
    if not isinstance(payload, dict) or doc.get("checksum") != _checksum(version, payload):
        raise ModelStoreError("checksum", "checksum mismatch; the model file is corrupted")
    try:
        return payload_to_bundle(version, payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelStoreError("corrupt", f"malformed payload: {exc}") from exc


def save(bundle: ModelBundle, path: str | Path) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(dumps(bundle))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path: str | Path) -> ModelBundle:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelStoreError("io", f"cannot read {path}: {exc}") from exc
    return loads(text)
