import json
from dataclasses import replace

import numpy as np
import pytest

from uatag.errors import ModelStoreError
from uatag.evalreport import evaluate
from uatag.forest import ForestParams
from uatag.modelstore import (
    SCHEMA_VERSION,
    Reservoir,
    ReservoirRow,
    TrainParams,
    _checksum,
    dumps,
    execute,
    load,
    loads,
    rows_from_corpus,
    save,
    train_scratch,
    train_supplemental,
)


def test_round_trip_identical_tagged_csv(trained, fleet, tmp_path):
    path = tmp_path / "m.json"
    save(trained, path)
    back = load(path)
    held = fleet[2].corpus()
    assert execute(trained, held).to_csv(verbose=True) == execute(back, held).to_csv(verbose=True)
    assert dumps(back) == dumps(trained)
    assert back.scaler.n_features == trained.scaler.n_features
    assert not list(tmp_path.glob("*.tmp"))


def test_truncated_and_tampered_files(trained, tmp_path):
    text = dumps(trained)
    with pytest.raises(ModelStoreError) as e:
        loads(text[: len(text) // 2])
    assert e.value.kind == "checksum"
    doc = json.loads(text)
    doc["payload"]["fusion"]["tau_low"] = "0.2"
    with pytest.raises(ModelStoreError) as e:
        loads(json.dumps(doc))
    assert e.value.kind == "checksum"
    with pytest.raises(ModelStoreError) as e:
        loads('{"format": "other"}')
    assert e.value.kind == "corrupt"
    with pytest.raises(ModelStoreError) as e:
        load(tmp_path / "missing.json")
    assert e.value.kind == "io"


def test_future_schema_version(trained):
    doc = json.loads(dumps(trained))
    doc["schema_version"] = SCHEMA_VERSION + 1
    doc["checksum"] = _checksum(SCHEMA_VERSION + 1, doc["payload"])
    with pytest.raises(ModelStoreError) as e:
        loads(json.dumps(doc))
    assert e.value.kind == "unsupported_version"


def test_history_and_determinism(trained, fleet, vocab):
    assert [h["mode"] for h in trained.history] == ["scratch"]
    assert trained.history[0]["rows"] == len(trained.reservoir)
    rows = [r for b in fleet[:2] for r in rows_from_corpus(b.corpus(), vocab)]
    again = train_scratch(Reservoir(tuple(rows)), vocab)
    assert dumps(again) == dumps(trained)


def test_empty_inputs(trained, vocab):
    with pytest.raises(ModelStoreError) as e:
        train_scratch(Reservoir(), vocab)
    assert e.value.kind == "empty_reservoir"
    with pytest.raises(ModelStoreError) as e:
        train_supplemental(trained, [])
    assert e.value.kind == "empty_rows"


def test_memorizable_reservoir(small_vocab):
    rng = np.random.default_rng(0)
    tags = [{"sensor", "temp"}, {"sp", "cool"}, {"cmd"}, {"sp", "heat"}]
    rows = []
    for i in range(24):
        x = rng.normal(scale=0.05, size=40) + 3 * (i % 4)
        rows.append(ReservoirRow(f"p{i}", "B", f"N{i}", x, frozenset(tags[i % 4]), 0))
    b = train_scratch(Reservoir(tuple(rows)), small_vocab, TrainParams(forest=ForestParams(n_trees=20)))
    from uatag.experiment import predictions
    from uatag.features import apply_scaler

    Z = apply_scaler(b.scaler, np.vstack([r.features for r in rows]))
    preds, _ = predictions(b, Z, [r.point_id for r in rows], small_vocab, b.fusion)
    truth = {r.point_id: set(r.tags) for r in rows}
    for m in ("rf", "ua"):
        assert evaluate(preds[m], truth, small_vocab).micro_f1 == 1.0


def _ua_f1(bundle, corpus):
    rep = execute(bundle, corpus)
    return evaluate(rep.applied(), {p: corpus.labels[p] for p in rep.assignments}).micro_f1


def test_supplemental_regression_and_cap(fleet, vocab):
    a_rows = rows_from_corpus(fleet[0].corpus(), vocab)
    b_rows = rows_from_corpus(fleet[1].corpus(), vocab)
    params = TrainParams(forest=ForestParams(n_trees=40), supplemental_trees=15, tree_cap=50)
    base = train_scratch(Reservoir(tuple(a_rows)), vocab, params)
    before = _ua_f1(base, fleet[0].corpus())
    up = train_supplemental(base, b_rows)
    after = _ua_f1(up, fleet[0].corpus())
    assert after >= before - 0.05
    assert len(up.forest.trees) == 50
    assert len(base.forest.trees) == 40  # input untouched
    up2 = train_supplemental(up, b_rows[:5])
    assert len(up2.forest.trees) <= 50
    assert [h["mode"] for h in up2.history] == ["scratch", "supplemental", "supplemental"]
    assert len(up2.reservoir) == len(a_rows) + len(b_rows) + 5
    back = loads(dumps(up2))
    assert back.history == up2.history


def test_unlabeled_corpus_and_fingerprint(trained, fleet, small_vocab):
    c = replace(fleet[2].corpus(), labels=None)
    assert execute(trained, c).assignments
    from uatag.errors import FusionError

    with pytest.raises(FusionError):
        execute(trained, c, small_vocab)
    with pytest.raises(ModelStoreError) as e:
        rows_from_corpus(c, trained.vocabulary)
    assert e.value.kind == "no_labels"
