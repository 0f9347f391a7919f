import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uatag.errors import FusionError
from uatag.fusion import (
    APPLIED,
    BELOW_THRESHOLD,
    EXCLUDED,
    FusionConfig,
    TagAssignment,
    TagReport,
    applied_tags,
    fuse,
)
from uatag.vocab import violates_exclusion


def stage_of(out, tag):
    return next(a.stage for a in out if a.tag == tag)


def call(vocab, rf=None, esc=None, cfg=FusionConfig()):
    rf = {t: False for t in vocab.names} | (rf or {})
    esc = {t: 0.0 for t in vocab.names} | (esc or {})
    return fuse(rf, esc, cfg, vocab, "p")


def test_rf_conditioned_thresholds(small_vocab):
    assert stage_of(call(small_vocab, {"temp": True}, {"temp": 0.40}), "temp") == APPLIED
    assert stage_of(call(small_vocab, {}, {"temp": 0.40}), "temp") == BELOW_THRESHOLD
    assert stage_of(call(small_vocab, {}, {"temp": 0.72}), "temp") == APPLIED


def test_group_argmax(small_vocab):
    out = call(small_vocab, {}, {"sensor": 0.6, "sp": 0.5}, FusionConfig(0.3, 0.3))
    assert stage_of(out, "sensor") == APPLIED and stage_of(out, "sp") == EXCLUDED


def test_tie_goes_to_smaller_name(small_vocab):
    out = call(small_vocab, {}, {"sensor": 0.8, "sp": 0.8, "cmd": 0.8})
    assert stage_of(out, "cmd") == APPLIED
    assert stage_of(out, "sensor") == EXCLUDED and stage_of(out, "sp") == EXCLUDED


def test_boundary_is_inclusive(small_vocab):
    assert stage_of(call(small_vocab, {"temp": True}, {"temp": 0.15}), "temp") == APPLIED
    assert stage_of(call(small_vocab, {}, {"temp": 0.70}), "temp") == APPLIED


@pytest.mark.parametrize("lo,hi", [(-0.1, 0.5), (0.6, 0.5), (0.2, 1.1)])
def test_bad_config(lo, hi):
    with pytest.raises(FusionError) as e:
        FusionConfig(lo, hi)
    assert e.value.kind == "bad_config"


def test_tag_universe_mismatch(small_vocab):
    with pytest.raises(FusionError):
        fuse({"temp": True}, {"temp": 0.5}, FusionConfig(), small_vocab)


@st.composite
def fusion_inputs(draw, names):
    lo = draw(st.floats(0, 1))
    hi = draw(st.floats(lo, 1))
    rf = {t: draw(st.booleans()) for t in names}
    esc = {t: draw(st.sampled_from([0.0, lo, hi, 0.5, 1.0]) | st.floats(0, 1)) for t in names}
    return rf, esc, FusionConfig(lo, hi)


NAMES = ["sensor", "sp", "cmd", "heat", "cool", "temp"]


@settings(max_examples=300, deadline=None)
@given(fusion_inputs(NAMES), st.sampled_from(NAMES))
def test_fusion_properties(small_vocab, data, flip):
    rf, esc, cfg = data
    out = fuse(rf, esc, cfg, small_vocab)
    applied = applied_tags(out)
    assert not violates_exclusion(small_vocab, applied)
    for a in out:
        if a.stage == APPLIED:
            assert a.probability >= cfg.threshold(a.rf_positive)
    # rf false -> true never turns a passing tag into a failing one
    on = fuse(rf | {flip: True}, esc, cfg, small_vocab)
    assert stage_of(on, flip) != BELOW_THRESHOLD or stage_of(out, flip) == BELOW_THRESHOLD
    # raising a probability never makes that tag fall below threshold
    up = fuse(rf, esc | {flip: min(1.0, esc[flip] + 0.1)}, cfg, small_vocab)
    assert stage_of(up, flip) != BELOW_THRESHOLD or stage_of(out, flip) == BELOW_THRESHOLD


@settings(max_examples=200, deadline=None)
@given(fusion_inputs(NAMES), st.floats(0, 1))
def test_equal_thresholds_ignore_forest(small_vocab, data, t):
    rf, esc, _ = data
    cfg = FusionConfig(t, t)
    got = applied_tags(fuse(rf, esc, cfg, small_vocab))
    other = applied_tags(fuse({k: not v for k, v in rf.items()}, esc, cfg, small_vocab))
    assert got == other
    # pure ESC thresholding plus argmax, computed independently
    expect = set()
    for group in (["sensor", "sp", "cmd"], ["heat", "cool"]):
        live = [g for g in group if esc[g] >= t]
        if live:
            expect.add(min(live, key=lambda g: (-esc[g], g)))
    if esc["temp"] >= t:
        expect.add("temp")
    assert got == expect


def test_two_tag_group_outcomes_enumerated(small_vocab):
    cfg = FusionConfig(0.15, 0.7)
    for ps, pc in [(0.9, 0.8), (0.8, 0.9), (0.75, 0.75), (0.1, 0.9), (0.1, 0.1)]:
        out = call(small_vocab, {}, {"heat": ps, "cool": pc}, cfg)
        passing = [t for t, p in (("heat", ps), ("cool", pc)) if p >= 0.7]
        if not passing:
            assert applied_tags(out) == set()
        else:
            win = min(passing, key=lambda t: (-dict(heat=ps, cool=pc)[t], t))
            assert applied_tags(out) == {win}


def test_tagged_csv_format():
    r = TagReport({"p2": [TagAssignment("p2", "temp", 0.9, True, APPLIED),
                          TagAssignment("p2", "sp", 0.1, False, BELOW_THRESHOLD)],
                   "p1": [TagAssignment("p1", "sensor", 0.25, True, APPLIED)]},
                  filtered={"p3": "density"})
    assert r.to_csv().splitlines() == [
        "point_id,tag,probability,rf_positive,stage",
        "p1,sensor,0.25,true,applied",
        "p2,temp,0.9,true,applied",
    ]
    assert "p2,sp,0.1,false,suppressed_by_threshold" in r.to_csv(verbose=True)
    assert r.filtered_csv() == "point_id,reason\np3,density\n"
    assert r.applied() == {"p1": {"sensor"}, "p2": {"temp"}}
