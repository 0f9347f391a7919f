import pytest
from hypothesis import given, strategies as st

from uatag.errors import VocabularyError
from uatag.vocab import (
    ExclusionGroup,
    Tag,
    build_vocabulary,
    dump_vocabulary,
    exclusion_group_of,
    group_index,
    load_vocabulary,
    parse_vocabulary,
    violates_exclusion,
)

SIX = "tag,kind,group\nsensor,marker,role\nsp,marker,role\ncmd,marker,role\nheat,marker,mode\ncool,marker,mode\ntemp,marker,\n"


def test_six_tags_two_groups():
    v = parse_vocabulary(SIX)
    assert len(v) == 6
    assert len(v.groups) == 2
    assert {g.id for g in v.groups} == {"role", "mode"}


def test_no_groups():
    v = parse_vocabulary("tag,kind,group\na,marker,\nb,marker,\n")
    assert len(v) == 2 and v.groups == ()


def test_duplicate_tag_names_line():
    with pytest.raises(VocabularyError) as e:
        parse_vocabulary("tag,kind,group\nsensor,marker,role\nsp,marker,role\nsensor,marker,role\n")
    assert e.value.kind == "duplicate_tag"
    assert e.value.line == 4


@pytest.mark.parametrize(
    "text, kind",
    [
        ("tag,kind,group\nSensor,marker,\n", "malformed_row"),
        ("tag,kind,group\nsensor,str,\n", "malformed_row"),
        ("tag,kind,group\nsensor,marker\n", "malformed_row"),
        ("name,kind,group\nsensor,marker,\n", "malformed_row"),
        ("tag,kind,group\nsensor,marker,solo\ntemp,marker,\n", "singleton_group"),
        ("", "malformed_row"),
    ],
)
def test_malformed(text, kind):
    with pytest.raises(VocabularyError) as e:
        parse_vocabulary(text)
    assert e.value.kind == kind


def test_tag_in_two_groups_and_unknown_member():
    tags = [Tag("a"), Tag("b"), Tag("c")]
    with pytest.raises(VocabularyError) as e:
        build_vocabulary(tags, [ExclusionGroup("g1", frozenset("ab")), ExclusionGroup("g2", frozenset("bc"))])
    assert e.value.kind == "tag_in_two_groups"
    with pytest.raises(VocabularyError) as e:
        build_vocabulary(tags, [ExclusionGroup("g1", frozenset({"a", "zz"}))])
    assert e.value.kind == "unknown_tag"


def test_exclusion_group_of():
    v = parse_vocabulary(SIX)
    assert exclusion_group_of(v, "sp").id == "role"
    assert exclusion_group_of(v, "temp") is None
    with pytest.raises(VocabularyError):
        exclusion_group_of(v, "bogus")


def test_violates_exclusion():
    v = parse_vocabulary(SIX)
    assert violates_exclusion(v, {"sensor", "temp", "heat"}) == []
    hits = violates_exclusion(v, {"sensor", "sp", "heat", "cool"})
    assert hits == [("mode", frozenset({"heat", "cool"})), ("role", frozenset({"sensor", "sp"}))]
    with pytest.raises(VocabularyError):
        violates_exclusion(v, {"bogus"})


def test_fingerprint_ignores_row_order_and_comments():
    shuffled = "# comment\ntag,kind,group\ntemp,marker,\ncool,marker,mode\nsp,marker,role\n\nheat,marker,mode\ncmd,marker,role\nsensor,marker,role\n"
    assert parse_vocabulary(SIX).fingerprint == parse_vocabulary(shuffled).fingerprint
    assert parse_vocabulary(SIX).fingerprint != parse_vocabulary(SIX.replace("temp", "tmp")).fingerprint


def test_dump_round_trip():
    v = load_vocabulary()
    again = parse_vocabulary(dump_vocabulary(v))
    assert again.fingerprint == v.fingerprint
    assert again.names == v.names


def test_default_vocabulary():
    v = load_vocabulary()
    assert {"sensor", "sp", "cmd", "occ", "unocc", "heating", "cooling", "min", "max"} <= set(v.names)
    assert exclusion_group_of(v, "cmd").members == {"sensor", "sp", "cmd"}


def test_load_missing_file(tmp_path):
    with pytest.raises(VocabularyError) as e:
        load_vocabulary(tmp_path / "nope.csv")
    assert e.value.prefix() == "ERROR:vocab:io:"


def test_group_index_partitions_all_tags():
    v = load_vocabulary()
    idx = group_index(v)
    flat = sorted(i for g in idx for i in g)
    assert flat == list(range(len(v)))


@given(st.sets(st.sampled_from(["sensor", "sp", "cmd", "heat", "cool", "temp"])))
def test_violation_iff_two_from_a_group(tags):
    v = parse_vocabulary(SIX)
    role = len(tags & {"sensor", "sp", "cmd"}) >= 2
    mode = len(tags & {"heat", "cool"}) >= 2
    assert bool(violates_exclusion(v, tags)) == (role or mode)
