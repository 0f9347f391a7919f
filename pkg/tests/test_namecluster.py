import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_cluster, naive_normalized, naive_raw_similarity
from uatag.errors import ClusterError
from uatag.namecluster import (
    Cluster,
    cluster_names,
    clustered_order,
    kmerize,
    matrix_csv,
    normalized_similarity,
    outlier_scores,
    outliers_csv,
    raw_similarity,
    similarity_matrix,
)

TOKENS = ["SP", "COOL", "HEAT", "RTU1", "RTU2", "ZN", "TMP", "DA", "FAN", "CMD", "OCC"]


def random_name(rng):
    parts = rng.choice(TOKENS, size=rng.integers(1, 4))
    return rng.choice(["_", ".", " "]).join(parts)


def test_kmerize_examples():
    s = kmerize("ABCD", 2)
    assert s.kmers == ("AB", "BC", "CD") and s.N == 3
    assert kmerize("ab", 3).kmers == ("AB",)
    assert kmerize("  sp_cool ", 3).kmers == ("SP_", "P_C", "_CO", "COO", "OOL")
    with pytest.raises(ClusterError):
        kmerize("x", 0)


def test_raw_similarity_examples():
    assert raw_similarity(kmerize("SP_COOL", 3), kmerize("SP_HEAT", 3)) == 1.0
    assert raw_similarity(kmerize("XAB", 2), kmerize("ABX", 2)) == 0.5
    assert raw_similarity(kmerize("AAAA", 2), kmerize("BBBB", 2)) == 0.0
    with pytest.raises(ClusterError):
        raw_similarity(kmerize("AB", 2), kmerize("AB", 3))


def test_normalized_examples():
    assert normalized_similarity(kmerize("SP_COOL", 3), kmerize("SP_HEAT", 3)) == pytest.approx(0.2, abs=1e-15)
    assert normalized_similarity(kmerize("RTU1", 2), kmerize("rtu1", 2)) == 1.0
    assert normalized_similarity(kmerize("AAAA", 2), kmerize("BBBB", 2)) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.text("ABC_ 1", max_size=12), st.text("ABC_ 1", max_size=12), st.integers(1, 5))
def test_raw_similarity_matches_double_loop(a, b, k):
    sa, sb = kmerize(a, k), kmerize(b, k)
    assert raw_similarity(sa, sb) == pytest.approx(naive_raw_similarity(a, b, k), abs=1e-12)
    assert raw_similarity(sa, sb) == pytest.approx(raw_similarity(sb, sa), abs=1e-12)
    assert raw_similarity(sa, sa) >= sa.N - 1e-12


def test_matrix_matches_pairwise():
    rng = np.random.default_rng(0)
    names = [random_name(rng) for _ in range(10)]
    S = similarity_matrix([kmerize(n, 3) for n in names])
    for i in range(10):
        for j in range(10):
            assert S[i, j] == pytest.approx(naive_normalized(names[i], names[j], 3) if i != j else 1.0, abs=1e-12)


def test_cluster_singleton_and_duplicates():
    assert cluster_names([kmerize("ONLY", 4, "p1")]) == [Cluster(0, ("p1",), 1.0)]
    seqs = [kmerize("RTU1_ZN_TMP", 4, "a1"), kmerize("RTU1_ZN_TMP", 4, "a2"), kmerize("FAN.CMD", 4, "b")]
    cl = cluster_names(seqs, 0.45)
    assert [c.members for c in cl] == [("a1", "a2"), ("b",)]


def test_cluster_errors():
    with pytest.raises(ClusterError):
        cluster_names([])
    with pytest.raises(ClusterError):
        cluster_names([kmerize("A", 1, "a")], 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12), st.integers(2, 4), st.sampled_from([0.2, 0.45, 0.7]))
def test_cluster_matches_brute_force(seed, n, k, thr):
    rng = np.random.default_rng(seed)
    names = [random_name(rng) for _ in range(n)]
    ids = [f"p{i:02d}" for i in rng.permutation(n)]
    got = cluster_names([kmerize(nm, k, pid) for nm, pid in zip(names, ids)], thr)
    assert {frozenset(c.members) for c in got} == brute_cluster(names, ids, k, thr)
    order = clustered_order(got)
    assert sorted(order) == sorted(ids)


def test_outlier_examples():
    c = [Cluster(0, ("a", "b", "c"), 1.0)]
    same = outlier_scores(c, {"a": {"x"}, "b": {"x"}, "c": {"x"}})
    assert all(r.outlier_score == 0 and not r.flagged for r in same)
    two = outlier_scores([Cluster(0, ("a", "b"), 1.0)], {"a": {"a"}, "b": {"b"}})
    assert [r.outlier_score for r in two] == [1.0, 1.0]
    single = outlier_scores([Cluster(0, ("a",), 1.0)], {"a": {"x"}})
    assert single[0].outlier_score == 0.0 and not single[0].flagged
    with pytest.raises(ClusterError):
        outlier_scores(c, {"a": set()})
    empty = outlier_scores([Cluster(0, ("a", "b"), 1.0)], {"a": set(), "b": set()})
    assert [r.outlier_score for r in empty] == [0.0, 0.0]


def test_setpoint_cluster_missing_two_tags():
    shared = {"sp", "temp", "air", "zone", "cooling", "unocc", "max"}
    tags = {"p1": shared, "p2": shared, "p3": shared - {"cooling", "unocc"}}
    recs = outlier_scores([Cluster(0, ("p1", "p2", "p3"), 0.9)], tags)
    by = {r.point_id: r for r in recs}
    assert by["p3"].outlier_score > by["p1"].outlier_score == by["p2"].outlier_score
    assert by["p3"].flagged


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_stripping_tags_sign_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    base = set(rng.choice(list("abcdefgh"), size=5, replace=False).tolist())
    ids = [f"p{i}" for i in range(n)]
    tags = {p: set(base) for p in ids}
    victim = ids[int(rng.integers(n))]
    stripped = dict(tags)
    stripped[victim] = base - set(rng.choice(sorted(base), size=int(rng.integers(1, 5)), replace=False).tolist())
    c = [Cluster(0, tuple(ids), 1.0)]
    before = {r.point_id: r.outlier_score for r in outlier_scores(c, tags)}
    after = {r.point_id: r.outlier_score for r in outlier_scores(c, stripped)}
    gain = after[victim] - before[victim]
    assert gain > 0
    for p in ids:
        if p != victim:
            if n > 2:
                assert after[p] < after[victim]
            assert before[p] - after[p] <= gain


def test_csv_outputs():
    recs = outlier_scores([Cluster(3, ("a", "b"), 1.0)], {"a": {"x"}, "b": {"y"}})
    assert outliers_csv(recs).splitlines() == ["cluster_id,point_id,outlier_score,flagged",
                                               "3,a,1.0,true", "3,b,1.0,true"]
    m = matrix_csv(np.eye(2), ["a", "b"])
    assert m.splitlines()[0] == "point_id,a,b"
