import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from oracles import naive_featurize
from uatag.errors import FeatureError
from uatag.features import (
    FEATURE_NAMES,
    N_FEATURES,
    FeatureVector,
    apply_scaler,
    featurize,
    featurize_arrays,
    fit_scaler,
)
from uatag.ingest import HOUR, SeriesBundle

T0 = 1614556800


def idx(name):
    return FEATURE_NAMES.index(name)


def test_layout():
    assert N_FEATURES == 40
    assert len(set(FEATURE_NAMES)) == 40
    assert FEATURE_NAMES[0] == "value_mean__min"
    assert FEATURE_NAMES[-1] == "gradient_var__median"


def test_constant_series():
    t = T0 + np.arange(0, 504 * HOUR, 300)
    f = featurize(SeriesBundle("c", t, np.full(len(t), 5.0)), T0).values
    for name, v in zip(FEATURE_NAMES, f):
        if name.startswith("value_var") or name.startswith("gradient"):
            assert v == 0.0, name
        else:
            assert v == 5.0, name


def test_square_wave_extremes():
    t = T0 + np.arange(0, 504 * HOUR, 300)
    hour = (t - T0) // HOUR
    v = ((hour % 24 >= 8) & (hour % 24 < 18)).astype(float)
    f = featurize(SeriesBundle("a", t, v), T0).values
    assert f[idx("value_min__min")] == 0.0
    assert f[idx("value_max__max")] == 1.0


def test_gradient_units_per_second():
    t = T0 + np.array([0, 600, 1200])
    f = featurize_arrays(t, np.array([0.0, 6.0, 12.0]), T0)
    assert f[idx("gradient_mean__mean")] == pytest.approx(0.01)


def test_gradients_do_not_cross_hours():
    t = T0 + np.array([3000, 3500, 3700, 4000])
    f = featurize_arrays(t, np.array([0.0, 0.0, 100.0, 100.0]), T0)
    assert f[idx("gradient_max__max")] == 0.0


def test_empty_window():
    b = SeriesBundle("e", T0 + np.array([10 ** 7]), [1.0])
    with pytest.raises(FeatureError):
        featurize(b, T0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3 * HOUR - 1), st.floats(-1e3, 1e3)), min_size=1, max_size=5, unique_by=lambda p: p[0]))
def test_matches_naive_oracle(samples):
    samples.sort()
    t = np.array([s[0] for s in samples], dtype=np.int64) + T0
    v = np.array([s[1] for s in samples])
    got = featurize_arrays(t, v, T0)
    want = naive_featurize(t.tolist(), v.tolist(), T0)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_random_three_hours_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.choice(3 * HOUR, size=40, replace=False)) + T0
    v = rng.normal(size=40)
    np.testing.assert_allclose(featurize_arrays(t, v, T0), naive_featurize(t.tolist(), v.tolist(), T0), rtol=1e-12, atol=1e-12)


def test_permutation_invariant_through_bundle_sort():
    rng = np.random.default_rng(3)
    t = np.sort(rng.choice(5 * HOUR, 200, replace=False)) + T0
    v = rng.normal(size=200)
    perm = rng.permutation(200)
    order = np.argsort(t[perm], kind="stable")
    a = featurize(SeriesBundle("a", t, v), T0, 5).values
    b = featurize(SeriesBundle("a", t[perm][order], v[perm][order]), T0, 5).values
    np.testing.assert_array_equal(a, b)


def test_minmax_midpoint():
    s = fit_scaler(np.array([[2.0], [4.0]]), "minmax")
    assert apply_scaler(s, np.array([[3.0]]))[0, 0] == 0.5
    assert apply_scaler(s, np.array([[10.0]]))[0, 0] == 1.0
    assert apply_scaler(s, np.array([[-10.0]]))[0, 0] == 0.0


def test_constant_feature_standardizes_to_zero():
    X = np.column_stack([np.full(5, 3.0), np.arange(5.0)])
    s = fit_scaler(X, "standardization")
    Z = apply_scaler(s, X)
    assert np.all(Z[:, 0] == 0.0)
    s = fit_scaler(X, "minmax")
    assert np.all(apply_scaler(s, X)[:, 0] == 0.0)


def test_normalization_345():
    x = np.zeros(40)
    x[:2] = [3.0, 4.0]
    s = fit_scaler(x[None, :], "normalization")
    z = apply_scaler(s, FeatureVector("p", x)).values
    assert z[0] == pytest.approx(0.6) and z[1] == pytest.approx(0.8)
    assert np.all(z[2:] == 0)
    assert np.all(apply_scaler(s, np.zeros((1, 40))) == 0)


def test_scaler_errors():
    s = fit_scaler(np.ones((3, 4)), "standardization")
    with pytest.raises(FeatureError) as e:
        apply_scaler(s, np.ones((1, 4)), method="minmax")
    assert e.value.kind == "method_mismatch"
    for method in ("standardization", "minmax", "normalization"):
        s = fit_scaler(np.ones((3, 4)), method)
        with pytest.raises(FeatureError) as e:
            apply_scaler(s, np.ones((1, 5)))
        assert e.value.kind == "dimension_mismatch"
    with pytest.raises(FeatureError):
        fit_scaler(np.ones((3, 4)), "zscore")


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 6)), elements=st.floats(-1e6, 1e6)))
def test_scaled_training_statistics(X):
    Z = apply_scaler(fit_scaler(X, "minmax"), X)
    assert np.all((Z >= 0) & (Z <= 1))
    s = fit_scaler(X, "standardization")
    Z = apply_scaler(s, X)
    live = ~s.constant
    assert np.all(np.abs(Z[:, live].mean(axis=0)) < 1e-9)
    np.testing.assert_allclose(Z[:, live].std(axis=0), 1.0, atol=1e-9)
