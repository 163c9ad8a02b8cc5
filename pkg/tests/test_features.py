import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from facegate.core import ActivityLabel, LabeledSlice, NonFiniteFeature, WindowTooShort
from facegate.features import (
    N_BASE, FeatureTable, base_feature_names, base_features, featurize_slices, pair_index, poly_expand,
    poly_feature_names, poly_matrix, poly_size, read_feature_csv, segment, window_length, window_stats,
    write_feature_csv,
)
from facegate.synthetic import synth_feature_table

import oracles


def test_names_and_sizes():
    names = base_feature_names()
    assert len(names) == N_BASE == 54
    assert names[:2] == ["ax_min", "ax_max"] and names[-1] == "gz_autocorr"
    assert poly_size(54) == 1540
    pn = poly_feature_names(names)
    assert len(pn) == 1540 and pn[0] == "1" and pn[1] == "ax_min" and pn[55] == "ax_min^2"


def test_window_length():
    assert window_length(0.4) == 40
    assert window_length(0.2) == 20
    with pytest.raises(WindowTooShort):
        window_length(0.005)


def test_segment_drops_remainder():
    n = 95
    sl = LabeledSlice(np.arange(n) / 102.4, np.zeros((n, 6)), ActivityLabel("TouchNose", "Sitting"), "P01", "s")
    wins = segment(sl, 0.4)
    assert len(wins) == 2 and all(len(w) == 40 for w in wins)
    assert wins[0].t_end == sl.t[39]


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (12, 6), elements=st.floats(-1e3, 1e3)))
def test_window_stats_match_oracle(w):
    got = window_stats(w[None])[0]
    want = oracles.window_features(w.tolist())
    for g, e in zip(got, want):
        assert math.isclose(g, e, rel_tol=1e-9, abs_tol=1e-9)


def test_constant_channel_degenerate_values():
    w = np.ones((40, 6)) * 3.0
    f = base_features(w).values.reshape(6, 9)
    np.testing.assert_array_equal(f[:, :5], 3.0)
    np.testing.assert_array_equal(f[:, 5:], 0.0)


def test_short_window_rejected():
    with pytest.raises(WindowTooShort):
        base_features(np.zeros((1, 6)))


@given(st.integers(1, 54))
def test_poly_size_formula(n):
    assert poly_size(n) == (n + 1) * (n + 2) // 2
    assert poly_matrix(np.ones(n)).shape == (poly_size(n),)


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e6, 1e6)))
def test_poly_terms_are_exact_products(x):
    got = poly_matrix(x)
    assert got.tolist() == oracles.poly_terms(x.tolist())
    for i in range(len(x)):
        for j in range(i, len(x)):
            assert got[pair_index(len(x), i, j)] == x[i] * x[j]


def test_poly_expand_vector_and_non_finite():
    v = poly_expand(np.arange(54.0))
    assert len(v) == 1540 and v.pair(3, 7) == 21.0 and v.pair(7, 3) == 21.0
    with pytest.raises(NonFiniteFeature):
        poly_matrix(np.array([1.0, np.inf]))


def test_featurize_slices_labels_and_provenance():
    rng = np.random.default_rng(0)
    face = LabeledSlice(np.arange(80) / 102.4, rng.normal(size=(80, 6)), ActivityLabel("TouchNose", "Sitting"),
                        "P02", "a")
    other = LabeledSlice(np.arange(45) / 102.4, rng.normal(size=(45, 6)), ActivityLabel("PickGround", "Standing"),
                         "P10", "b")
    t = featurize_slices([face, other])
    assert t.y.tolist() == [1, 1, 0]
    assert t.participant.tolist() == ["P02", "P02", "P10"]
    assert t.participants == ["P02", "P10"]
    np.testing.assert_array_equal(t.X[0], window_stats(face.imu[None, :40])[0])


def test_feature_csv_round_trip(tmp_path):
    t = synth_feature_table(50, 3, seed=2)
    back = read_feature_csv(write_feature_csv(t, tmp_path / "f.csv"))
    np.testing.assert_array_equal(back.X, t.X)
    np.testing.assert_array_equal(back.y, t.y)
    assert back.feature_names == t.feature_names
    poly = read_feature_csv(write_feature_csv(t, tmp_path / "p.csv", poly=True))
    assert poly.X.shape == (50, 1540)
    assert poly.poly() is poly


def test_natural_participant_order():
    t = FeatureTable(np.zeros((3, 1)), [0, 1, 0], ["P10", "P2", "P1"], ["a", "b", "c"], ["x"])
    assert t.participants == ["P1", "P2", "P10"]


def _window(seed, n=40):
    return np.random.default_rng(seed).normal(size=(n, 6))


def test_small_examples():
    w = np.tile(np.array([1.0, 2.0, 3.0, 4.0])[:, None], (1, 6))
    f = base_features(w).values[:9]
    assert f[2] == 2.5 and f[5] == pytest.approx(math.sqrt(1.25), rel=1e-15) and abs(f[6]) < 1e-15
    assert poly_matrix(np.array([2.0, 3.0])).tolist() == [1.0, 2.0, 3.0, 4.0, 6.0, 9.0]
    assert (poly_matrix(np.ones(54)) == 1.0).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.permutations(list(range(40))))
def test_permutation_invariance_except_autocorr(seed, perm):
    w = _window(seed)
    a = window_stats(w[None])[0].reshape(6, 9)
    b = window_stats(w[perm][None])[0].reshape(6, 9)
    np.testing.assert_allclose(b[:, :8], a[:, :8], rtol=1e-9, atol=1e-12)


def test_shuffle_changes_autocorrelation():
    t = np.arange(40.0)
    w = np.tile(np.sin(t / 5.0)[:, None], (1, 6))
    shuffled = w[np.random.default_rng(0).permutation(40)]
    a = window_stats(w[None])[0].reshape(6, 9)[:, 8]
    b = window_stats(shuffled[None])[0].reshape(6, 9)[:, 8]
    assert (np.abs(a - b) > 0.5).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(-1000, 1000))
def test_affine_shift(seed, c):
    # integer-valued data keeps sums exact; only the final division can round
    w = np.random.default_rng(seed).integers(-50, 50, size=(40, 6)).astype(float)
    a = window_stats(w[None])[0].reshape(6, 9)
    b = window_stats((w + c)[None])[0].reshape(6, 9)
    np.testing.assert_allclose(b[:, :5], a[:, :5] + c, rtol=1e-15, atol=1e-12)
    np.testing.assert_allclose(b[:, 5:], a[:, 5:], rtol=1e-9, atol=1e-12)


def test_segment_counts():
    lab = ActivityLabel("TouchNose", "Sitting")
    mk = lambda n: LabeledSlice(np.arange(n) / 102.4, np.zeros((n, 6)), lab, "P01", "s")  # noqa: E731
    assert len(segment(mk(100), 0.4)) == 2
    assert segment(mk(39), 0.4) == []
    lengths = [5, 40, 79, 80, 121, 400]
    table = featurize_slices([mk(n) for n in lengths], 0.4)
    assert len(table) == sum(n // 40 for n in lengths)


def test_pair_lookup_exhaustive():
    x = np.random.default_rng(1).normal(size=54)
    v = poly_expand(x)
    for i in range(54):
        for j in range(i, 54):
            assert v.pair(i, j) == x[i] * x[j]
