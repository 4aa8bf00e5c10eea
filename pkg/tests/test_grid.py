import math

import numpy as np
import pytest

from descseg import (
    GridShape,
    LabelMask,
    LogitField,
    NumericalError,
    ProbMap,
    argmax_labels,
    one_hot,
    softmax,
)


def test_grid_shape_validation():
    assert GridShape(3, 5).npixels == 15
    with pytest.raises(ValueError):
        GridShape(0, 4)
    with pytest.raises(ValueError):
        GridShape(4, -1)


def test_softmax_uniform_on_zero_logits():
    g = GridShape(2, 2)
    p = softmax(LogitField(g, np.zeros((4, 3))))
    assert np.allclose(p.values, 1.0 / 3.0)


def test_softmax_shift_invariance():
    g = GridShape(2, 3)
    rng = np.random.default_rng(0)
    z = rng.normal(size=(6, 4))
    shift = rng.normal(size=(6, 1))
    a = softmax(LogitField(g, z))
    b = softmax(LogitField(g, z + shift))
    assert np.allclose(a.values, b.values, atol=1e-12)
    # constant logits per pixel equal the all-zero case
    c = softmax(LogitField(g, np.full((6, 2), 7.25)))
    assert np.allclose(c.values, 0.5)


def test_softmax_two_class_value():
    g = GridShape(1, 1)
    p = softmax(LogitField(g, np.array([[10.0, 0.0]])))
    expected = 1.0 / (1.0 + math.exp(-10.0))
    assert p.values[0, 0] == pytest.approx(expected, abs=1e-12)
    assert p.values[0, 1] == pytest.approx(1.0 - expected, abs=1e-12)


def test_softmax_rows_sum_to_one_for_large_logits():
    g = GridShape(4, 4)
    rng = np.random.default_rng(1)
    z = rng.uniform(-1e3, 1e3, size=(16, 5))
    p = softmax(LogitField(g, z))
    assert np.abs(p.values.sum(axis=1) - 1.0).max() <= 1e-6


def test_logit_field_rejects_non_finite():
    g = GridShape(1, 2)
    with pytest.raises(NumericalError):
        LogitField(g, np.array([[0.0, np.nan], [0.0, 1.0]]))


def test_one_hot_single_pixel():
    g = GridShape(1, 1)
    p = one_hot(LabelMask(g, 2, np.array([0])))
    assert p.values.tolist() == [[1.0, 0.0]]


def test_one_hot_uniform_label():
    g = GridShape(2, 2)
    p = one_hot(LabelMask(g, 3, np.ones(4, dtype=int)))
    assert np.all(p.values[:, 1] == 1.0)
    assert np.all(p.values[:, [0, 2]] == 0.0)


def test_one_hot_column_sums_are_class_counts():
    g = GridShape(3, 3)
    labels = np.array([0, 1, 2, 1, 1, 0, 2, 2, 2])
    p = one_hot(LabelMask(g, 3, labels))
    assert p.values.sum(axis=0).tolist() == [2.0, 3.0, 4.0]


def test_label_mask_rejects_out_of_range():
    g = GridShape(1, 2)
    with pytest.raises(ValueError):
        LabelMask(g, 2, np.array([0, 2]))
    with pytest.raises(ValueError):
        LabelMask(g, 2, np.array([-1, 0]))


def test_argmax_round_trip_on_binary_maps():
    g = GridShape(4, 4)
    rng = np.random.default_rng(2)
    labels = rng.integers(0, 3, 16)
    mask = LabelMask(g, 3, labels)
    assert np.array_equal(argmax_labels(one_hot(mask)).labels, labels)


def test_argmax_tie_breaks_to_lowest_class():
    g = GridShape(1, 1)
    p = ProbMap(g, np.array([[0.4, 0.4, 0.2]]))
    assert argmax_labels(p).labels[0] == 0


def test_argmax_matches_per_pixel_scan():
    g = GridShape(5, 4)
    rng = np.random.default_rng(3)
    v = rng.random((20, 3))
    v /= v.sum(axis=1, keepdims=True)
    p = ProbMap(g, v)
    got = argmax_labels(p).labels
    for i in range(20):
        best = 0
        for k in range(1, 3):
            if v[i, k] > v[i, best]:
                best = k
        assert got[i] == best


def test_argmax_softmax_invariant_under_per_pixel_shift():
    g = GridShape(3, 3)
    rng = np.random.default_rng(4)
    z = rng.normal(size=(9, 4))
    shift = rng.normal(size=(9, 1)) * 10
    a = argmax_labels(softmax(LogitField(g, z)))
    b = argmax_labels(softmax(LogitField(g, z + shift)))
    assert np.array_equal(a.labels, b.labels)


def test_probmap_validation():
    g = GridShape(1, 2)
    with pytest.raises(ValueError):
        ProbMap(g, np.array([[0.7, 0.7], [0.5, 0.5]]))  # bad simplex
    with pytest.raises(ValueError):
        ProbMap(g, np.array([[1.2, -0.2], [0.5, 0.5]]))  # out of range
    with pytest.raises(ValueError):
        ProbMap(g, np.ones((3, 2)) * 0.5)  # wrong pixel count


def test_values_are_immutable():
    g = GridShape(1, 2)
    p = ProbMap(g, np.array([[1.0, 0.0], [0.25, 0.75]]))
    with pytest.raises(ValueError):
        p.values[0, 0] = 0.5
    m = LabelMask(g, 2, np.array([0, 1]))
    with pytest.raises(ValueError):
        m.labels[0] = 1
