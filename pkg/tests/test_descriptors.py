import numpy as np
import pytest

import brute
from descseg import (
    Connectivity,
    DegenerateClassError,
    DescriptorSet,
    GridShape,
    LabelMask,
    ProbMap,
    build_laplacian,
    central_moment,
    centroid,
    describe,
    length,
    one_hot,
    ratio,
    shape_moment,
    spread,
    volume,
)


def unit_mass_map(grid, x, y, num_classes=2, k=1):
    labels = np.zeros(grid.npixels, dtype=int)
    labels[x * grid.width + y] = k
    return one_hot(LabelMask(grid, num_classes, labels))


# --- laplacian ---------------------------------------------------------------


def test_laplacian_trivial_grid():
    lap = build_laplacian(GridShape(1, 1), Connectivity.FOUR)
    assert lap.num_edges == 0


@pytest.mark.parametrize(
    "shape,conn,expected",
    [
        (GridShape(2, 2), Connectivity.FOUR, 4),
        (GridShape(2, 2), Connectivity.EIGHT, 6),
        (GridShape(3, 3), Connectivity.EIGHT, 20),
    ],
)
def test_laplacian_edge_counts(shape, conn, expected):
    assert build_laplacian(shape, conn).num_edges == expected


def test_laplacian_3x3_eight_degrees():
    lap = build_laplacian(GridShape(3, 3), Connectivity.EIGHT)
    deg = lap.degree.reshape(3, 3)
    assert deg[1, 1] == 8
    assert deg[0, 0] == deg[0, 2] == deg[2, 0] == deg[2, 2] == 3
    assert deg[0, 1] == deg[1, 0] == deg[1, 2] == deg[2, 1] == 5


def test_laplacian_matches_brute_enumeration():
    for h, w in ((1, 7), (4, 1), (3, 5), (6, 4)):
        for conn in Connectivity:
            lap = build_laplacian(GridShape(h, w), conn)
            got = sorted(zip(lap.edge_i.tolist(), lap.edge_j.tolist()))
            assert got == brute.edge_list_bf(h, w, int(conn))
            assert all(i < j for i, j in got)


def test_laplacian_degree_law():
    for h, w in ((2, 9), (8, 8), (5, 3)):
        for conn in Connectivity:
            lap = build_laplacian(GridShape(h, w), conn)
            assert lap.degree.sum() == 2 * lap.num_edges


def test_laplacian_memoized():
    a = build_laplacian(GridShape(4, 4))
    b = build_laplacian(GridShape(4, 4), Connectivity.EIGHT)
    assert a is b
    assert a is build_laplacian(GridShape(4, 4), 8)


# --- moments -----------------------------------------------------------------


def test_shape_moment_unit_mass():
    p = unit_mass_map(GridShape(5, 4), 3, 2)
    assert shape_moment(p, 1, 1, 0) == 3.0
    assert shape_moment(p, 1, 0, 1) == 2.0
    assert shape_moment(p, 1, 0, 0) == 1.0  # 0^0 = 1 even at the origin


def test_shape_moment_order_zero_is_volume():
    g = GridShape(4, 4)
    rng = np.random.default_rng(0)
    v = rng.random((16, 3))
    v /= v.sum(axis=1, keepdims=True)
    p = ProbMap(g, v)
    for k in range(3):
        assert shape_moment(p, k, 0, 0) == pytest.approx(volume(p, k), abs=1e-12)


def test_shape_moment_matches_brute_force():
    g = GridShape(4, 4)
    rng = np.random.default_rng(1)
    v = rng.random((16, 2))
    v /= v.sum(axis=1, keepdims=True)
    p = ProbMap(g, v)
    for (pp, qq) in ((2, 1), (0, 2), (1, 1), (3, 2)):
        expected = brute.moment_bf(v[:, 0].tolist(), 4, 4, pp, qq)
        assert shape_moment(p, 0, pp, qq) == pytest.approx(expected, abs=1e-12)


def test_shape_moment_rejects_negative_orders():
    p = unit_mass_map(GridShape(2, 2), 0, 0)
    with pytest.raises(ValueError):
        shape_moment(p, 0, -1, 0)


def test_central_moment_first_order_is_zero():
    g = GridShape(6, 6)
    rng = np.random.default_rng(2)
    v = rng.random((36, 3))
    v /= v.sum(axis=1, keepdims=True)
    p = ProbMap(g, v)
    for k in range(3):
        assert central_moment(p, k, 1, 0) == pytest.approx(0.0, abs=1e-9)
        assert central_moment(p, k, 0, 1) == pytest.approx(0.0, abs=1e-9)


def test_central_moment_point_mass():
    p = unit_mass_map(GridShape(7, 7), 4, 5)
    assert central_moment(p, 1, 2, 0) == pytest.approx(0.0, abs=1e-12)


def test_central_moment_two_pixel_mask():
    g = GridShape(3, 1)
    labels = np.array([1, 0, 1])
    p = one_hot(LabelMask(g, 2, labels))
    assert central_moment(p, 1, 2, 0) == pytest.approx(2.0, abs=1e-12)


def test_central_moment_degenerate_class():
    g = GridShape(2, 2)
    p = one_hot(LabelMask(g, 3, np.zeros(4, dtype=int)))
    with pytest.raises(DegenerateClassError):
        central_moment(p, 1, 2, 0)


# --- descriptors -------------------------------------------------------------


def test_volume_examples():
    g = GridShape(2, 2)
    p = one_hot(LabelMask(g, 2, np.ones(4, dtype=int)))
    assert volume(p, 1) == 4.0
    uniform = ProbMap(GridShape(3, 4), np.full((12, 3), 1.0 / 3.0))
    for k in range(3):
        assert volume(uniform, k) == pytest.approx(4.0, abs=1e-12)


def test_centroid_examples():
    uniform = ProbMap(GridShape(5, 9), np.full((45, 2), 0.5))
    assert centroid(uniform, 0) == pytest.approx((2.0, 4.0), abs=1e-12)
    p = unit_mass_map(GridShape(8, 8), 5, 7)
    assert centroid(p, 1) == (5.0, 7.0)


def test_centroid_matches_brute_force():
    g = GridShape(6, 5)
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 2, g.npixels)
    p = one_hot(LabelMask(g, 2, labels))
    expected = brute.centroid_bf(labels.tolist(), 6, 5, 1)
    got = centroid(p, 1)
    assert got[0] == pytest.approx(expected[0], abs=1e-12)
    assert got[1] == pytest.approx(expected[1], abs=1e-12)


def test_spread_examples():
    p = unit_mass_map(GridShape(8, 8), 2, 3)
    assert spread(p, 1) == (0.0, 0.0)
    g = GridShape(3, 1)
    two = one_hot(LabelMask(g, 2, np.array([1, 0, 1])))
    assert spread(two, 1) == pytest.approx((1.0, 0.0), abs=1e-12)


def test_spread_matches_brute_force():
    g = GridShape(7, 6)
    rng = np.random.default_rng(4)
    labels = rng.integers(0, 2, g.npixels)
    p = one_hot(LabelMask(g, 2, labels))
    expected = brute.spread_bf(labels.tolist(), 7, 6, 1)
    got = spread(p, 1)
    assert got[0] == pytest.approx(expected[0], abs=1e-9)
    assert got[1] == pytest.approx(expected[1], abs=1e-9)


def test_length_constant_map_is_zero():
    g = GridShape(4, 4)
    lap = build_laplacian(g)
    p = one_hot(LabelMask(g, 2, np.ones(16, dtype=int)))
    assert length(p, 1, lap) == 0.0
    assert length(p, 0, lap) == 0.0


def test_length_single_interior_pixel_four_connectivity():
    g = GridShape(5, 5)
    p = unit_mass_map(g, 2, 2)
    assert length(p, 1, build_laplacian(g, Connectivity.FOUR)) == 4.0


def test_length_square_perimeter_four_connectivity():
    g = GridShape(10, 10)
    labels = np.zeros(100, dtype=int)
    for x in range(3, 6):
        for y in range(4, 7):
            labels[x * 10 + y] = 1
    p = one_hot(LabelMask(g, 2, labels))
    assert length(p, 1, build_laplacian(g, Connectivity.FOUR)) == 12.0  # 4r, r=3


def test_length_shape_mismatch():
    p = unit_mass_map(GridShape(3, 3), 1, 1)
    with pytest.raises(ValueError):
        length(p, 1, build_laplacian(GridShape(4, 4)))


def test_length_soft_map_matches_brute_force():
    g = GridShape(5, 6)
    rng = np.random.default_rng(5)
    v = rng.random((30, 2))
    v /= v.sum(axis=1, keepdims=True)
    p = ProbMap(g, v)
    for conn in Connectivity:
        expected = brute.soft_length_bf(v[:, 1].tolist(), 5, 6, int(conn))
        assert length(p, 1, build_laplacian(g, conn)) == pytest.approx(
            expected, abs=1e-9
        )


def test_ratio_examples():
    g = GridShape(4, 4)
    labels = np.array([1] * 8 + [2] * 4 + [0] * 4)
    p = one_hot(LabelMask(g, 3, labels))
    assert ratio(p, "volume", 1, 1) == 1.0
    assert ratio(p, "volume", 1, 2) == 2.0
    lap = build_laplacian(g)
    assert ratio(p, "length", 1, 2, lap) == length(p, 1, lap) / length(p, 2, lap)


def test_ratio_degenerate_denominator():
    g = GridShape(2, 2)
    p = one_hot(LabelMask(g, 3, np.zeros(4, dtype=int)))
    with pytest.raises(DegenerateClassError):
        ratio(p, "volume", 0, 1)


def test_ratio_pair_descriptors_need_opt_in():
    g = GridShape(4, 4)
    labels = np.array([1] * 8 + [2] * 8)
    p = one_hot(LabelMask(g, 3, labels))
    with pytest.raises(ValueError):
        ratio(p, "centroid", 1, 2)
    rx, ry = ratio(p, "centroid", 1, 2, allow_pairs=True)
    c1, c2 = centroid(p, 1), centroid(p, 2)
    assert rx == pytest.approx(c1[0] / c2[0])
    assert ry == pytest.approx(c1[1] / c2[1])


# --- describe ----------------------------------------------------------------


def test_describe_flags_absent_class():
    g = GridShape(3, 3)
    labels = np.array([0, 0, 0, 1, 1, 0, 0, 0, 0])
    ds = describe(LabelMask(g, 3, labels))
    assert ds.classes[2].absent
    assert ds.classes[2].volume == 0.0
    assert not ds.classes[1].absent
    assert ds.classes[1].volume == 2.0


def test_describe_near_binary_close_to_hard():
    from descseg import argmax_labels

    g = GridShape(8, 8)
    rng = np.random.default_rng(6)
    labels = rng.integers(0, 3, 64)
    hard = one_hot(LabelMask(g, 3, labels))
    eps = 0.002
    soft = ProbMap(g, hard.values * (1 - eps) + eps / 3.0)
    lap = build_laplacian(g)
    ds_soft = describe(soft, lap)
    ds_hard = describe(one_hot(argmax_labels(soft)), lap)
    for cs, ch in zip(ds_soft.classes, ds_hard.classes):
        assert cs.volume == pytest.approx(ch.volume, rel=0.01)
        assert cs.length == pytest.approx(ch.length, rel=0.01)
        for a, b in zip(cs.centroid + cs.spread, ch.centroid + ch.spread):
            assert a == pytest.approx(b, rel=0.01, abs=0.01)


def test_describe_ratio_pairs_and_round_trip():
    g = GridShape(4, 4)
    labels = np.array([1] * 8 + [2] * 4 + [0] * 4)
    lap = build_laplacian(g)
    ds = describe(LabelMask(g, 3, labels), lap, ratio_pairs=(("volume", 1, 2),))
    assert ds.ratios[("volume", 1, 2)] == 2.0
    again = DescriptorSet.from_dict(ds.to_dict())
    assert again == ds


# --- invariants --------------------------------------------------------------


def translate_labels(labels, h, w, dx, dy):
    out = np.zeros_like(labels)
    for x in range(h):
        for y in range(w):
            if labels[x * w + y]:
                out[(x + dx) * w + (y + dy)] = labels[x * w + y]
    return out


def test_translation_invariance_exact():
    h = w = 12
    g = GridShape(h, w)
    rng = np.random.default_rng(7)
    labels = np.zeros(h * w, dtype=int)
    for x in range(3, 7):
        for y in range(2, 6):
            labels[x * w + y] = rng.integers(1, 3)
    moved = translate_labels(labels, h, w, 3, 4)
    lap = build_laplacian(g)
    a = one_hot(LabelMask(g, 3, labels))
    b = one_hot(LabelMask(g, 3, moved))
    for k in (1, 2):
        assert volume(a, k) == volume(b, k)
        assert spread(a, k) == spread(b, k)
        assert length(a, k, lap) == length(b, k, lap)
        ca, cb = centroid(a, k), centroid(b, k)
        assert cb[0] - ca[0] == 3.0
        assert cb[1] - ca[1] == 4.0


def test_moment_linearity():
    g = GridShape(5, 5)
    rng = np.random.default_rng(8)
    va = rng.random((25, 2))
    va /= va.sum(axis=1, keepdims=True)
    vb = rng.random((25, 2))
    vb /= vb.sum(axis=1, keepdims=True)
    alpha = 0.3
    mix = ProbMap(g, alpha * va + (1 - alpha) * vb)
    pa, pb = ProbMap(g, va), ProbMap(g, vb)
    for (pp, qq) in ((0, 0), (1, 0), (2, 1)):
        lhs = shape_moment(mix, 0, pp, qq)
        rhs = alpha * shape_moment(pa, 0, pp, qq) + (1 - alpha) * shape_moment(
            pb, 0, pp, qq
        )
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_volume_strictly_monotone_in_class_probability():
    g = GridShape(3, 3)
    v = np.full((9, 2), 0.5)
    p_lo = ProbMap(g, v)
    v2 = v.copy()
    v2[4, 1] += 0.25
    v2[4, 0] -= 0.25
    p_hi = ProbMap(g, v2)
    assert volume(p_hi, 1) > volume(p_lo, 1)
