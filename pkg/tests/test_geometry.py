import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest

from whitneydim.distance import compute_distance_field
from whitneydim.errors import EmptySetError, FormatError
from whitneydim.geometry import (
    BoxSet,
    DyadicCube,
    boxset_from_record,
    boxset_to_record,
    dist_box_to_set,
    dist_point_to_set,
    dist_points_to_set,
    load_boxset,
    maximal_packing,
    merged_boxes,
    save_boxset,
)


def box(lo, hi):
    return BoxSet.from_fractions([(tuple(F(v) for v in lo), tuple(F(b) - F(a) for a, b in zip(lo, hi)))])


def test_point_distance_axis_offset():
    E = BoxSet.point(F(1, 4), F(1, 2))
    assert dist_point_to_set((0.5, 0.5), E) == pytest.approx(0.25, abs=1e-15)


def test_point_inside_box_has_zero_distance():
    E = box(("1/4", "1/4"), ("1/2", "1/2"))
    assert dist_point_to_set((0.3, 0.4), E) == 0.0


def test_corner_distance():
    E = box(("1/4", "1/4"), ("1/2", "1/2"))
    assert dist_point_to_set((0.0, 0.0), E) == pytest.approx(0.3535534, abs=1e-7)


def test_cube_diagonal_gap():
    E = box(("1/2", "1/2"), ("3/4", "3/4"))
    assert dist_box_to_set(DyadicCube(2, (0, 0)), E) == pytest.approx(0.25 * math.sqrt(2), abs=1e-12)


def test_cube_touching_edge():
    E = box(("1/4", "0"), ("1/2", "1/4"))
    assert dist_box_to_set(DyadicCube(2, (0, 0)), E) == 0.0


def test_cube_single_axis_gap():
    E = box(("1/2", "0"), ("3/4", "1/4"))
    assert dist_box_to_set(DyadicCube(2, (0, 0)), E) == pytest.approx(0.25, abs=1e-15)


def test_packing_two_points():
    E = BoxSet.from_fractions([((F(0),), (F(0),)), ((F(1),), (F(0),))])
    centers = maximal_packing(E, 0.4, E.corners_f())
    assert sorted(centers.ravel().tolist()) == [0.0, 1.0]


def _is_packing(pts, r):
    return all(abs(a - b) > 2 * r for a, b in itertools.combinations(pts, 2))


def test_packing_greedy_is_maximal_by_brute_force():
    pts = [0.0, 0.05, 1.0]
    E = BoxSet.from_fractions([((F(p).limit_denominator(100),), (F(0),)) for p in pts])
    centers = sorted(maximal_packing(E, 0.1, E.corners_f()).ravel().tolist())
    assert centers == [0.0, 1.0]
    # no candidate can be added, and no packing is larger
    assert all(not _is_packing(centers + [p], 0.1) for p in pts if p not in centers)
    best = max(len(s) for n in range(1, 4) for s in itertools.combinations(pts, n) if _is_packing(s, 0.1))
    assert best == len(centers)


@pytest.mark.parametrize("r", [0.01, 0.1, 1.0])
def test_packing_single_point(r):
    assert len(maximal_packing(BoxSet.point(F(1, 2), F(1, 2)), r)) == 1


def test_field_of_point_is_exact():
    E = BoxSet.point(F(1, 2), F(1, 2))
    f = compute_distance_field(E, 8)
    x = f.axis(0)
    # squared distances are exact dyadic rationals, so one rounding in sqrt
    ref = np.sqrt((x[:, None] - 0.5) ** 2 + (x[None, :] - 0.5) ** 2)
    assert np.abs(f.values - ref).max() == 0.0


def test_field_of_square_is_zero_inside_and_linear_outside():
    E = box(("1/4", "1/4"), ("3/4", "3/4"))
    f = compute_distance_field(E, 6)
    x = f.axis(0)
    inside = (x >= 0.25) & (x <= 0.75)
    assert np.all(f.values[np.ix_(inside, inside)] == 0)
    mid = np.searchsorted(x, 0.5)
    assert np.allclose(f.values[: np.searchsorted(x, 0.25), mid], 0.25 - x[x < 0.25])


def test_field_of_two_points_is_min_of_radial_fields():
    E = BoxSet.from_fractions([((F(1, 4), F(1, 3)), (0, 0)), ((F(5, 7), F(3, 5)), (0, 0))])
    f = compute_distance_field(E, 7)
    x = f.axis(0)
    X, Y = np.meshgrid(x, x, indexing="ij")
    brute = np.full(X.shape, np.inf)
    for p in E.lo_f:
        brute = np.minimum(brute, np.hypot(X - p[0], Y - p[1]))
    assert np.abs(f.values - brute).max() < 1e-12


def test_vectorized_distance_matches_scalar():
    rng = np.random.default_rng(3)
    E = BoxSet.from_fractions([((F(1, 8), F(1, 4)), (F(1, 8), F(0))), ((F(1, 2), F(1, 2)), (F(1, 4), F(1, 8)))])
    pts = rng.random((50, 2))
    vec = dist_points_to_set(pts, E)
    assert np.allclose(vec, [dist_point_to_set(p, E) for p in pts], atol=0, rtol=0)


def test_normalize_maps_into_quarter_cube():
    E = box(("0", "0"), ("1", "1")).normalize()
    assert E.lo_f.min() == 0.25 and E.hi_f.max() == 0.75
    assert E.normalized_flag


def test_merged_boxes_preserves_union():
    E = BoxSet.from_fractions([((0, 0), (F(1, 2), F(1, 2))), ((F(1, 2), 0), (F(1, 2), F(1, 2)))])
    M = merged_boxes(E)
    assert len(M) == 1
    assert M.area() == E.area() == F(1, 2)


def test_empty_and_malformed_sets_are_rejected():
    with pytest.raises(EmptySetError):
        BoxSet(np.zeros((0, 2)), np.zeros((0, 2)), 1)
    with pytest.raises(FormatError):
        BoxSet([[0, 0]], [[2, 1]], 1)


def test_record_round_trip(tmp_path):
    E = BoxSet.from_fractions([((F(1, 3), F(1, 5)), (F(1, 7), 0))], meta={"generator": "x"})
    assert boxset_from_record(boxset_to_record(E)) == E
    path = tmp_path / "e.json"
    save_boxset(E, path)
    assert load_boxset(path) == E
