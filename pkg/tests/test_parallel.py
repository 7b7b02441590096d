import math
from fractions import Fraction as F

import numpy as np
import pytest

from whitneydim.dimension import assouad_dims, representative_points
from whitneydim.geometry import Ball, BoxSet
from whitneydim.parallel import (
    boundary_length,
    boundary_length_profile,
    exact_boundary_length,
    extract_boundary,
    field_for_radius,
    local_boundary_profile,
    neighborhood_volume,
    oleksiv_pesin_check,
    parse_schedule,
    per_cube_boundary_checks,
    profile_slope,
    regular_law_check,
    sandwich_check,
    spherical_dims,
    unit_field,
)
from whitneydim.setgen import CATALOG, named_set
from whitneydim.whitney import whitney_decompose

K = 11
CARPET = math.log(8) / math.log(3)


@pytest.fixture(scope="module")
def point():
    return named_set("point").normalize()


@pytest.fixture(scope="module")
def segment():
    return named_set("segment").normalize()


@pytest.fixture(scope="module")
def carpet():
    return named_set("carpet", 6).normalize()


def test_volume_disc(point):
    r = 1 / 8
    assert neighborhood_volume(unit_field(point, K), r) == pytest.approx(math.pi * r * r, rel=0.01)


def test_volume_stadium(segment):
    r = 1 / 16
    assert neighborhood_volume(unit_field(segment, K), r) == pytest.approx(2 * 0.5 * r + math.pi * r * r, rel=0.015)


def test_volume_monotone(carpet):
    f = unit_field(carpet, K)
    vols = [neighborhood_volume(f, r) for r in parse_schedule("geo:0.2,0.7071067811865476,12")]
    assert all(a >= b for a, b in zip(vols, vols[1:]))


def test_circle_contour(point):
    r = 1 / 8
    curve = extract_boundary(unit_field(point, K), r)
    assert curve.total_length == pytest.approx(2 * math.pi * r, rel=0.015)
    # closed: every endpoint is the start of exactly one segment
    starts = {tuple(np.round(p, 12)) for p in curve.p}
    ends = {tuple(np.round(q, 12)) for q in curve.q}
    assert starts == ends


def test_two_separated_points():
    E = BoxSet.from_fractions([((F(1, 4), F(1, 2)), (0, 0)), ((F(3, 4), F(1, 2)), (0, 0))])
    r = 1 / 8
    curve = extract_boundary(unit_field(E, K), r)
    assert curve.total_length == pytest.approx(4 * math.pi * r, rel=0.02)
    left = curve.midpoints[:, 0] < 0.5
    assert curve.lengths[left].sum() == pytest.approx(curve.lengths[~left].sum(), rel=1e-9)


def test_stadium_contour(segment):
    r = 1 / 16
    exact = 2 * 0.5 + 2 * math.pi * r
    assert boundary_length(segment, r, K) == pytest.approx(exact, rel=0.015)
    assert exact_boundary_length(segment, r) == pytest.approx(exact, rel=1e-12)


def test_contour_orientation_keeps_neighbourhood_on_left(point):
    curve = extract_boundary(unit_field(point, K), 1 / 8)
    t = curve.q - curve.p
    left_normal = np.stack([-t[:, 1], t[:, 0]], axis=1)
    towards_centre = 0.5 - curve.midpoints
    assert ((left_normal * towards_centre).sum(axis=1) > 0).all()


def test_profile_slopes(point, segment):
    assert profile_slope(boundary_length_profile(point, None, K)) == pytest.approx(1.0, abs=0.05)
    assert profile_slope(boundary_length_profile(segment, None, K)) == pytest.approx(0.0, abs=0.05)


def test_profile_slope_carpet(carpet):
    assert profile_slope(boundary_length_profile(carpet, None, K)) == pytest.approx(1 - CARPET, abs=0.1)


def test_spherical_point(point):
    sph = spherical_dims(point, K=K)
    for est in sph.estimates():
        assert est.value == pytest.approx(0.0, abs=0.1)


def test_sandwich_point_ratios_constant(point):
    rep = sandwich_check(point, K=K)
    lowers = [row[5] for row in rep.rows]
    assert max(lowers) / min(lowers) == pytest.approx(1.0, abs=1e-3)
    assert rep.passed


def test_sandwich_segment(segment):
    rep = sandwich_check(segment, K=K, k_window=(5, 10))
    for col in (5, 6):
        vals = [row[col] for row in rep.rows]
        assert max(vals) / min(vals) <= 3


def test_sandwich_carpet(carpet):
    rep = sandwich_check(carpet, K=K, k_window=(4, 8))
    assert rep.ratio <= 50 and rep.passed


def test_per_cube_point(point):
    rep = per_cube_boundary_checks(point, 0.75 * 2.0**-5, K=K)
    assert rep.lower_c >= 0.5


def test_per_cube_carpet(carpet):
    rep = per_cube_boundary_checks(carpet, 0.75 * 2.0**-6, K=K)
    assert rep.upper_C <= 6 and rep.lower_c > 0


def test_per_cube_far_cube_sees_nothing(point):
    curve = extract_boundary(unit_field(point, K), 1 / 64)
    # the corner cube [0,1/8]^2 is far from the circle of radius 1/64 about the centre
    inside = (curve.midpoints < 0.125).all(axis=1)
    assert curve.lengths[inside].sum() == 0.0


def test_op_point_constant_is_two_pi(point):
    rep = oleksiv_pesin_check(point, K=K)
    assert rep.C1 == pytest.approx(2 * math.pi, rel=1e-4)


@pytest.mark.parametrize("name,depth", [("segment", 0), ("cantor3x3", 4), ("carpet", 4)])
def test_large_radius_circle_bound(name, depth):
    E = named_set(name, depth).normalize()
    r = 2 * E.diam
    L = boundary_length(E, r, K)
    assert L <= 2 * math.pi * (r + E.diam) <= 4 * math.pi * r


def test_carpet_small_radius_product_bounded(carpet):
    rep = oleksiv_pesin_check(carpet, K=K)
    assert rep.passed


def test_regular_law_segment(segment):
    rep = regular_law_check(segment, 1.0)
    assert rep.band_ratio <= 1.5


def test_regular_law_cantor_line():
    E = named_set("cantor3-line", 8).normalize()
    rep = regular_law_check(E, CATALOG["cantor3"].similarity_dim)
    assert rep.band_ratio <= 10


@pytest.mark.parametrize("name,target", [("segment", 1.0), ("point", 0.0)])
def test_local_exponent(name, target):
    E = named_set(name).normalize()
    x = representative_points(E, 3, 1)[0]
    lam = local_boundary_profile(E, Ball(tuple(x), 0.125), None, K)
    assert lam.value == pytest.approx(target, abs=0.15)


def test_local_exponent_carpet(carpet):
    a_up = assouad_dims(carpet)[0].value
    for x in representative_points(carpet, 2, 2):
        lam = local_boundary_profile(carpet, Ball(tuple(x), 0.125), None, K)
        assert abs(lam.value - a_up) <= 0.2


def test_exact_length_rejects_interacting_components():
    E = BoxSet.from_fractions([((F(1, 4), F(1, 2)), (0, 0)), ((F(3, 8), F(1, 2)), (0, 0))])
    with pytest.raises(NotImplementedError):
        exact_boundary_length(E, 1 / 8)


def test_parse_schedule():
    assert parse_schedule("geo:0.5,0.5,3") == [0.5, 0.25, 0.125]
