from fractions import Fraction as F

import numpy as np
import pytest

from brute import whitney_rule_counts
from whitneydim.errors import CenterNotInSetError, InvalidParamsError
from whitneydim.geometry import Ball, BoxSet
from whitneydim.setgen import named_set
from whitneydim.whitney import (
    check_disjoint,
    check_sandwich_exact,
    generation_counts,
    local_count,
    neighbor_level_constant,
    whitney_decompose,
)


@pytest.fixture(scope="module")
def point1d():
    E = BoxSet.point(F(1, 2))
    return E, whitney_decompose(E, 12)


@pytest.fixture(scope="module")
def point2d():
    E = named_set("point").normalize()
    return E, whitney_decompose(E, 10)


def test_point_1d_matches_brute_force_and_is_constant(point1d):
    E, W = point1d
    assert check_sandwich_exact(W) and check_disjoint(W)
    counts = generation_counts(W, clip=False).counts
    brute = whitney_rule_counts(E, 12)
    assert all(counts[k] == brute[k] for k in range(12))
    assert len({counts[k] for k in range(3, 12)}) == 1


def test_segment_counts_grow_like_2k():
    E = named_set("segment").normalize()
    W = whitney_decompose(E, 12)
    counts = generation_counts(W).counts
    brute = whitney_rule_counts(E, 11)
    assert all(counts[k] == brute[k] for k in range(3, 12))
    ratios = [counts[k] / 2**k for k in range(6, 12)]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert max(ratios[-4:]) / min(ratios[-4:]) <= 1.1


def test_full_square_residual_is_the_unresolvable_band():
    E = BoxSet.from_fractions([((F(1, 4), F(1, 4)), (F(1, 2), F(1, 2)))])
    W = whitney_decompose(E, 6)
    # cells at distance exactly one side from E fail dist >= diam at every depth
    n = 1 << 6
    assert len(W.residual_index) == 4 * (n // 2 + 2)
    assert whitney_decompose(E, 7).residual_volume == pytest.approx(W.residual_volume / 2, rel=0.05)
    lo, hi = W.cube_bounds()
    inside = ((lo >= 0.25) & (hi <= 0.75)).all(axis=1)
    assert not inside.any()
    assert check_sandwich_exact(W)


def test_cantor_matches_brute_force():
    E = named_set("cantor3x3", 3).normalize()
    W = whitney_decompose(E, 8)
    counts = generation_counts(W, clip=False).counts
    brute = whitney_rule_counts(E, 8)
    assert all(counts[k] == brute[k] for k in range(8))
    assert check_sandwich_exact(W) and check_disjoint(W)


def test_whole_domain_scope_partitions_total(point2d):
    E, W = point2d
    counts = generation_counts(W, Ball((0.5, 0.5), 2.0), clip=False)
    assert counts.total() == len(W)


def test_tiny_ball_in_deep_complement_meets_one_cube(point2d):
    E, W = point2d
    counts = generation_counts(W, Ball((0.1, 0.13), 1e-6), clip=False)
    assert sum(1 for v in counts.counts.values() if v) == 1


@pytest.mark.parametrize("m", [4, 5, 6])
def test_small_ball_around_point_sees_only_fine_cubes(point2d, m):
    E, W = point2d
    counts = generation_counts(W, Ball((0.5, 0.5), 2.0**-m), clip=False).counts
    assert all(counts[k] == 0 for k in range(m - 2))


def test_local_count_on_whole_domain_equals_global(point2d):
    E, W = point2d
    B0 = Ball((0.5, 0.5), 2.0)
    glob = generation_counts(W, clip=False).counts
    assert all(local_count(E, B0, k, W) == glob[k] for k in range(W.k_max))


def test_local_count_at_coarse_scales_is_small():
    E = named_set("segment").normalize()
    W = whitney_decompose(E, 10)
    B0 = Ball((0.5, 0.5), 2.0**-7)
    assert all(local_count(E, B0, k, W) <= 8 for k in range(3) if 2.0**-k > 8 * B0.radius)


def test_local_count_requires_centre_in_set(point2d):
    E, W = point2d
    with pytest.raises(CenterNotInSetError):
        local_count(E, Ball((0.1, 0.1), 0.01), 4, W)


def test_neighbouring_cubes_differ_by_bounded_levels(point2d):
    E, W = point2d
    assert 1 <= neighbor_level_constant(W) <= 2


def test_unnormalized_set_rejected():
    with pytest.raises(InvalidParamsError):
        whitney_decompose(named_set("cantor3", 2), 8)
