import math
from fractions import Fraction as F

import numpy as np
import pytest

from whitneydim.dimension import box_count
from whitneydim.errors import EmptySetError, FormatError, InvalidParamsError
from whitneydim.geometry import merged_boxes
from whitneydim.setgen import (
    CATALOG,
    Surd,
    ThickCantorParams,
    closed_form_ell,
    named_set,
    raster_to_boxset,
    read_pgm,
    thick_cantor_generate,
)


def test_cantor3_depth2_intervals():
    E = named_set("cantor3", 2)
    assert len(E) == 4
    assert {E.box_fractions(i)[1][0] for i in range(4)} == {F(1, 9)}
    assert sorted(E.box_fractions(i)[0][0] for i in range(4)) == [0, F(2, 9), F(6, 9), F(8, 9)]


def test_carpet_depth1_squares():
    E = named_set("sierpinski-carpet", 1)
    assert len(E) == 8
    assert all(E.box_fractions(i)[1] == (F(1, 3), F(1, 3)) for i in range(8))
    assert named_set("carpet", 1) == E


def test_similarity_dimension_solves_moran_equation():
    s = CATALOG["cantor3"].similarity_dim
    assert s == pytest.approx(0.6309298, abs=1e-7)
    assert 2 * (1 / 3) ** s == pytest.approx(1.0, abs=1e-14)
    assert CATALOG["sierpinski-carpet"].similarity_dim == pytest.approx(math.log(8) / math.log(3), abs=1e-12)


def test_negative_depth_rejected():
    with pytest.raises(InvalidParamsError):
        named_set("cantor3", -1)


def test_unknown_set_rejected():
    with pytest.raises(FormatError):
        named_set("nope")


def test_thick_cantor_stage1_tiles_square():
    inst = thick_cantor_generate(ThickCantorParams(1, (1,), (2.0,)))
    st = inst.stage(1)
    assert st.count == 4 and st.ell == Surd.rational(st.ell.m, F(1, 2))
    E = inst.to_boxset()
    M = merged_boxes(E)
    assert len(M) == 1 and M.area() == 1


def test_thick_cantor_stage2_closed_forms():
    p = ThickCantorParams.parse("J=2,n=1:1,s=2:1.5")
    inst = thick_cantor_generate(p)
    st = inst.stage(2)
    m = p.field_m
    assert p.lam(2) == Surd.pow2(m, -3 * m // 2)
    assert st.count == 16
    assert st.ell == Surd.pow2(m, -5 * m // 2) == closed_form_ell(p, 2)
    assert float(st.ell) == pytest.approx(0.1767767, abs=1e-7)
    assert st.D == st.ell * (Surd.pow2(m, 3 * m // 2) - 2)
    assert float(st.D) == pytest.approx(0.1464466, abs=1e-7)
    assert st.gap_min == st.D
    # d_2 = min{D_2/3, (16 l_2)^-2} picks the first branch
    assert float(st.D) / 3 == pytest.approx(0.0488155, abs=1e-7)
    assert (16 * float(st.ell)) ** -2 == pytest.approx(0.125, abs=1e-12)
    assert st.d == pytest.approx(float(st.D) / 3, rel=1e-15)


def test_thick_cantor_parameter_validation():
    with pytest.raises(InvalidParamsError):
        ThickCantorParams(2, (1,), (2.0, 1.5))
    with pytest.raises(InvalidParamsError):
        ThickCantorParams(2, (1, 1), (1.5, 2.0))
    with pytest.raises(InvalidParamsError):
        ThickCantorParams.parse("J=x")


def test_surd_arithmetic_is_exact():
    m = 2
    r2 = Surd.pow2(m, 1)
    assert r2 * r2 == Surd.rational(m, 2)
    assert (r2 - 1) * (r2 + 1) == Surd.rational(m, 1)
    assert Surd.pow2(m, -1) * r2 == Surd.rational(m, 1)
    assert r2 > Surd.rational(m, F(141, 100))


def test_raster_all_ones():
    E = raster_to_boxset(np.full((4, 4), 255, dtype=np.uint8), 128)
    assert len(E) == 16
    M = merged_boxes(E)
    assert len(M) == 1 and M.area() == F(1, 4)


def test_raster_single_pixel():
    g = np.zeros((4, 4), dtype=np.uint8)
    g[1, 2] = 200
    E = raster_to_boxset(g, 128)
    assert len(E) == 1
    assert E.box_fractions(0)[1] == (F(1, 8), F(1, 8))


def test_raster_checkerboard_counts():
    K = 4
    n = 1 << K
    g = ((np.add.outer(np.arange(n), np.arange(n)) % 2) * 255).astype(np.uint8)
    E = raster_to_boxset(g, 128)
    assert len(E) == 2 ** (2 * K - 1)
    # closed cells touch, so the perimeter term 2^k P decays only like 2^(K-k) relative to the area term
    ratios = [math.log2(box_count(E, k + 1) / box_count(E, k)) for k in (K + 8, K + 9)]
    assert ratios == pytest.approx([2.0, 2.0], abs=0.05)


def test_raster_empty_rejected():
    with pytest.raises(EmptySetError):
        raster_to_boxset(np.zeros((2, 2)), 1)


def test_pgm_round_trip(tmp_path):
    g = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    path = tmp_path / "g.pgm"
    path.write_bytes(b"P5\n# comment\n4 3\n255\n" + g.tobytes())
    assert np.array_equal(read_pgm(path), g)
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(FormatError):
        read_pgm(bad)
